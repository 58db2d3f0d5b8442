//! The six parameterized graph kernels, each realized as a diagonal (plus,
//! for K6, rank-one) transform of one of the two basic kernels that the
//! local push can approximate, together with dense oracles used only for
//! verification.
//!
//! Writing M = (K^-1/(2 lambda) + I/(2n))^-1 for the regularized kernel,
//! every supported K^-1 admits a presentation M = a A^-1 X B where X is
//! either the Type-L or the Type-Lap basic kernel, possibly over a
//! diagonally rescaled graph view.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::push::{
    dense_basic_kernel_on, fifo_push_on, KernelType, PushConfig, PushStats, PushView, SparseVec,
};

/// Default node-count cap for the dense oracles.
pub const DEFAULT_DENSE_CAP: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelId {
    K1,
    K2,
    K3,
    K4,
    K5,
    K6,
}

impl KernelId {
    pub fn basic_type(self) -> KernelType {
        match self {
            KernelId::K2 | KernelId::K3 => KernelType::TypeL,
            _ => KernelType::TypeLap,
        }
    }
}

impl std::fmt::Display for KernelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<KernelId> {
        match s.to_ascii_lowercase().as_str() {
            "k1" | "1" => Ok(KernelId::K1),
            "k2" | "2" => Ok(KernelId::K2),
            "k3" | "3" => Ok(KernelId::K3),
            "k4" | "4" => Ok(KernelId::K4),
            "k5" | "5" => Ok(KernelId::K5),
            "k6" | "6" => Ok(KernelId::K6),
            other => Err(Error::config(format!("unknown kernel id {other:?}"))),
        }
    }
}

/// Diagonal scaling S used by K4 and K5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Scaling {
    #[default]
    #[serde(rename = "I")]
    Identity,
    #[serde(rename = "D")]
    WeightedDegree,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSpec {
    pub id: KernelId,
    pub lambda: f64,
    /// Kernel parameter for K3-K6; ignored by K1/K2.
    #[serde(default)]
    pub beta: f64,
    /// Rank-one strength for K6 only.
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub s: Scaling,
}

impl KernelSpec {
    pub fn new(id: KernelId, lambda: f64) -> KernelSpec {
        KernelSpec {
            id,
            lambda,
            beta: 0.0,
            b: 0.0,
            s: Scaling::Identity,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> KernelSpec {
        self.beta = beta;
        self
    }

    pub fn with_b(mut self, b: f64) -> KernelSpec {
        self.b = b;
        self
    }

    pub fn with_scaling(mut self, s: Scaling) -> KernelSpec {
        self.s = s;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::invalid("empty graph"));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::config(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        let nf = n as f64;
        match self.id {
            KernelId::K1 | KernelId::K2 => {}
            KernelId::K3 => {
                let hi = (nf + self.lambda) / nf;
                if !(self.beta > 0.0 && self.beta < hi) {
                    return Err(Error::config(format!(
                        "K3 requires beta in (0, {hi}), got {}",
                        self.beta
                    )));
                }
            }
            KernelId::K4 => {
                if self.beta < 0.0 {
                    return Err(Error::config(format!(
                        "K4 requires beta >= 0, got {}",
                        self.beta
                    )));
                }
            }
            KernelId::K5 => {
                if !self.beta.is_finite() || self.beta <= 0.0 {
                    return Err(Error::config(format!(
                        "K5 requires beta > 0, got {}",
                        self.beta
                    )));
                }
            }
            KernelId::K6 => {
                if self.b < 0.0 {
                    return Err(Error::config(format!("K6 requires b >= 0, got {}", self.b)));
                }
                if self.beta < 0.0 {
                    return Err(Error::config(format!(
                        "K6 requires beta >= 0, got {}",
                        self.beta
                    )));
                }
            }
        }
        Ok(())
    }

    /// The regularization level of the basic kernel this spec reduces to.
    pub fn alpha(&self, n: usize) -> Result<f64> {
        self.validate(n)?;
        let n = n as f64;
        let l = self.lambda;
        Ok(match self.id {
            KernelId::K1 => l / n,
            KernelId::K2 => l / (n + l),
            KernelId::K3 => (n + l - self.beta * n) / (n + l),
            KernelId::K4 => (n * self.beta + l) / n,
            KernelId::K5 => 2.0 * l,
            KernelId::K6 => self.beta + l / n,
        })
    }
}

/// One approximate kernel column M_eps[:, t].
#[derive(Debug, Clone)]
pub struct KernelColumn {
    pub node: usize,
    pub values: SparseVec,
    /// m_tt read from the transformed column.
    pub diag: f64,
    pub stats: PushStats,
}

/// A kernel spec bound to a graph: derived alpha, transform diagonals, and
/// the rescaled push view (materialized once, shared by all columns).
pub struct PreparedKernel<'a> {
    graph: &'a Graph,
    spec: KernelSpec,
    alpha: f64,
    /// Per-node left multiplier applied to push output entries.
    left: Vec<f64>,
    /// Per-source right multiplier (a function of the column index only).
    right: Vec<f64>,
    /// Dense shift subtracted from every entry (K6 rank-one term).
    shift: f64,
    /// Reciprocal diagonal for the push view (K4/K5).
    inv_scale: Option<Vec<f64>>,
}

impl<'a> PreparedKernel<'a> {
    pub fn new(graph: &'a Graph, spec: KernelSpec) -> Result<PreparedKernel<'a>> {
        let n = graph.node_count();
        spec.validate(n)?;
        let alpha = spec.alpha(n)?;
        let nf = n as f64;
        let l = spec.lambda;
        let s_diag = |u: usize| -> f64 {
            match spec.s {
                Scaling::Identity => 1.0,
                Scaling::WeightedDegree => graph.weighted_degree(u),
            }
        };
        if matches!(spec.id, KernelId::K4 | KernelId::K5) && spec.s == Scaling::WeightedDegree {
            for u in 0..n {
                if graph.degree(u) == 0 {
                    return Err(Error::invalid(
                        "scaling S = D is undefined on degree-0 nodes; \
                         restrict to the largest connected component first",
                    ));
                }
            }
        }
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        let mut shift = 0.0;
        let mut inv_scale = None;
        match spec.id {
            KernelId::K1 => {
                left.fill(2.0 * l);
                right.fill(1.0);
            }
            KernelId::K2 | KernelId::K3 => {
                let a = match spec.id {
                    KernelId::K2 => 2.0 * nf,
                    _ => 2.0 * l * nf / (nf + l - spec.beta * nf),
                };
                for u in 0..n {
                    let d = graph.weighted_degree(u);
                    // Moore-Penrose convention on degree-0 nodes; their
                    // columns are handled analytically.
                    left[u] = if d > 0.0 { a / d.sqrt() } else { 0.0 };
                    right[u] = d.sqrt();
                }
            }
            KernelId::K4 => {
                let mut scale = vec![0.0; n];
                for u in 0..n {
                    let s = s_diag(u);
                    scale[u] = if s > 0.0 { 1.0 / s } else { 0.0 };
                    left[u] = if s > 0.0 { 2.0 * l / s.sqrt() } else { 0.0 };
                    right[u] = s.sqrt();
                }
                inv_scale = Some(scale);
            }
            KernelId::K5 => {
                let mut scale = vec![0.0; n];
                for u in 0..n {
                    let s = s_diag(u);
                    // S~ = beta I/(2 lambda) + S/(2n).
                    let tilde = spec.beta / (2.0 * l) + s / (2.0 * nf);
                    scale[u] = 1.0 / tilde;
                    left[u] = if s > 0.0 {
                        1.0 / (s.sqrt() / (4.0 * nf * l) + spec.beta / (4.0 * l * l * s.sqrt()))
                    } else {
                        0.0
                    };
                    right[u] = s.sqrt();
                }
                inv_scale = Some(scale);
            }
            KernelId::K6 => {
                left.fill(2.0 * l);
                right.fill(1.0);
                if spec.b > 0.0 {
                    // Rank-one correction: M[:,t] = 2l x_t - 2l b/(alpha(alpha + n b)) 1,
                    // using that the basic kernel's columns each sum to 1/alpha.
                    shift = 2.0 * l * spec.b / (alpha * (alpha + nf * spec.b));
                }
            }
        }
        Ok(PreparedKernel {
            graph,
            spec,
            alpha,
            left,
            right,
            shift,
            inv_scale,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn push_config(&self, epsilon: f64) -> PushConfig {
        PushConfig::new(self.alpha, epsilon, self.spec.id.basic_type())
    }

    pub(crate) fn view(&self) -> PushView<'_> {
        match &self.inv_scale {
            Some(scale) => PushView::scaled(self.graph, scale),
            None => PushView::plain(self.graph),
        }
    }

    /// Approximate column M_eps[:, t] via one push plus the presentation's
    /// transform. Degree-0 nodes short-circuit to their analytic column.
    pub fn column(&self, epsilon: f64, t: usize) -> Result<KernelColumn> {
        let n = self.graph.node_count();
        if t >= n {
            return Err(Error::NodeOutOfRange { id: t, n });
        }
        if self.graph.degree(t) == 0 {
            return Ok(self.singleton_column(t));
        }
        let out = fifo_push_on(self.view(), &self.push_config(epsilon), t)?;
        let rt = self.right[t];
        let entries: Vec<(u32, f64)> = if self.shift != 0.0 {
            // K6 with b > 0: the rank-one term touches every node.
            let x = out.x.to_dense(n);
            (0..n as u32)
                .map(|i| (i, self.left[i as usize] * x[i as usize] * rt - self.shift))
                .collect()
        } else {
            out.x
                .iter()
                .map(|(i, v)| (i, self.left[i as usize] * v * rt))
                .collect()
        };
        let values = SparseVec::from_entries(entries);
        for (_, v) in values.iter() {
            if !v.is_finite() {
                return Err(Error::Numeric(
                    "kernel column has non-finite entries".into(),
                ));
            }
        }
        let diag = values.get(t);
        Ok(KernelColumn {
            node: t,
            values,
            diag,
            stats: out.stats,
        })
    }

    /// Analytic column for a degree-0 node: the basic Type-Lap column is
    /// e_t/alpha, and the Type-L presentations reduce to the identity
    /// scaling of the regularized definition.
    fn singleton_column(&self, t: usize) -> KernelColumn {
        let n = self.graph.node_count() as f64;
        let l = self.spec.lambda;
        let scalar = match self.spec.id {
            KernelId::K1 | KernelId::K2 => 2.0 * n,
            KernelId::K3 => 2.0 * l * n / (n + l),
            // S = I on a degree-0 node (S = D is rejected at prepare time).
            KernelId::K4 | KernelId::K5 => 2.0 * l * n / (n * self.spec.beta + l),
            KernelId::K6 => 2.0 * l / self.alpha,
        };
        let values = if self.shift != 0.0 {
            let entries = (0..self.graph.node_count() as u32)
                .map(|i| {
                    let base = if i as usize == t { scalar } else { 0.0 };
                    (i, base - self.shift)
                })
                .collect();
            SparseVec::from_entries(entries)
        } else {
            SparseVec::from_entries(vec![(t as u32, scalar)])
        };
        let diag = values.get(t);
        KernelColumn {
            node: t,
            values,
            diag,
            stats: PushStats {
                epochs: Vec::new(),
                active_pops: 0,
                terminal_constant: f64::INFINITY,
                max_weighted_degree: 0.0,
            },
        }
    }

    /// Raw push on this spec's (possibly rescaled) view.
    pub fn push(&self, epsilon: f64, s: usize) -> Result<crate::push::PushOutcome> {
        fifo_push_on(self.view(), &self.push_config(epsilon), s)
    }

    /// Dense basic kernel X on this spec's view (verification oracle).
    pub fn dense_basic(&self) -> Result<DMatrix<f64>> {
        dense_basic_kernel_on(self.view(), &self.push_config(1.0))
    }

    /// Dense presentation a A^-1 X B assembled from the dense basic kernel,
    /// with analytic overrides for degree-0 columns (verification oracle).
    pub fn dense_presentation(&self) -> Result<DMatrix<f64>> {
        let n = self.graph.node_count();
        let x = self.dense_basic()?;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for t in 0..n {
            if self.graph.degree(t) == 0 {
                let col = self.singleton_column(t);
                for (i, v) in col.values.iter() {
                    m[(i as usize, t)] = v;
                }
                continue;
            }
            for i in 0..n {
                m[(i, t)] = self.left[i] * x[(i, t)] * self.right[t] - self.shift;
            }
        }
        Ok(m)
    }
}

/// Assemble the dense K^-1 for a spec (Moore-Penrose convention on
/// degree-0 nodes).
fn dense_inverse_kernel(graph: &Graph, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let n = graph.node_count();
    spec.validate(n)?;
    let s_diag = |u: usize| -> f64 {
        match spec.s {
            Scaling::Identity => 1.0,
            Scaling::WeightedDegree => graph.weighted_degree(u),
        }
    };
    let mut k = DMatrix::<f64>::zeros(n, n);
    match spec.id {
        KernelId::K1 => {
            for u in 0..n {
                k[(u, u)] = graph.weighted_degree(u);
                for (v, w) in graph.neighbors(u) {
                    k[(u, v as usize)] -= w;
                }
            }
        }
        KernelId::K2 | KernelId::K3 => {
            let beta = if spec.id == KernelId::K2 {
                1.0
            } else {
                spec.beta
            };
            for u in 0..n {
                k[(u, u)] = if spec.id == KernelId::K2 {
                    if graph.degree(u) > 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    1.0
                };
                let du = graph.weighted_degree(u);
                for (v, w) in graph.neighbors(u) {
                    let dv = graph.weighted_degree(v as usize);
                    k[(u, v as usize)] -= beta * w / (du * dv).sqrt();
                }
            }
        }
        KernelId::K4 => {
            for u in 0..n {
                let su = s_diag(u);
                k[(u, u)] = spec.beta
                    + if su > 0.0 {
                        graph.weighted_degree(u) / su
                    } else {
                        0.0
                    };
                for (v, w) in graph.neighbors(u) {
                    let sv = s_diag(v as usize);
                    if su > 0.0 && sv > 0.0 {
                        k[(u, v as usize)] -= w / (su * sv).sqrt();
                    }
                }
            }
        }
        KernelId::K5 => {
            for u in 0..n {
                let su = s_diag(u);
                k[(u, u)] = if su > 0.0 {
                    (spec.beta + graph.weighted_degree(u)) / su
                } else {
                    0.0
                };
                for (v, w) in graph.neighbors(u) {
                    let sv = s_diag(v as usize);
                    if su > 0.0 && sv > 0.0 {
                        k[(u, v as usize)] -= w / (su * sv).sqrt();
                    }
                }
            }
        }
        KernelId::K6 => {
            for u in 0..n {
                k[(u, u)] = graph.weighted_degree(u) + spec.beta + spec.b;
                for (v, w) in graph.neighbors(u) {
                    k[(u, v as usize)] -= w;
                }
                for v in 0..n {
                    if v != u {
                        k[(u, v)] += spec.b;
                    }
                }
            }
        }
    }
    Ok(k)
}

/// Dense exact M = (K^-1/(2 lambda) + I/(2n))^-1, the verification oracle.
pub fn exact_kernel_matrix(
    graph: &Graph,
    spec: &KernelSpec,
    cap: Option<usize>,
) -> Result<DMatrix<f64>> {
    let n = graph.node_count();
    let cap = cap.unwrap_or(DEFAULT_DENSE_CAP);
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    if matches!(spec.id, KernelId::K4 | KernelId::K5) && spec.s == Scaling::WeightedDegree {
        for u in 0..n {
            if graph.degree(u) == 0 {
                return Err(Error::invalid(
                    "scaling S = D is undefined on degree-0 nodes; \
                     restrict to the largest connected component first",
                ));
            }
        }
    }
    let k = dense_inverse_kernel(graph, spec)?;
    let mut system = k / (2.0 * spec.lambda);
    let reg = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        system[(i, i)] += reg;
    }
    system
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("regularized kernel system is singular".into()))
}

/// Spectral norm of D^{-1/2} R_eps D^{1/2}, where R_eps stacks the push
/// residual columns for every node at the spec's alpha. Power iteration on
/// Z^T Z, tolerance 1e-8, at most 10_000 iterations.
pub fn residual_condition_norm(graph: &Graph, spec: &KernelSpec, epsilon: f64) -> Result<f64> {
    let n = graph.node_count();
    let prepared = PreparedKernel::new(graph, *spec)?;
    let cfg = prepared.push_config(epsilon);
    let mut z = DMatrix::<f64>::zeros(n, n);
    let sqrt_deg: Vec<f64> = (0..n).map(|u| graph.weighted_degree(u).sqrt()).collect();
    for s in 0..n {
        if graph.degree(s) == 0 {
            continue; // analytic column is exact: zero residual
        }
        let out = fifo_push_on(prepared.view(), &cfg, s)?;
        for (i, v) in out.r.iter() {
            let i = i as usize;
            // Similarity transform entries sqrt(D_s)/sqrt(D_i).
            let scale = if sqrt_deg[i] > 0.0 {
                sqrt_deg[s] / sqrt_deg[i]
            } else {
                0.0
            };
            z[(i, s)] = v * scale;
        }
    }
    spectral_norm(&z, 1e-8, 10_000)
}

fn spectral_norm(z: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = z.ncols();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::<f64>::from_fn(n, |_, _| rng.random::<f64>() + 0.1);
    v /= v.norm();
    let mut sigma = 0.0f64;
    for _ in 0..max_iter {
        let w = z.transpose() * (z * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - sigma).abs() <= tol * next.max(1.0) {
            return Ok(next);
        }
        sigma = next;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last: sigma,
    })
}
