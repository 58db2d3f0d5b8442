//! FIFO local push: sparse approximation of one column of the two basic
//! kernel inverses,
//!
//! ```text
//!   Type-L:   X = alpha (I - (1-alpha) W D^-1)^-1      (alpha in (0,1))
//!   Type-Lap: X = (alpha I + D - W)^-1                 (alpha > 0)
//! ```
//!
//! with per-epoch instrumentation (active volumes, convergence factors,
//! terminal constant) so the operation-count bounds can be evaluated against
//! the measured work.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Residual increments below this are treated as zero to avoid denormals.
const RESIDUAL_FLOOR: f64 = 1e-300;

const SENTINEL: u32 = u32::MAX;

/// Which basic kernel the push solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelType {
    /// Random-walk form, personalized PageRank when weights are trivial.
    TypeL,
    /// Regularized-Laplacian form.
    TypeLap,
}

#[derive(Debug, Clone, Copy)]
pub struct PushConfig {
    pub alpha: f64,
    /// Per-degree residual tolerance: node u is active while r_u >= epsilon * d_u.
    pub epsilon: f64,
    pub kernel_type: KernelType,
}

impl PushConfig {
    pub fn new(alpha: f64, epsilon: f64, kernel_type: KernelType) -> PushConfig {
        PushConfig {
            alpha,
            epsilon,
            kernel_type,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        match self.kernel_type {
            KernelType::TypeL => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return Err(Error::config(format!(
                        "Type-L requires alpha in (0,1), got {}",
                        self.alpha
                    )));
                }
            }
            KernelType::TypeLap => {
                if !self.alpha.is_finite() || self.alpha <= 0.0 {
                    return Err(Error::config(format!(
                        "Type-Lap requires alpha > 0, got {}",
                        self.alpha
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sparse vector over node ids, sorted by index, with the entry sum cached.
#[derive(Debug, Clone, Default)]
pub struct SparseVec {
    entries: Vec<(u32, f64)>,
    mass: f64,
}

impl SparseVec {
    pub fn from_map(map: HashMap<u32, f64>) -> SparseVec {
        let mut entries: Vec<(u32, f64)> = map.into_iter().filter(|&(_, v)| v != 0.0).collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mass = entries.iter().map(|&(_, v)| v).sum();
        SparseVec { entries, mass }
    }

    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> SparseVec {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mass = entries.iter().map(|&(_, v)| v).sum();
        SparseVec { entries, mass }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i as u32), |&(j, _)| j)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Cached sum of entries (equals the l1 mass for nonnegative vectors).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v.abs()).sum()
    }

    pub fn to_dense(&self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    /// Support node ids.
    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }
}

/// Per-epoch instrumentation.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    /// vol(S_t): sum of unweighted degrees over active pops in this epoch.
    pub active_volume: u64,
    /// Local convergence factor eta_t in (0, 1].
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct PushStats {
    /// One entry per epoch that performed at least one active pop.
    pub epochs: Vec<EpochStats>,
    /// Total active-node pops.
    pub active_pops: u64,
    /// Terminal constant C_{alpha,T} (infinite when no residual node has a
    /// recorded pusher, e.g. when the source was never active).
    pub terminal_constant: f64,
    /// Maximum (transformed) weighted degree among all touched nodes.
    pub max_weighted_degree: f64,
}

impl PushStats {
    /// Number of epochs T.
    pub fn epoch_count(&self) -> usize {
        self.epochs.len()
    }

    /// R_T: the dominant operation count, the sum of active-pop degrees.
    pub fn operation_count(&self) -> u64 {
        self.epochs.iter().map(|e| e.active_volume).sum()
    }

    /// vol(S_{1:T}): average active volume per epoch.
    pub fn avg_active_volume(&self) -> f64 {
        if self.epochs.is_empty() {
            0.0
        } else {
            self.operation_count() as f64 / self.epochs.len() as f64
        }
    }

    /// eta_{1:T}: average local convergence factor.
    pub fn avg_eta(&self) -> f64 {
        if self.epochs.is_empty() {
            1.0
        } else {
            self.epochs.iter().map(|e| e.eta).sum::<f64>() / self.epochs.len() as f64
        }
    }
}

/// Result of one push: sparse estimate, sparse residual, instrumentation.
#[derive(Debug, Clone)]
pub struct PushOutcome {
    pub x: SparseVec,
    pub r: SparseVec,
    pub stats: PushStats,
}

/// A read view of the graph with an optional per-source-node diagonal
/// rescaling: pushing from u sees weights w_{uv} * inv_scale[u] and
/// transformed weighted degree D_u * inv_scale[u]. Column sums of the
/// rescaled adjacency still equal the transformed degree, which is what the
/// push recurrences rely on.
#[derive(Clone, Copy)]
pub(crate) struct PushView<'a> {
    graph: &'a Graph,
    inv_scale: Option<&'a [f64]>,
}

impl<'a> PushView<'a> {
    pub(crate) fn plain(graph: &'a Graph) -> PushView<'a> {
        PushView {
            graph,
            inv_scale: None,
        }
    }

    pub(crate) fn scaled(graph: &'a Graph, inv_scale: &'a [f64]) -> PushView<'a> {
        debug_assert_eq!(inv_scale.len(), graph.node_count());
        PushView {
            graph,
            inv_scale: Some(inv_scale),
        }
    }

    pub(crate) fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn degree(&self, u: usize) -> u32 {
        self.graph.degree(u)
    }

    fn factor(&self, u: usize) -> f64 {
        self.inv_scale.map_or(1.0, |s| s[u])
    }

    pub(crate) fn weighted_degree(&self, u: usize) -> f64 {
        self.graph.weighted_degree(u) * self.factor(u)
    }

    fn out_edges(&self, u: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let f = self.factor(u);
        self.graph.neighbors(u).map(move |(v, w)| (v, w * f))
    }

    fn out_weight(&self, u: usize, v: u32) -> Option<f64> {
        self.graph.edge_weight(u, v).map(|w| w * self.factor(u))
    }
}

/// Run the FIFO push from source `s` on the plain graph.
pub fn fifo_push(graph: &Graph, cfg: &PushConfig, s: usize) -> Result<PushOutcome> {
    fifo_push_on(PushView::plain(graph), cfg, s)
}

pub(crate) fn fifo_push_on(view: PushView<'_>, cfg: &PushConfig, s: usize) -> Result<PushOutcome> {
    cfg.validate()?;
    let n = view.node_count();
    if s >= n {
        return Err(Error::NodeOutOfRange { id: s, n });
    }
    if view.degree(s) == 0 {
        return Err(Error::invalid(format!("push source {s} has degree 0")));
    }
    let alpha = cfg.alpha;
    let eps = cfg.epsilon;
    let type_lap = cfg.kernel_type == KernelType::TypeLap;

    // eta_t weights each node by d_v (Type-L) or d_v / (alpha + D_v) (Type-Lap).
    let eta_weight = |u: usize| -> f64 {
        let d = view.degree(u) as f64;
        if type_lap {
            d / (alpha + view.weighted_degree(u))
        } else {
            d
        }
    };

    let mut x: HashMap<u32, f64> = HashMap::new();
    let mut r: HashMap<u32, f64> = HashMap::new();
    let mut last_pusher: HashMap<u32, u32> = HashMap::new();
    let mut in_queue = vec![false; n];
    let mut queue: VecDeque<u32> = VecDeque::new();

    let initial = if type_lap { 1.0 / alpha } else { 1.0 };
    r.insert(s as u32, initial);
    in_queue[s] = true;
    queue.push_back(s as u32);
    queue.push_back(SENTINEL);

    // Running sum of eta weights over supp(r); snapshotted at epoch starts.
    let mut supp_weight = eta_weight(s);
    let mut epoch_denom = supp_weight;
    let mut epoch_active_volume = 0u64;
    let mut epoch_active_weight = 0f64;
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut active_pops = 0u64;
    let mut max_wdeg = view.weighted_degree(s);

    loop {
        let u = queue.pop_front().expect("queue holds the sentinel");
        if u == SENTINEL {
            if epoch_active_volume > 0 {
                epochs.push(EpochStats {
                    active_volume: epoch_active_volume,
                    eta: epoch_active_weight / epoch_denom,
                });
                epoch_active_volume = 0;
                epoch_active_weight = 0.0;
            } else {
                // No push happened, so nothing was queued behind the sentinel.
                debug_assert!(queue.is_empty());
            }
            if queue.is_empty() {
                break;
            }
            epoch_denom = supp_weight;
            queue.push_back(SENTINEL);
            continue;
        }
        let u = u as usize;
        in_queue[u] = false;
        let ru = match r.get(&(u as u32)) {
            Some(&v) => v,
            None => continue,
        };
        if !ru.is_finite() {
            return Err(Error::Numeric(format!(
                "residual at node {u} became non-finite"
            )));
        }
        let du = view.degree(u) as f64;
        if ru < eps * du {
            continue; // inactive pop
        }
        active_pops += 1;
        epoch_active_volume += view.degree(u) as u64;
        epoch_active_weight += eta_weight(u);

        let wdeg = view.weighted_degree(u);
        let (gain, spread) = if type_lap {
            (alpha * ru / (alpha + wdeg), ru / (alpha + wdeg))
        } else {
            (alpha * ru, (1.0 - alpha) * ru / wdeg)
        };
        *x.entry(u as u32).or_insert(0.0) += gain;
        r.remove(&(u as u32));
        supp_weight -= eta_weight(u);
        for (v, w) in view.out_edges(u) {
            let delta = spread * w;
            if delta < RESIDUAL_FLOOR {
                continue;
            }
            let entry = r.entry(v).or_insert(0.0);
            if *entry == 0.0 {
                supp_weight += eta_weight(v as usize);
                max_wdeg = max_wdeg.max(view.weighted_degree(v as usize));
            }
            *entry += delta;
            last_pusher.insert(v, u as u32);
            if !in_queue[v as usize] {
                in_queue[v as usize] = true;
                queue.push_back(v);
            }
        }
    }

    let r = SparseVec::from_map(r);
    // C_{alpha,T}: for each terminal residual node v, use the last active
    // neighbor u that pushed into it.
    let mut c_sum = 0.0;
    for (v, _) in r.iter() {
        let Some(&u) = last_pusher.get(&v) else {
            continue; // leftover initial mass at the source
        };
        let u = u as usize;
        let w = view.out_weight(u, v).expect("pusher is a neighbor");
        let du = view.degree(u) as f64;
        c_sum += if type_lap {
            du * w / (alpha + view.weighted_degree(u))
        } else {
            (1.0 - alpha) * du * w / view.weighted_degree(u)
        };
    }
    let terminal_constant = if c_sum > 0.0 {
        1.0 / c_sum
    } else {
        f64::INFINITY
    };

    Ok(PushOutcome {
        x: SparseVec::from_map(x),
        r,
        stats: PushStats {
            epochs,
            active_pops,
            terminal_constant,
            max_weighted_degree: max_wdeg,
        },
    })
}

/// Dense basic kernel for the plain graph, used as the verification oracle.
pub fn dense_basic_kernel(graph: &Graph, cfg: &PushConfig) -> Result<DMatrix<f64>> {
    dense_basic_kernel_on(PushView::plain(graph), cfg)
}

pub(crate) fn dense_basic_kernel_on(view: PushView<'_>, cfg: &PushConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n = view.node_count();
    let mut system = DMatrix::<f64>::zeros(n, n);
    match cfg.kernel_type {
        KernelType::TypeL => {
            // I - (1-alpha) W D^-1, with the Moore-Penrose convention for
            // degree-0 columns.
            for u in 0..n {
                system[(u, u)] = 1.0;
                let wdeg = view.weighted_degree(u);
                if wdeg > 0.0 {
                    for (v, w) in view.out_edges(u) {
                        system[(v as usize, u)] -= (1.0 - cfg.alpha) * w / wdeg;
                    }
                }
            }
        }
        KernelType::TypeLap => {
            for u in 0..n {
                system[(u, u)] = cfg.alpha + view.weighted_degree(u);
                for (v, w) in view.out_edges(u) {
                    system[(v as usize, u)] -= w;
                }
            }
        }
    }
    let inverse = system
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("basic kernel system is singular".into()))?;
    Ok(match cfg.kernel_type {
        KernelType::TypeL => inverse * cfg.alpha,
        KernelType::TypeLap => inverse,
    })
}

/// Max-norm error of the linear invariant
/// `x_eps + c X r_eps = x_exact` with c = 1 (Type-L) or alpha (Type-Lap),
/// where `basic` is the dense kernel X from the oracle.
pub fn check_linear_invariant(
    cfg: &PushConfig,
    outcome: &PushOutcome,
    basic: &DMatrix<f64>,
    exact_column: &DVector<f64>,
) -> Result<f64> {
    let n = basic.nrows();
    if basic.ncols() != n || exact_column.len() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: basic {}x{}, column {}",
            basic.nrows(),
            basic.ncols(),
            exact_column.len()
        )));
    }
    let c = match cfg.kernel_type {
        KernelType::TypeL => 1.0,
        KernelType::TypeLap => cfg.alpha,
    };
    let correction = basic * outcome.r.to_dense(n) * c;
    let reconstructed = outcome.x.to_dense(n) + correction;
    Ok((reconstructed - exact_column).amax())
}

/// The three operation-count bounds next to the measured R_T.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    pub measured: u64,
    /// Sublinear bound: 1/(alpha epsilon) for Type-L; the Type-Lap analogue
    /// carries the (alpha + D_max)/alpha factor from the larger initial mass
    /// and per-pop removal rate.
    pub andersen: f64,
    /// Local linear bound driven by the measured epoch averages.
    pub local: f64,
    /// Power-iteration style bound, defined only when epsilon < 1/(2m).
    pub power_iteration: Option<f64>,
}

pub fn theoretical_bounds(stats: &PushStats, cfg: &PushConfig, graph: &Graph) -> BoundReport {
    let alpha = cfg.alpha;
    let eps = cfg.epsilon;
    let dmax = stats.max_weighted_degree;
    let andersen = match cfg.kernel_type {
        KernelType::TypeL => 1.0 / (alpha * eps),
        KernelType::TypeLap => (alpha + dmax) / (alpha * alpha * eps),
    };
    let local = if stats.epochs.is_empty() {
        0.0
    } else {
        let vol = stats.avg_active_volume();
        let eta = stats.avg_eta();
        let c = stats.terminal_constant;
        match cfg.kernel_type {
            KernelType::TypeL => vol / (alpha * eta) * (c / eps).ln(),
            // The initial mass is 1/alpha, which adds the alpha inside the log.
            KernelType::TypeLap => vol * (alpha + dmax) / (alpha * eta) * (c / (alpha * eps)).ln(),
        }
    };
    let m = graph.edge_count() as f64;
    let power_iteration = if eps < 1.0 / (2.0 * m) {
        Some(m / alpha * (1.0 / (eps * m)).ln() + m)
    } else {
        None
    };
    BoundReport {
        measured: stats.operation_count(),
        andersen,
        local,
        power_iteration,
    }
}
