//! Comparison methods: weighted majority over revealed neighbors, and the
//! truncated power-iteration kernel approximation fed through the same
//! online loop.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSequence};
use crate::learner::{fastonl_run_with_matrix, ExperimentRecord, FastOnlTuning, StepRecord};

/// Predict each arriving node by the weight-heaviest label among already
/// revealed neighbors; ties break toward the lowest label id. Nodes with no
/// revealed neighbor get a uniform random label.
pub fn weighted_majority_run(
    graph: &Graph,
    labels: &LabelSequence,
    seed: u64,
    count_votes: bool,
) -> Result<ExperimentRecord> {
    let k = labels.k();
    if k == 0 {
        return Err(Error::invalid("no labels"));
    }
    let mut revealed: Vec<Option<u32>> = vec![None; graph.node_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = vec![0.0f64; k];
    let mut steps = Vec::with_capacity(labels.order().len());
    let mut mistakes = 0usize;
    let started = Instant::now();

    for (step, &node) in labels.order().iter().enumerate() {
        let step_start = Instant::now();
        let node = node as usize;
        let truth = labels.label(node).expect("labeled");
        tally.fill(0.0);
        let mut seen_any = false;
        for (v, w) in graph.neighbors(node) {
            if let Some(label) = revealed[v as usize] {
                tally[label as usize] += if count_votes { 1.0 } else { w };
                seen_any = true;
            }
        }
        let predicted = if seen_any {
            let mut best = 0usize;
            for (i, &t) in tally.iter().enumerate() {
                if t > tally[best] {
                    best = i;
                }
            }
            best as u32
        } else {
            rng.random_range(0..k) as u32
        };
        revealed[node] = Some(truth);
        let loss = u8::from(predicted != truth);
        mistakes += loss as usize;
        steps.push(StepRecord {
            step: step as u32 + 1,
            node: node as u32,
            true_label: truth,
            predicted,
            loss,
            cum_error_rate: mistakes as f64 / (step + 1) as f64,
            micros: step_start.elapsed().as_micros() as u64,
        });
    }
    let total_seconds = started.elapsed().as_secs_f64();
    let accuracy = 1.0 - mistakes as f64 / steps.len().max(1) as f64;
    Ok(ExperimentRecord {
        steps,
        mistakes,
        accuracy,
        total_seconds,
    })
}

/// Truncated power-iteration approximation of the normalized kernel:
///
/// ```text
///   M_p = (2 n lambda / (n + lambda)) sum_{i=0}^{p} B^i,
///   B   = (n / (n + lambda)) D^{-1/2} W D^{-1/2},
/// ```
///
/// returning M_p and the fill-in ratio nnz(M_i)/n^2 after each term.
pub fn power_iteration_kernel(
    graph: &Graph,
    lambda: f64,
    p: usize,
    cap: Option<usize>,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = graph.node_count();
    let cap = cap.unwrap_or(crate::kernel::DEFAULT_DENSE_CAP);
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::config(format!("lambda must be > 0, got {lambda}")));
    }
    let nf = n as f64;
    let damp = nf / (nf + lambda);
    let mut b = DMatrix::<f64>::zeros(n, n);
    for u in 0..n {
        let du = graph.weighted_degree(u);
        for (v, w) in graph.neighbors(u) {
            let dv = graph.weighted_degree(v as usize);
            if du > 0.0 && dv > 0.0 {
                b[(v as usize, u)] = damp * w / (du * dv).sqrt();
            }
        }
    }
    let mut acc = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut nnz_ratio = Vec::with_capacity(p + 1);
    let count_nnz = |m: &DMatrix<f64>| m.iter().filter(|&&v| v != 0.0).count() as f64 / (nf * nf);
    nnz_ratio.push(count_nnz(&acc));
    for _ in 1..=p {
        term = &b * term;
        acc += &term;
        nnz_ratio.push(count_nnz(&acc));
    }
    let scale = 2.0 * nf * lambda / (nf + lambda);
    Ok((acc * scale, nnz_ratio))
}

/// Online run using the truncated power-iteration matrix for kernel
/// vectors; everything else matches the push-approximated learner.
pub fn approximate_run(
    graph: &Graph,
    labels: &LabelSequence,
    lambda: f64,
    p: usize,
    seed: u64,
    tuning: FastOnlTuning,
    cap: Option<usize>,
) -> Result<ExperimentRecord> {
    let (m, _) = power_iteration_kernel(graph, lambda, p, cap)?;
    fastonl_run_with_matrix(&m, labels, seed, tuning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{exact_kernel_matrix, KernelId, KernelSpec};

    fn triangle_plus_tail() -> Graph {
        Graph::from_edges(4, &[(0, 1, 2.0), (1, 2, 1.0), (2, 0, 1.0), (2, 3, 1.0)]).unwrap()
    }

    #[test]
    fn wm_prefers_heavier_neighbor_weight() {
        // Arrival 0, 1, 2: when 2 arrives, neighbor 0 (label 0, w=1) and
        // neighbor 1 (label 1, w=1) tie, so the lowest label id wins.
        let g = triangle_plus_tail();
        let labels = LabelSequence::full(vec![0, 1, 0, 1]).unwrap();
        let rec = weighted_majority_run(&g, &labels, 7, false).unwrap();
        assert_eq!(rec.steps.len(), 4);
        assert_eq!(rec.steps[2].predicted, 0);
        // Node 3 sees only node 2 (label 0), so it predicts 0.
        assert_eq!(rec.steps[3].predicted, 0);
    }

    #[test]
    fn wm_first_step_is_random_but_seeded() {
        let g = triangle_plus_tail();
        let labels = LabelSequence::full(vec![0, 1, 0, 1]).unwrap();
        let a = weighted_majority_run(&g, &labels, 3, false).unwrap();
        let b = weighted_majority_run(&g, &labels, 3, false).unwrap();
        assert_eq!(a.steps[0].predicted, b.steps[0].predicted);
        for s in &a.steps {
            assert!((s.predicted as usize) < labels.k());
        }
    }

    #[test]
    fn power_iteration_p0_is_scaled_identity() {
        let g = triangle_plus_tail();
        let (m, nnz) = power_iteration_kernel(&g, 2.0, 0, None).unwrap();
        let n = g.node_count() as f64;
        let want = 2.0 * n * 2.0 / (n + 2.0);
        for i in 0..g.node_count() {
            assert!((m[(i, i)] - want).abs() < 1e-12);
        }
        assert!((nnz[0] - 1.0 / n).abs() < 1e-15);
    }

    #[test]
    fn power_iteration_converges_to_exact_k2() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/karate.edges");
        let (g, _) = crate::graph::load_edge_list(path, false).unwrap();
        let lambda = 0.5 * g.node_count() as f64;
        let spec = KernelSpec::new(KernelId::K2, lambda);
        let exact = exact_kernel_matrix(&g, &spec, None).unwrap();
        let (m_big, _) = power_iteration_kernel(&g, lambda, 120, None).unwrap();
        assert!((&m_big - &exact).amax() < 1e-6);
        // Error shrinks monotonically with p.
        let mut last = f64::INFINITY;
        for p in [1usize, 3, 6, 12, 24] {
            let (mp, _) = power_iteration_kernel(&g, lambda, p, None).unwrap();
            let err = (&mp - &exact).amax();
            assert!(err <= last + 1e-12);
            last = err;
        }
    }
}
