//! Experiment orchestration: config parsing, multi-trial runs with CSV and
//! JSON outputs, operation-bound sweeps, and ranked-magnitude exports.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{approximate_run, weighted_majority_run};
use crate::error::{Error, Result};
use crate::graph::{largest_connected_component, load_edge_list, Graph, LabelSequence};
use crate::kernel::{exact_kernel_matrix, KernelId, KernelSpec, Scaling};
use crate::learner::{
    fastonl_run, relaxation_run_with_matrix, DenomScale, ExperimentRecord, FastOnlTuning,
    PredictionRule, PsiScale, TraceInit,
};
use crate::push::{fifo_push, theoretical_bounds, KernelType, PushConfig};

/// A scalar that may be given in absolute form or as a multiple of n
/// ("0.15n") or a fraction over n ("0.1/n").
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaledValue {
    Absolute(f64),
    TimesN(f64),
    OverN(f64),
}

impl ScaledValue {
    pub fn parse(text: &str) -> Result<ScaledValue> {
        let t = text.trim();
        let bad = |_| Error::config(format!("cannot parse scaled value {text:?}"));
        if let Some(head) = t.strip_suffix("/n") {
            return Ok(ScaledValue::OverN(head.trim().parse().map_err(bad)?));
        }
        if let Some(head) = t.strip_suffix('n') {
            let head = head.trim().trim_end_matches('*').trim();
            return Ok(ScaledValue::TimesN(head.parse().map_err(bad)?));
        }
        Ok(ScaledValue::Absolute(t.parse().map_err(bad)?))
    }

    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            ScaledValue::Absolute(v) => v,
            ScaledValue::TimesN(v) => v * n as f64,
            ScaledValue::OverN(v) => v / n as f64,
        }
    }
}

impl<'de> Deserialize<'de> for ScaledValue {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Number(v) => Ok(ScaledValue::Absolute(v)),
            Raw::Text(s) => ScaledValue::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for ScaledValue {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            ScaledValue::Absolute(v) => ser.serialize_f64(v),
            ScaledValue::TimesN(v) => ser.serialize_str(&format!("{v}n")),
            ScaledValue::OverN(v) => ser.serialize_str(&format!("{v}/n")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Relaxation,
    Fastonl,
    Wm,
    Approximate,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "relaxation" => Ok(Method::Relaxation),
            "fastonl" => Ok(Method::Fastonl),
            "wm" => Ok(Method::Wm),
            "approximate" => Ok(Method::Approximate),
            other => Err(Error::config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// Arrival order as listed in the dataset.
    #[default]
    Dataset,
    /// Per-trial seeded shuffle.
    Shuffle,
}

fn default_trials() -> usize {
    1
}

fn default_lambda() -> ScaledValue {
    ScaledValue::TimesN(0.15)
}

fn default_eps() -> ScaledValue {
    ScaledValue::OverN(0.1)
}

fn default_kernel() -> KernelId {
    KernelId::K2
}

fn default_power_terms() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub weighted: bool,
    /// Restrict to the largest connected component before running.
    #[serde(default)]
    pub lcc: bool,
    pub method: Method,
    #[serde(default = "default_kernel")]
    pub kernel: KernelId,
    #[serde(default = "default_lambda")]
    pub lambda: ScaledValue,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub s: Scaling,
    #[serde(default = "default_eps")]
    pub eps: ScaledValue,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub order: OrderMode,
    /// Arrival-order file (one original node id per line); overrides `order`.
    #[serde(default)]
    pub order_file: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(default)]
    pub precompute: bool,
    /// Count neighbor votes instead of weighting them (weighted majority).
    #[serde(default)]
    pub wm_count_votes: bool,
    /// Truncation order p of the power-iteration baseline.
    #[serde(default = "default_power_terms")]
    pub power_terms: usize,
    /// Override for the initial remaining-trace value T_1.
    #[serde(default)]
    pub trace_override: Option<f64>,
    /// Use the exact learner's D^2 T_t denominator instead of k T_t.
    #[serde(default)]
    pub denom_d_squared: bool,
    /// Use the admissible score scale instead of the default one.
    #[serde(default)]
    pub psi_admissible: bool,
    /// Prediction rule: follow the score ("argmax", the default) or draw
    /// from the water-filled distribution ("sample").
    #[serde(default)]
    pub prediction: Prediction,
    /// Node-count cap for methods that materialize a dense kernel.
    #[serde(default)]
    pub dense_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    #[default]
    Argmax,
    Sample,
}

impl Prediction {
    fn rule(self) -> PredictionRule {
        match self {
            Prediction::Argmax => PredictionRule::Argmax,
            Prediction::Sample => PredictionRule::Sample,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if self.method == Method::Approximate && self.kernel != KernelId::K2 {
            return Err(Error::config(
                "the power-iteration baseline approximates the normalized kernel (K2)",
            ));
        }
        Ok(())
    }

    fn kernel_spec(&self, n: usize) -> Result<KernelSpec> {
        let lambda = self.lambda.resolve(n);
        let mut spec = KernelSpec::new(self.kernel, lambda)
            .with_b(self.b)
            .with_scaling(self.s);
        if let Some(beta) = self.beta {
            spec = spec.with_beta(beta);
        }
        spec.validate(n)?;
        Ok(spec)
    }

    fn tuning(&self) -> FastOnlTuning {
        FastOnlTuning {
            denom: if self.denom_d_squared {
                DenomScale::DSquared
            } else {
                DenomScale::K
            },
            psi: if self.psi_admissible {
                PsiScale::Admissible
            } else {
                PsiScale::AsPrinted
            },
            trace: match self.trace_override {
                Some(v) => TraceInit::Value(v),
                None => TraceInit::KnSquared,
            },
            rule: self.prediction.rule(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    pub steps_per_trial: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub per_trial_accuracy: Vec<f64>,
    pub mean_step_micros: f64,
    pub total_seconds: f64,
    pub config: ExperimentConfig,
}

/// Load the configured dataset, honoring the LCC switch.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Graph, LabelSequence)> {
    let (graph, _) = load_edge_list(&cfg.dataset, cfg.weighted)?;
    let (labels, _) = LabelSequence::from_file(&graph, &cfg.labels)?;
    let (graph, labels) = if cfg.lcc {
        largest_connected_component(&graph, &labels)?
    } else {
        (graph, labels)
    };
    match &cfg.order_file {
        Some(path) => {
            let labels = labels.with_order_file(&graph, path)?;
            Ok((graph, labels))
        }
        None => Ok((graph, labels)),
    }
}

fn run_single_trial(
    cfg: &ExperimentConfig,
    graph: &Graph,
    labels: &LabelSequence,
    dense: Option<&nalgebra::DMatrix<f64>>,
    trial: usize,
) -> Result<ExperimentRecord> {
    let trial_seed = cfg.seed.wrapping_add(trial as u64);
    let labels = match (cfg.order_file.is_some(), cfg.order) {
        (true, _) | (false, OrderMode::Dataset) => labels.clone(),
        (false, OrderMode::Shuffle) => labels.clone().shuffled(trial_seed),
    };
    let n = graph.node_count();
    match cfg.method {
        Method::Wm => weighted_majority_run(graph, &labels, trial_seed, cfg.wm_count_votes),
        Method::Relaxation => {
            let m = dense.expect("dense kernel precomputed for relaxation");
            relaxation_run_with_matrix(m, &labels, trial_seed, cfg.prediction.rule())
        }
        Method::Fastonl => {
            let spec = cfg.kernel_spec(n)?;
            let eps = cfg.eps.resolve(n);
            fastonl_run(
                graph,
                &labels,
                &spec,
                eps,
                trial_seed,
                cfg.precompute,
                cfg.tuning(),
            )
        }
        Method::Approximate => {
            let lambda = cfg.lambda.resolve(n);
            approximate_run(
                graph,
                &labels,
                lambda,
                cfg.power_terms,
                trial_seed,
                cfg.tuning(),
                cfg.dense_cap,
            )
        }
    }
}

/// Run all trials (in parallel), write one CSV per trial plus a summary
/// JSON, and return the summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let (graph, labels) = load_dataset(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    // The exact kernel is trial-independent; factor it out of the loop.
    let dense = match cfg.method {
        Method::Relaxation => Some(exact_kernel_matrix(
            &graph,
            &cfg.kernel_spec(graph.node_count())?,
            cfg.dense_cap,
        )?),
        _ => None,
    };
    let records: Vec<Result<ExperimentRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_single_trial(cfg, &graph, &labels, dense.as_ref(), trial))
        .collect();
    let mut accuracies = Vec::with_capacity(cfg.trials);
    let mut micros_total = 0u64;
    let mut steps_total = 0usize;
    let mut seconds = 0.0;
    let mut steps_per_trial = 0;
    for (trial, record) in records.into_iter().enumerate() {
        let record = record?;
        let path = cfg.out.join(format!("trial_{trial}.csv"));
        write_steps_csv(&path, &graph, &record)?;
        accuracies.push(record.accuracy);
        micros_total += record.steps.iter().map(|s| s.micros).sum::<u64>();
        steps_total += record.steps.len();
        steps_per_trial = record.steps.len();
        seconds += record.total_seconds;
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let var = accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / accuracies.len() as f64;
    let summary = ExperimentSummary {
        trials: cfg.trials,
        steps_per_trial,
        accuracy_mean: mean,
        accuracy_std: var.sqrt(),
        per_trial_accuracy: accuracies,
        mean_step_micros: micros_total as f64 / steps_total.max(1) as f64,
        total_seconds: seconds,
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::config(format!("summary serialization: {e}")))?;
    std::fs::write(cfg.out.join("summary.json"), json)?;
    Ok(summary)
}

/// Per-step CSV. Node ids are reported in the dataset's original id space.
pub fn write_steps_csv(path: &Path, graph: &Graph, record: &ExperimentRecord) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "step,node,true_label,pred_label,loss,cum_error_rate,step_micros"
    )?;
    for s in &record.steps {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.step,
            graph.original_id(s.node as usize),
            s.true_label,
            s.predicted,
            s.loss,
            s.cum_error_rate,
            s.micros
        )?;
    }
    Ok(())
}

/// The epsilon grid the operation-bound sweeps use:
/// [1e-2, 1e2] * sqrt((1-alpha)/(1+alpha)) / n, log-spaced.
pub fn default_eps_grid(alpha: f64, n: usize, points: usize) -> Vec<f64> {
    let base = ((1.0 - alpha).max(f64::MIN_POSITIVE) / (1.0 + alpha)).sqrt() / n as f64;
    let (lo, hi) = (1e-2, 1e2);
    (0..points)
        .map(|i| {
            let t = i as f64 / (points.max(2) - 1) as f64;
            base * lo * (hi / lo).powf(t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BoundRow {
    pub eps: f64,
    pub source: u32,
    pub measured: u64,
    pub andersen: f64,
    pub local: f64,
    pub power_iteration: Option<f64>,
}

/// Measured operation counts against the three bounds over an epsilon grid
/// and a seeded sample of source nodes.
pub fn bound_comparison(
    graph: &Graph,
    alpha: f64,
    kernel_type: KernelType,
    eps_grid: &[f64],
    sources: usize,
    seed: u64,
) -> Result<Vec<BoundRow>> {
    let mut candidates: Vec<u32> = (0..graph.node_count() as u32)
        .filter(|&u| graph.degree(u as usize) > 0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(sources.max(1));
    candidates.sort_unstable();
    let mut rows = Vec::with_capacity(eps_grid.len() * candidates.len());
    for &eps in eps_grid {
        for &s in &candidates {
            let cfg = PushConfig::new(alpha, eps, kernel_type);
            let outcome = fifo_push(graph, &cfg, s as usize)?;
            let bounds = theoretical_bounds(&outcome.stats, &cfg, graph);
            rows.push(BoundRow {
                eps,
                source: s,
                measured: bounds.measured,
                andersen: bounds.andersen,
                local: bounds.local,
                power_iteration: bounds.power_iteration,
            });
        }
    }
    Ok(rows)
}

pub fn write_bound_csv(path: &Path, graph: &Graph, rows: &[BoundRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "eps,source,measured,andersen,local,poweriter")?;
    for r in rows {
        let pi = r.power_iteration.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.eps,
            graph.original_id(r.source as usize),
            r.measured,
            r.andersen,
            r.local,
            pi
        )?;
    }
    Ok(())
}

/// Per-push stats line, one JSON object per line.
pub fn write_push_stats_jsonl(
    path: &Path,
    graph: &Graph,
    alpha: f64,
    kernel_type: KernelType,
    eps: f64,
    sources: &[usize],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for &s in sources {
        let cfg = PushConfig::new(alpha, eps, kernel_type);
        let outcome = fifo_push(graph, &cfg, s)?;
        let bounds = theoretical_bounds(&outcome.stats, &cfg, graph);
        let stats = &outcome.stats;
        let line = serde_json::json!({
            "source": graph.original_id(s),
            "T": stats.epoch_count(),
            "R_T": stats.operation_count(),
            "vol_avg": stats.avg_active_volume(),
            "eta_avg": stats.avg_eta(),
            "C": stats.terminal_constant,
            "bound_andersen": bounds.andersen,
            "bound_local": bounds.local,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Rank-sorted magnitudes of push estimates for log-log plots: one row per
/// (source, rank).
pub fn export_power_law(
    path: &Path,
    graph: &Graph,
    cfg: &PushConfig,
    sample: usize,
    seed: u64,
) -> Result<()> {
    let mut candidates: Vec<u32> = (0..graph.node_count() as u32)
        .filter(|&u| graph.degree(u as usize) > 0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(sample.max(1));
    candidates.sort_unstable();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "source,rank,magnitude")?;
    for &s in &candidates {
        let outcome = fifo_push(graph, cfg, s as usize)?;
        let mut mags: Vec<f64> = outcome.x.iter().map(|(_, v)| v.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).expect("finite magnitudes"));
        for (rank, m) in mags.iter().enumerate() {
            writeln!(out, "{},{},{}", graph.original_id(s as usize), rank + 1, m)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_value_parsing() {
        assert_eq!(
            ScaledValue::parse("0.15n").unwrap(),
            ScaledValue::TimesN(0.15)
        );
        assert_eq!(
            ScaledValue::parse("0.1/n").unwrap(),
            ScaledValue::OverN(0.1)
        );
        assert_eq!(
            ScaledValue::parse("2.5").unwrap(),
            ScaledValue::Absolute(2.5)
        );
        assert_eq!(
            ScaledValue::parse("1e-5").unwrap(),
            ScaledValue::Absolute(1e-5)
        );
        assert!(ScaledValue::parse("abc").is_err());
        assert_eq!(ScaledValue::TimesN(0.15).resolve(200), 30.0);
        assert_eq!(ScaledValue::OverN(0.1).resolve(10), 0.01);
    }

    #[test]
    fn config_json_with_string_lambda() {
        let json = r#"{
            "dataset": "data/karate.edges",
            "labels": "data/karate.labels",
            "method": "fastonl",
            "lambda": "0.15n",
            "eps": "0.1/n",
            "out": "/tmp/out"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.lambda, ScaledValue::TimesN(0.15));
        assert_eq!(cfg.eps, ScaledValue::OverN(0.1));
        assert_eq!(cfg.kernel, KernelId::K2);
        assert_eq!(cfg.trials, 1);
    }

    #[test]
    fn eps_grid_spans_four_decades() {
        let grid = default_eps_grid(0.5, 100, 9);
        assert_eq!(grid.len(), 9);
        let ratio = grid.last().unwrap() / grid.first().unwrap();
        assert!((ratio - 1e4).abs() / 1e4 < 1e-9);
    }
}
