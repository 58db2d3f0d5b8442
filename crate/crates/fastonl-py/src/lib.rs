//! Python bindings: the graph container, kernel specs, the local push, and
//! the online labeling runners.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fastonl::baselines::{power_iteration_kernel, weighted_majority_run};
use fastonl::graph::{largest_connected_component, load_edge_list, LabelSequence};
use fastonl::kernel::{KernelId, KernelSpec, PreparedKernel, Scaling};
use fastonl::learner::{
    fastonl_run, relaxation_run, DenomScale, ExperimentRecord, FastOnlTuning, PredictionRule,
    PsiScale, TraceInit,
};
use fastonl::push::{fifo_push, theoretical_bounds, KernelType, PushConfig};

fn to_py_err(err: fastonl::Error) -> PyErr {
    match err {
        fastonl::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Immutable undirected weighted graph.
#[pyclass(name = "Graph")]
struct PyGraph {
    inner: fastonl::Graph,
}

#[pymethods]
impl PyGraph {
    /// Load a whitespace-separated "u v [w]" edge list.
    #[staticmethod]
    #[pyo3(signature = (path, weighted = false))]
    fn load(path: &str, weighted: bool) -> PyResult<PyGraph> {
        let (inner, _) = load_edge_list(path, weighted).map_err(to_py_err)?;
        Ok(PyGraph { inner })
    }

    /// Build from explicit edges (node ids must be dense 0..n-1).
    #[staticmethod]
    fn from_edges(n: usize, edges: Vec<(u32, u32, f64)>) -> PyResult<PyGraph> {
        let inner = fastonl::Graph::from_edges(n, &edges).map_err(to_py_err)?;
        Ok(PyGraph { inner })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn degree(&self, u: usize) -> u32 {
        self.inner.degree(u)
    }

    fn weighted_degree(&self, u: usize) -> f64 {
        self.inner.weighted_degree(u)
    }

    fn neighbors(&self, u: usize) -> Vec<(u32, f64)> {
        self.inner.neighbors(u).collect()
    }

    fn original_id(&self, u: usize) -> u64 {
        self.inner.original_id(u)
    }

    /// vol(S): sum of unweighted degrees over the given nodes.
    fn volume(&self, nodes: Vec<usize>) -> PyResult<u64> {
        self.inner.volume(&nodes).map_err(to_py_err)
    }

    /// Largest connected component; labels use -1 for unlabeled nodes.
    fn largest_connected_component(&self, labels: Vec<i64>) -> PyResult<(PyGraph, Vec<i64>)> {
        let seq = labels_from_py(&labels, self.inner.node_count())?;
        let (sub, sub_labels) =
            largest_connected_component(&self.inner, &seq).map_err(to_py_err)?;
        let out_labels = (0..sub.node_count())
            .map(|u| sub_labels.label(u).map_or(-1, |l| l as i64))
            .collect();
        Ok((PyGraph { inner: sub }, out_labels))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, m={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

fn labels_from_py(labels: &[i64], n: usize) -> PyResult<LabelSequence> {
    if labels.len() != n {
        return Err(PyValueError::new_err(format!(
            "labels length {} != node count {n}",
            labels.len()
        )));
    }
    let opts: Vec<Option<u32>> = labels
        .iter()
        .map(|&l| if l < 0 { None } else { Some(l as u32) })
        .collect();
    LabelSequence::new(opts).map_err(to_py_err)
}

fn kernel_type_from_str(text: &str) -> PyResult<KernelType> {
    match text.to_ascii_lowercase().as_str() {
        "l" => Ok(KernelType::TypeL),
        "lap" | "laplacian" => Ok(KernelType::TypeLap),
        other => Err(PyValueError::new_err(format!(
            "unknown kernel type {other:?} (expected 'l' or 'lap')"
        ))),
    }
}

/// Parameterized kernel specification (one of the six presentations).
#[pyclass(name = "KernelSpec", skip_from_py_object)]
#[derive(Clone)]
struct PyKernelSpec {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernelSpec {
    #[new]
    #[pyo3(signature = (id, lambda_, beta = 0.0, b = 0.0, scaling = "I"))]
    fn new(id: &str, lambda_: f64, beta: f64, b: f64, scaling: &str) -> PyResult<PyKernelSpec> {
        let id: KernelId = id.parse().map_err(to_py_err)?;
        let s = match scaling {
            "I" | "i" => Scaling::Identity,
            "D" | "d" => Scaling::WeightedDegree,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown scaling {other:?} (expected 'I' or 'D')"
                )))
            }
        };
        Ok(PyKernelSpec {
            inner: KernelSpec::new(id, lambda_)
                .with_beta(beta)
                .with_b(b)
                .with_scaling(s),
        })
    }

    /// The derived regularization level of the underlying basic kernel.
    fn alpha(&self, n: usize) -> PyResult<f64> {
        self.inner.alpha(n).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "KernelSpec(id={}, lambda={}, beta={}, b={})",
            self.inner.id, self.inner.lambda, self.inner.beta, self.inner.b
        )
    }
}

/// Sparse estimate/residual pair with push instrumentation.
#[pyclass(name = "PushOutcome")]
struct PyPushOutcome {
    #[pyo3(get)]
    x: Vec<(u32, f64)>,
    #[pyo3(get)]
    r: Vec<(u32, f64)>,
    #[pyo3(get)]
    x_mass: f64,
    #[pyo3(get)]
    r_mass: f64,
    #[pyo3(get)]
    epochs: usize,
    #[pyo3(get)]
    operations: u64,
    #[pyo3(get)]
    avg_eta: f64,
    #[pyo3(get)]
    avg_active_volume: f64,
    #[pyo3(get)]
    terminal_constant: f64,
    #[pyo3(get)]
    bound_sublinear: f64,
    #[pyo3(get)]
    bound_local: f64,
}

/// Run the FIFO local push from `source`.
#[pyfunction]
#[pyo3(signature = (graph, alpha, epsilon, kernel_type, source))]
fn push(
    graph: &PyGraph,
    alpha: f64,
    epsilon: f64,
    kernel_type: &str,
    source: usize,
) -> PyResult<PyPushOutcome> {
    let cfg = PushConfig::new(alpha, epsilon, kernel_type_from_str(kernel_type)?);
    let out = fifo_push(&graph.inner, &cfg, source).map_err(to_py_err)?;
    let bounds = theoretical_bounds(&out.stats, &cfg, &graph.inner);
    Ok(PyPushOutcome {
        x: out.x.iter().collect(),
        r: out.r.iter().collect(),
        x_mass: out.x.mass(),
        r_mass: out.r.mass(),
        epochs: out.stats.epoch_count(),
        operations: out.stats.operation_count(),
        avg_eta: out.stats.avg_eta(),
        avg_active_volume: out.stats.avg_active_volume(),
        terminal_constant: out.stats.terminal_constant,
        bound_sublinear: bounds.andersen,
        bound_local: bounds.local,
    })
}

/// One approximate kernel column: (entries, diagonal value m_tt).
#[pyfunction]
fn kernel_column(
    graph: &PyGraph,
    spec: &PyKernelSpec,
    epsilon: f64,
    t: usize,
) -> PyResult<(Vec<(u32, f64)>, f64)> {
    let prepared = PreparedKernel::new(&graph.inner, spec.inner).map_err(to_py_err)?;
    let col = prepared.column(epsilon, t).map_err(to_py_err)?;
    Ok((col.values.iter().collect(), col.diag))
}

/// Per-step outcome of an online labeling run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    #[pyo3(get)]
    accuracy: f64,
    #[pyo3(get)]
    mistakes: usize,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    nodes: Vec<u32>,
    #[pyo3(get)]
    predictions: Vec<u32>,
    #[pyo3(get)]
    truths: Vec<u32>,
    #[pyo3(get)]
    total_seconds: f64,
}

impl PyRunResult {
    fn from_record(record: ExperimentRecord) -> PyRunResult {
        PyRunResult {
            accuracy: record.accuracy,
            mistakes: record.mistakes,
            steps: record.steps.len(),
            nodes: record.steps.iter().map(|s| s.node).collect(),
            predictions: record.steps.iter().map(|s| s.predicted).collect(),
            truths: record.steps.iter().map(|s| s.true_label).collect(),
            total_seconds: record.total_seconds,
        }
    }
}

fn prepare_labels(
    graph: &PyGraph,
    labels: Vec<i64>,
    order: Option<Vec<u32>>,
    shuffle_seed: Option<u64>,
) -> PyResult<LabelSequence> {
    let mut seq = labels_from_py(&labels, graph.inner.node_count())?;
    if let Some(order) = order {
        seq = seq.with_order(order).map_err(to_py_err)?;
    } else if let Some(seed) = shuffle_seed {
        seq = seq.shuffled(seed);
    }
    Ok(seq)
}

fn rule_from_str(text: &str) -> PyResult<PredictionRule> {
    match text {
        "argmax" => Ok(PredictionRule::Argmax),
        "sample" => Ok(PredictionRule::Sample),
        other => Err(PyValueError::new_err(format!(
            "unknown prediction rule {other:?} (expected 'argmax' or 'sample')"
        ))),
    }
}

/// Push-approximated online labeling.
#[pyfunction]
#[pyo3(signature = (graph, labels, spec, epsilon, seed = 0, precompute = false,
                    prediction = "argmax", order = None, shuffle_seed = None))]
#[allow(clippy::too_many_arguments)]
fn run_fastonl(
    graph: &PyGraph,
    labels: Vec<i64>,
    spec: &PyKernelSpec,
    epsilon: f64,
    seed: u64,
    precompute: bool,
    prediction: &str,
    order: Option<Vec<u32>>,
    shuffle_seed: Option<u64>,
) -> PyResult<PyRunResult> {
    let seq = prepare_labels(graph, labels, order, shuffle_seed)?;
    let tuning = FastOnlTuning {
        denom: DenomScale::K,
        psi: PsiScale::AsPrinted,
        trace: TraceInit::KnSquared,
        rule: rule_from_str(prediction)?,
    };
    let record = fastonl_run(
        &graph.inner,
        &seq,
        &spec.inner,
        epsilon,
        seed,
        precompute,
        tuning,
    )
    .map_err(to_py_err)?;
    Ok(PyRunResult::from_record(record))
}

/// Exact-kernel online labeling (dense oracle scale).
#[pyfunction]
#[pyo3(signature = (graph, labels, spec, seed = 0, cap = None, prediction = "argmax",
                    order = None, shuffle_seed = None))]
#[allow(clippy::too_many_arguments)]
fn run_relaxation(
    graph: &PyGraph,
    labels: Vec<i64>,
    spec: &PyKernelSpec,
    seed: u64,
    cap: Option<usize>,
    prediction: &str,
    order: Option<Vec<u32>>,
    shuffle_seed: Option<u64>,
) -> PyResult<PyRunResult> {
    let seq = prepare_labels(graph, labels, order, shuffle_seed)?;
    let record = relaxation_run(
        &graph.inner,
        &seq,
        &spec.inner,
        seed,
        cap,
        rule_from_str(prediction)?,
    )
    .map_err(to_py_err)?;
    Ok(PyRunResult::from_record(record))
}

/// Weighted-majority baseline.
#[pyfunction]
#[pyo3(signature = (graph, labels, seed = 0, count_votes = false, order = None,
                    shuffle_seed = None))]
fn run_weighted_majority(
    graph: &PyGraph,
    labels: Vec<i64>,
    seed: u64,
    count_votes: bool,
    order: Option<Vec<u32>>,
    shuffle_seed: Option<u64>,
) -> PyResult<PyRunResult> {
    let seq = prepare_labels(graph, labels, order, shuffle_seed)?;
    let record = weighted_majority_run(&graph.inner, &seq, seed, count_votes).map_err(to_py_err)?;
    Ok(PyRunResult::from_record(record))
}

/// Fill-in ratios of the truncated power-iteration kernel approximation.
#[pyfunction]
#[pyo3(signature = (graph, lambda_, p, cap = None))]
fn power_iteration_fill(
    graph: &PyGraph,
    lambda_: f64,
    p: usize,
    cap: Option<usize>,
) -> PyResult<Vec<f64>> {
    let (_, nnz) = power_iteration_kernel(&graph.inner, lambda_, p, cap).map_err(to_py_err)?;
    Ok(nnz)
}

#[pymodule]
fn fastonl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyKernelSpec>()?;
    m.add_class::<PyPushOutcome>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(push, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_column, m)?)?;
    m.add_function(wrap_pyfunction!(run_fastonl, m)?)?;
    m.add_function(wrap_pyfunction!(run_relaxation, m)?)?;
    m.add_function(wrap_pyfunction!(run_weighted_majority, m)?)?;
    m.add_function(wrap_pyfunction!(power_iteration_fill, m)?)?;
    Ok(())
}
