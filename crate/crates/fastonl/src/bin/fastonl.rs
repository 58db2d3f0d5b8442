//! Command-line front end: experiment runs, bound sweeps, ranked-magnitude
//! exports, and an oracle check of the approximate kernel columns.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fastonl::error::Error;
use fastonl::graph::{largest_connected_component, load_edge_list, Graph, LabelSequence};
use fastonl::harness::{
    bound_comparison, default_eps_grid, export_power_law, run_experiment, write_bound_csv,
    write_push_stats_jsonl, ExperimentConfig, Method, OrderMode, Prediction, ScaledValue,
};
use fastonl::kernel::{exact_kernel_matrix, KernelId, KernelSpec, PreparedKernel, Scaling};
use fastonl::push::{check_linear_invariant, KernelType, PushConfig};

#[derive(Parser)]
#[command(
    name = "fastonl",
    version,
    about = "Online node labeling on large graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an online labeling experiment (CSV per trial + summary JSON).
    Run(Box<RunArgs>),
    /// Sweep epsilon and export measured push work against its bounds.
    Bounds(BoundsArgs),
    /// Export rank-sorted push magnitudes for log-log plots.
    Powerlaw(PowerlawArgs),
    /// Compare approximate kernel columns against the dense oracle.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    /// Smoothing level; accepts "0.15n" style values.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Diagonal scaling for K4/K5: I or D.
    #[arg(long)]
    scaling: Option<String>,
    /// Push tolerance; accepts "0.1/n" style values.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Arrival order: dataset or shuffle.
    #[arg(long)]
    order: Option<String>,
    /// Arrival-order file (one original node id per line).
    #[arg(long)]
    order_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    weighted: bool,
    /// Restrict to the largest connected component.
    #[arg(long)]
    lcc: bool,
    /// Materialize the approximate kernel and use true row access.
    #[arg(long)]
    precompute: bool,
    /// Weighted-majority: count votes instead of summing edge weights.
    #[arg(long)]
    wm_count_votes: bool,
    /// Truncation order of the power-iteration baseline.
    #[arg(long)]
    power_terms: Option<usize>,
    /// Override the initial remaining-trace value T_1.
    #[arg(long)]
    trace: Option<f64>,
    /// Use the D^2 T_t denominator instead of k T_t.
    #[arg(long)]
    denom_d_squared: bool,
    /// Use the admissible score scale instead of the default one.
    #[arg(long)]
    psi_admissible: bool,
    /// Prediction rule: argmax (default) or sample.
    #[arg(long)]
    prediction: Option<String>,
    /// Node cap for dense-kernel methods.
    #[arg(long)]
    dense_cap: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    alpha: f64,
    /// Basic kernel: "l" (random walk) or "lap" (regularized Laplacian).
    #[arg(long, default_value = "l")]
    kernel_type: String,
    /// Number of epsilon grid points.
    #[arg(long, default_value_t = 10)]
    eps_points: usize,
    /// Number of sampled source nodes.
    #[arg(long, default_value_t = 20)]
    sources: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also dump per-push stats as JSON lines at --stats-eps.
    #[arg(long)]
    stats_jsonl: Option<PathBuf>,
    /// Push tolerance for the stats dump; accepts "0.1/n" style values.
    #[arg(long, default_value = "0.1/n")]
    stats_eps: String,
}

#[derive(Args)]
struct PowerlawArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value = "l")]
    kernel_type: String,
    /// Push tolerance; accepts "0.1/n" style values.
    #[arg(long, default_value = "1e-12")]
    eps: String,
    /// Number of sampled source nodes.
    #[arg(long, default_value_t = 20)]
    sample: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    lcc: bool,
    #[arg(long, default_value = "k2")]
    kernel: String,
    #[arg(long, default_value = "0.15n")]
    lambda: String,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value = "0.1/n")]
    eps: String,
    /// How many columns to compare.
    #[arg(long, default_value_t = 10)]
    columns: usize,
    #[arg(long)]
    dense_cap: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Powerlaw(args) => cmd_powerlaw(args),
        Command::OracleCheck(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_run(args: RunArgs) -> fastonl::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => {
            let dataset = args
                .dataset
                .clone()
                .ok_or_else(|| Error::config("--dataset is required without --config"))?;
            let labels = args
                .labels
                .clone()
                .ok_or_else(|| Error::config("--labels is required without --config"))?;
            let method: Method = args
                .method
                .as_deref()
                .ok_or_else(|| Error::config("--method is required without --config"))?
                .parse()?;
            let out = args
                .out
                .clone()
                .ok_or_else(|| Error::config("--out is required without --config"))?;
            serde_json::from_value(serde_json::json!({
                "dataset": dataset,
                "labels": labels,
                "method": method,
                "out": out,
            }))
            .map_err(|e| Error::config(e.to_string()))?
        }
    };
    if let Some(v) = args.dataset {
        cfg.dataset = v;
    }
    if let Some(v) = args.labels {
        cfg.labels = v;
    }
    if let Some(v) = &args.method {
        cfg.method = v.parse()?;
    }
    if let Some(v) = &args.kernel {
        cfg.kernel = v.parse()?;
    }
    if let Some(v) = &args.lambda {
        cfg.lambda = ScaledValue::parse(v)?;
    }
    if let Some(v) = args.beta {
        cfg.beta = Some(v);
    }
    if let Some(v) = args.b {
        cfg.b = v;
    }
    if let Some(v) = &args.scaling {
        cfg.s = match v.as_str() {
            "I" | "i" => Scaling::Identity,
            "D" | "d" => Scaling::WeightedDegree,
            other => return Err(Error::config(format!("unknown scaling {other:?}"))),
        };
    }
    if let Some(v) = &args.eps {
        cfg.eps = ScaledValue::parse(v)?;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.order {
        cfg.order = match v.as_str() {
            "dataset" => OrderMode::Dataset,
            "shuffle" => OrderMode::Shuffle,
            other => return Err(Error::config(format!("unknown order mode {other:?}"))),
        };
    }
    if args.order_file.is_some() {
        cfg.order_file = args.order_file;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    cfg.weighted |= args.weighted;
    cfg.lcc |= args.lcc;
    cfg.precompute |= args.precompute;
    cfg.wm_count_votes |= args.wm_count_votes;
    if let Some(v) = args.power_terms {
        cfg.power_terms = v;
    }
    if args.trace.is_some() {
        cfg.trace_override = args.trace;
    }
    cfg.denom_d_squared |= args.denom_d_squared;
    cfg.psi_admissible |= args.psi_admissible;
    if let Some(v) = &args.prediction {
        cfg.prediction = match v.as_str() {
            "argmax" => Prediction::Argmax,
            "sample" => Prediction::Sample,
            other => return Err(Error::config(format!("unknown prediction rule {other:?}"))),
        };
    }
    if args.dense_cap.is_some() {
        cfg.dense_cap = args.dense_cap;
    }

    let summary = run_experiment(&cfg)?;
    println!(
        "{} trials on {}: accuracy {:.4} +/- {:.4}, {:.1} us/step, {:.2}s total",
        summary.trials,
        cfg.dataset.display(),
        summary.accuracy_mean,
        summary.accuracy_std,
        summary.mean_step_micros,
        summary.total_seconds
    );
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

fn parse_kernel_type(text: &str) -> fastonl::Result<KernelType> {
    match text.to_ascii_lowercase().as_str() {
        "l" => Ok(KernelType::TypeL),
        "lap" | "laplacian" => Ok(KernelType::TypeLap),
        other => Err(Error::config(format!(
            "unknown kernel type {other:?} (expected \"l\" or \"lap\")"
        ))),
    }
}

fn load_graph_only(path: &PathBuf, weighted: bool) -> fastonl::Result<Graph> {
    let (graph, _) = load_edge_list(path, weighted)?;
    Ok(graph)
}

fn cmd_bounds(args: BoundsArgs) -> fastonl::Result<()> {
    let graph = load_graph_only(&args.dataset, args.weighted)?;
    let ty = parse_kernel_type(&args.kernel_type)?;
    if ty == KernelType::TypeL && !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::config("Type-L requires alpha in (0,1)"));
    }
    let grid = default_eps_grid(args.alpha, graph.node_count(), args.eps_points);
    let rows = bound_comparison(&graph, args.alpha, ty, &grid, args.sources, args.seed)?;
    write_bound_csv(&args.out, &graph, &rows)?;
    let violations = rows
        .iter()
        .filter(|r| r.measured as f64 > r.andersen || r.measured as f64 > r.local * (1.0 + 1e-12))
        .count();
    println!(
        "{} rows over {} eps points; bound violations: {violations}",
        rows.len(),
        grid.len()
    );
    println!("wrote {}", args.out.display());
    if let Some(stats_path) = &args.stats_jsonl {
        let eps = ScaledValue::parse(&args.stats_eps)?.resolve(graph.node_count());
        let sources: Vec<usize> = rows
            .iter()
            .map(|r| r.source as usize)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        write_push_stats_jsonl(stats_path, &graph, args.alpha, ty, eps, &sources)?;
        println!("wrote {}", stats_path.display());
    }
    Ok(())
}

fn cmd_powerlaw(args: PowerlawArgs) -> fastonl::Result<()> {
    let graph = load_graph_only(&args.dataset, args.weighted)?;
    let ty = parse_kernel_type(&args.kernel_type)?;
    let eps = ScaledValue::parse(&args.eps)?.resolve(graph.node_count());
    let cfg = PushConfig::new(args.alpha, eps, ty);
    export_power_law(&args.out, &graph, &cfg, args.sample, args.seed)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> fastonl::Result<()> {
    let (graph, _) = load_edge_list(&args.dataset, args.weighted)?;
    let graph = if args.lcc {
        let labels = LabelSequence::full(vec![0; graph.node_count()])?;
        largest_connected_component(&graph, &labels)?.0
    } else {
        graph
    };
    let n = graph.node_count();
    let lambda = ScaledValue::parse(&args.lambda)?.resolve(n);
    let mut spec = KernelSpec::new(args.kernel.parse::<KernelId>()?, lambda);
    if let Some(beta) = args.beta {
        spec = spec.with_beta(beta);
    }
    let eps = ScaledValue::parse(&args.eps)?.resolve(n);
    let exact = exact_kernel_matrix(&graph, &spec, args.dense_cap)?;
    let prepared = PreparedKernel::new(&graph, spec)?;
    let push_cfg = prepared.push_config(eps);
    let basic = prepared.dense_basic()?;

    let stride = (n / args.columns.max(1)).max(1);
    let mut max_col_err = 0.0f64;
    let mut max_invariant_err = 0.0f64;
    let mut checked = 0usize;
    for t in (0..n).step_by(stride) {
        if graph.degree(t) == 0 {
            continue;
        }
        let col = prepared.column(eps, t)?;
        let mut err = 0.0f64;
        for i in 0..n {
            err = err.max((col.values.get(i) - exact[(i, t)]).abs());
        }
        max_col_err = max_col_err.max(err);
        let outcome = prepared.push(eps, t)?;
        let exact_basic = basic.column(t).into_owned();
        let inv = check_linear_invariant(&push_cfg, &outcome, &basic, &exact_basic)?;
        max_invariant_err = max_invariant_err.max(inv);
        checked += 1;
    }
    println!(
        "checked {checked} columns at eps = {eps:.3e}: max column error {max_col_err:.3e}, \
         max linear-invariant error {max_invariant_err:.3e}"
    );
    Ok(())
}
