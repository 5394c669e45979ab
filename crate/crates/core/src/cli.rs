//! The `mcpool` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::graph::{
    read_dataset_jsonl, two_community, write_dataset_jsonl, Dataset, GraphError, MultipartiteGraphs,
    MultipartiteParams, TwoCommunityParams,
};
use crate::maxcut::{cut_features, CutModelConfig};
use crate::nn::{parse_layer_sizes, ScoreNetConfig};
use crate::pipelines::{
    full_suite, load_source, run_maxcut_experiment, train_graph_classifier, train_node_classifier, write_csv,
    write_json, ExperimentConfig, GraphSource, Method, NodeMasks, PipelineError, RunReport, TaskConfig,
};
use crate::pool::{maxcutpool, PoolConfig, ReduceVariant, UnpoolMode};

const SEED_VAR: &str = "MCPOOL_SEED";
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "mcpool", version, about = "MAXCUT solving and MaxCutPool graph pooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Benchmark MAXCUT methods on one graph.
    Maxcut(MaxcutArgs),
    /// Pool a graph once and print statistics of the coarsened graph.
    PoolDemo(PoolDemoArgs),
    /// Write a multipartite classification dataset as JSON Lines.
    GenMultipartite(GenArgs),
    /// Train a graph classifier with one pooling layer.
    TrainGraph(TrainGraphArgs),
    /// Train a node classifier on a two-community graph.
    TrainNode(TrainNodeArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ScoreNetArgs {
    /// HetMP widths, e.g. 32x4,16x4,8x4.
    #[arg(long, value_parser = layer_sizes)]
    hetmp: Option<Vec<usize>>,
    /// Hidden widths of the score head, e.g. 16,16.
    #[arg(long, value_parser = layer_sizes)]
    mlp: Option<Vec<usize>>,
    /// Heterophilic propagation strength.
    #[arg(long, value_parser = positive)]
    delta: Option<f64>,
}

impl ScoreNetArgs {
    fn config(&self) -> ScoreNetConfig {
        let mut c = ScoreNetConfig::default();
        if let Some(h) = &self.hetmp {
            c.hetmp_sizes = h.clone();
        }
        if let Some(m) = &self.mlp {
            c.mlp_sizes = m.clone();
        }
        if let Some(d) = self.delta {
            c.delta = d;
        }
        c
    }
}

#[derive(Debug, Args)]
struct MaxcutArgs {
    /// ring:N, grid2d:RxC, complete:N, bipartite:AxB, er:N:P[:SEED] or gset:PATH.
    #[arg(long)]
    graph: GraphSource,
    #[arg(long, value_delimiter = ',', default_value = "maxcutpool,levs,gw")]
    method: Vec<Method>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to json for `.json` paths and csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Record wall-clock time per row.
    #[arg(long)]
    timing: bool,
    #[arg(long, value_parser = positive)]
    lr: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    gw_trials: Option<u64>,
    #[command(flatten)]
    scorenet: ScoreNetArgs,
}

#[derive(Debug, Args)]
struct PoolArgs {
    /// Fraction of nodes kept as supernodes, in (0, 1].
    #[arg(long, default_value_t = 0.5, value_parser = ratio)]
    ratio: f64,
    #[arg(long, default_value_t = 3)]
    max_iter: usize,
    #[arg(long, default_value_t = ReduceVariant::Plain)]
    variant: ReduceVariant,
    #[command(flatten)]
    scorenet: ScoreNetArgs,
}

#[derive(Debug, Args)]
struct PoolDemoArgs {
    #[arg(long)]
    graph: GraphSource,
    #[arg(long)]
    seed: Option<u64>,
    /// Width of the random features used when the graph has none.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    feature_dim: u64,
    #[command(flatten)]
    pool: PoolArgs,
}

#[derive(Debug, Args)]
struct MultipartiteArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
    centers: u64,
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u64).range(1..))]
    per_class: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    max_cluster: u64,
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    noise: f64,
}

impl MultipartiteArgs {
    fn params(&self) -> MultipartiteParams {
        MultipartiteParams {
            centers: self.centers as usize,
            graphs_per_class: self.per_class as usize,
            max_nodes_per_cluster: self.max_cluster as usize,
            noise_scale: self.noise,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    params: MultipartiteArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TaskArgs {
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    lr: f64,
    /// Weight of the auxiliary cut loss.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    beta: f64,
    /// Train without the auxiliary cut loss.
    #[arg(long)]
    no_loss: bool,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    width: u64,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
    #[arg(long, default_value_t = 0.1, value_parser = dropout)]
    dropout: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the full run report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pool: PoolArgs,
}

impl TaskArgs {
    fn config(&self) -> TaskConfig {
        TaskConfig {
            mp_width: self.width as usize,
            ratio: self.pool.ratio,
            beta: self.beta,
            no_loss: self.no_loss,
            lr: self.lr,
            epochs: self.epochs as usize,
            patience: self.patience,
            batch_size: self.batch_size as usize,
            max_iter: self.pool.max_iter,
            scorenet: self.pool.scorenet.config(),
            variant: self.pool.variant,
            dropout: self.dropout,
            ..TaskConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct TrainGraphArgs {
    /// JSON Lines dataset; a multipartite dataset is generated when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    gen: MultipartiteArgs,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[command(flatten)]
    task: TaskArgs,
}

#[derive(Debug, Args)]
struct TrainNodeArgs {
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    block_size: u64,
    #[arg(long, default_value_t = 0.3, value_parser = ratio)]
    p_in: f64,
    #[arg(long, default_value_t = 4)]
    cross_edges: usize,
    #[arg(long, default_value_t = 0.5, value_parser = non_negative)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0.6, value_parser = ratio)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.2, value_parser = fraction)]
    val_frac: f64,
    #[arg(long, default_value_t = UnpoolMode::Broadcast)]
    unpool: UnpoolMode,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[command(flatten)]
    task: TaskArgs,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5, value_parser = positive)]
    eps: f64,
}

fn layer_sizes(s: &str) -> Result<Vec<usize>, String> {
    parse_layer_sizes(s).map_err(|e| e.to_string())
}

fn float(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    float(s).and_then(|v| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(format!("{v} must be positive"))
        }
    })
}

fn non_negative(s: &str) -> Result<f64, String> {
    float(s).and_then(|v| {
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(format!("{v} must be non-negative"))
        }
    })
}

fn ratio(s: &str) -> Result<f64, String> {
    float(s).and_then(|v| {
        if v > 0.0 && v <= 1.0 {
            Ok(v)
        } else {
            Err(format!("{v} must lie in (0, 1]"))
        }
    })
}

fn fraction(s: &str) -> Result<f64, String> {
    float(s).and_then(|v| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("{v} must lie in [0, 1]"))
        }
    })
}

fn dropout(s: &str) -> Result<f64, String> {
    float(s).and_then(|v| {
        if (0.0..1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("{v} must lie in [0, 1)"))
        }
    })
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidConfig(_)
            | PipelineError::BadMasks(_)
            | PipelineError::Graph(GraphError::InvalidParams(_)) => Self::Usage(e.to_string()),
            e => Self::Runtime(e.to_string()),
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (program name first), runs the subcommand, and returns the
/// process exit code: 0 on success, 2 on usage errors, 1 on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = default_seed().and_then(|seed| match cli.command {
        Command::Maxcut(a) => cmd_maxcut(a, seed),
        Command::PoolDemo(a) => cmd_pool_demo(a, seed),
        Command::GenMultipartite(a) => cmd_gen_multipartite(a, seed),
        Command::TrainGraph(a) => cmd_train_graph(a, seed),
        Command::TrainNode(a) => cmd_train_node(a, seed),
        Command::Gradcheck(a) => cmd_gradcheck(a, seed),
    });
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn default_seed() -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_VAR} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn cmd_maxcut(a: MaxcutArgs, default_seed: u64) -> Outcome {
    let seeds = if a.seeds.is_empty() {
        vec![default_seed]
    } else {
        a.seeds
    };
    let mut config = ExperimentConfig {
        cut_model: CutModelConfig {
            scorenet: a.scorenet.config(),
            ..CutModelConfig::default()
        },
        jobs: a.jobs as usize,
        timing: a.timing,
        ..ExperimentConfig::default()
    };
    if let Some(lr) = a.lr {
        config.cut_model.lr = lr;
    }
    if let Some(e) = a.epochs {
        config.cut_model.epochs = e as usize;
    }
    if let Some(t) = a.gw_trials {
        config.gw.rounding_trials = t as usize;
    }
    let rows = run_maxcut_experiment(&a.graph, &a.method, &seeds, &config)?;
    let format = a.format.unwrap_or(match &a.out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
        _ => Format::Csv,
    });
    let source = a.graph.to_string();
    match &a.out {
        Some(path) => {
            let mut out = create(path)?;
            match format {
                Format::Csv => write_csv(&mut out, &rows, &source, &a.method, &seeds, &config)?,
                Format::Json => {
                    let mut meta_path = path.clone().into_os_string();
                    meta_path.push(".meta");
                    let meta = create(Path::new(&meta_path))?;
                    write_json(&mut out, meta, &rows, &source, &a.method, &seeds, &config)?;
                }
            }
            out.flush()?;
            let mut stdout = io::stdout().lock();
            writeln!(
                stdout,
                "{:<12} {:>6} {:>12} {:>12} {:>8}",
                "method", "seed", "cut_value", "cut_fraction", "epochs"
            )?;
            for r in &rows {
                writeln!(
                    stdout,
                    "{:<12} {:>6} {:>12.4} {:>12.4} {:>8}",
                    r.method.name(),
                    r.seed,
                    r.cut_value,
                    r.cut_fraction,
                    r.epochs_run.map(|e| e.to_string()).unwrap_or_else(|| "-".into())
                )?;
            }
        }
        None => {
            let stdout = io::stdout().lock();
            match format {
                Format::Csv => write_csv(stdout, &rows, &source, &a.method, &seeds, &config)?,
                Format::Json => write_json(stdout, io::stderr().lock(), &rows, &source, &a.method, &seeds, &config)?,
            }
            println!();
        }
    }
    Ok(0)
}

fn cmd_pool_demo(a: PoolDemoArgs, default_seed: u64) -> Outcome {
    let seed = a.seed.unwrap_or(default_seed);
    let config = PoolConfig {
        ratio: a.pool.ratio,
        variant: a.pool.variant,
        max_iter: a.pool.max_iter,
        scorenet: a.pool.scorenet.config(),
    };
    let g = load_source(&a.graph)?;
    let x = cut_features(&g, a.feature_dim as usize, seed);
    let pooled = maxcutpool(&g, &x, &config, seed).map_err(PipelineError::from)?;
    let assignment = &pooled.plan.assignment;
    let max_hops = assignment.hops.iter().flatten().max().copied().unwrap_or(0);
    let mut hop_counts = vec![0usize; max_hops + 1];
    for h in assignment.hops.iter().flatten() {
        hop_counts[*h] += 1;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "graph            {}", a.graph)?;
    writeln!(out, "nodes            {}", g.n())?;
    writeln!(out, "edges            {}", g.num_undirected_edges())?;
    writeln!(out, "supernodes       {}", pooled.graph.n())?;
    writeln!(out, "pooled edges     {}", pooled.graph.num_undirected_edges())?;
    writeln!(out, "pooled weight    {}", pooled.graph.total_edge_weight() / 2.0)?;
    writeln!(out, "cut loss         {:.6}", pooled.cut_loss)?;
    writeln!(out, "hops histogram   {hop_counts:?}")?;
    writeln!(out, "random fallbacks {}", assignment.random_fallback_count)?;
    Ok(0)
}

fn cmd_gen_multipartite(a: GenArgs, default_seed: u64) -> Outcome {
    let seed = a.seed.unwrap_or(default_seed);
    let params = a.params.params();
    let graphs = MultipartiteGraphs::<f64>::new(params, seed)?;
    let count = match &a.out {
        Some(path) => {
            let count = write_dataset_jsonl(create(path)?, params.centers, graphs)?;
            println!(
                "wrote {count} graphs in {} classes to {}",
                params.centers,
                path.display()
            );
            count
        }
        None => {
            let count = write_dataset_jsonl(BufWriter::new(io::stdout().lock()), params.centers, graphs)?;
            eprintln!("wrote {count} graphs in {} classes", params.centers);
            count
        }
    };
    log::info!("{count} records generated with seed {seed}");
    Ok(0)
}

fn print_report(report: &RunReport, out: Option<&Path>) -> Outcome {
    let pct = |v: Option<f64>| v.map(|a| format!("{:.4}", a)).unwrap_or_else(|| "-".into());
    println!("task             {}", report.task);
    println!("seed             {}", report.seed);
    println!("epochs run       {}", report.epochs_run);
    println!("checkpoint epoch {}", report.checkpoint_epoch);
    if let (Some(first), Some(last)) = (report.task_losses.first(), report.task_losses.last()) {
        println!("task loss        {first:.4} -> {last:.4}");
    }
    if let Some(last) = report.cut_losses.last() {
        println!("cut loss         {last:.4}");
    }
    println!("val accuracy     {}", pct(report.val_accuracy));
    println!("test accuracy    {}", pct(report.test_accuracy));
    if report.degenerate {
        println!("warning: training labels hold a single class");
    }
    if let Some(path) = out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, report)?;
        w.flush()?;
    }
    Ok(0)
}

fn cmd_train_graph(a: TrainGraphArgs, default_seed: u64) -> Outcome {
    let seed = a.task.seed.unwrap_or(default_seed);
    let dataset: Dataset<f64> = match &a.data {
        Some(path) => {
            let file = File::open(path).map_err(|_| PipelineError::SourceNotFound(path.display().to_string()))?;
            read_dataset_jsonl(io::BufReader::new(file))?
        }
        None => crate::graph::generate_multipartite_dataset(a.gen.params(), a.data_seed)?,
    };
    let report = train_graph_classifier(&dataset, &a.task.config(), seed)?;
    print_report(&report, a.task.out.as_deref())
}

fn cmd_train_node(a: TrainNodeArgs, default_seed: u64) -> Outcome {
    let seed = a.task.seed.unwrap_or(default_seed);
    let params = TwoCommunityParams {
        block_size: a.block_size as usize,
        p_in: a.p_in,
        cross_edges: a.cross_edges,
        feature_noise: a.feature_noise,
        ..TwoCommunityParams::default()
    };
    let g = two_community::<f64>(params, a.data_seed)?;
    let masks = NodeMasks::random_split(g.n(), a.train_frac, a.val_frac, a.data_seed)?;
    let config = TaskConfig {
        unpool: a.unpool,
        ..a.task.config()
    };
    let report = train_node_classifier(&g, &masks, &config, seed)?;
    print_report(&report, a.task.out.as_deref())
}

fn cmd_gradcheck(a: GradcheckArgs, default_seed: u64) -> Outcome {
    let seed = a.seed.unwrap_or(default_seed);
    let entries = full_suite(seed, a.eps)?;
    let mut worst = 0.0f64;
    let mut out = io::stdout().lock();
    for e in &entries {
        let ok = e.max_rel_error <= GRADCHECK_TOLERANCE;
        writeln!(
            out,
            "{:<24} {:>12.3e}  {}",
            e.name,
            e.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        )?;
        worst = worst.max(e.max_rel_error);
        if e.max_rel_error.is_nan() {
            worst = f64::INFINITY;
        }
    }
    writeln!(
        out,
        "worst relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:e})"
    )?;
    Ok(if worst <= GRADCHECK_TOLERANCE { 0 } else { 1 })
}
