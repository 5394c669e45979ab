use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{PipelineError, Result};
use crate::graph::{generate, parse_gset, GeneratorSpec, Graph};
use crate::maxcut::{
    brute_force_maxcut, gw_partition, levs_partition, train_cut_model, CutModelConfig, CutResult, GwConfig, LevsConfig,
    BRUTE_FORCE_MAX_NODES,
};

/// Where the benchmark graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    /// Generated graph; `graph_seed` only matters for random generators.
    Generator {
        spec: GeneratorSpec,
        graph_seed: u64,
    },
    Gset(PathBuf),
}

impl FromStr for GraphSource {
    type Err = PipelineError;

    /// `ring:N`, `grid2d:RxC`, `complete:N`, `bipartite:AxB`,
    /// `er:N:P[:SEED]`, or `gset:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("gset:") {
            if path.is_empty() {
                return Err(PipelineError::InvalidSource(s.into()));
            }
            return Ok(Self::Gset(PathBuf::from(path)));
        }
        let invalid = || PipelineError::InvalidSource(s.into());
        let (spec, graph_seed) = match s.strip_prefix("er:") {
            Some(rest) => {
                let parts: Vec<&str> = rest.split(':').collect();
                match parts.as_slice() {
                    [n, p] => (format!("er:{n}:{p}"), 0),
                    [n, p, seed] => (format!("er:{n}:{p}"), seed.parse().map_err(|_| invalid())?),
                    _ => return Err(invalid()),
                }
            }
            None => (s.to_string(), 0),
        };
        let spec: GeneratorSpec = spec.parse().map_err(|_| invalid())?;
        Ok(Self::Generator { spec, graph_seed })
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Generator {
                spec: spec @ GeneratorSpec::ErdosRenyi { .. },
                graph_seed,
            } => write!(f, "{spec}:{graph_seed}"),
            Self::Generator { spec, .. } => write!(f, "{spec}"),
            Self::Gset(path) => write!(f, "gset:{}", path.display()),
        }
    }
}

pub fn load_source(source: &GraphSource) -> Result<Graph<f64>> {
    match source {
        GraphSource::Generator { spec, graph_seed } => Ok(generate(*spec, *graph_seed)?),
        GraphSource::Gset(path) => {
            let file = File::open(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => PipelineError::SourceNotFound(path.display().to_string()),
                _ => PipelineError::Io(e),
            })?;
            Ok(parse_gset(BufReader::new(file))?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Trained GNN cut model.
    MaxCutPool,
    Levs,
    Gw,
    BruteForce,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::MaxCutPool, Method::Levs, Method::Gw, Method::BruteForce];

    pub fn name(self) -> &'static str {
        match self {
            Self::MaxCutPool => "maxcutpool",
            Self::Levs => "levs",
            Self::Gw => "gw",
            Self::BruteForce => "bruteforce",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected maxcutpool, levs, gw, or bruteforce)"))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub cut_model: CutModelConfig,
    pub gw: GwConfigRecord,
    pub levs: LevsConfigRecord,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    /// Fill `wall_time_s`; off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cut_model: CutModelConfig::default(),
            gw: GwConfig::default().into(),
            levs: LevsConfig::default().into(),
            jobs: 1,
            timing: false,
        }
    }
}

/// Serializable mirror of [`GwConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GwConfigRecord {
    pub rank: Option<usize>,
    pub ascent_iters: usize,
    pub step_scale: f64,
    pub rounding_trials: usize,
}

impl From<GwConfig> for GwConfigRecord {
    fn from(c: GwConfig) -> Self {
        Self {
            rank: c.rank,
            ascent_iters: c.ascent_iters,
            step_scale: c.step_scale,
            rounding_trials: c.rounding_trials,
        }
    }
}

impl From<GwConfigRecord> for GwConfig {
    fn from(c: GwConfigRecord) -> Self {
        Self {
            rank: c.rank,
            ascent_iters: c.ascent_iters,
            step_scale: c.step_scale,
            rounding_trials: c.rounding_trials,
        }
    }
}

/// Serializable mirror of [`LevsConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevsConfigRecord {
    pub tol: f64,
    pub max_iters: usize,
}

impl From<LevsConfig> for LevsConfigRecord {
    fn from(c: LevsConfig) -> Self {
        Self {
            tol: c.tol,
            max_iters: c.max_iters,
        }
    }
}

impl From<LevsConfigRecord> for LevsConfig {
    fn from(c: LevsConfigRecord) -> Self {
        Self {
            tol: c.tol,
            max_iters: c.max_iters,
        }
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "graph",
    "method",
    "seed",
    "n",
    "undirected_edges",
    "cut_value",
    "cut_fraction",
    "loss",
    "epochs_run",
    "wall_time_s",
];

/// One benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub graph: String,
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub undirected_edges: usize,
    pub cut_value: f64,
    pub cut_fraction: f64,
    pub loss: f64,
    /// Training epochs for the GNN, power iterations for LEVS, ascent
    /// iterations for GW, empty for brute force.
    pub epochs_run: Option<usize>,
    pub wall_time_s: Option<f64>,
    #[serde(skip)]
    pub cut: Option<CutResult>,
}

/// Runs every method for every seed on one graph. Rows come back
/// seed-major in the order of `methods`; brute force is skipped on graphs
/// with more than 24 nodes.
pub fn run_maxcut_experiment(
    source: &GraphSource,
    methods: &[Method],
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<Vec<ResultRow>> {
    let g = load_source(source)?;
    let name = source.to_string();
    let jobs: Vec<(u64, Method)> = seeds
        .iter()
        .flat_map(|&seed| methods.iter().map(move |&m| (seed, m)))
        .filter(|&(_, m)| m != Method::BruteForce || g.n() <= BRUTE_FORCE_MAX_NODES)
        .collect();
    if methods.contains(&Method::BruteForce) && g.n() > BRUTE_FORCE_MAX_NODES {
        log::warn!("skipping brute force on {} nodes", g.n());
    }
    let run = |&(seed, method): &(u64, Method)| -> Result<ResultRow> {
        let start = Instant::now();
        let (cut, epochs) = match method {
            Method::MaxCutPool => {
                let out = train_cut_model(&g, &config.cut_model, seed)?;
                (out.result, Some(out.epochs_run))
            }
            Method::Levs => {
                let out = levs_partition(&g, config.levs.into(), seed)?;
                if !out.converged {
                    log::warn!("power iteration did not converge on {name} (seed {seed})");
                }
                (out.cut, Some(out.iterations))
            }
            Method::Gw => {
                let gw: GwConfig = config.gw.into();
                (gw_partition(&g, gw, seed)?, Some(gw.ascent_iters))
            }
            Method::BruteForce => (brute_force_maxcut(&g)?, None),
        };
        let elapsed = start.elapsed().as_secs_f64();
        Ok(ResultRow {
            graph: name.clone(),
            method,
            seed,
            n: g.n(),
            undirected_edges: g.num_undirected_edges(),
            cut_value: cut.cut_value,
            cut_fraction: cut.cut_fraction,
            loss: cut.loss_value,
            epochs_run: epochs,
            wall_time_s: config.timing.then_some(elapsed),
            cut: Some(cut),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(run).collect())
}

/// Reproducibility stanza written ahead of reports.
#[derive(Debug, Serialize)]
struct Stanza<'a> {
    tool: &'static str,
    version: &'static str,
    source: &'a str,
    methods: Vec<&'static str>,
    seeds: &'a [u64],
    config: &'a ExperimentConfig,
}

fn stanza<'a>(source: &'a str, methods: &[Method], seeds: &'a [u64], config: &'a ExperimentConfig) -> Stanza<'a> {
    Stanza {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        source,
        methods: methods.iter().map(|m| m.name()).collect(),
        seeds,
        config,
    }
}

/// CSV with `#`-prefixed reproducibility lines, a header row, then one line
/// per result.
pub fn write_csv<W: Write>(
    mut out: W,
    rows: &[ResultRow],
    source: &str,
    methods: &[Method],
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<()> {
    let meta = serde_json::to_string(&stanza(source, methods, seeds, config))?;
    writeln!(out, "# {meta}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.graph.clone(),
            r.method.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.undirected_edges.to_string(),
            r.cut_value.to_string(),
            r.cut_fraction.to_string(),
            r.loss.to_string(),
            r.epochs_run.map(|e| e.to_string()).unwrap_or_default(),
            r.wall_time_s.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON array of rows; the stanza goes to `meta`.
pub fn write_json<W: Write, M: Write>(
    out: W,
    meta: M,
    rows: &[ResultRow],
    source: &str,
    methods: &[Method],
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<()> {
    serde_json::to_writer_pretty(out, rows)?;
    serde_json::to_writer_pretty(meta, &stanza(source, methods, seeds, config))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.cut_model.epochs = 30;
        c
    }

    #[test]
    fn source_grammar() {
        assert_eq!(
            "er:12:0.3:5".parse::<GraphSource>().unwrap(),
            GraphSource::Generator {
                spec: GeneratorSpec::ErdosRenyi { n: 12, p: 0.3 },
                graph_seed: 5
            }
        );
        assert_eq!("er:12:0.3:5".parse::<GraphSource>().unwrap().to_string(), "er:12:0.3:5");
        assert_eq!("ring:8".parse::<GraphSource>().unwrap().to_string(), "ring:8");
        assert!("gset:".parse::<GraphSource>().is_err());
        assert!("hexagon:3".parse::<GraphSource>().is_err());
    }

    #[test]
    fn ring_rows_are_seed_major_and_bounded() {
        let source: GraphSource = "ring:16".parse().unwrap();
        let methods = [Method::MaxCutPool, Method::Levs, Method::Gw];
        let rows = run_maxcut_experiment(&source, &methods, &[0, 1, 2], &quick()).unwrap();
        assert_eq!(rows.len(), 9);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.seed, (i / 3) as u64);
            assert_eq!(r.method, methods[i % 3]);
            assert!(r.cut_fraction <= 1.0);
            assert_eq!(r.wall_time_s, None);
        }
    }

    #[test]
    fn oracle_dominates_on_small_er() {
        let source: GraphSource = "er:12:0.3:1".parse().unwrap();
        let rows = run_maxcut_experiment(&source, &Method::ALL, &[0, 1], &quick()).unwrap();
        let best = rows.iter().find(|r| r.method == Method::BruteForce).unwrap().cut_value;
        assert!(rows.iter().all(|r| r.cut_value <= best + 1e-9));
    }

    #[test]
    fn gset_rows_echo_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "4 3\n1 2 1\n2 3 1\n3 4 1\n").unwrap();
        let source = GraphSource::Gset(path);
        let rows = run_maxcut_experiment(&source, &[Method::Levs], &[0], &quick()).unwrap();
        assert_eq!((rows[0].n, rows[0].undirected_edges), (4, 3));
        let missing = GraphSource::Gset(dir.path().join("missing.txt"));
        assert!(matches!(
            run_maxcut_experiment(&missing, &[Method::Levs], &[0], &quick()),
            Err(PipelineError::SourceNotFound(_))
        ));
    }

    #[test]
    fn brute_force_skipped_on_large_graphs() {
        let source: GraphSource = "ring:30".parse().unwrap();
        let rows = run_maxcut_experiment(&source, &[Method::Levs, Method::BruteForce], &[0], &quick()).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn csv_is_deterministic_across_job_counts() {
        let source: GraphSource = "er:10:0.4:2".parse().unwrap();
        let seeds = [3, 4];
        let render = |jobs| {
            let config = ExperimentConfig { jobs, ..quick() };
            let rows = run_maxcut_experiment(&source, &Method::ALL, &seeds, &config).unwrap();
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows, &source.to_string(), &Method::ALL, &seeds, &quick()).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let one = render(1);
        assert_eq!(one, render(3));
        let mut lines = one.lines();
        assert!(lines.next().unwrap().starts_with("# {"));
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.count(), 8);
    }
}
