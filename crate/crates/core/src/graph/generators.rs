use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Graph, GraphError, Result};
use crate::Scalar;

/// Deterministic graph families with unit edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorSpec {
    Ring { n: usize },
    Grid2d { rows: usize, cols: usize },
    Complete { n: usize },
    CompleteBipartite { left: usize, right: usize },
    ErdosRenyi { n: usize, p: f64 },
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Ring { n } | Self::Complete { n } => n >= 1,
            Self::Grid2d { rows, cols } => rows >= 1 && cols >= 1,
            Self::CompleteBipartite { left, right } => left >= 1 && right >= 1,
            Self::ErdosRenyi { n, p } => n >= 1 && p > 0.0 && p <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(GraphError::InvalidSpec(self.to_string()))
        }
    }

    pub fn node_count(&self) -> usize {
        match *self {
            Self::Ring { n } | Self::Complete { n } | Self::ErdosRenyi { n, .. } => n,
            Self::Grid2d { rows, cols } => rows * cols,
            Self::CompleteBipartite { left, right } => left + right,
        }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Ring { n } => write!(f, "ring:{n}"),
            Self::Grid2d { rows, cols } => write!(f, "grid2d:{rows}x{cols}"),
            Self::Complete { n } => write!(f, "complete:{n}"),
            Self::CompleteBipartite { left, right } => write!(f, "bipartite:{left}x{right}"),
            Self::ErdosRenyi { n, p } => write!(f, "er:{n}:{p}"),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = GraphError;

    /// Parses `ring:N`, `grid2d:RxC`, `complete:N`, `bipartite:AxB`, `er:N:P`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || GraphError::InvalidSpec(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let pair = |t: &str| -> Result<(usize, usize)> {
            let (a, b) = t.split_once('x').ok_or_else(bad)?;
            Ok((int(a)?, int(b)?))
        };
        let spec = match kind {
            "ring" => Self::Ring { n: int(rest)? },
            "complete" => Self::Complete { n: int(rest)? },
            "grid2d" => {
                let (rows, cols) = pair(rest)?;
                Self::Grid2d { rows, cols }
            }
            "bipartite" => {
                let (left, right) = pair(rest)?;
                Self::CompleteBipartite { left, right }
            }
            "er" => {
                let (n, p) = rest.split_once(':').ok_or_else(bad)?;
                Self::ErdosRenyi {
                    n: int(n)?,
                    p: p.parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Generates the graph described by `spec`. Only `ErdosRenyi` consumes the
/// seed; every family is a pure function of `(spec, seed)`.
pub fn generate<S: Scalar>(spec: GeneratorSpec, seed: u64) -> Result<Graph<S>> {
    spec.validate()?;
    let one = S::one();
    let mut edges = Vec::new();
    let n = spec.node_count();
    match spec {
        GeneratorSpec::Ring { n } => {
            if n == 2 {
                edges.push((0, 1, one));
            } else if n >= 3 {
                edges.extend((0..n).map(|i| (i, (i + 1) % n, one)));
            }
        }
        GeneratorSpec::Grid2d { rows, cols } => {
            for r in 0..rows {
                for c in 0..cols {
                    let id = r * cols + c;
                    if c + 1 < cols {
                        edges.push((id, id + 1, one));
                    }
                    if r + 1 < rows {
                        edges.push((id, id + cols, one));
                    }
                }
            }
        }
        GeneratorSpec::Complete { n } => {
            for u in 0..n {
                edges.extend((u + 1..n).map(|v| (u, v, one)));
            }
        }
        GeneratorSpec::CompleteBipartite { left, right } => {
            for u in 0..left {
                edges.extend((left..left + right).map(|v| (u, v, one)));
            }
        }
        GeneratorSpec::ErdosRenyi { n, p } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((u, v, one));
                    }
                }
            }
        }
    }
    Graph::build(n, &edges, None, None)
}

/// Parameters of a labeled two-block graph for node classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoCommunityParams {
    pub block_size: usize,
    pub p_in: f64,
    pub cross_edges: usize,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian noise added to the class means.
    pub feature_noise: f64,
}

impl Default for TwoCommunityParams {
    fn default() -> Self {
        Self {
            block_size: 20,
            p_in: 0.3,
            cross_edges: 4,
            feature_dim: 4,
            feature_noise: 0.5,
        }
    }
}

/// Two Erdős–Rényi blocks joined by a few random cross edges. Node label is
/// the block index; the first feature coordinate is `+1` or `-1` by block,
/// all coordinates carry Gaussian noise.
pub fn two_community<S: Scalar>(params: TwoCommunityParams, seed: u64) -> Result<Graph<S>> {
    let TwoCommunityParams {
        block_size,
        p_in,
        cross_edges,
        feature_dim,
        feature_noise,
    } = params;
    if block_size < 1
        || !(p_in > 0.0 && p_in <= 1.0)
        || feature_dim < 1
        || cross_edges > block_size * block_size
        || feature_noise < 0.0
    {
        return Err(GraphError::InvalidParams(format!("{params:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * block_size;
    let mut edges = Vec::new();
    for block in 0..2 {
        let base = block * block_size;
        for u in 0..block_size {
            for v in u + 1..block_size {
                if rng.random::<f64>() < p_in {
                    edges.push((base + u, base + v, S::one()));
                }
            }
        }
    }
    let mut cross = BTreeSet::new();
    while cross.len() < cross_edges {
        let u = rng.random_range(0..block_size);
        let v = block_size + rng.random_range(0..block_size);
        cross.insert((u, v));
    }
    edges.extend(cross.into_iter().map(|(u, v)| (u, v, S::one())));
    let labels: Vec<usize> = (0..n).map(|i| i / block_size).collect();
    let features = Array2::from_shape_fn((n, feature_dim), |(i, f)| {
        let mean = if f == 0 {
            if labels[i] == 0 {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        };
        let noise: f64 = rng.sample(StandardNormal);
        S::of(mean + feature_noise * noise)
    });
    Graph::build(n, &edges, Some(features), Some(labels))
}
