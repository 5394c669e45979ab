use std::io::{BufRead, BufReader, Read, Write};

use super::{Graph, GraphError, Result};
use crate::Scalar;

/// Parses the Gset text format: a header line `N M` followed by exactly `M`
/// lines `u v w` with 1-indexed node ids. Blank lines are ignored; anything
/// else (comments, extra edges, extra tokens) is an error.
pub fn parse_gset<S: Scalar, R: Read>(input: R) -> Result<Graph<S>> {
    let reader = BufReader::new(input);
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|l| l.as_ref().map_or(true, |(_, text)| !text.trim().is_empty()));

    let (_, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| GraphError::MalformedHeader("empty input".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let [n, m] = tokens[..] else {
        return Err(GraphError::MalformedHeader(header.clone()));
    };
    let n: usize = n.parse().map_err(|_| GraphError::MalformedHeader(header.clone()))?;
    let m: usize = m.parse().map_err(|_| GraphError::MalformedHeader(header.clone()))?;

    let mut edges = Vec::with_capacity(m);
    for line in lines {
        let (lineno, text) = line?;
        let malformed = |reason: &str| GraphError::MalformedLine {
            line: lineno,
            reason: reason.to_string(),
        };
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let [u, v, w] = tokens[..] else {
            return Err(malformed("expected three fields `u v w`"));
        };
        let u: usize = u.parse().map_err(|_| malformed("bad node id"))?;
        let v: usize = v.parse().map_err(|_| malformed("bad node id"))?;
        let w: f64 = w.parse().map_err(|_| malformed("bad weight"))?;
        if u == 0 || v == 0 || u > n || v > n {
            return Err(GraphError::IndexOutOfRange { u, v, n });
        }
        edges.push((u - 1, v - 1, S::of(w)));
    }
    if edges.len() != m {
        return Err(GraphError::EdgeCountMismatch {
            declared: m,
            found: edges.len(),
        });
    }
    Graph::build(n, &edges, None, None)
}

/// Writes a graph in Gset format.
pub fn write_gset<S: Scalar, W: Write>(g: &Graph<S>, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", g.n(), g.num_undirected_edges())?;
    for (u, v, w) in g.undirected_edges() {
        writeln!(out, "{} {} {}", u + 1, v + 1, w)?;
    }
    Ok(())
}
