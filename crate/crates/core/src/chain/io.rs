//! Text formats.
//!
//! Chain file: a `FINITE n` header followed by `src dst prob` lines with
//! states numbered `0..n`. Adjacency file: the node count on the first line,
//! then one line per node listing its out-neighbors. In both formats lines
//! starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{FiniteChain, StateId, TransitionRow};
use crate::chain::graph::Adjacency;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#'))
}

/// Parses a chain file without checking stochasticity or connectivity, so the
/// result can be handed to [`super::validate`] for a full report.
pub fn parse_chain_file(text: &str) -> Result<FiniteChain> {
    let mut lines = content_lines(text).filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty chain file"))?;
    let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["FINITE", n] => n.parse().map_err(|_| parse_err(hline, format!("bad state count {n:?}")))?,
        _ => return Err(parse_err(hline, "expected header `FINITE n`")),
    };
    if n == 0 {
        return Err(parse_err(hline, "chain has no states"));
    }
    let mut rows: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); n];
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [src, dst, prob] = fields[..] else {
            return Err(parse_err(ln, "expected `src dst prob`"));
        };
        let state = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| parse_err(ln, format!("bad state {s:?}")))?;
            if v >= n {
                return Err(parse_err(ln, format!("state {v} outside 0..{n}")));
            }
            Ok(v)
        };
        let p: f64 = prob
            .parse()
            .map_err(|_| parse_err(ln, format!("bad probability {prob:?}")))?;
        rows[state(src)?].entry(state(dst)?).or_default().push(p);
    }
    let rows = rows
        .into_iter()
        .map(|r| {
            TransitionRow::new(
                r.into_iter()
                    .flat_map(|(t, ps)| ps.into_iter().map(move |p| (StateId(t as u64), p)))
                    .collect(),
            )
        })
        .collect();
    FiniteChain::from_rows_unchecked(0, rows)
}

/// Writes a chain in the format read by [`parse_chain_file`], using state
/// indices.
pub fn write_chain_file(chain: &FiniteChain) -> String {
    let mut out = format!("FINITE {}\n", chain.len());
    for r in 0..chain.len() {
        for (c, p) in chain.row_entries(r) {
            let _ = writeln!(out, "{r} {c} {p:?}");
        }
    }
    out
}

pub fn parse_adjacency(text: &str) -> Result<Adjacency> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| parse_err(1, "empty adjacency file"))?;
    let n: usize = header
        .parse()
        .map_err(|_| parse_err(hline, format!("bad node count {header:?}")))?;
    let mut out = Vec::with_capacity(n);
    for (ln, line) in lines.by_ref().take(n) {
        let targets = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(ln, format!("bad node {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(targets);
    }
    if out.len() != n {
        return Err(parse_err(hline, format!("expected {n} node lines, found {}", out.len())));
    }
    if let Some((ln, _)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(parse_err(ln, "trailing content after the last node line"));
    }
    Adjacency::new(out)
}
