//! Line-oriented graph files.
//!
//! ```text
//! # generator: lattice-d2-L1
//! # center: 4
//! # frontier: 0 1 2 3 5 6 7 8
//! 0 1 1
//! 0 3 1
//! ...
//! ```
//!
//! One `u v w` line per undirected edge. Lines starting with `#` are
//! directives when they match `# key: ...`, comments otherwise. Weights are
//! written with the shortest representation that parses back to the same
//! `f64`, so a write/read cycle is exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphMeta, Vertex, WeightedGraph};

pub fn to_text(g: &WeightedGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# generator: {}", g.meta().generator);
    let _ = writeln!(out, "# center: {}", g.center());
    let frontier: Vec<String> = g.frontier().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "# frontier: {}", frontier.join(" "));
    for (u, v, w) in g.edges() {
        let _ = writeln!(out, "{u} {v} {w}");
    }
    out
}

pub fn write_graph(g: &WeightedGraph, mut out: impl Write) -> Result<()> {
    out.write_all(to_text(g).as_bytes())?;
    Ok(())
}

pub fn read_graph(input: impl BufRead) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    let mut frontier: Vec<Vertex> = Vec::new();
    let mut meta = GraphMeta::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix('#') {
            let Some((key, value)) = directive.split_once(':') else {
                continue;
            };
            let value = value.trim();
            match key.trim() {
                "frontier" => {
                    for tok in value.split_whitespace() {
                        frontier.push(parse_id(tok, lineno)?);
                    }
                }
                "center" => meta.center = parse_id(value, lineno)?,
                "generator" => meta.generator = value.to_string(),
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `u v w`, got {} fields", fields.len()),
            });
        }
        let w: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad weight `{}`", fields[2]),
        })?;
        edges.push((parse_id(fields[0], lineno)?, parse_id(fields[1], lineno)?, w));
    }
    build_graph(&edges)?.with_frontier(frontier)?.with_meta(meta)
}

pub fn from_text(text: &str) -> Result<WeightedGraph> {
    read_graph(text.as_bytes())
}

fn parse_id(tok: &str, line: usize) -> Result<Vertex> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad vertex id `{tok}`"),
    })
}
