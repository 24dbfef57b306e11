//! Plain-text graph tables.
//!
//! * edge list: one `i j [rel]` per line, whitespace separated
//! * feature table: `node_id, f_0, ..., f_{p-1}`; an all-`NaN` row marks absent features
//! * label table: `node_id, class`
//! * text table: `node_id, text` (everything after the first comma is the text)
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{ClientGraph, Edge, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
    pub texts: Option<PathBuf>,
}

impl GraphFiles {
    /// `edges.txt`, `features.csv` and, when present, `labels.csv` / `texts.csv`.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            edges: dir.join("edges.txt"),
            features: dir.join("features.csv"),
            labels: opt("labels.csv"),
            texts: opt("texts.csv"),
        }
    }
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_id(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("expected a node id, found `{}`", tok.trim())))
}

pub fn load_graph(files: &GraphFiles) -> Result<ClientGraph> {
    // features first: they define the node set
    let path = &files.features;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (line, l) in data_lines(path)? {
        let mut toks = l.split(',');
        let id = parse_id(path, line, toks.next().unwrap_or(""))?;
        let vals = toks
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad feature value `{}`", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some((_, first)) = rows.first() {
            if first.len() != vals.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} feature values, found {}", first.len(), vals.len()),
                ));
            }
        }
        rows.push((id, vals));
    }
    rows.sort_by_key(|(id, _)| *id);
    let n = rows.len();
    for (k, (id, _)) in rows.iter().enumerate() {
        if *id != k {
            return Err(Error::InvalidGraph(format!(
                "feature table must cover node ids 0..{n} exactly once (missing or repeated id near {k})"
            )));
        }
    }
    let p = rows.first().map_or(0, |(_, v)| v.len());
    let mut features = Array2::zeros((n, p));
    for (k, (_, v)) in rows.into_iter().enumerate() {
        for (j, x) in v.into_iter().enumerate() {
            features[[k, j]] = x;
        }
    }

    let path = &files.edges;
    let mut edges = Vec::new();
    for (line, l) in data_lines(path)? {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 2 || toks.len() > 3 {
            return Err(parse_err(path, line, "expected `i j [rel]`"));
        }
        let a = parse_id(path, line, toks[0])?;
        let b = parse_id(path, line, toks[1])?;
        let rel = match toks.get(2) {
            Some(t) => Some(
                t.parse::<u32>()
                    .map_err(|_| parse_err(path, line, format!("bad relation id `{t}`")))?,
            ),
            None => None,
        };
        edges.push(Edge::with_relation(a, b, rel));
    }

    let mut labels = vec![None; n];
    if let Some(path) = &files.labels {
        for (line, l) in data_lines(path)? {
            let (id, class) = l
                .split_once(',')
                .ok_or_else(|| parse_err(path, line, "expected `node_id, class`"))?;
            let id = parse_id(path, line, id)?;
            let class: usize = class
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad class `{}`", class.trim())))?;
            if id >= n {
                return Err(Error::InvalidGraph(format!("label for unknown node {id}")));
            }
            labels[id] = Some(class);
        }
    }

    let mut texts = vec![None; n];
    if let Some(path) = &files.texts {
        for (line, l) in data_lines(path)? {
            let (id, text) = l
                .split_once(',')
                .ok_or_else(|| parse_err(path, line, "expected `node_id, text`"))?;
            let id = parse_id(path, line, id)?;
            if id >= n {
                return Err(Error::InvalidGraph(format!("text for unknown node {id}")));
            }
            texts[id] = Some(text.trim().to_string());
        }
    }

    let mut g = ClientGraph::new(edges, features, texts, labels)?;
    for i in 0..n {
        g.cold_start[i] = !g.has_features(i) && g.texts[i].is_some();
    }
    Ok(g)
}

/// Loads the tables in `dir`. When the `nodes.csv` and `edge_splits.csv`
/// written by [`write_graph_dir`] are present, splits, cold-start flags and
/// origin ids are restored from them.
pub fn load_graph_dir(dir: &Path) -> Result<ClientGraph> {
    let mut g = load_graph(&GraphFiles::in_dir(dir))?;
    let nodes = dir.join("nodes.csv");
    if nodes.exists() {
        for (line, l) in data_lines(&nodes)?.into_iter().skip(1) {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 4 {
                return Err(parse_err(&nodes, line, "expected `node_id,split,cold_start,origin`"));
            }
            let id = parse_id(&nodes, line, cols[0])?;
            if id >= g.n_nodes() {
                return Err(Error::InvalidGraph(format!("split for unknown node {id}")));
            }
            g.node_split[id] = parse_split(&nodes, line, cols[1])?;
            g.cold_start[id] = cols[2]
                .parse()
                .map_err(|_| parse_err(&nodes, line, format!("bad cold-start flag `{}`", cols[2])))?;
            g.origin[id] = parse_id(&nodes, line, cols[3])?;
        }
    }
    let esplit = dir.join("edge_splits.csv");
    if esplit.exists() {
        let index: std::collections::HashMap<(usize, usize), usize> =
            g.edges.iter().enumerate().map(|(k, e)| (e.key(), k)).collect();
        for (line, l) in data_lines(&esplit)?.into_iter().skip(1) {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 3 {
                return Err(parse_err(&esplit, line, "expected `u,v,split`"));
            }
            let key = (parse_id(&esplit, line, cols[0])?, parse_id(&esplit, line, cols[1])?);
            let k = *index
                .get(&(key.0.min(key.1), key.0.max(key.1)))
                .ok_or_else(|| Error::InvalidGraph(format!("split for unknown edge {key:?}")))?;
            g.edge_split[k] = parse_split(&esplit, line, cols[2])?;
        }
    }
    Ok(g)
}

fn parse_split(path: &Path, line: usize, tok: &str) -> Result<Split> {
    Ok(match tok {
        "none" => Split::Unassigned,
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => return Err(parse_err(path, line, format!("unknown split `{other}`"))),
    })
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Unassigned => "none",
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Writes the four tables plus `nodes.csv` (split, cold-start flag, origin id)
/// and `edge_splits.csv` for inspection.
pub fn write_graph_dir(g: &ClientGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut edges = String::new();
    let mut esplit = String::from("u,v,split\n");
    for (e, s) in g.edges.iter().zip(&g.edge_split) {
        match e.relation {
            Some(r) => writeln!(edges, "{} {} {}", e.u, e.v, r),
            None => writeln!(edges, "{} {}", e.u, e.v),
        }
        .unwrap();
        writeln!(esplit, "{},{},{}", e.u, e.v, split_name(*s)).unwrap();
    }
    let mut feats = String::new();
    let mut labels = String::new();
    let mut texts = String::new();
    let mut nodes = String::from("node_id,split,cold_start,origin\n");
    for i in 0..g.n_nodes() {
        write!(feats, "{i}").unwrap();
        for x in g.features.row(i) {
            write!(feats, ",{x}").unwrap();
        }
        feats.push('\n');
        if let Some(c) = g.labels[i] {
            writeln!(labels, "{i},{c}").unwrap();
        }
        if let Some(t) = &g.texts[i] {
            writeln!(texts, "{i},{t}").unwrap();
        }
        writeln!(
            nodes,
            "{i},{},{},{}",
            split_name(g.node_split[i]),
            g.cold_start[i],
            g.origin[i]
        )
        .unwrap();
    }
    fs::write(dir.join("edges.txt"), edges)?;
    fs::write(dir.join("features.csv"), feats)?;
    fs::write(dir.join("labels.csv"), labels)?;
    fs::write(dir.join("texts.csv"), texts)?;
    fs::write(dir.join("nodes.csv"), nodes)?;
    fs::write(dir.join("edge_splits.csv"), esplit)?;
    Ok(())
}
