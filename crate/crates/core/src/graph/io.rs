use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{Masks, SparseGraph};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Side information gathered while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicate_lines: usize,
}

/// Loads a graph from an edge list, an optional headerless feature CSV and a
/// label file. The node count is the number of labels. When `n_classes` is
/// given, labels are checked against it.
pub fn load_edge_list(
    edges_path: &Path,
    features_path: Option<&Path>,
    labels_path: &Path,
    n_classes: Option<usize>,
) -> Result<(SparseGraph, LoadReport)> {
    let labels = parse_labels(&fs::read_to_string(labels_path)?, n_classes)?;
    let n = labels.len();
    let features = match features_path {
        Some(p) => Some(parse_features(&fs::read_to_string(p)?, n)?),
        None => None,
    };
    let (edges, duplicates) = parse_edges(&fs::read_to_string(edges_path)?, n)?;
    let (graph, self_loops) = SparseGraph::from_edges(n, &edges, features, labels)?;
    if self_loops > 0 {
        warn!(
            "dropped {self_loops} self loops from {}",
            edges_path.display()
        );
    }
    Ok((
        graph,
        LoadReport {
            self_loops_dropped: self_loops,
            duplicate_lines: duplicates,
        },
    ))
}

pub(crate) fn parse_labels(text: &str, n_classes: Option<usize>) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let y: usize = line
            .parse()
            .map_err(|_| Error::at_line(format!("bad label {line:?}"), i + 1))?;
        if let Some(c) = n_classes {
            if y >= c {
                return Err(Error::at_line(
                    format!("label {y} >= class count {c}"),
                    i + 1,
                ));
            }
        }
        labels.push(y);
    }
    Ok(labels)
}

pub(crate) fn parse_features(text: &str, n: usize) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::at_line("unparseable feature value", i + 1))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::at_line(
                    format!("ragged feature row: {} values, expected {w}", row.len()),
                    i + 1,
                ));
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::validation(format!(
            "{rows} feature rows for {n} labelled nodes"
        )));
    }
    Tensor::matrix(n, width.unwrap_or(0), data)
}

pub(crate) fn parse_edges(text: &str, n: usize) -> Result<(Vec<(usize, usize)>, usize)> {
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut duplicates = 0;
    for (i, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::at_line("expected \"u v\"", i + 1));
        };
        if it.next().is_some() {
            return Err(Error::at_line("expected exactly two node indices", i + 1));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::at_line(format!("bad node index {s:?}"), i + 1))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u >= n || v >= n {
            return Err(Error::at_line(
                format!("node index {} >= node count {n}", u.max(v)),
                i + 1,
            ));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            duplicates += 1;
        }
        edges.push((u, v));
    }
    Ok((edges, duplicates))
}

pub fn write_edge_list(graph: &SparseGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (u, v) in graph.edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features(features: &Tensor, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in 0..features.rows() {
        let row: Vec<String> = features.row(r).iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for y in labels {
        writeln!(w, "{y}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `train.txt`, `val.txt` and `test.txt` (one node index per line).
pub fn write_masks(masks: &Masks, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, mask) in [
        ("train", &masks.train),
        ("val", &masks.val),
        ("test", &masks.test),
    ] {
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("{name}.txt")))?);
        for i in Masks::indices(mask) {
            writeln!(w, "{i}")?;
        }
        w.flush()?;
    }
    Ok(())
}
