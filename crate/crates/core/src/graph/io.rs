//! Plain-text graph files.
//!
//! - edge list: two whitespace-separated node ids per line; blank lines and
//!   lines starting with `#` are ignored
//! - features: comma-separated floats, no header, row `i` is node `i`
//! - labels: one integer per line, row `i` is node `i`

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(path, lineno, format!("expected two node ids, got {line:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(path, lineno, format!("bad node id {s:?}: {e}")))
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u == v {
            return Err(parse_err(path, lineno, format!("self-loop on node {u}")));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Parse a headerless CSV of floats into a `rows x cols` matrix.
pub fn parse_matrix_csv(path: &Path) -> Result<Tensor> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in data_lines(&text) {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, lineno, format!("bad value {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(path, lineno, format!("expected {c} columns, got {}", row.len())))
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    Tensor::matrix(rows, cols.unwrap_or(0), data)
}

pub fn parse_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(lineno, line)| {
            line.parse::<usize>()
                .map_err(|e| parse_err(path, lineno, format!("bad label {line:?}: {e}")))
        })
        .collect()
}

/// Load a graph from an edge list plus optional feature and label files.
///
/// The node count is the feature (or label) row count when given, otherwise
/// one more than the largest node id in the edge list.
pub fn load_graph(edge_path: &Path, feature_path: Option<&Path>, label_path: Option<&Path>) -> Result<Graph> {
    let edges = parse_edges(edge_path)?;
    let from_edges = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let features = feature_path.map(parse_matrix_csv).transpose()?;
    let labels = label_path.map(parse_labels).transpose()?;

    let n = features
        .as_ref()
        .map(Tensor::rows)
        .or(labels.as_ref().map(Vec::len))
        .unwrap_or(from_edges);
    if n < from_edges {
        return Err(Error::Dimension(format!(
            "edge list references node {} but only {n} feature/label rows",
            from_edges - 1
        )));
    }
    if let (Some(f), Some(l)) = (&features, &labels) {
        if f.rows() != l.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                f.rows(),
                l.len()
            )));
        }
    }
    Graph::new(n, edges, features, labels)
}

/// Load `edges.txt`, `features.csv` and `labels.csv` (the last two when
/// present) from a directory.
pub fn load_dir(dir: &Path) -> Result<Graph> {
    let feats = dir.join(FEATURES_FILE);
    let labels = dir.join(LABELS_FILE);
    load_graph(
        &dir.join(EDGES_FILE),
        feats.exists().then_some(feats.as_path()),
        labels.exists().then_some(labels.as_path()),
    )
}

pub fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        writeln!(out, "{l}").expect("write to string");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_matrix_csv(t: &Tensor, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..t.rows() {
        let row = t.row(i);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{x}").expect("write to string");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write edges, features and (when present) labels into `dir`.
pub fn write_graph(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::with_capacity(g.num_edges() * 8);
    for &(u, v) in g.edges() {
        writeln!(edges, "{u} {v}").expect("write to string");
    }
    let path = dir.join(EDGES_FILE);
    fs::write(&path, edges).map_err(|e| Error::io(&path, e))?;
    write_matrix_csv(g.features(), &dir.join(FEATURES_FILE))?;
    let label_path = dir.join(LABELS_FILE);
    match g.labels() {
        Some(l) => write_labels(l, &label_path)?,
        None if label_path.exists() => fs::remove_file(&label_path).map_err(|e| Error::io(&label_path, e))?,
        None => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn path_graph_gets_degree_features() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n1 2\n");
        let g = load_graph(&e, None, None).unwrap();
        assert_eq!(g.features().data(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn self_loop_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n0 0\n");
        match load_graph(&e, None, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "# header\n0 1\n\n1 x\n");
        match load_graph(&e, None, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let e = write(dir.path(), "e2.txt", "0 1 2\n");
        assert!(matches!(load_graph(&e, None, None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_lines_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n0 1\n");
        let g = load_graph(&e, None, None).unwrap();
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn row_count_mismatch_is_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n1 2\n");
        let f = write(dir.path(), "f.csv", "1\n2\n");
        assert!(matches!(load_graph(&e, Some(&f), None), Err(Error::Dimension(_))));
        let f = write(dir.path(), "f3.csv", "1\n2\n3\n");
        let l = write(dir.path(), "l.csv", "0\n1\n");
        assert!(matches!(load_graph(&e, Some(&f), Some(&l)), Err(Error::Dimension(_))));
    }

    #[test]
    fn ragged_feature_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "1,2\n3\n");
        assert!(matches!(parse_matrix_csv(&f), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn trailing_isolated_nodes_survive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::new(4, [(0, 1)], None, Some(vec![0, 0, 1, 1])).unwrap();
        write_graph(&g, dir.path()).unwrap();
        assert_eq!(load_dir(dir.path()).unwrap(), g);
    }

    #[test]
    fn unlabeled_graph_writes_no_label_file() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::new(3, [(0, 1), (1, 2)], None, None).unwrap();
        write_graph(&g, dir.path()).unwrap();
        assert!(!dir.path().join(LABELS_FILE).exists());
        assert_eq!(load_dir(dir.path()).unwrap(), g);
    }
}
