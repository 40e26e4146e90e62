use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::Dataset;
use crate::error::{Error, Result};

struct Table {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    width: usize,
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(err: csv::Error, path: &Path) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn read_table(path: &Path, has_labels: bool) -> Result<Table> {
    let mut reader = open(path)?;
    let header_len = reader.headers().map_err(|e| csv_error(e, path))?.len();
    let header_empty = reader
        .headers()
        .map(|h| h.iter().all(str::is_empty))
        .unwrap_or(true);
    if header_len == 0 || header_empty {
        return Err(Error::Parse {
            line: 1,
            message: "empty file: missing header row".into(),
        });
    }
    let min_cols = if has_labels { 2 } else { 1 };
    if header_len < min_cols {
        return Err(Error::Parse {
            line: 1,
            message: format!("need at least {min_cols} columns, header has {header_len}"),
        });
    }
    let width = if has_labels {
        header_len - 1
    } else {
        header_len
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, path))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(width);
        for (col, cell) in record.iter().enumerate() {
            if has_labels && col == width {
                let label = cell.parse::<usize>().map_err(|_| Error::Parse {
                    line,
                    message: format!("label column: {cell:?} is not a non-negative integer"),
                })?;
                labels.push(label);
            } else {
                let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column {col}: {cell:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("column {col}: non-finite value"),
                    });
                }
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(Table {
        rows,
        labels,
        width,
    })
}

fn to_matrix(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, width), flat).expect("rows validated to equal width")
}

/// Load a header + numeric-rows CSV. When `has_labels`, the last column is an
/// integer class label. Lines starting with `#` are ignored.
pub fn load_features_csv(path: impl AsRef<Path>, has_labels: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path, has_labels)?;
    let labels = has_labels.then_some(table.labels);
    Dataset::new(to_matrix(table.rows, table.width), labels)
}

/// Load a header + numeric-rows CSV as a plain matrix.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let table = read_table(path, false)?;
    Ok(to_matrix(table.rows, table.width))
}

pub fn attach_embeddings(ds: Dataset, path: impl AsRef<Path>) -> Result<Dataset> {
    let emb = load_matrix_csv(path)?;
    ds.with_embeddings(emb)
}

/// Write a matrix as CSV with header `prefix0,prefix1,...`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn save_matrix_csv(m: ArrayView2<'_, f64>, prefix: &str, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), m, prefix, None)
}

pub fn save_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), ds.features(), "x", ds.labels())
}

fn write_rows(
    path: &Path,
    m: ArrayView2<'_, f64>,
    prefix: &str,
    labels: Option<&[usize]>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (r, row) in m.rows().into_iter().enumerate() {
        let mut line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            line.push(l[r].to_string());
        }
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_plain_features() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x0,x1\n0,0\n1,2\n");
        let ds = load_features_csv(&p, false).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));
        assert_eq!(ds.features()[[1, 1]], 2.0);
        assert!(ds.labels().is_none());
    }

    #[test]
    fn loads_labels_from_last_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x0,label\n0.5,1\n");
        let ds = load_features_csv(&p, true).unwrap();
        assert_eq!((ds.len(), ds.dim()), (1, 1));
        assert_eq!(ds.labels().unwrap(), &[1]);
        assert_eq!(ds.features()[[0, 0]], 0.5);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x0,x1\n0.5,abc\n");
        match load_features_csv(&p, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(&dir, "b.csv", "x0,x1\n1,2\n3\n");
        match load_features_csv(&p, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(&dir, "c.csv", "");
        assert!(matches!(
            load_features_csv(&p, false),
            Err(Error::Parse { .. })
        ));
        let p = write(&dir, "d.csv", "x0\n");
        assert!(matches!(
            load_features_csv(&p, false),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn embeddings_shape_checked() {
        let dir = tempfile::tempdir().unwrap();
        let feats = write(&dir, "f.csv", "x0\n1\n2\n3\n");
        let ds = load_features_csv(&feats, false).unwrap();
        let good = write(&dir, "e.csv", "e0,e1,e2,e3\n1,2,3,4\n5,6,7,8\n9,10,11,12\n");
        let with = attach_embeddings(ds.clone(), &good).unwrap();
        assert_eq!(with.embeddings().unwrap().dim(), (3, 4));
        assert_eq!(with.features(), ds.features());
        let short = write(&dir, "s.csv", "e0\n1\n2\n");
        match attach_embeddings(ds, &short) {
            Err(Error::Shape {
                expected, actual, ..
            }) => assert_eq!((expected, actual), (3, 2)),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn dataset_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = crate::datasets::gen_two_moons(10, 0.1, 4).unwrap();
        let p = dir.path().join("m.csv");
        save_dataset_csv(&ds, &p).unwrap();
        assert_eq!(load_features_csv(&p, true).unwrap(), ds);
    }
}
