use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One parsed CSV file: a `T × N` matrix plus its header and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub names: Vec<String>,
    pub values: Tensor,
    pub labels: Option<Vec<u8>>,
}

pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<CsvTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, label_column)
}

/// Parses CSV from any reader. `origin` is used only in error messages.
///
/// Data rows are numbered from 1 (the header is not counted).
pub fn read_csv<R: Read>(reader: R, origin: &Path, label_column: Option<&str>) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: origin.to_path_buf(),
        row,
        column: column.to_owned(),
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(0, "", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(0, "", "missing header row".into()));
    }
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(0, name, "unknown label column".into()))?,
        ),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(parse_err(0, "", "no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "", e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                "",
                format!("ragged row: {} cells, header has {}", record.len(), header.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(row, &header[j], format!("not a finite number: {cell:?}")))?;
            if Some(j) == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(parse_err(row, &header[j], format!("label must be 0 or 1, got {cell:?}")));
                }
                labels.push(v as u8);
            } else {
                values.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(0, "", "no data rows".into()));
    }
    Ok(CsvTable {
        values: Tensor::matrix(rows, names.len(), values)?,
        names,
        labels: label_idx.map(|_| labels),
    })
}

/// Writes a `T × N` matrix with a header row; values use shortest round-trip formatting.
pub fn write_csv(path: &Path, names: &[String], values: &Tensor, labels: Option<(&str, &[u8])>) -> Result<()> {
    if values.ndim() != 2 || values.cols() != names.len() {
        return Err(Error::shape(
            "write_csv",
            format!("{} names for values of shape {:?}", names.len(), values.shape()),
        ));
    }
    if let Some((_, l)) = labels {
        if l.len() != values.rows() {
            return Err(Error::shape("write_csv", format!("{} labels for {} rows", l.len(), values.rows())));
        }
    }
    let mut out = String::new();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    if let Some((name, _)) = labels {
        header.push(name);
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..values.rows() {
        let mut cells: Vec<String> = values.row(r).iter().map(|v| v.to_string()).collect();
        if let Some((_, l)) = labels {
            cells.push(l[r].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, label: Option<&str>) -> Result<CsvTable> {
        read_csv(text.as_bytes(), Path::new("mem.csv"), label)
    }

    #[test]
    fn reads_matrix_and_names() {
        let t = parse("a,b\n1,2\n3,4\n5,6\n", None).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.values.shape(), &[3, 2]);
        assert_eq!(t.values.row(2), &[5.0, 6.0]);
        assert!(t.labels.is_none());
    }

    #[test]
    fn splits_label_column() {
        let t = parse("a,y,b\n1,0,2\n3,1,4\n5,0,6\n", Some("y")).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.labels.unwrap(), vec![0, 1, 0]);
        assert_eq!(t.values.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn crlf_is_accepted() {
        let t = parse("a,b\r\n1,2\r\n3,4\r\n", None).unwrap();
        assert_eq!(t.values.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bad_cell_names_its_row() {
        let err = parse("a,b\n1,2\nabc,4\n", None).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(parse("a,b\n1,2\n3\n", None).is_err());
        assert!(parse("a,b\n1,2\n", Some("y")).is_err());
        assert!(parse("a,y\n1,2\n", Some("y")).is_err());
        assert!(parse("a,b\n1,inf\n", None).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let names = vec!["x".to_owned(), "y".to_owned()];
        let values = Tensor::matrix(2, 2, vec![0.1, -2.5e-9, 1.0 / 3.0, 7.0]).unwrap();
        write_csv(&path, &names, &values, Some(("label", &[0, 1]))).unwrap();
        let t = load_csv(&path, Some("label")).unwrap();
        assert_eq!(t.values, values);
        assert_eq!(t.labels.unwrap(), vec![0, 1]);
    }
}
