//! CSV result tables.
//!
//! Layout: metadata as `# key: value` lines, then the header row, then one
//! row per record. Numbers are written with 17 significant digits so that
//! reading them back reproduces every bit.

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    /// One label per row when present.
    pub labels: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        ResultTable {
            metadata: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            labels: None,
            rows: Vec::new(),
        }
    }

    pub fn labelled(columns: &[&str]) -> Self {
        ResultTable {
            labels: Some(Vec::new()),
            ..ResultTable::new(columns)
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert!(self.labels.is_none(), "labelled table needs push_labelled");
        assert_eq!(row.len(), self.columns.len(), "row arity");
        self.rows.push(row);
    }

    pub fn push_labelled(&mut self, label: impl Into<String>, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row arity");
        self.labels
            .as_mut()
            .expect("table has a label column")
            .push(label.into());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(String::from_utf8(out).expect("utf-8 output"))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (key, value) in &self.metadata {
            for line in value.lines() {
                writeln!(out, "# {key}: {line}")?;
            }
            if value.is_empty() {
                writeln!(out, "# {key}:")?;
            }
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header: Vec<&str> = Vec::new();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        header.extend(self.columns.iter().map(String::as_str));
        writer.write_record(&header)?;
        for (k, row) in self.rows.iter().enumerate() {
            let mut record: Vec<String> = Vec::with_capacity(row.len() + 1);
            if let Some(labels) = &self.labels {
                record.push(labels[k].clone());
            }
            record.extend(row.iter().map(|v| format_value(*v)));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// 17 significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table(table: &ResultTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buffered = std::io::BufWriter::new(file);
    table.write_to(&mut buffered)?;
    buffered.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<ResultTable> {
    let file = std::fs::File::open(path)?;
    parse_table(std::io::BufReader::new(file))
}

pub fn parse_table<R: BufRead>(reader: R) -> Result<ResultTable> {
    let mut metadata: Vec<(String, String)> = Vec::new();
    let mut body = String::new();
    for line in reader.lines() {
        let line = line?;
        if body.is_empty() {
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = rest
                    .split_once(':')
                    .map(|(k, v)| (k.to_string(), v.strip_prefix(' ').unwrap_or(v).to_string()))
                    .unwrap_or((rest.to_string(), String::new()));
                match metadata.last_mut() {
                    Some((k, v)) if *k == key => {
                        v.push('\n');
                        v.push_str(&value);
                    }
                    _ => metadata.push((key, value)),
                }
                continue;
            }
        }
        body.push_str(&line);
        body.push('\n');
    }
    let mut csv_reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header: Vec<String> = csv_reader.headers()?.iter().map(String::from).collect();
    let labelled = header.first().map(String::as_str) == Some(LABEL_COLUMN);
    let columns: Vec<String> = header.into_iter().skip(usize::from(labelled)).collect();
    let mut labels = labelled.then(Vec::new);
    let mut rows = Vec::new();
    for (k, record) in csv_reader.records().enumerate() {
        let record = record?;
        let mut fields = record.iter();
        if let Some(labels) = labels.as_mut() {
            labels.push(fields.next().unwrap_or_default().to_string());
        }
        let row = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::ConfigParse {
                    line: k + 2,
                    message: format!("table value {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::ConfigParse {
                line: k + 2,
                message: format!("row has {} values, header {}", row.len(), columns.len()),
            });
        }
        rows.push(row);
    }
    Ok(ResultTable {
        metadata,
        columns,
        labels,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_table_has_header_and_metadata() {
        let mut t = ResultTable::new(&["eps", "error"]);
        t.meta("command", "sweep");
        assert_eq!(t.to_csv_string().unwrap(), "# command: sweep\neps,error\n");
    }

    #[test]
    fn labelled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = ResultTable::labelled(&["value", "tol"]);
        t.meta("config", "[model]\nkind = \"cascade\"");
        t.meta("seed", 7);
        t.push_labelled("hermiticity", vec![1.5e-17, 1e-12]);
        t.push_labelled("psi, k=2", vec![-0.1, f64::MIN_POSITIVE]);
        write_table(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "# config: [model]\n# config: kind = \"cascade\"\n# seed: 7\nlabel,value,tol\n"
        ));
        assert!(text.ends_with('\n'));
        assert_eq!(read_table(&path).unwrap(), t);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_value(0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(-2.0), "-2.0000000000000000e0");
    }

    proptest! {
        #[test]
        fn values_round_trip_bit_exactly(rows in proptest::collection::vec(proptest::collection::vec(any::<f64>(), 3), 0..20)) {
            let mut t = ResultTable::new(&["a", "b", "c"]);
            for r in &rows {
                t.push(r.clone());
            }
            let text = t.to_csv_string().unwrap();
            let back = parse_table(text.as_bytes()).unwrap();
            prop_assert_eq!(back.rows.len(), rows.len());
            for (x, y) in back.rows.iter().flatten().zip(rows.iter().flatten()) {
                prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }
}
