//! Tabular feature vectors and the feature CSV format.
//!
//! The CSV layout is `sample_id,patient_id,label,f0,f1,...`: UTF-8, `.` as the
//! decimal separator and no missing cells. Rows are samples, feature columns
//! follow the three identifier columns in order.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{arg_err, shape_err, Error, Result};

/// Samples-by-features table together with per-sample identifiers and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    width: usize,
    sample_ids: Vec<String>,
    patient_ids: Vec<String>,
    labels: Vec<usize>,
}

impl FeatureMatrix {
    /// Builds a matrix from row vectors.
    pub fn new(
        rows: Vec<Vec<f64>>,
        sample_ids: Vec<String>,
        patient_ids: Vec<String>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(shape_err!("row {i} has {} features, expected {width}", r.len()));
        }
        let values = rows.into_iter().flatten().collect();
        Self::from_flat(values, width, sample_ids, patient_ids, labels)
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_flat(
        values: Vec<f64>,
        width: usize,
        sample_ids: Vec<String>,
        patient_ids: Vec<String>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if width == 0 && n > 0 {
            return Err(shape_err!("feature matrix must have at least one feature"));
        }
        if values.len() != n * width {
            return Err(shape_err!(
                "{} values cannot fill {n} rows of width {width}",
                values.len()
            ));
        }
        if sample_ids.len() != n || patient_ids.len() != n {
            return Err(shape_err!(
                "{n} labels but {} sample ids and {} patient ids",
                sample_ids.len(),
                patient_ids.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at sample {}, feature {}",
                pos / width,
                pos % width
            )));
        }
        Ok(Self {
            values,
            width,
            sample_ids,
            patient_ids,
            labels,
        })
    }

    /// Convenience constructor that generates ids `s{i}` / `p{i}`.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        let sample_ids = (0..n).map(|i| format!("s{i}")).collect();
        let patient_ids = (0..n).map(|i| format!("p{i}")).collect();
        Self::new(rows, sample_ids, patient_ids, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width.max(1))
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    /// Distinct label values present, ascending.
    pub fn label_set(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }

    /// New matrix with the given samples, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            values,
            width: self.width,
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            patient_ids: indices.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// New matrix keeping only the given feature columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<FeatureMatrix> {
        if columns.is_empty() {
            return Err(arg_err!("cannot select zero feature columns"));
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= self.width) {
            return Err(shape_err!("column {c} out of range for width {}", self.width));
        }
        let mut values = Vec::with_capacity(self.len() * columns.len());
        for row in self.rows() {
            values.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(FeatureMatrix {
            values,
            width: columns.len(),
            sample_ids: self.sample_ids.clone(),
            patient_ids: self.patient_ids.clone(),
            labels: self.labels.clone(),
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn read_csv_from(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["sample_id", "patient_id", "label"];
        if headers.len() < 4 || headers.iter().take(3).ne(expected.iter().copied()) {
            return Err(Error::Data(
                "header must start with sample_id,patient_id,label and have at least one feature column"
                    .into(),
            ));
        }
        for (k, name) in headers.iter().skip(3).enumerate() {
            if name != format!("f{k}") {
                return Err(Error::Data(format!("feature column {k} is named {name:?}, expected \"f{k}\"")));
            }
        }
        let width = headers.len() - 3;
        let mut values = Vec::new();
        let mut sample_ids = Vec::new();
        let mut patient_ids = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let line = line + 2;
            sample_ids.push(record[0].to_string());
            patient_ids.push(record[1].to_string());
            let label = record[2]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Data(format!("line {line}: label {:?} is not a non-negative integer", &record[2])))?;
            labels.push(label);
            for (k, cell) in record.iter().skip(3).enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("line {line}: f{k} = {cell:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("line {line}: f{k} is not finite")));
                }
                values.push(v);
            }
        }
        if labels.is_empty() {
            return Err(Error::Data("feature CSV has no samples".into()));
        }
        Self::from_flat(values, width, sample_ids, patient_ids, labels)
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "patient_id".into(), "label".into()];
        header.extend((0..self.width).map(|k| format!("f{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.sample_ids[i].clone(),
                self.patient_ids[i].clone(),
                self.labels[i].to_string(),
            ];
            // `{:?}` prints the shortest string that round-trips exactly.
            rec.extend(self.row(i).iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        crate::io::write_atomic(path.as_ref(), &buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FeatureMatrix {
        FeatureMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], vec![0, 1, 0]).unwrap()
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = FeatureMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]], vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rejects_non_finite() {
        let err = FeatureMatrix::from_rows(vec![vec![1.0, f64::NAN]], vec![0]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn select_rows_and_columns() {
        let m = toy();
        let r = m.select_rows(&[2, 0]);
        assert_eq!(r.row(0), &[5.0, 6.0]);
        assert_eq!(r.labels(), &[0, 0]);
        assert_eq!(r.sample_ids(), &["s2".to_string(), "s0".into()]);
        let c = m.select_columns(&[1]).unwrap();
        assert_eq!(c.width(), 1);
        assert_eq!(c.column(0).collect::<Vec<_>>(), vec![2.0, 4.0, 6.0]);
        assert!(m.select_columns(&[2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = FeatureMatrix::from_rows(vec![vec![0.1, -2.5e-7], vec![1.0 / 3.0, 7.0]], vec![4, 0]).unwrap();
        let mut buf = Vec::new();
        m.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,patient_id,label,f0,f1\n"));
        let back = FeatureMatrix::read_csv_from(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_rejects_bad_header_and_cells() {
        let bad_header = "id,patient_id,label,f0\na,b,0,1.0\n";
        assert!(FeatureMatrix::read_csv_from(bad_header.as_bytes()).is_err());
        let bad_cell = "sample_id,patient_id,label,f0\na,b,0,x\n";
        assert!(matches!(FeatureMatrix::read_csv_from(bad_cell.as_bytes()), Err(Error::Data(_))));
        let nan = "sample_id,patient_id,label,f0\na,b,0,NaN\n";
        assert!(matches!(FeatureMatrix::read_csv_from(nan.as_bytes()), Err(Error::Data(_))));
        let neg_label = "sample_id,patient_id,label,f0\na,b,-1,1\n";
        assert!(matches!(FeatureMatrix::read_csv_from(neg_label.as_bytes()), Err(Error::Data(_))));
        let empty = "sample_id,patient_id,label,f0\n";
        assert!(matches!(FeatureMatrix::read_csv_from(empty.as_bytes()), Err(Error::Data(_))));
    }
}
