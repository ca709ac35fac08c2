use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Dataset, JET_FEATURES, LABEL_COLUMN, LABEL_NAMES};

/// How the header of an input file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// The 16 jet features and `label` must be present; features are put in
    /// schema order and any other column becomes a covariate.
    Jet,
    /// Columns before `label` are features in file order; columns after
    /// it are covariates.
    Generic,
}

pub fn load_csv(path: impl AsRef<Path>, schema: Schema) -> Result<Dataset, DataError> {
    read_csv(File::open(path)?, schema)
}

/// Row numbers in errors are file line numbers (the header is line 1).
pub fn read_csv<R: Read>(reader: R, schema: Schema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = std::collections::HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let pos = |name: &str| header.iter().position(|h| h == name);
    let label_col = pos(LABEL_COLUMN).ok_or_else(|| DataError::MissingColumn(LABEL_COLUMN.into()))?;
    let feature_cols: Vec<usize> = match schema {
        Schema::Jet => JET_FEATURES
            .iter()
            .map(|n| pos(n).ok_or_else(|| DataError::MissingColumn((*n).into())))
            .collect::<Result<_, _>>()?,
        Schema::Generic => (0..label_col).collect(),
    };
    if feature_cols.is_empty() {
        return Err(DataError::Schema("no feature columns".into()));
    }
    let covariate_cols: Vec<usize> = (0..header.len())
        .filter(|c| *c != label_col && !feature_cols.contains(c))
        .collect();

    let mut features = Vec::new();
    let mut covariates = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 2;
        if rec.len() != header.len() {
            return Err(DataError::RowLength {
                row,
                expected: header.len(),
                actual: rec.len(),
            });
        }
        let num = |c: usize| -> Result<f64, DataError> {
            let s = rec[c].trim();
            let v: f64 = s.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: header[c].clone(),
                value: s.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: header[c].clone(),
                    value: v,
                });
            }
            Ok(v)
        };
        for &c in &feature_cols {
            features.push(num(c)?);
        }
        for &c in &covariate_cols {
            covariates.push(num(c)?);
        }
        labels.push(parse_label(rec[label_col].trim()).ok_or_else(|| DataError::BadLabel {
            row,
            value: rec[label_col].to_string(),
        })?);
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    Dataset::with_covariates(
        feature_cols.iter().map(|&c| header[c].clone()).collect(),
        features,
        labels,
        covariate_cols.iter().map(|&c| header[c].clone()).collect(),
        covariates,
    )
}

fn parse_label(s: &str) -> Option<usize> {
    LABEL_NAMES.iter().position(|&n| n == s).or_else(|| s.parse().ok())
}

fn label_text(l: usize) -> String {
    LABEL_NAMES.get(l).map_or_else(|| l.to_string(), |s| (*s).to_string())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let f = File::create(path)?;
    write_csv(data, std::io::BufWriter::new(f))
}

/// Writes features, `label`, then covariates. Values use the shortest
/// representation that parses back to the same double.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    header.extend(data.covariate_names().iter().map(String::as_str));
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n_rows() {
        rec.clear();
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        rec.push(label_text(data.labels()[i]));
        rec.extend(data.covariate_row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
