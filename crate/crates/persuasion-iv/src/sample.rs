//! Loading, validation, and partitioning of experiment data.
//!
//! A sample is a list of rows `(y, t, z, x)`: binary outcome, binary
//! treatment, integer-coded instrument, and a fixed-arity covariate
//! vector. Multi-valued instruments are restricted to binary pairs with
//! [`restrict_pair`] before any estimand is computed; covariates are
//! grouped into cells with [`partition_cells`] for the falsification
//! test.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One observation: outcome, treatment, instrument level, covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRow {
    pub y: u8,
    pub t: u8,
    pub z: i64,
    pub x: Vec<f64>,
}

/// An immutable, validated sample. Rows keep their input order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSample {
    rows: Vec<ObservedRow>,
    covariate_names: Vec<String>,
    instrument_levels: Vec<i64>,
}

impl ObservedSample {
    /// Validates and wraps a set of rows.
    ///
    /// Rejects empty input, non-binary `y`/`t`, non-finite covariates,
    /// and ragged covariate vectors. Missing values are rejected, never
    /// imputed.
    pub fn new(rows: Vec<ObservedRow>, covariate_names: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let arity = covariate_names.len();
        for (i, row) in rows.iter().enumerate() {
            let data_row = i + 1;
            if row.y > 1 {
                return Err(Error::InvalidValue {
                    column: "y".into(),
                    row: data_row,
                    message: format!("expected 0 or 1, got {}", row.y),
                });
            }
            if row.t > 1 {
                return Err(Error::InvalidValue {
                    column: "t".into(),
                    row: data_row,
                    message: format!("expected 0 or 1, got {}", row.t),
                });
            }
            if row.x.len() != arity {
                return Err(Error::InvalidValue {
                    column: "x".into(),
                    row: data_row,
                    message: format!("expected {} covariates, got {}", arity, row.x.len()),
                });
            }
            for (j, v) in row.x.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidValue {
                        column: covariate_names[j].clone(),
                        row: data_row,
                        message: format!("non-finite covariate value {v}"),
                    });
                }
            }
        }
        let mut instrument_levels: Vec<i64> = rows.iter().map(|r| r.z).collect();
        instrument_levels.sort_unstable();
        instrument_levels.dedup();
        Ok(Self {
            rows,
            covariate_names,
            instrument_levels,
        })
    }

    pub fn rows(&self) -> &[ObservedRow] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Sorted distinct instrument levels.
    pub fn instrument_levels(&self) -> &[i64] {
        &self.instrument_levels
    }

    /// Index of a covariate by name.
    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    /// Errors unless the instrument levels are exactly {0, 1}.
    pub fn require_binary(&self) -> Result<()> {
        if self.instrument_levels == [0, 1] {
            Ok(())
        } else {
            Err(Error::NonBinaryInstrument(self.instrument_levels.clone()))
        }
    }

    /// Sub-sample containing the rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<ObservedSample> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        ObservedSample::new(rows, self.covariate_names.clone())
    }
}

/// Column layout of an input CSV. `covariates: None` means every
/// non-`y`/`t`/`z` column is read as a covariate, in header order.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub y: String,
    pub t: String,
    pub z: String,
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            y: "y".into(),
            t: "t".into(),
            z: "z".into(),
            covariates: None,
        }
    }
}

fn parse_binary(field: &str, column: &str, row: usize) -> Result<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::InvalidValue {
            column: column.to_string(),
            row,
            message: format!("expected 0 or 1, got `{other}`"),
        }),
    }
}

/// Reads a sample from CSV. The header must declare the `y`, `t`, `z`
/// columns named by `schema`; row order is preserved.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<ObservedSample> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<ObservedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = col(&schema.y)?;
    let t_idx = col(&schema.t)?;
    let z_idx = col(&schema.z)?;

    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => {
            for name in names {
                col(name)?;
            }
            names.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != y_idx && *i != t_idx && *i != z_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let cov_idx: Vec<usize> = covariate_names
        .iter()
        .map(|name| col(name))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let data_row = i + 1;
        let field = |idx: usize, column: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::InvalidValue {
                column: column.to_string(),
                row: data_row,
                message: "missing field".into(),
            })
        };
        let y = parse_binary(field(y_idx, &schema.y)?, &schema.y, data_row)?;
        let t = parse_binary(field(t_idx, &schema.t)?, &schema.t, data_row)?;
        let z_raw = field(z_idx, &schema.z)?.trim();
        let z: i64 = z_raw.parse().map_err(|_| Error::InvalidValue {
            column: schema.z.clone(),
            row: data_row,
            message: format!("expected an integer instrument level, got `{z_raw}`"),
        })?;
        let mut x = Vec::with_capacity(cov_idx.len());
        for (&idx, name) in cov_idx.iter().zip(&covariate_names) {
            let raw = field(idx, name)?.trim();
            let v: f64 = raw.parse().map_err(|_| Error::InvalidValue {
                column: name.clone(),
                row: data_row,
                message: format!("expected a numeric covariate, got `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidValue {
                    column: name.clone(),
                    row: data_row,
                    message: format!("non-finite covariate value {v}"),
                });
            }
            x.push(v);
        }
        rows.push(ObservedRow { y, t, z, x });
    }
    ObservedSample::new(rows, covariate_names)
}

/// Writes a sample to CSV in the loader's format. Values round-trip
/// bit-exactly through [`load_csv`].
pub fn write_csv<P: AsRef<Path>>(sample: &ObservedSample, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_writer(sample, file)
}

/// [`write_csv`] over any writer.
pub fn write_csv_writer<W: Write>(sample: &ObservedSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "t".to_string(), "z".to_string()];
    header.extend(sample.covariate_names().iter().cloned());
    wtr.write_record(&header)?;
    for row in sample.rows() {
        let mut record = vec![row.y.to_string(), row.t.to_string(), row.z.to_string()];
        record.extend(row.x.iter().map(|v| format!("{v}")));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Restricts a multi-valued instrument to the pair `(z_lo, z_hi)`,
/// recoding `z_lo -> 0` and `z_hi -> 1`.
///
/// If the requested orientation yields a negative first stage, the arms
/// are swapped so that arm 1 is the higher take-up arm; the returned
/// flag reports the swap.
pub fn restrict_pair(
    sample: &ObservedSample,
    z_lo: i64,
    z_hi: i64,
) -> Result<(ObservedSample, bool)> {
    if z_lo == z_hi {
        return Err(Error::EqualLevels(z_lo));
    }
    for level in [z_lo, z_hi] {
        if !sample.instrument_levels().contains(&level) {
            return Err(Error::MissingLevel(level));
        }
    }
    let recode = |lo: i64, hi: i64| -> ObservedSample {
        let rows: Vec<ObservedRow> = sample
            .rows()
            .iter()
            .filter(|r| r.z == lo || r.z == hi)
            .map(|r| ObservedRow {
                y: r.y,
                t: r.t,
                z: if r.z == hi { 1 } else { 0 },
                x: r.x.clone(),
            })
            .collect();
        // validated on the way in, so re-wrapping cannot fail
        ObservedSample::new(rows, sample.covariate_names().to_vec())
            .expect("filtered rows stay valid")
    };

    let restricted = recode(z_lo, z_hi);
    let mean_t = |arm: i64| -> (f64, usize) {
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in restricted.rows() {
            if row.z == arm {
                sum += row.t as f64;
                count += 1;
            }
        }
        (if count > 0 { sum / count as f64 } else { 0.0 }, count)
    };
    let (t1, n1) = mean_t(1);
    let (t0, n0) = mean_t(0);
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if t1 - t0 < 0.0 {
        Ok((recode(z_hi, z_lo), true))
    } else {
        Ok((restricted, false))
    }
}

/// Rule assigning covariate vectors to one cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellRule {
    /// Every row.
    All,
    /// Exact matches on the listed covariates.
    Levels {
        covariates: Vec<usize>,
        values: Vec<f64>,
    },
    /// Half-open interval `[lo, hi)` on one covariate.
    Interval { covariate: usize, lo: f64, hi: f64 },
}

impl CellRule {
    fn matches(&self, x: &[f64]) -> bool {
        match self {
            CellRule::All => true,
            CellRule::Levels { covariates, values } => {
                covariates.iter().zip(values).all(|(&j, &v)| x[j] == v)
            }
            CellRule::Interval { covariate, lo, hi } => {
                let v = x[*covariate];
                v >= *lo && v < *hi
            }
        }
    }
}

/// A mutually exclusive, exhaustive partition of the covariate space
/// into `K` cells with stable ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    cells: Vec<(String, CellRule)>,
}

impl CellPartition {
    pub fn k(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_ids(&self) -> Vec<&str> {
        self.cells.iter().map(|(id, _)| id.as_str()).collect()
    }

    /// Cell index of a covariate vector, if any rule matches.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        self.cells.iter().position(|(_, rule)| rule.matches(x))
    }

    /// Per-cell row counts; errors if any row is unassigned.
    pub fn counts(&self, sample: &ObservedSample) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.k()];
        for (i, row) in sample.rows().iter().enumerate() {
            match self.cell_of(&row.x) {
                Some(k) => counts[k] += 1,
                None => {
                    return Err(Error::InvalidCells(format!(
                        "row {} is not covered by any cell",
                        i + 1
                    )))
                }
            }
        }
        Ok(counts)
    }
}

/// How to build a [`CellPartition`].
#[derive(Debug, Clone)]
pub enum BinningSpec {
    /// Single cell covering everything (K = 1).
    None,
    /// Product of the observed levels of the listed covariates.
    Discrete { covariates: Vec<usize> },
    /// Explicit half-open intervals on one covariate. Must be disjoint
    /// and cover every observed value.
    Intervals {
        covariate: usize,
        intervals: Vec<(f64, f64)>,
    },
}

/// Builds cells over the observed covariate values.
///
/// Discrete covariates default to one cell per observed level; the
/// product over several covariates gives the full interaction. Cells
/// are exclusive and exhaustive over the observed support.
pub fn partition_cells(sample: &ObservedSample, spec: &BinningSpec) -> Result<CellPartition> {
    let arity = sample.covariate_names().len();
    let partition = match spec {
        BinningSpec::None => CellPartition {
            cells: vec![("all".to_string(), CellRule::All)],
        },
        BinningSpec::Discrete { covariates } => {
            if covariates.is_empty() {
                return partition_cells(sample, &BinningSpec::None);
            }
            for &j in covariates {
                if j >= arity {
                    return Err(Error::CovariateOutOfRange(j, arity));
                }
            }
            // observed levels per covariate, sorted
            let mut levels: Vec<Vec<f64>> = Vec::with_capacity(covariates.len());
            for &j in covariates {
                let mut vals: Vec<f64> = sample.rows().iter().map(|r| r.x[j]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
                vals.dedup();
                levels.push(vals);
            }
            let mut cells = Vec::new();
            let mut combo = vec![0usize; covariates.len()];
            loop {
                let values: Vec<f64> = combo.iter().zip(&levels).map(|(&i, l)| l[i]).collect();
                let id = covariates
                    .iter()
                    .zip(&values)
                    .map(|(&j, v)| format!("{}={}", sample.covariate_names()[j], v))
                    .collect::<Vec<_>>()
                    .join(",");
                cells.push((
                    id,
                    CellRule::Levels {
                        covariates: covariates.clone(),
                        values,
                    },
                ));
                // advance the mixed-radix counter
                let mut d = combo.len();
                loop {
                    if d == 0 {
                        break;
                    }
                    d -= 1;
                    combo[d] += 1;
                    if combo[d] < levels[d].len() {
                        break;
                    }
                    combo[d] = 0;
                }
                if combo.iter().all(|&c| c == 0) {
                    break;
                }
            }
            CellPartition { cells }
        }
        BinningSpec::Intervals {
            covariate,
            intervals,
        } => {
            if *covariate >= arity {
                return Err(Error::CovariateOutOfRange(*covariate, arity));
            }
            if intervals.is_empty() {
                return Err(Error::InvalidCells("no intervals given".into()));
            }
            if intervals
                .iter()
                .any(|(lo, hi)| !lo.is_finite() || !hi.is_finite())
            {
                return Err(Error::InvalidCells("non-finite interval edge".into()));
            }
            let mut sorted = intervals.clone();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite edges"));
            for w in sorted.windows(2) {
                if w[0].1 > w[1].0 {
                    return Err(Error::InvalidCells(format!(
                        "intervals [{}, {}) and [{}, {}) overlap",
                        w[0].0, w[0].1, w[1].0, w[1].1
                    )));
                }
            }
            for (lo, hi) in &sorted {
                if lo >= hi {
                    return Err(Error::InvalidCells(format!("empty interval [{lo}, {hi})")));
                }
            }
            let name = &sample.covariate_names()[*covariate];
            let cells = sorted
                .iter()
                .map(|&(lo, hi)| {
                    (
                        format!("{name}in[{lo},{hi})"),
                        CellRule::Interval {
                            covariate: *covariate,
                            lo,
                            hi,
                        },
                    )
                })
                .collect();
            CellPartition { cells }
        }
    };
    // exhaustiveness over the observed support
    for (i, row) in sample.rows().iter().enumerate() {
        if partition.cell_of(&row.x).is_none() {
            return Err(Error::InvalidCells(format!(
                "bins do not cover data row {} (x = {:?})",
                i + 1,
                row.x
            )));
        }
    }
    Ok(partition)
}
