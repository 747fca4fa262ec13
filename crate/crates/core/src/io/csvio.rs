//! CSV schemas: households, per-market hedonic fits, demand fits and CV tables.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::format::fmt_num;
use super::IoError;
use crate::data::Household;
use crate::estimation::{DemandBasis, HedonicFit, QuantileFit};

const REQUIRED: [&str; 5] = [
    "household_id",
    "market_id",
    "income_weekly_gbp",
    "rent_weekly_gbp",
    "school_score",
];
const OPTIONAL: [&str; 3] = ["savings_gbp", "true_eta", "true_tau"];

pub const MARKETS_HEADER: [&str; 9] = [
    "market_id",
    "theta1",
    "theta2",
    "delta",
    "se_theta1",
    "se_theta2",
    "se_delta",
    "r_squared",
    "n",
];

pub const DEMAND_HEADER: [&str; 15] = [
    "tau",
    "r0",
    "r1",
    "r3",
    "r4",
    "objective",
    "converged",
    "frac_below",
    "r2",
    "r_ratio",
    "basis",
    "frac_nonpositive",
    "iterations",
    "n",
    "p",
];

pub const CV_HEADER: [&str; 5] = ["tau", "y0", "cv_gbp", "method", "error_estimate"];

/// A row excluded while loading, with its 1-based file line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub household_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedHouseholds {
    pub households: Vec<Household>,
    /// Data rows read.
    pub loaded: usize,
    /// Rows failing a positivity check.
    pub rejected: Vec<RowIssue>,
    /// Rows with rent at or above income.
    pub dropped_rent: Vec<RowIssue>,
}

impl LoadedHouseholds {
    pub fn dropped(&self) -> usize {
        self.rejected.len() + self.dropped_rent.len()
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    match e.position() {
        Some(pos) => IoError::Parse {
            path: path.to_path_buf(),
            line: pos.line(),
            message: e.to_string(),
        },
        None => IoError::Csv {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

fn schema(path: &Path, message: String) -> IoError {
    IoError::Schema {
        path: path.to_path_buf(),
        message,
    }
}

struct HouseholdColumns {
    required: [usize; 5],
    optional: [Option<usize>; 3],
    attrs: Vec<usize>,
}

fn household_columns(path: &Path, header: &csv::StringRecord) -> Result<HouseholdColumns, IoError> {
    let mut seen = BTreeSet::new();
    let mut attrs: Vec<(usize, usize)> = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if !seen.insert(name) {
            return Err(schema(path, format!("duplicate column {name}")));
        }
        if REQUIRED.contains(&name) || OPTIONAL.contains(&name) {
            continue;
        }
        match name.strip_prefix("attr_").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k >= 1 => attrs.push((k, i)),
            _ => return Err(schema(path, format!("unknown column {name}"))),
        }
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut required = [0; 5];
    for (slot, name) in required.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| schema(path, format!("missing required column {name}")))?;
    }
    attrs.sort();
    if attrs.iter().enumerate().any(|(j, (k, _))| *k != j + 1) {
        return Err(schema(path, "attribute columns must be attr_1..attr_k without gaps".into()));
    }
    Ok(HouseholdColumns {
        required,
        optional: OPTIONAL.map(find),
        attrs: attrs.into_iter().map(|(_, i)| i).collect(),
    })
}

/// Reads and validates `households.csv`. Rows failing a positivity check
/// or with rent at or above income are excluded and reported, not fatal.
pub fn load_households(path: &Path) -> Result<LoadedHouseholds, IoError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(open(path)?);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = household_columns(path, &header)?;
    let mut out = LoadedHouseholds {
        households: Vec::new(),
        loaded: 0,
        rejected: Vec::new(),
        dropped_rent: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        out.loaded += 1;
        let parse_err = |name: &str, raw: &str| IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("column {name}: cannot read {raw:?} as a finite number"),
        };
        let number = |i: usize, name: &str| -> Result<f64, IoError> {
            let raw = record.get(i).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(name, raw))
        };
        let optional = |i: Option<usize>, name: &str| -> Result<Option<f64>, IoError> {
            match i.map(|i| record.get(i).unwrap_or("").trim()) {
                None | Some("") => Ok(None),
                Some(_) => number(i.unwrap(), name).map(Some),
            }
        };
        let r = &cols.required;
        let h = Household {
            household_id: record.get(r[0]).unwrap_or("").to_string(),
            market_id: record.get(r[1]).unwrap_or("").to_string(),
            income: number(r[2], REQUIRED[2])?,
            rent: number(r[3], REQUIRED[3])?,
            school_score: number(r[4], REQUIRED[4])?,
            savings: optional(cols.optional[0], OPTIONAL[0])?,
            true_eta: optional(cols.optional[1], OPTIONAL[1])?,
            true_tau: optional(cols.optional[2], OPTIONAL[2])?,
            attributes: cols
                .attrs
                .iter()
                .enumerate()
                .map(|(j, &i)| number(i, &format!("attr_{}", j + 1)))
                .collect::<Result<_, _>>()?,
        };
        if h.market_id.is_empty() {
            return Err(parse_err("market_id", ""));
        }
        let issue = |reason: String| RowIssue {
            line,
            household_id: h.household_id.clone(),
            reason,
        };
        let failed = [
            (h.income > 0.0, "income_weekly_gbp must be positive"),
            (h.rent > 0.0, "rent_weekly_gbp must be positive"),
            (h.school_score > 0.0, "school_score must be positive"),
            (h.savings.is_none_or(|v| v >= 0.0), "savings_gbp must be non-negative"),
        ]
        .into_iter()
        .find(|(ok, _)| !ok);
        if let Some((_, reason)) = failed {
            out.rejected.push(issue(reason.into()));
        } else if h.rent >= h.income {
            out.dropped_rent.push(issue(format!("rent {} is not below income {}", h.rent, h.income)));
        } else {
            out.households.push(h);
        }
    }
    Ok(out)
}

fn writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    let file = File::create(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_all(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(open(path)?);
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Writes `households.csv`. Optional columns appear when any row has a value.
pub fn write_households(path: &Path, rows: &[Household]) -> Result<(), IoError> {
    let k = rows.first().map_or(0, |h| h.attributes.len());
    if rows.iter().any(|h| h.attributes.len() != k) {
        return Err(schema(path, "households disagree on attribute count".into()));
    }
    let has = [
        rows.iter().any(|h| h.savings.is_some()),
        rows.iter().any(|h| h.true_eta.is_some()),
        rows.iter().any(|h| h.true_tau.is_some()),
    ];
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(OPTIONAL.iter().zip(has).filter(|(_, h)| *h).map(|(s, _)| s.to_string()));
    header.extend((1..=k).map(|j| format!("attr_{j}")));
    let body = rows.iter().map(|h| {
        let mut r = vec![
            h.household_id.clone(),
            h.market_id.clone(),
            fmt_num(h.income),
            fmt_num(h.rent),
            fmt_num(h.school_score),
        ];
        for (v, present) in [h.savings, h.true_eta, h.true_tau].into_iter().zip(has) {
            if present {
                r.push(opt(v));
            }
        }
        r.extend(h.attributes.iter().map(|&a| fmt_num(a)));
        r
    });
    write_all(path, &header, body)
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn write_markets(path: &Path, fits: &[HedonicFit]) -> Result<(), IoError> {
    let body = fits.iter().map(|f| {
        vec![
            f.market_id.clone(),
            fmt_num(f.theta1),
            fmt_num(f.theta2),
            fmt_num(f.delta),
            fmt_num(f.se_theta1),
            fmt_num(f.se_theta2),
            fmt_num(f.se_delta),
            fmt_num(f.r_squared),
            f.n.to_string(),
        ]
    });
    write_all(path, &header(&MARKETS_HEADER), body)
}

pub fn read_markets(path: &Path) -> Result<Vec<HedonicFit>, IoError> {
    read_all(path)
}

#[derive(Debug, Deserialize)]
struct DemandRecord {
    tau: f64,
    r0: f64,
    r1: f64,
    r3: f64,
    r4: f64,
    objective: f64,
    converged: bool,
    frac_below: f64,
    r2: f64,
    r_ratio: f64,
    basis: DemandBasis,
    frac_nonpositive: f64,
    iterations: usize,
    n: usize,
    p: usize,
}

pub fn write_demand_fits(path: &Path, fits: &[QuantileFit]) -> Result<(), IoError> {
    let body = fits.iter().map(|f| {
        vec![
            fmt_num(f.tau),
            fmt_num(f.r0()),
            fmt_num(f.r1()),
            fmt_num(f.r3()),
            fmt_num(f.r4()),
            fmt_num(f.objective),
            f.converged.to_string(),
            fmt_num(f.frac_below),
            fmt_num(f.r2()),
            fmt_num(f.r_ratio()),
            f.basis.name().to_string(),
            fmt_num(f.frac_nonpositive),
            f.iterations.to_string(),
            f.n.to_string(),
            f.p.to_string(),
        ]
    });
    write_all(path, &header(&DEMAND_HEADER), body)
}

pub fn read_demand_fits(path: &Path) -> Result<Vec<QuantileFit>, IoError> {
    let records: Vec<DemandRecord> = read_all(path)?;
    Ok(records
        .into_iter()
        .map(|d| QuantileFit {
            tau: d.tau,
            basis: d.basis,
            coefficients: match d.basis {
                DemandBasis::Linear => vec![d.r0, d.r1, d.r3, d.r4],
                DemandBasis::Unconstrained => vec![d.r0, d.r1, d.r2, d.r3, d.r4],
                DemandBasis::RatioAugmented => vec![d.r0, d.r1, d.r3, d.r4, d.r_ratio],
            },
            objective: d.objective,
            iterations: d.iterations,
            converged: d.converged,
            frac_below: d.frac_below,
            frac_nonpositive: d.frac_nonpositive,
            n: d.n,
            p: d.p,
        })
        .collect())
}

/// One row of `cv_table.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub tau: f64,
    pub y0: f64,
    pub cv_gbp: f64,
    pub method: String,
    pub error_estimate: f64,
}

pub fn write_cv_table(path: &Path, rows: &[CvRow]) -> Result<(), IoError> {
    let body = rows.iter().map(|r| {
        vec![
            fmt_num(r.tau),
            fmt_num(r.y0),
            fmt_num(r.cv_gbp),
            r.method.clone(),
            fmt_num(r.error_estimate),
        ]
    });
    write_all(path, &header(&CV_HEADER), body)
}

pub fn read_cv_table(path: &Path) -> Result<Vec<CvRow>, IoError> {
    read_all(path)
}

/// Writes a numeric series file with the given column names.
pub fn write_series(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    write_all(path, &header(columns), rows.iter().map(|r| r.iter().map(|&v| fmt_num(v)).collect()))
}
