//! Unbalanced longitudinal datasets: CSV ingestion, validation and
//! subject indexing.
//!
//! Data arrive in long format, one row per observation, with a header row.
//! Rows containing an empty or `NA` cell in any selected column are dropped
//! and counted; everything else must parse or loading fails.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// One measurement on one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub subject_id: String,
    /// Time index; calendar dates are stored as days since 1970-01-01.
    pub time: Option<f64>,
    /// Semicontinuous outcome, zero or positive.
    pub outcome: f64,
    /// Covariate row, no intercept.
    pub covariates: Vec<f64>,
}

/// Column selection for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvColumns {
    pub id: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub time: Option<String>,
}

/// A validated, immutable longitudinal dataset.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    observations: Vec<Observation>,
    covariate_names: Vec<String>,
    subject_ids: Vec<String>,
    subject_of: Vec<usize>,
    index: HashMap<String, usize>,
    dropped_rows: usize,
}

impl PanelDataset {
    /// Validate `observations` and index subjects by first appearance.
    pub fn new(observations: Vec<Observation>, covariate_names: Vec<String>) -> Result<Self> {
        let p = covariate_names.len();
        if p < 2 {
            return Err(Error::UnsupportedDesign(format!(
                "{p} covariate(s) given; the rank test is only defined for p >= 2 covariates"
            )));
        }
        let mut subject_ids = Vec::new();
        let mut subject_of = Vec::with_capacity(observations.len());
        let mut index = HashMap::new();
        for (row, obs) in observations.iter().enumerate() {
            if obs.covariates.len() != p {
                return Err(Error::Schema(format!(
                    "observation {row} has {} covariates, expected {p}",
                    obs.covariates.len()
                )));
            }
            if !obs.outcome.is_finite() || obs.outcome < 0.0 {
                return Err(Error::Domain(format!(
                    "observation {row}: outcome {} is not a non-negative number",
                    obs.outcome
                )));
            }
            if obs.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!(
                    "observation {row}: non-finite covariate"
                )));
            }
            let next = subject_ids.len();
            let s = *index.entry(obs.subject_id.clone()).or_insert_with(|| {
                subject_ids.push(obs.subject_id.clone());
                next
            });
            subject_of.push(s);
        }
        if !observations.is_empty() {
            for (k, name) in covariate_names.iter().enumerate() {
                if observations.iter().all(|o| o.covariates[k] == 1.0) {
                    return Err(Error::UnsupportedDesign(format!(
                        "covariate `{name}` is an intercept column; ranks are location invariant \
                         so no intercept may be included"
                    )));
                }
            }
        }
        Ok(PanelDataset {
            observations,
            covariate_names,
            subject_ids,
            subject_of,
            index,
            dropped_rows: 0,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Number of subjects `n`.
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    /// Number of observations `N`.
    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    /// Number of covariates `p`.
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Zero-based subject index of every observation.
    pub fn subject_of(&self) -> &[usize] {
        &self.subject_of
    }

    /// Subject ids in index order.
    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Observation count `m_i` per subject.
    pub fn subject_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_subjects()];
        for &s in &self.subject_of {
            sizes[s] += 1;
        }
        sizes
    }

    /// Rows dropped during loading because of missing cells.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.outcome).collect()
    }

    /// Keep the observations for which `keep` returns true.
    pub fn filter<F: FnMut(&Observation) -> bool>(&self, mut keep: F) -> Result<Self> {
        let obs = self
            .observations
            .iter()
            .filter(|o| keep(o))
            .cloned()
            .collect();
        PanelDataset::new(obs, self.covariate_names.clone())
    }

    /// Sub-dataset holding the given subjects (by index), in the given order.
    pub fn select_subjects(&self, subjects: &[usize]) -> Result<Self> {
        let mut rows: Vec<Vec<&Observation>> = vec![Vec::new(); self.n_subjects()];
        for (o, &s) in self.observations.iter().zip(&self.subject_of) {
            rows[s].push(o);
        }
        let obs = subjects
            .iter()
            .flat_map(|&s| rows[s].iter().map(|o| (*o).clone()))
            .collect();
        PanelDataset::new(obs, self.covariate_names.clone())
    }

    /// Copy with every outcome replaced by `f(outcome)`.
    pub fn map_outcomes<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        let obs = self
            .observations
            .iter()
            .map(|o| Observation {
                outcome: f(o.outcome),
                ..o.clone()
            })
            .collect();
        PanelDataset::new(obs, self.covariate_names.clone())
    }

    /// Write in the long CSV layout `id,time,y,<covariates>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "time".to_string(), "y".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for o in &self.observations {
            let mut rec = vec![
                o.subject_id.clone(),
                o.time.map(|t| t.to_string()).unwrap_or_else(|| "NA".into()),
                o.outcome.to_string(),
            ];
            rec.extend(o.covariates.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv output>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        self.write_csv(f)
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

fn parse_number(cell: &str, row: usize, col: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("column `{col}`: `{cell}` is not a number"),
    })
}

fn parse_date(cell: &str, row: usize, col: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell.trim(), "%Y-%m-%d").map_err(|_| Error::Parse {
        row,
        message: format!("column `{col}`: `{cell}` is not a YYYY-MM-DD date"),
    })
}

fn day_number(d: NaiveDate) -> f64 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days() as f64
}

/// Day number (days since 1970-01-01) of a `YYYY-MM-DD` date.
pub fn day_of(date: &str) -> Result<f64> {
    NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
        .map(day_number)
        .map_err(|_| Error::Config(format!("`{date}` is not a YYYY-MM-DD date")))
}

/// Numbers are taken as-is; ISO dates become day numbers.
fn parse_time(cell: &str, row: usize, col: &str) -> Result<f64> {
    match cell.trim().parse::<f64>() {
        Ok(t) => Ok(t),
        Err(_) => parse_date(cell, row, col).map(day_number),
    }
}

struct Header(csv::StringRecord);

impl Header {
    fn position(&self, name: &str) -> Result<usize> {
        self.0
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    }
}

/// Load a dataset from any reader holding CSV text.
pub fn read_csv<R: Read>(reader: R, cols: &CsvColumns) -> Result<PanelDataset> {
    if cols.covariates.len() < 2 {
        return Err(Error::UnsupportedDesign(format!(
            "{} covariate(s) given; the rank test is only defined for p >= 2 covariates",
            cols.covariates.len()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = Header(rdr.headers()?.clone());
    let id_pos = header.position(&cols.id)?;
    let y_pos = header.position(&cols.outcome)?;
    let x_pos = cols
        .covariates
        .iter()
        .map(|c| header.position(c))
        .collect::<Result<Vec<_>>>()?;
    let t_pos = cols
        .time
        .as_deref()
        .map(|t| header.position(t))
        .transpose()?;

    let mut observations = Vec::new();
    let mut dropped = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // header is row 1
        let row = k + 2;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let mut used = vec![id_pos, y_pos];
        used.extend(&x_pos);
        used.extend(t_pos);
        if used.iter().any(|&i| is_missing(cell(i))) {
            dropped += 1;
            continue;
        }
        let outcome = parse_number(cell(y_pos), row, &cols.outcome)?;
        if outcome < 0.0 {
            return Err(Error::Domain(format!(
                "row {row}: outcome {outcome} is negative; outcomes must be zero or positive"
            )));
        }
        let covariates = x_pos
            .iter()
            .zip(&cols.covariates)
            .map(|(&i, name)| parse_number(cell(i), row, name))
            .collect::<Result<Vec<_>>>()?;
        let time = match (t_pos, &cols.time) {
            (Some(i), Some(name)) => Some(parse_time(cell(i), row, name)?),
            _ => None,
        };
        observations.push(Observation {
            subject_id: cell(id_pos).trim().to_string(),
            time,
            outcome,
            covariates,
        });
    }
    let mut ds = PanelDataset::new(observations, cols.covariates.clone())?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

/// Load a dataset from a CSV file.
pub fn load_csv(path: &Path, cols: &CsvColumns) -> Result<PanelDataset> {
    let f = File::open(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    read_csv(f, cols)
}

/// Re-key subjects to `(subject, week)` pairs.
///
/// Weeks are consecutive `week_len`-day windows anchored at the earliest
/// time in the dataset, so windows line up across the original subjects
/// (cities). Incomplete weeks are kept as smaller subjects.
pub fn group_city_weeks(dataset: &PanelDataset, week_len: u32) -> Result<PanelDataset> {
    if week_len == 0 {
        return Err(Error::Config("week length must be at least 1 day".into()));
    }
    if dataset.is_empty() {
        return Ok(dataset.clone());
    }
    let mut times = Vec::with_capacity(dataset.n_obs());
    for (row, o) in dataset.observations().iter().enumerate() {
        match o.time {
            Some(t) if t.is_finite() => times.push(t.floor()),
            _ => {
                return Err(Error::Parse {
                    row,
                    message: "observation has no usable date".into(),
                })
            }
        }
    }
    let origin = times.iter().copied().fold(f64::INFINITY, f64::min);
    let obs = dataset
        .observations()
        .iter()
        .zip(&times)
        .map(|(o, &t)| {
            let week = ((t - origin) / week_len as f64).floor() as i64;
            Observation {
                subject_id: format!("{}#w{week}", o.subject_id),
                ..o.clone()
            }
        })
        .collect();
    PanelDataset::new(obs, dataset.covariate_names().to_vec())
}

/// Column selection for daily station rainfall records.
#[derive(Debug, Clone)]
pub struct RainfallColumns {
    pub city: String,
    pub date: String,
    pub outcome: String,
    /// City coded as 1 on the city indicator; if absent, the data must hold
    /// exactly two cities and the second one to appear is coded 1.
    pub treated: Option<String>,
}

/// Whether a month falls in the October-March rainy season.
pub fn is_rainy_season(month: u32) -> bool {
    !(4..=9).contains(&month)
}

/// Load daily rainfall records into a dataset keyed by city, with covariates
/// `city` (treated-city indicator) and `season` (October-March indicator)
/// and time set to the day number.
pub fn read_rainfall_csv<R: Read>(reader: R, cols: &RainfallColumns) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = Header(rdr.headers()?.clone());
    let c_pos = header.position(&cols.city)?;
    let d_pos = header.position(&cols.date)?;
    let y_pos = header.position(&cols.outcome)?;

    let mut rows = Vec::new();
    let mut dropped = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 2;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        if [c_pos, d_pos, y_pos].iter().any(|&i| is_missing(cell(i))) {
            dropped += 1;
            continue;
        }
        let date = parse_date(cell(d_pos), row, &cols.date)?;
        let y = parse_number(cell(y_pos), row, &cols.outcome)?;
        if y < 0.0 {
            return Err(Error::Domain(format!("row {row}: negative rainfall {y}")));
        }
        rows.push((cell(c_pos).trim().to_string(), date, y));
    }

    let mut cities: Vec<&str> = Vec::new();
    for (c, _, _) in &rows {
        if !cities.contains(&c.as_str()) {
            cities.push(c);
        }
    }
    let treated = match &cols.treated {
        Some(t) if cities.contains(&t.as_str()) => t.clone(),
        Some(t) => {
            return Err(Error::Schema(format!(
                "treated city `{t}` not present in data"
            )))
        }
        None if cities.len() == 2 => cities[1].to_string(),
        None => {
            return Err(Error::Schema(format!(
                "expected exactly two cities without an explicit treated city, found {}",
                cities.len()
            )))
        }
    };

    let observations = rows
        .into_iter()
        .map(|(city, date, y)| Observation {
            covariates: vec![
                f64::from(u8::from(city == treated)),
                f64::from(u8::from(is_rainy_season(date.month()))),
            ],
            subject_id: city,
            time: Some(day_number(date)),
            outcome: y,
        })
        .collect();
    let mut ds = PanelDataset::new(observations, vec!["city".into(), "season".into()])?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

pub fn load_rainfall_csv(path: &Path, cols: &RainfallColumns) -> Result<PanelDataset> {
    let f = File::open(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    read_rainfall_csv(f, cols)
}
