//! Demand and weather CSV ingestion.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use censored_gp::data::Standardizer;
use censored_gp::sim::DropoffSeries;
use censored_gp::Dataset;
use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike};
use nalgebra::DMatrix;

use crate::error::LoadError;

/// Column positions in the feature matrix built by [`DemandData::features`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    pub time: usize,
    /// Hour of day and day of week, when requested.
    pub calendar: Option<[usize; 2]>,
    /// Standardized weather columns (the Matérn leaf's dims).
    pub weather: Vec<usize>,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct DemandData {
    pub timestamps: Vec<NaiveDateTime>,
    pub demand: Vec<f64>,
    pub available: Vec<bool>,
    /// Same-interval dropoff counts as they appear in the file.
    pub dropoffs: Option<Vec<f64>>,
    pub latent: Option<Vec<f64>>,
    pub weather_names: Vec<String>,
    /// One row per timestamp, one entry per weather column.
    pub weather: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct WeatherTable {
    pub names: Vec<String>,
    pub dates: Vec<NaiveDateTime>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinReport {
    pub kept: usize,
    pub dropped: usize,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc())
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    records: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, LoadError> {
        let csv_err = |source| LoadError::Csv { path: path.to_path_buf(), source };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
        let headers = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            records.push((line, rec));
        }
        if records.is_empty() {
            return Err(LoadError::Empty { path: path.to_path_buf() });
        }
        Ok(Table { path: path.to_path_buf(), headers, records })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize, LoadError> {
        self.column(name)
            .ok_or_else(|| LoadError::MissingColumn { path: self.path.clone(), column: name.into() })
    }

    fn bad_cell(&self, line: u64, col: usize, value: &str) -> LoadError {
        LoadError::BadCell {
            path: self.path.clone(),
            line,
            column: self.headers[col].clone(),
            value: value.into(),
        }
    }

    fn numbers(&self, col: usize) -> Result<Vec<f64>, LoadError> {
        self.records
            .iter()
            .map(|(line, rec)| {
                let cell = rec.get(col).unwrap_or("");
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.bad_cell(*line, col, cell))
            })
            .collect()
    }

    fn non_negative(&self, col: usize) -> Result<Vec<f64>, LoadError> {
        let v = self.numbers(col)?;
        if let Some(i) = v.iter().position(|&x| x < 0.0) {
            return Err(LoadError::BadValue {
                path: self.path.clone(),
                line: self.records[i].0,
                message: format!("`{}` must be non-negative (got {})", self.headers[col], v[i]),
            });
        }
        Ok(v)
    }

    fn dates(&self, col: usize) -> Result<Vec<NaiveDateTime>, LoadError> {
        self.records
            .iter()
            .map(|(line, rec)| {
                let cell = rec.get(col).unwrap_or("");
                parse_timestamp(cell).ok_or_else(|| self.bad_cell(*line, col, cell))
            })
            .collect()
    }
}

/// Reads a demand file with columns `date`, `demand`, `available` (0 marks
/// a zero-availability row) and optional `dropoffs` and `latent`.
pub fn load_demand_csv(path: impl AsRef<Path>) -> Result<DemandData, LoadError> {
    let t = Table::read(path.as_ref())?;
    let date_col = t.require("date")?;
    let demand_col = t.require("demand")?;
    let avail_col = t.require("available")?;

    let timestamps = t.dates(date_col)?;
    for k in 1..timestamps.len() {
        if timestamps[k] <= timestamps[k - 1] {
            return Err(LoadError::NonMonotone {
                path: t.path.clone(),
                line: t.records[k].0,
                value: t.records[k].1.get(date_col).unwrap_or("").into(),
            });
        }
    }
    let demand = t.non_negative(demand_col)?;
    let available = t
        .records
        .iter()
        .map(|(line, rec)| match rec.get(avail_col).unwrap_or("") {
            "1" | "true" | "TRUE" | "True" => Ok(true),
            "0" | "false" | "FALSE" | "False" => Ok(false),
            other => Err(t.bad_cell(*line, avail_col, other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dropoffs = t.column("dropoffs").map(|c| t.non_negative(c)).transpose()?;
    let latent = t.column("latent").map(|c| t.numbers(c)).transpose()?;
    let n = timestamps.len();
    Ok(DemandData {
        timestamps,
        demand,
        available,
        dropoffs,
        latent,
        weather_names: Vec::new(),
        weather: vec![Vec::new(); n],
    })
}

/// Reads a weather file: `date` plus any number of numeric columns.
pub fn load_weather_csv(path: impl AsRef<Path>) -> Result<WeatherTable, LoadError> {
    let t = Table::read(path.as_ref())?;
    let date_col = t.require("date")?;
    let dates = t.dates(date_col)?;
    let mut seen = HashSet::new();
    for (k, d) in dates.iter().enumerate() {
        if !seen.insert(*d) {
            return Err(LoadError::DuplicateDate {
                path: t.path.clone(),
                date: t.records[k].1.get(date_col).unwrap_or("").into(),
            });
        }
    }
    let cols: Vec<usize> = (0..t.headers.len()).filter(|&c| c != date_col).collect();
    let values = cols.iter().map(|&c| t.numbers(c)).collect::<Result<Vec<_>, _>>()?;
    let rows = (0..dates.len()).map(|i| values.iter().map(|col| col[i]).collect()).collect();
    Ok(WeatherTable { names: cols.iter().map(|&c| t.headers[c].clone()).collect(), dates, rows })
}

fn rows_of(v: &[f64], keep: &[(usize, usize)]) -> Vec<f64> {
    keep.iter().map(|&(i, _)| v[i]).collect()
}

impl DemandData {
    pub fn n(&self) -> usize {
        self.timestamps.len()
    }

    /// Inner join on the timestamp. Weather columns are standardized over
    /// the retained rows and appended after any existing ones.
    pub fn join_weather(mut self, weather: &WeatherTable) -> Result<(Self, JoinReport), LoadError> {
        let index: HashMap<NaiveDateTime, usize> =
            weather.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let keep: Vec<(usize, usize)> = self
            .timestamps
            .iter()
            .enumerate()
            .filter_map(|(i, d)| index.get(d).map(|&j| (i, j)))
            .collect();
        if keep.is_empty() {
            return Err(LoadError::NoOverlap);
        }
        let dropped = self.n() - keep.len();
        if dropped > 0 {
            log::warn!("{dropped} demand rows have no weather record and were dropped");
        }
        self.demand = rows_of(&self.demand, &keep);
        self.dropoffs = self.dropoffs.as_deref().map(|v| rows_of(v, &keep));
        self.latent = self.latent.as_deref().map(|v| rows_of(v, &keep));
        self.available = keep.iter().map(|&(i, _)| self.available[i]).collect();
        self.timestamps = keep.iter().map(|&(i, _)| self.timestamps[i]).collect();
        let mut rows: Vec<Vec<f64>> = keep.iter().map(|&(i, _)| self.weather[i].clone()).collect();
        for c in 0..weather.names.len() {
            let col: Vec<f64> = keep.iter().map(|&(_, j)| weather.rows[j][c]).collect();
            let st = Standardizer::fit(&col);
            for (row, v) in rows.iter_mut().zip(&col) {
                row.push(st.forward(*v));
            }
        }
        self.weather = rows;
        self.weather_names.extend(weather.names.iter().cloned());
        Ok((self, JoinReport { kept: keep.len(), dropped }))
    }

    /// Days elapsed since the first timestamp.
    pub fn time_index(&self) -> Vec<f64> {
        let t0 = self.timestamps[0];
        self.timestamps.iter().map(|t| (*t - t0).num_seconds() as f64 / 86_400.0).collect()
    }

    /// Median spacing between consecutive rows, in days.
    pub fn median_spacing(&self) -> f64 {
        let t = self.time_index();
        let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            return 1.0;
        }
        gaps.sort_by(f64::total_cmp);
        gaps[gaps.len() / 2]
    }

    /// Time index, then optionally hour of day and day of week, then the
    /// weather columns.
    pub fn features(&self, calendar: bool) -> (DMatrix<f64>, FeatureLayout) {
        let time = self.time_index();
        let n = self.n();
        let nw = self.weather_names.len();
        let offset = if calendar { 3 } else { 1 };
        let dim = offset + nw;
        let x = DMatrix::from_fn(n, dim, |i, j| match j {
            0 => time[i],
            1 if calendar => {
                let t = self.timestamps[i];
                t.hour() as f64 + t.minute() as f64 / 60.0
            }
            2 if calendar => self.timestamps[i].weekday().num_days_from_monday() as f64,
            _ => self.weather[i][j - offset],
        });
        let layout = FeatureLayout {
            time: 0,
            calendar: calendar.then_some([1, 2]),
            weather: (offset..dim).collect(),
            dim,
        };
        (x, layout)
    }

    /// Zero-availability rows as labels.
    pub fn labels(&self) -> Vec<bool> {
        self.available.iter().map(|a| !a).collect()
    }

    /// Dropoffs of the preceding interval for each row.
    pub fn dropoff_series(&self) -> Option<censored_gp::Result<DropoffSeries>> {
        self.dropoffs.as_deref().map(DropoffSeries::lagged)
    }

    /// Demand as observed, availability labels as censoring flags, and the
    /// latent column when the file has one.
    pub fn to_dataset(&self, calendar: bool) -> censored_gp::Result<Dataset> {
        let (x, _) = self.features(calendar);
        let ds = Dataset::new(x, self.demand.clone(), self.labels())?;
        match &self.latent {
            Some(l) => ds.with_latent(l.clone()),
            None => Ok(ds),
        }
    }
}
