use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{KgzError, Result};

/// Values sampled at increasing times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> TimeSeries {
        assert_eq!(times.len(), values.len(), "time series length mismatch");
        TimeSeries { times, values }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Samples with `t1 <= t <= t2`.
    pub fn window(&self, t1: f64, t2: f64) -> TimeSeries {
        let (t, v) = self.iter().filter(|(t, _)| *t >= t1 - 1e-9 && *t <= t2 + 1e-9).unzip();
        TimeSeries { times: t, values: v }
    }

    /// Value at the sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, v)| v)
    }

    /// Linear interpolation between the samples around `t`; `None` outside
    /// the sampled range. Times must be increasing.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let k = self.times.partition_point(|&s| s < t);
        if k == self.times.len() {
            return None;
        }
        if self.times[k] == t {
            return Some(self.values[k]);
        }
        if k == 0 {
            return None;
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some((1.0 - w) * self.values[k - 1] + w * self.values[k])
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Named time series sharing one time axis, serialized as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsReport {
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub metadata: Vec<(String, String)>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl DiagnosticsReport {
    pub fn new(times: Vec<f64>) -> DiagnosticsReport {
        DiagnosticsReport { times, columns: Vec::new(), metadata: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.times.len() {
            return Err(KgzError::ShapeMismatch(format!(
                "column `{name}` has {} rows, report has {}",
                values.len(),
                self.times.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KgzError::NonFinite(format!("diagnostic `{name}`")));
        }
        if name.contains(',') || name == "t" || self.column(&name).is_some() {
            return Err(KgzError::InvalidArgument(format!("bad or duplicate column name `{name}`")));
        }
        self.columns.push((name, values));
        Ok(())
    }

    pub fn push_series(&mut self, name: impl Into<String>, s: &TimeSeries) -> Result<()> {
        let name = name.into();
        if s.times.len() != self.times.len() || s.times.iter().zip(&self.times).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(KgzError::ShapeMismatch(format!("series `{name}` is on a different time axis")));
        }
        self.push(name, s.values.clone())
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn series(&self, name: &str) -> Option<TimeSeries> {
        self.column(name).map(|v| TimeSeries::new(self.times.clone(), v.to_vec()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for (n, _) in &self.columns {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format_value(*t));
            for (_, v) in &self.columns {
                out.push(',');
                out.push_str(&format_value(v[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<DiagnosticsReport> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| KgzError::Format("empty CSV".into()))?;
        let names: Vec<&str> = header.split(',').collect();
        if names.first() != Some(&"t") {
            return Err(KgzError::Format("CSV header must start with `t`".into()));
        }
        let mut times = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len() - 1];
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != names.len() {
                return Err(KgzError::Format(format!("row {} has {} cells", ln + 2, cells.len())));
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| KgzError::Format(format!("bad number `{s}` on row {}", ln + 2)))
            };
            times.push(parse(cells[0])?);
            for (c, cell) in cols.iter_mut().zip(&cells[1..]) {
                c.push(parse(cell)?);
            }
        }
        let mut r = DiagnosticsReport::new(times);
        for (n, c) in names[1..].iter().zip(cols) {
            r.push(*n, c)?;
        }
        Ok(r)
    }

    /// `key=value` lines for the metadata sidecar.
    pub fn metadata_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Writes `<stem>.csv` and, when metadata is present, `<stem>.meta`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        if !self.metadata.is_empty() {
            fs::write(dir.join(format!("{stem}.meta")), self.metadata_text())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_exactly() {
        let mut r = DiagnosticsReport::new(vec![0.0, 0.15, 0.30000000000000004]);
        r.push("a", vec![1.0 / 3.0, -2.5e-300, 7.0]).unwrap();
        r.push("sup|E|", vec![0.1, 0.2, f64::MIN_POSITIVE]).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("t,a,sup|E|\n"));
        let back = DiagnosticsReport::from_csv(&csv).unwrap();
        assert_eq!(back, DiagnosticsReport { metadata: vec![], ..r });
    }

    #[test]
    fn rejects_bad_columns() {
        let mut r = DiagnosticsReport::new(vec![0.0, 1.0]);
        assert!(r.push("x", vec![1.0]).is_err());
        assert!(r.push("x", vec![1.0, f64::NAN]).is_err());
        r.push("x", vec![1.0, 2.0]).unwrap();
        assert!(r.push("x", vec![1.0, 2.0]).is_err());
        assert!(DiagnosticsReport::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn window_and_lookup() {
        let s = TimeSeries::new(vec![0.0, 1.0, 2.0, 3.0], vec![4.0, 3.0, 2.0, 1.0]);
        assert_eq!(s.window(1.0, 2.0).values, vec![3.0, 2.0]);
        assert_eq!(s.at(2.2), Some(2.0));
        assert_eq!(s.max(), 4.0);
        assert_eq!(s.interpolate(1.25), Some(2.75));
        assert_eq!(s.interpolate(3.0), Some(1.0));
        assert_eq!(s.interpolate(3.5), None);
    }
}
