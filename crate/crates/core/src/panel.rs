//! Balanced time-series panels, preprocessing transforms and FRED-MD style
//! CSV ingestion.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{col_means, col_sds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Abstract,
}

/// A balanced T x N panel of observations with an optional date index.
#[derive(Debug, Clone)]
pub struct TimeSeriesPanel {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub dates: Option<Vec<String>>,
    pub freq: Frequency,
}

impl TimeSeriesPanel {
    pub fn new(
        values: DMatrix<f64>,
        names: Vec<String>,
        dates: Option<Vec<String>>,
        freq: Frequency,
    ) -> Result<Self> {
        let (t, n) = (values.nrows(), values.ncols());
        if t < 2 || n < 1 {
            return Err(Error::Dimension(format!(
                "panel must have T >= 2 and N >= 1, got T={t}, N={n}"
            )));
        }
        if names.len() != n {
            return Err(Error::Dimension(format!(
                "{} names for {n} columns",
                names.len()
            )));
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(Error::Dimension("variable names must be unique".into()));
        }
        if let Some(d) = &dates {
            if d.len() != t {
                return Err(Error::Dimension("date index length != T".into()));
            }
            for w in d.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Dimension(format!(
                        "dates not strictly increasing at '{}'",
                        w[1]
                    )));
                }
            }
        }
        for (j, col) in values.column_iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    let date = dates
                        .as_ref()
                        .map(|d| d[i].clone())
                        .unwrap_or_else(|| format!("row {i}"));
                    return Err(Error::BalancedPanel {
                        variable: names[j].clone(),
                        date,
                    });
                }
            }
        }
        Ok(Self {
            values,
            names,
            dates,
            freq,
        })
    }

    /// Build a panel without dates from a raw matrix, naming columns v0..v{N-1}.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("v{j}")).collect();
        Self::new(values, names, None, Frequency::Abstract)
    }

    pub fn nobs(&self) -> usize {
        self.values.nrows()
    }

    pub fn nvars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sub-panel of the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<TimeSeriesPanel> {
        let mut cols = Vec::with_capacity(names.len());
        for &nm in names {
            cols.push(
                self.column_index(nm)
                    .ok_or_else(|| Error::Dimension(format!("no column named '{nm}'")))?,
            );
        }
        let values = DMatrix::from_fn(self.nobs(), cols.len(), |i, j| self.values[(i, cols[j])]);
        TimeSeriesPanel::new(
            values,
            names.iter().map(|s| s.to_string()).collect(),
            self.dates.clone(),
            self.freq,
        )
    }

    /// Write the panel in the same CSV layout it is read from. When
    /// `codes` is given, a FRED-MD style second row of numeric transform
    /// codes is emitted.
    pub fn save_csv(&self, path: &Path, codes: Option<&TransformSpec>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        if let Some(spec) = codes {
            let mut row = vec!["Transform:".to_string()];
            row.extend(spec.codes.iter().map(|c| c.fred_code().to_string()));
            wtr.write_record(&row)?;
        }
        for i in 0..self.nobs() {
            let date = self
                .dates
                .as_ref()
                .map(|d| d[i].clone())
                .unwrap_or_else(|| i.to_string());
            let mut row = vec![date];
            row.extend(self.values.row(i).iter().map(|v| format!("{v:.17e}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformCode {
    Level,
    Log,
    Diff,
    LogDiff,
    Standardize,
    DetrendLinear,
}

impl TransformCode {
    /// Map a FRED-MD numeric transform code onto the supported set.
    /// Unsupported codes (double differences, percent changes) fall back to
    /// level and are reported by the loader.
    pub fn from_fred_code(code: i64) -> TransformCode {
        match code {
            2 => TransformCode::Diff,
            4 => TransformCode::Log,
            5 => TransformCode::LogDiff,
            _ => TransformCode::Level,
        }
    }

    pub fn fred_code(&self) -> i64 {
        match self {
            TransformCode::Level => 1,
            TransformCode::Diff => 2,
            TransformCode::Log => 4,
            TransformCode::LogDiff => 5,
            // no FRED equivalents; round-trip via level
            TransformCode::Standardize | TransformCode::DetrendLinear => 1,
        }
    }

    fn drops_first_obs(&self) -> bool {
        matches!(self, TransformCode::Diff | TransformCode::LogDiff)
    }
}

/// Fitted parameters stored per variable so transforms can be inverted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransformParams {
    pub mean: f64,
    pub sd: f64,
    pub trend_const: f64,
    pub trend_slope: f64,
    /// first original observation, the initial condition for diff inversion
    pub initial: f64,
}

/// Per-variable transform codes plus, after `apply_transforms`, the fitted
/// parameters needed for inversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformSpec {
    pub codes: Vec<TransformCode>,
    pub params: Option<Vec<TransformParams>>,
    /// raw FRED-MD codes when the spec was read from a file
    pub raw_codes: Option<Vec<i64>>,
}

impl TransformSpec {
    pub fn new(codes: Vec<TransformCode>) -> Self {
        Self {
            codes,
            params: None,
            raw_codes: None,
        }
    }

    pub fn uniform(code: TransformCode, n: usize) -> Self {
        Self::new(vec![code; n])
    }
}

/// Outcome of a CSV load: the balanced panel plus what was trimmed.
#[derive(Debug)]
pub struct CsvLoad {
    pub panel: TimeSeriesPanel,
    pub transform_codes: Option<TransformSpec>,
    pub dropped_leading: usize,
    pub dropped_trailing: usize,
    pub dropped_columns: Vec<String>,
}

fn looks_like_date(s: &str) -> bool {
    let b = s.as_bytes();
    let digits_dash = |r: std::ops::Range<usize>| b[r].iter().all(|c| c.is_ascii_digit());
    match b.len() {
        7 => digits_dash(0..4) && b[4] == b'-' && digits_dash(5..7),
        10 => digits_dash(0..4) && b[4] == b'-' && digits_dash(5..7) && b[7] == b'-' && digits_dash(8..10),
        _ => false,
    }
}

/// Load a balanced panel from CSV. First row is the header of variable
/// names; an optional FRED-MD style second row carries numeric transform
/// codes. Leading and trailing rows containing any missing value are
/// trimmed; a missing value in the interior is a hard error.
pub fn load_csv(path: &Path, date_column: &str) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.len() < 2 {
        return Err(Error::Parse {
            row: 0,
            column: String::new(),
            message: "CSV must have a header row and at least one data row".into(),
        });
    }
    let header = rows.remove(0);
    let date_idx = header
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| Error::Parse {
            row: 0,
            column: date_column.to_string(),
            message: "date column not found in header".into(),
        })?;
    let var_idx: Vec<usize> = (0..header.len()).filter(|&j| j != date_idx).collect();
    let mut names: Vec<String> = var_idx.iter().map(|&j| header[j].clone()).collect();

    // FRED-MD convention: row after the header holds numeric transform codes,
    // flagged either by a non-date first cell (e.g. "Transform:") or by the
    // date cell being empty.
    let mut transform_codes = None;
    if let Some(first) = rows.first() {
        let date_cell = first.get(date_idx).map(String::as_str).unwrap_or("");
        if !looks_like_date(date_cell) {
            let mut raw = Vec::with_capacity(var_idx.len());
            let mut ok = true;
            for &j in &var_idx {
                match first.get(j).and_then(|c| c.parse::<i64>().ok()) {
                    Some(code) => raw.push(code),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let codes = raw.iter().map(|&c| TransformCode::from_fred_code(c)).collect();
                let mut spec = TransformSpec::new(codes);
                spec.raw_codes = Some(raw);
                transform_codes = Some(spec);
                rows.remove(0);
            } else {
                return Err(Error::Parse {
                    row: 1,
                    column: date_column.to_string(),
                    message: format!("cell '{date_cell}' is neither a date nor a transform code row"),
                });
            }
        }
    }

    // parse cells; empty -> NaN placeholder (resolved by trimming)
    let t_raw = rows.len();
    let mut dates = Vec::with_capacity(t_raw);
    let mut data = DMatrix::from_element(t_raw, var_idx.len(), f64::NAN);
    for (i, row) in rows.iter().enumerate() {
        dates.push(row.get(date_idx).cloned().unwrap_or_default());
        for (jj, &j) in var_idx.iter().enumerate() {
            let cell = row.get(j).map(String::as_str).unwrap_or("");
            if cell.is_empty() || cell == "NA" || cell == "NaN" {
                continue;
            }
            data[(i, jj)] = cell.parse::<f64>().map_err(|_| Error::Parse {
                row: i + 2,
                column: names[jj].clone(),
                message: format!("cannot parse cell '{cell}' as a number"),
            })?;
        }
    }

    // drop columns that are entirely missing
    let keep: Vec<usize> = (0..data.ncols())
        .filter(|&j| data.column(j).iter().any(|v| v.is_finite()))
        .collect();
    let dropped_columns: Vec<String> = (0..data.ncols())
        .filter(|j| !keep.contains(j))
        .map(|j| names[j].clone())
        .collect();
    if !dropped_columns.is_empty() {
        log::warn!("dropping all-missing columns: {dropped_columns:?}");
        data = DMatrix::from_fn(t_raw, keep.len(), |i, j| data[(i, keep[j])]);
        names = keep.iter().map(|&j| names[j].clone()).collect();
        if let Some(spec) = &mut transform_codes {
            spec.codes = keep.iter().map(|&j| spec.codes[j]).collect();
            spec.raw_codes = spec
                .raw_codes
                .as_ref()
                .map(|r| keep.iter().map(|&j| r[j]).collect());
        }
    }

    // trim leading/trailing rows with any missing value
    let row_complete = |i: usize| data.row(i).iter().all(|v| v.is_finite());
    let mut start = 0usize;
    while start < t_raw && !row_complete(start) {
        start += 1;
    }
    let mut end = t_raw;
    while end > start && !row_complete(end - 1) {
        end -= 1;
    }
    if end - start < 2 {
        return Err(Error::Dimension(
            "fewer than 2 complete rows remain after trimming".into(),
        ));
    }
    // interior missing values are a hard error, not imputed
    for i in start..end {
        for j in 0..data.ncols() {
            if !data[(i, j)].is_finite() {
                return Err(Error::BalancedPanel {
                    variable: names[j].clone(),
                    date: dates[i].clone(),
                });
            }
        }
    }
    let dropped_leading = start;
    let dropped_trailing = t_raw - end;
    if dropped_leading + dropped_trailing > 0 {
        log::info!(
            "trimmed {dropped_leading} leading and {dropped_trailing} trailing incomplete rows"
        );
    }
    let values = data.rows(start, end - start).into_owned();
    let dates: Vec<String> = dates[start..end].to_vec();
    let panel = TimeSeriesPanel::new(values, names, Some(dates), Frequency::Monthly)?;
    Ok(CsvLoad {
        panel,
        transform_codes,
        dropped_leading,
        dropped_trailing,
        dropped_columns,
    })
}

/// Apply the per-variable transforms, fitting and storing the parameters
/// needed to invert them. Differencing drops the first row for every
/// variable so the panel stays balanced.
pub fn apply_transforms(p: &TimeSeriesPanel, spec: &mut TransformSpec) -> Result<TimeSeriesPanel> {
    let n = p.nvars();
    if spec.codes.len() != n {
        return Err(Error::Dimension(format!(
            "{} transform codes for {n} variables",
            spec.codes.len()
        )));
    }
    let t = p.nobs();
    let drops = spec.codes.iter().any(TransformCode::drops_first_obs);
    let t_out = if drops { t - 1 } else { t };
    let mut out = DMatrix::zeros(t_out, n);
    let mut params = vec![TransformParams::default(); n];

    for j in 0..n {
        let col: Vec<f64> = p.values.column(j).iter().cloned().collect();
        let pr = &mut params[j];
        pr.initial = col[0];
        let transformed: Vec<f64> = match spec.codes[j] {
            TransformCode::Level => col.clone(),
            TransformCode::Log => {
                check_positive(&col, &p.names[j])?;
                col.iter().map(|x| x.ln()).collect()
            }
            TransformCode::Diff => col.windows(2).map(|w| w[1] - w[0]).collect(),
            TransformCode::LogDiff => {
                check_positive(&col, &p.names[j])?;
                col.windows(2).map(|w| w[1].ln() - w[0].ln()).collect()
            }
            TransformCode::Standardize => {
                let mean = col.iter().sum::<f64>() / t as f64;
                let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                    / (t as f64 - 1.0))
                    .sqrt();
                if sd <= 0.0 {
                    return Err(Error::Domain(format!(
                        "variable '{}' has zero standard deviation",
                        p.names[j]
                    )));
                }
                pr.mean = mean;
                pr.sd = sd;
                col.iter().map(|x| (x - mean) / sd).collect()
            }
            TransformCode::DetrendLinear => {
                let (a, b) = ols_trend(&col);
                pr.trend_const = a;
                pr.trend_slope = b;
                col.iter()
                    .enumerate()
                    .map(|(i, x)| x - a - b * i as f64)
                    .collect()
            }
        };
        // align: every column keeps its last t_out values
        let offset = transformed.len() - t_out;
        for i in 0..t_out {
            out[(i, j)] = transformed[offset + i];
        }
    }

    spec.params = Some(params);
    let dates = p.dates.as_ref().map(|d| d[t - t_out..].to_vec());
    TimeSeriesPanel::new(out, p.names.clone(), dates, p.freq)
}

/// Invert the transforms applied by `apply_transforms`, using the stored
/// parameters and initial conditions.
pub fn invert_transforms(p: &TimeSeriesPanel, spec: &TransformSpec) -> Result<TimeSeriesPanel> {
    let params = spec
        .params
        .as_ref()
        .ok_or_else(|| Error::State("transform parameters not stored; apply first".into()))?;
    let n = p.nvars();
    if spec.codes.len() != n || params.len() != n {
        return Err(Error::Dimension("transform spec does not match panel".into()));
    }
    let drops = spec.codes.iter().any(TransformCode::drops_first_obs);
    let t_out = if drops { p.nobs() + 1 } else { p.nobs() };
    let mut out = DMatrix::zeros(t_out, n);
    for j in 0..n {
        let col: Vec<f64> = p.values.column(j).iter().cloned().collect();
        let pr = &params[j];
        let inverted: Vec<f64> = match spec.codes[j] {
            TransformCode::Level => prepend_if(drops, pr.initial, col),
            TransformCode::Log => prepend_if(drops, pr.initial, col.iter().map(|x| x.exp()).collect()),
            TransformCode::Diff => {
                let mut acc = pr.initial;
                let mut v = vec![acc];
                for d in &col {
                    acc += d;
                    v.push(acc);
                }
                v
            }
            TransformCode::LogDiff => {
                let mut acc = pr.initial.ln();
                let mut v = vec![pr.initial];
                for d in &col {
                    acc += d;
                    v.push(acc.exp());
                }
                v
            }
            TransformCode::Standardize => prepend_if(
                drops,
                pr.initial,
                col.iter().map(|x| x * pr.sd + pr.mean).collect(),
            ),
            TransformCode::DetrendLinear => {
                let offset = if drops { 1 } else { 0 };
                let vals: Vec<f64> = col
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + pr.trend_const + pr.trend_slope * (i + offset) as f64)
                    .collect();
                prepend_if(drops, pr.initial, vals)
            }
        };
        for i in 0..t_out {
            out[(i, j)] = inverted[i];
        }
    }
    TimeSeriesPanel::new(out, p.names.clone(), None, p.freq)
}

fn prepend_if(cond: bool, head: f64, mut v: Vec<f64>) -> Vec<f64> {
    if cond {
        v.insert(0, head);
    }
    v
}

fn check_positive(col: &[f64], name: &str) -> Result<()> {
    if let Some(x) = col.iter().find(|x| **x <= 0.0) {
        return Err(Error::Domain(format!(
            "log transform of '{name}' hit nonpositive value {x}"
        )));
    }
    Ok(())
}

fn ols_trend(col: &[f64]) -> (f64, f64) {
    let t = col.len() as f64;
    let tbar = (t - 1.0) / 2.0;
    let ybar = col.iter().sum::<f64>() / t;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in col.iter().enumerate() {
        let dx = i as f64 - tbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    let b = sxy / sxx;
    (ybar - b * tbar, b)
}

/// Standardize every column (mean 0, unbiased sd 1), returning the new panel
/// together with the original means and sds.
pub fn standardize(p: &TimeSeriesPanel) -> Result<(TimeSeriesPanel, nalgebra::DVector<f64>, nalgebra::DVector<f64>)> {
    let means = col_means(&p.values);
    let sds = col_sds(&p.values);
    for (j, s) in sds.iter().enumerate() {
        if *s <= 0.0 {
            return Err(Error::DegenerateSeries(format!(
                "variable '{}' is constant",
                p.names[j]
            )));
        }
    }
    let values = DMatrix::from_fn(p.nobs(), p.nvars(), |i, j| {
        (p.values[(i, j)] - means[j]) / sds[j]
    });
    let panel = TimeSeriesPanel::new(values, p.names.clone(), p.dates.clone(), p.freq)?;
    Ok((panel, means, sds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_simple_csv() {
        let f = write_tmp("date,a,b\n2000-01,1,4\n2000-02,2,5\n2000-03,3,6\n");
        let load = load_csv(f.path(), "date").unwrap();
        assert_eq!(load.panel.nobs(), 3);
        assert_eq!(load.panel.nvars(), 2);
        assert!(load.transform_codes.is_none());
        assert_eq!(load.panel.values[(2, 1)], 6.0);
    }

    #[test]
    fn load_trims_leading_missing() {
        let f = write_tmp(
            "date,a,b\n2000-01,,1\n2000-02,,2\n2000-03,,3\n2000-04,,4\n2000-05,5,5\n2000-06,6,6\n2000-07,7,7\n",
        );
        let load = load_csv(f.path(), "date").unwrap();
        assert_eq!(load.dropped_leading, 4);
        assert_eq!(load.panel.nobs(), 3);
    }

    #[test]
    fn load_interior_missing_is_error() {
        let f = write_tmp("date,a\n2000-01,1\n2000-02,\n2000-03,3\n");
        match load_csv(f.path(), "date") {
            Err(Error::BalancedPanel { variable, date }) => {
                assert_eq!(variable, "a");
                assert_eq!(date, "2000-02");
            }
            other => panic!("expected BalancedPanel error, got {other:?}"),
        }
    }

    #[test]
    fn load_unparseable_cell_is_error() {
        let f = write_tmp("date,a\n2000-01,1\n2000-02,oops\n2000-03,3\n");
        match load_csv(f.path(), "date") {
            Err(Error::Parse { column, .. }) => assert_eq!(column, "a"),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn fred_md_transform_row_round_trips() {
        // hand-built 5-row synthetic file with a transform code row
        let f = write_tmp(
            "date,a,b,c\nTransform:,5,2,1\n2000-01,1,10,7\n2000-02,2,11,8\n2000-03,3,12,9\n2000-04,4,13,10\n2000-05,5,14,11\n",
        );
        let load = load_csv(f.path(), "date").unwrap();
        let spec = load.transform_codes.unwrap();
        assert_eq!(
            spec.codes,
            vec![TransformCode::LogDiff, TransformCode::Diff, TransformCode::Level]
        );
        assert_eq!(spec.raw_codes, Some(vec![5, 2, 1]));
        assert_eq!(load.panel.nobs(), 5);

        // codes survive a save/load cycle
        let out = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        load.panel.save_csv(out.path(), Some(&spec)).unwrap();
        let reload = load_csv(out.path(), "date").unwrap();
        assert_eq!(reload.transform_codes.unwrap().codes, spec.codes);
    }

    #[test]
    fn save_load_round_trip() {
        let f = write_tmp("date,a,b\n2000-01,1.5,4.25\n2000-02,2.5,5.125\n2000-03,3.5,6\n");
        let load = load_csv(f.path(), "date").unwrap();
        let out = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        load.panel.save_csv(out.path(), None).unwrap();
        let reload = load_csv(out.path(), "date").unwrap();
        assert_eq!(reload.panel.names, load.panel.names);
        for i in 0..3 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    reload.panel.values[(i, j)],
                    load.panel.values[(i, j)],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn diff_of_constant_is_zero() {
        let values = DMatrix::from_column_slice(4, 1, &[3.0, 3.0, 3.0, 3.0]);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let mut spec = TransformSpec::uniform(TransformCode::Diff, 1);
        let out = apply_transforms(&p, &mut spec).unwrap();
        assert_eq!(out.nobs(), 3);
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardize_1_2_3() {
        let values = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let mut spec = TransformSpec::uniform(TransformCode::Standardize, 1);
        let out = apply_transforms(&p, &mut spec).unwrap();
        // mean 2, unbiased sd 1
        assert_abs_diff_eq!(out.values[(0, 0)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.values[(1, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.values[(2, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn detrend_exact_line_is_zero() {
        let values = DMatrix::from_fn(6, 1, |i, _| 2.0 + 0.5 * i as f64);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let mut spec = TransformSpec::uniform(TransformCode::DetrendLinear, 1);
        let out = apply_transforms(&p, &mut spec).unwrap();
        for v in out.values.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_twice_is_stable() {
        let values = DMatrix::from_column_slice(5, 1, &[1.0, 4.0, 2.0, 8.0, 5.0]);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let mut spec = TransformSpec::uniform(TransformCode::Standardize, 1);
        let once = apply_transforms(&p, &mut spec).unwrap();
        let mut spec2 = TransformSpec::uniform(TransformCode::Standardize, 1);
        let twice = apply_transforms(&once, &mut spec2).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(once.values[(i, 0)], twice.values[(i, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn log_on_nonpositive_is_domain_error() {
        let values = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 3.0]);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let mut spec = TransformSpec::uniform(TransformCode::Log, 1);
        assert!(matches!(
            apply_transforms(&p, &mut spec),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invert_without_params_is_state_error() {
        let values = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let spec = TransformSpec::uniform(TransformCode::Diff, 1);
        assert!(matches!(invert_transforms(&p, &spec), Err(Error::State(_))));
    }

    #[test]
    fn transform_round_trips() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values = DMatrix::from_fn(40, 4, |_, _| 1.0 + rng.gen::<f64>() * 5.0);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        for code in [
            TransformCode::Level,
            TransformCode::Log,
            TransformCode::Diff,
            TransformCode::LogDiff,
            TransformCode::Standardize,
            TransformCode::DetrendLinear,
        ] {
            let mut spec = TransformSpec::uniform(code, 4);
            let fwd = apply_transforms(&p, &mut spec).unwrap();
            let back = invert_transforms(&fwd, &spec).unwrap();
            assert_eq!(back.nobs(), p.nobs());
            for i in 0..p.nobs() {
                for j in 0..p.nvars() {
                    let rel = (back.values[(i, j)] - p.values[(i, j)]).abs()
                        / p.values[(i, j)].abs().max(1.0);
                    assert!(rel < 1e-10, "code {code:?} failed round trip at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn mixed_codes_stay_balanced() {
        let values = DMatrix::from_fn(10, 2, |i, j| (i + j + 1) as f64);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let mut spec = TransformSpec::new(vec![TransformCode::Diff, TransformCode::Level]);
        let out = apply_transforms(&p, &mut spec).unwrap();
        assert_eq!(out.nobs(), 9);
        // level column lost its first observation to stay aligned
        assert_eq!(out.values[(0, 1)], 3.0);
        let back = invert_transforms(&out, &spec).unwrap();
        assert_eq!(back.nobs(), 10);
        assert_eq!(back.values[(0, 1)], 2.0);
    }
}
