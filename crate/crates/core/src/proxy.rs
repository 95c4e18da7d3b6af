//! External-instrument identification: projection of the instrument on
//! reduced-form innovations, the unit-variance structural shock, identified
//! IRFs, FEVD shares and the invertibility F-test.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::dynamics::WoldRepresentation;
use crate::error::{Error, Result};

/// An external instrument, optionally dated for overlap alignment.
#[derive(Debug, Clone)]
pub struct InstrumentSeries {
    pub values: Vec<f64>,
    pub dates: Option<Vec<String>>,
}

impl InstrumentSeries {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            dates: None,
        }
    }

    pub fn with_dates(values: Vec<f64>, dates: Vec<String>) -> Self {
        Self {
            values,
            dates: Some(dates),
        }
    }

    /// Two-column CSV (date, value).
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut values = Vec::new();
        let mut dates = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            dates.push(rec.get(0).unwrap_or("").to_string());
            let cell = rec.get(1).unwrap_or("");
            values.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                row: i + 2,
                column: "value".into(),
                message: format!("cannot parse '{cell}'"),
            })?);
        }
        Ok(Self::with_dates(values, dates))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["date", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let d = self
                .dates
                .as_ref()
                .map(|d| d[i].clone())
                .unwrap_or_else(|| i.to_string());
            wtr.write_record([d, format!("{v:.17e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Result of projecting the instrument on the reduced-form innovations.
#[derive(Debug, Clone)]
pub struct ProxyIdentification {
    pub delta: DVector<f64>,
    pub alpha_hat: f64,
    /// unit-variance structural shock over the overlap sample
    pub shock: DVector<f64>,
    pub fstat_first_stage: f64,
    pub n_overlap: usize,
    /// innovation covariance used for scaling and IRFs
    pub sigma_u: DMatrix<f64>,
}

/// Align instrument and innovations on their common dates. When either side
/// is undated the two must already be the same length.
fn align(
    z: &InstrumentSeries,
    u: &DMatrix<f64>,
    u_dates: Option<&[String]>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match (&z.dates, u_dates) {
        (Some(zd), Some(ud)) => {
            let mut zi = Vec::new();
            let mut ui = Vec::new();
            let index: std::collections::HashMap<&str, usize> = ud
                .iter()
                .enumerate()
                .map(|(i, d)| (d.as_str(), i))
                .collect();
            for (i, d) in zd.iter().enumerate() {
                if let Some(&j) = index.get(d.as_str()) {
                    zi.push(z.values[i]);
                    ui.push(j);
                }
            }
            if !zi.is_empty() {
                log::info!(
                    "instrument overlap spans {} .. {} ({} observations)",
                    zd[zd.iter().position(|d| index.contains_key(d.as_str())).unwrap()],
                    zd[zd.iter().rposition(|d| index.contains_key(d.as_str())).unwrap()],
                    zi.len()
                );
            }
            let uo = DMatrix::from_fn(ui.len(), u.ncols(), |i, j| u[(ui[i], j)]);
            Ok((DVector::from_vec(zi), uo))
        }
        _ => {
            if z.values.len() != u.nrows() {
                return Err(Error::Dimension(format!(
                    "undated instrument length {} != innovation length {}",
                    z.values.len(),
                    u.nrows()
                )));
            }
            Ok((DVector::from_vec(z.values.clone()), u.clone()))
        }
    }
}

/// Project the (demeaned) instrument on the innovations by OLS without an
/// intercept: delta = (U'U)^-1 U'z, alpha = sqrt(delta' Sigma delta).
pub fn project_instrument(
    z: &InstrumentSeries,
    u: &DMatrix<f64>,
    u_dates: Option<&[String]>,
    cov: &DMatrix<f64>,
) -> Result<ProxyIdentification> {
    let (z_raw, uo) = align(z, u, u_dates)?;
    let m = uo.ncols();
    let n = uo.nrows();
    if n < m + 10 {
        return Err(Error::Overlap { got: n, need: m + 10 });
    }
    let zbar = z_raw.sum() / n as f64;
    let zc = z_raw.map(|v| v - zbar);
    let zvar = zc.norm_squared();
    if zvar <= 0.0 {
        return Err(Error::WeakInstrument(0.0));
    }
    let utu = uo.transpose() * &uo;
    let utz = uo.transpose() * &zc;
    let delta = crate::linalg::solve_spd(&utu, &utz)?;
    let quad = (delta.transpose() * cov * &delta)[(0, 0)];
    if quad <= 0.0 {
        return Err(Error::WeakInstrument(quad));
    }
    let alpha_hat = quad.sqrt();
    let fitted = &uo * &delta;
    let rss = (&zc - &fitted).norm_squared();
    let ess = fitted.norm_squared();
    let dof = (n - m) as f64;
    let fstat = (ess / m as f64) / (rss.max(1e-300) / dof);
    let shock = (&uo * &delta) / alpha_hat;
    Ok(ProxyIdentification {
        delta,
        alpha_hat,
        shock,
        fstat_first_stage: fstat,
        n_overlap: n,
        sigma_u: cov.clone(),
    })
}

/// The unit-variance shock delta'u_t / alpha for an arbitrary innovation
/// sample (e.g. the full estimation sample rather than the overlap).
pub fn unit_variance_shock(pid: &ProxyIdentification, u: &DMatrix<f64>) -> DVector<f64> {
    (u * &pid.delta) / pid.alpha_hat
}

/// Impulse responses of the identified shock at each horizon:
/// C(L) = B(L) Sigma_u delta / alpha.
#[derive(Debug, Clone)]
pub struct Irf {
    /// (H+1) x N matrix, rows are horizons
    pub values: DMatrix<f64>,
}

impl Irf {
    pub fn horizons(&self) -> usize {
        self.values.nrows() - 1
    }

    /// Long-format CSV with optional band columns.
    pub fn save_csv(
        &self,
        path: &Path,
        names: Option<&[String]>,
        bands: Option<&IrfBands>,
    ) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["horizon".to_string(), "variable".to_string(), "value".to_string()];
        if bands.is_some() {
            header.extend(
                ["lower68", "upper68", "lower95", "upper95"]
                    .iter()
                    .map(|s| s.to_string()),
            );
        }
        wtr.write_record(&header)?;
        for h in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                let var = names
                    .map(|n| n[j].clone())
                    .unwrap_or_else(|| j.to_string());
                let mut row = vec![h.to_string(), var, format!("{:.17e}", self.values[(h, j)])];
                if let Some(b) = bands {
                    for m in [&b.lower68, &b.upper68, &b.lower95, &b.upper95] {
                        row.push(format!("{:.17e}", m[(h, j)]));
                    }
                }
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Pointwise quantile bands around an IRF.
#[derive(Debug, Clone)]
pub struct IrfBands {
    pub lower68: DMatrix<f64>,
    pub upper68: DMatrix<f64>,
    pub lower95: DMatrix<f64>,
    pub upper95: DMatrix<f64>,
}

pub fn identified_irf(ma: &WoldRepresentation, pid: &ProxyIdentification) -> Result<Irf> {
    let m = ma.nshocks();
    if pid.delta.len() != m {
        return Err(Error::Dimension(format!(
            "delta length {} != shock dimension {m}",
            pid.delta.len()
        )));
    }
    let dev = (&pid.sigma_u - DMatrix::identity(m, m)).norm();
    if ma.reduction.is_some() && dev > 0.1 {
        log::warn!("innovation covariance deviates from identity by {dev:.3} (Frobenius)");
    }
    let direction = &pid.sigma_u * &pid.delta / pid.alpha_hat;
    let n = ma.nvars();
    let mut values = DMatrix::zeros(ma.ma.len(), n);
    for (h, b) in ma.ma.iter().enumerate() {
        let col = b * &direction;
        for j in 0..n {
            values[(h, j)] = col[j];
        }
    }
    Ok(Irf { values })
}

/// Rescale the whole IRF so the impact response of the target variable
/// equals `target_impact`.
pub fn normalize_irf(irf: &Irf, target_variable: usize, target_impact: f64) -> Result<Irf> {
    let impact = irf.values[(0, target_variable)];
    if impact == 0.0 || !impact.is_finite() {
        return Err(Error::Normalization(format!(
            "impact response of variable {target_variable} is {impact}"
        )));
    }
    Ok(Irf {
        values: &irf.values * (target_impact / impact),
    })
}

/// Forecast-error variance shares of the identified shock over the common
/// component, per variable and horizon. Requires orthonormal innovations.
pub fn fevd(ma: &WoldRepresentation, pid: &ProxyIdentification, horizon: usize) -> Result<DMatrix<f64>> {
    let q = ma.nshocks();
    if pid.delta.len() != q {
        return Err(Error::Dimension("delta length != shock dimension".into()));
    }
    let w = &pid.delta / pid.delta.norm();
    let n = ma.nvars();
    let hmax = horizon.min(ma.horizon);
    let mut shares = DMatrix::zeros(hmax + 1, n);
    let mut num = vec![0.0f64; n];
    let mut den = vec![0.0f64; n];
    for h in 0..=hmax {
        let bw = &ma.ma[h] * &w;
        for j in 0..n {
            num[j] += bw[j] * bw[j];
            den[j] += ma.ma[h].row(j).norm_squared();
            shares[(h, j)] = if den[j] > 0.0 { num[j] / den[j] } else { f64::NAN };
        }
    }
    Ok(shares)
}

/// Write FEVD shares in the long CSV format (horizon, variable, value).
pub fn save_fevd_csv(
    shares: &DMatrix<f64>,
    path: &Path,
    names: Option<&[String]>,
    horizons: &[usize],
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["horizon", "variable", "value"])?;
    for &h in horizons {
        if h >= shares.nrows() {
            continue;
        }
        for j in 0..shares.ncols() {
            let var = names.map(|n| n[j].clone()).unwrap_or_else(|| j.to_string());
            wtr.write_record([h.to_string(), var, format!("{:.17e}", shares[(h, j)])])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Outcome of the invertibility F-test: the instrument projected on the
/// current value and K leads of the reduced-form residuals, testing joint
/// nullity of the lead blocks.
#[derive(Debug, Clone, Copy)]
pub struct InvertibilityTest {
    pub f: f64,
    pub pvalue: f64,
    pub reject: bool,
}

pub fn invertibility_test(
    z: &InstrumentSeries,
    resid: &DMatrix<f64>,
    resid_dates: Option<&[String]>,
    leads: usize,
    level: f64,
) -> Result<InvertibilityTest> {
    if leads == 0 {
        return Err(Error::Config("invertibility test needs at least one lead".into()));
    }
    let (zv, v) = align(z, resid, resid_dates)?;
    let k = v.ncols();
    let n_all = v.nrows();
    if n_all <= leads {
        return Err(Error::Overlap {
            got: n_all,
            need: leads + (leads + 1) * k + 10,
        });
    }
    let nobs = n_all - leads;
    let ncoef = (leads + 1) * k;
    if nobs < ncoef + 10 {
        return Err(Error::Overlap {
            got: nobs,
            need: ncoef + 10,
        });
    }
    let zvar: f64 = {
        let mean = zv.rows(0, nobs).sum() / nobs as f64;
        zv.rows(0, nobs).iter().map(|x| (x - mean).powi(2)).sum()
    };
    if zvar <= 0.0 {
        return Err(Error::WeakInstrument(0.0));
    }
    // unrestricted: z_t on v_t, v_{t+1}, ..., v_{t+K}; no intercept
    let mut xu = DMatrix::zeros(nobs, ncoef);
    let mut xr = DMatrix::zeros(nobs, k);
    let mut y = DMatrix::zeros(nobs, 1);
    for i in 0..nobs {
        y[(i, 0)] = zv[i];
        for lead in 0..=leads {
            for j in 0..k {
                xu[(i, lead * k + j)] = v[(i + lead, j)];
            }
        }
        for j in 0..k {
            xr[(i, j)] = v[(i, j)];
        }
    }
    // Project on the column space via truncated SVD: lead blocks of a
    // noiseless singular system can be exactly collinear, and the F
    // statistic only needs the projection residual.
    // Degrees of freedom count the effective (rank) dimension of each
    // design: with singular innovations the lead blocks span fewer
    // directions than they have columns.
    let rss = |x: &DMatrix<f64>| -> Result<(f64, usize)> {
        let svd = nalgebra::SVD::new(x.clone(), true, true);
        let tol = svd.singular_values.max() * 1e-12;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let b = svd.solve(&y, tol).map_err(|e| Error::Rank(e.to_string()))?;
        Ok(((&y - x * b).norm_squared(), rank))
    };
    let (rss_u, rank_u) = rss(&xu)?;
    let (rss_r, rank_r) = rss(&xr)?;
    if rank_u <= rank_r {
        // the leads add no direction beyond the contemporaneous block;
        // there is nothing to test against
        return Ok(InvertibilityTest {
            f: 0.0,
            pvalue: 1.0,
            reject: false,
        });
    }
    let df1 = (rank_u - rank_r) as f64;
    let df2 = (nobs - rank_u) as f64;
    let f = ((rss_r - rss_u).max(0.0) / df1) / (rss_u.max(1e-300) / df2);
    let dist = FisherSnedecor::new(df1, df2)
        .map_err(|e| Error::Config(format!("F distribution: {e}")))?;
    let pvalue = 1.0 - dist.cdf(f);
    Ok(InvertibilityTest {
        f,
        pvalue,
        reject: pvalue < level,
    })
}
