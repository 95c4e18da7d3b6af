//! Principal-component estimation of static factors and loadings, in both
//! the stationary and the nonstationary (level-factor) variants, plus
//! factor-count selection.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{col_means, col_sds, sym_eig_sorted};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorMode {
    Stationary,
    Nonstationary,
}

/// Per-variable standardization parameters used during estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaling {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Estimated factor structure: loadings, factors and the trend removed in
/// the nonstationary procedure.
#[derive(Debug, Clone)]
pub struct FactorModelFit {
    /// N x r loadings, in standardized units.
    pub loadings: DMatrix<f64>,
    /// T x r factor series.
    pub factors: DMatrix<f64>,
    pub r: usize,
    pub q: usize,
    /// per-variable intercept removed from the levels (nonstationary mode)
    pub trend_const: DVector<f64>,
    /// per-variable linear trend slope removed from the levels
    pub trend_slope: DVector<f64>,
    pub mode: FactorMode,
    pub scaling: Scaling,
    /// eigenvalues of the correlation matrix used for estimation, descending
    pub eigenvalues: DVector<f64>,
}

impl FactorModelFit {
    /// Fitted common component in original variable units.
    pub fn common_component(&self) -> DMatrix<f64> {
        let chi_std = &self.factors * self.loadings.transpose();
        let t = chi_std.nrows();
        let n = chi_std.ncols();
        match self.mode {
            FactorMode::Stationary => DMatrix::from_fn(t, n, |i, j| {
                chi_std[(i, j)] * self.scaling.sds[j] + self.scaling.means[j]
            }),
            FactorMode::Nonstationary => DMatrix::from_fn(t, n, |i, j| {
                chi_std[(i, j)] * self.scaling.sds[j]
                    + self.trend_const[j]
                    + self.trend_slope[j] * i as f64
            }),
        }
    }

    /// Idiosyncratic residual x - chi in original units.
    pub fn idiosyncratic(&self, p: &TimeSeriesPanel) -> DMatrix<f64> {
        &p.values - self.common_component()
    }

    pub fn with_q(mut self, q: usize) -> Result<Self> {
        if q == 0 || q > self.r {
            return Err(Error::Dimension(format!(
                "q = {q} must satisfy 1 <= q <= r = {}",
                self.r
            )));
        }
        self.q = q;
        Ok(self)
    }

    /// Serialize to a directory: loadings.csv, factors.csv, trend.csv and a
    /// JSON metadata file.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("loadings.csv"), &self.loadings)?;
        write_matrix_csv(&dir.join("factors.csv"), &self.factors)?;
        let trend = DMatrix::from_fn(self.trend_const.len(), 2, |i, j| {
            if j == 0 {
                self.trend_const[i]
            } else {
                self.trend_slope[i]
            }
        });
        write_matrix_csv(&dir.join("trend.csv"), &trend)?;
        let meta = serde_json::json!({ "r": self.r, "q": self.q, "mode": self.mode });
        std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn standardized(p: &TimeSeriesPanel) -> Result<(DMatrix<f64>, Scaling)> {
    let means = col_means(&p.values);
    let sds = col_sds(&p.values);
    for (j, s) in sds.iter().enumerate() {
        if *s <= 0.0 {
            return Err(degenerate(&p.names[j]));
        }
    }
    let x = DMatrix::from_fn(p.nobs(), p.nvars(), |i, j| {
        (p.values[(i, j)] - means[j]) / sds[j]
    });
    Ok((
        x,
        Scaling {
            means: means.iter().cloned().collect(),
            sds: sds.iter().cloned().collect(),
        },
    ))
}

/// Principal-component factor estimation on a stationary panel.
///
/// Loadings come from the first r eigenvectors of the sample correlation
/// matrix scaled by sqrt(N); factors are the cross-sectional projections
/// x_t' Lambda / N, with columns rescaled so that F'F/T = I_r exactly.
pub fn estimate_static_factors(p: &TimeSeriesPanel, r: usize) -> Result<FactorModelFit> {
    let (t, n) = (p.nobs(), p.nvars());
    if r == 0 || r >= t.min(n) + 1 {
        return Err(Error::Dimension(format!(
            "r = {r} out of range for T = {t}, N = {n}"
        )));
    }
    let (x, scaling) = standardized(p)?;
    let corr = x.transpose() * &x / (t as f64 - 1.0);
    let eig = sym_eig_sorted(&corr);
    let w = eig.vectors.columns(0, r).into_owned();
    let mut loadings = w * (n as f64).sqrt();
    let mut factors = &x * &loadings / n as f64;
    // rescale so F'F/T = I_r, with the loadings carrying the scale;
    // the common component F Lambda' is unchanged
    for j in 0..r {
        let d = (factors.column(j).norm_squared() / t as f64).sqrt();
        if d > 0.0 {
            let mut fc = factors.column_mut(j);
            fc /= d;
            let mut lc = loadings.column_mut(j);
            lc *= d;
        }
    }
    Ok(FactorModelFit {
        loadings,
        factors,
        r,
        q: r,
        trend_const: DVector::zeros(n),
        trend_slope: DVector::zeros(n),
        mode: FactorMode::Stationary,
        scaling,
        eigenvalues: eig.values,
    })
}

/// Nonstationary (I(1)) factor estimation: loadings are estimated on the
/// standardized first differences, a per-variable linear trend is removed
/// from the levels by OLS, and the level factors are retrieved by
/// projecting the detrended levels on those loadings.
pub fn estimate_nonstationary(p: &TimeSeriesPanel, r: usize) -> Result<FactorModelFit> {
    let (t, n) = (p.nobs(), p.nvars());
    if t < r + 2 {
        return Err(Error::Dimension(format!("T = {t} too short for r = {r}")));
    }
    if r == 0 || r >= (t - 1).min(n) + 1 {
        return Err(Error::Dimension(format!(
            "r = {r} out of range for T = {t}, N = {n}"
        )));
    }
    // loadings from standardized first differences
    let diff = DMatrix::from_fn(t - 1, n, |i, j| p.values[(i + 1, j)] - p.values[(i, j)]);
    let dmeans = col_means(&diff);
    let dsds = col_sds(&diff);
    for (j, s) in dsds.iter().enumerate() {
        if *s <= 0.0 {
            return Err(degenerate(&p.names[j]));
        }
    }
    let xd = DMatrix::from_fn(t - 1, n, |i, j| (diff[(i, j)] - dmeans[j]) / dsds[j]);
    let corr = xd.transpose() * &xd / (t as f64 - 2.0);
    let eig = sym_eig_sorted(&corr);
    let loadings = eig.vectors.columns(0, r).into_owned() * (n as f64).sqrt();

    // per-variable OLS of the levels on (1, t)
    let mut trend_const = DVector::zeros(n);
    let mut trend_slope = DVector::zeros(n);
    let tbar = (t as f64 - 1.0) / 2.0;
    let sxx: f64 = (0..t).map(|i| (i as f64 - tbar).powi(2)).sum();
    for j in 0..n {
        let ybar = p.values.column(j).sum() / t as f64;
        let sxy: f64 = (0..t)
            .map(|i| (i as f64 - tbar) * (p.values[(i, j)] - ybar))
            .sum();
        let b = sxy / sxx;
        trend_slope[j] = b;
        trend_const[j] = ybar - b * tbar;
    }

    // project detrended levels, in the differenced data's scale, on the loadings
    let xt = DMatrix::from_fn(t, n, |i, j| {
        (p.values[(i, j)] - trend_const[j] - trend_slope[j] * i as f64) / dsds[j]
    });
    let factors = &xt * &loadings / n as f64;
    Ok(FactorModelFit {
        loadings,
        factors,
        r,
        q: r,
        trend_const,
        trend_slope,
        mode: FactorMode::Nonstationary,
        scaling: Scaling {
            means: dmeans.iter().cloned().collect(),
            sds: dsds.iter().cloned().collect(),
        },
        eigenvalues: eig.values,
    })
}

/// Bai-Ng ICp2 criterion over r in 1..=r_max:
/// log(V(r)) + r * ((N+T)/(NT)) * log(min(N,T)).
pub fn bai_ng_ic(p: &TimeSeriesPanel, r_max: usize) -> Result<usize> {
    let (t, n) = (p.nobs(), p.nvars());
    if r_max < 1 {
        return Err(Error::Dimension("r_max must be at least 1".into()));
    }
    if r_max >= t.min(n) {
        return Err(Error::Dimension(format!(
            "r_max = {r_max} must be below min(T, N) = {}",
            t.min(n)
        )));
    }
    let (x, _) = standardized(p)?;
    let corr = x.transpose() * &x / (t as f64 - 1.0);
    let eig = sym_eig_sorted(&corr);
    let penalty_unit =
        ((n + t) as f64 / (n * t) as f64) * (t.min(n) as f64).ln();
    let mut best_r = 1;
    let mut best_ic = f64::INFINITY;
    for r in 1..=r_max {
        let w = eig.vectors.columns(0, r);
        let loadings = w * (n as f64).sqrt();
        let factors = &x * &loadings / n as f64;
        let resid = &x - &factors * loadings.transpose();
        let v = resid.iter().map(|e| e * e).sum::<f64>() / (n * t) as f64;
        let ic = v.max(1e-300).ln() + r as f64 * penalty_unit;
        if ic < best_ic {
            best_ic = ic;
            best_r = r;
        }
    }
    Ok(best_r)
}

/// Convenience heuristic for the number of dynamic factors: the smallest q
/// whose leading eigenvalues of the VAR residual covariance explain at
/// least `threshold` of the spectrum. Never applied automatically.
pub fn q_heuristic(resid_cov: &DMatrix<f64>, threshold: f64) -> usize {
    let eig = sym_eig_sorted(resid_cov);
    let total: f64 = eig.values.iter().filter(|v| **v > 0.0).sum();
    let mut acc = 0.0;
    for (i, v) in eig.values.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= threshold * total {
            return i + 1;
        }
    }
    eig.values.len()
}

fn degenerate(name: &str) -> Error {
    Error::DegenerateSeries(format!("variable '{name}' is constant"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    fn random_panel(t: usize, n: usize, seed: u64) -> TimeSeriesPanel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        TimeSeriesPanel::from_matrix(DMatrix::from_fn(t, n, |_, _| rng.sample(StandardNormal)))
            .unwrap()
    }

    fn exact_factor_panel(t: usize, n: usize, r: usize, seed: u64) -> TimeSeriesPanel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(t, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lam = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        TimeSeriesPanel::from_matrix(&f * lam.transpose()).unwrap()
    }

    #[test]
    fn exact_structure_reconstructs() {
        let p = exact_factor_panel(150, 20, 3, 1);
        let fit = estimate_static_factors(&p, 3).unwrap();
        let chi = fit.common_component();
        let num = (&p.values - &chi).norm();
        let den = p.values.norm();
        assert!(num / den < 1e-8, "relative error {}", num / den);
    }

    #[test]
    fn factors_orthonormal() {
        let p = random_panel(200, 15, 2);
        let fit = estimate_static_factors(&p, 4).unwrap();
        let g = fit.factors.transpose() * &fit.factors / p.nobs() as f64;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g[(i, j)], want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn identical_columns_rank_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let col: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let values = DMatrix::from_fn(100, 2, |i, _| col[i]);
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let fit = estimate_static_factors(&p, 1).unwrap();
        let chi = fit.common_component();
        assert!((&p.values - &chi).norm() / p.values.norm() < 1e-10);
        // eigenvalue share of PC1 is 1
        let share = fit.eigenvalues[0] / fit.eigenvalues.sum();
        assert_abs_diff_eq!(share, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn common_idiosyncratic_orthogonal_in_exact_case() {
        let p = exact_factor_panel(150, 20, 3, 4);
        let fit = estimate_static_factors(&p, 3).unwrap();
        let chi = fit.common_component();
        let xi = fit.idiosyncratic(&p);
        for j in 0..p.nvars() {
            let c: Vec<f64> = chi.column(j).iter().cloned().collect();
            let x: Vec<f64> = xi.column(j).iter().cloned().collect();
            // xi is numerically zero here; correlation is only meaningful
            // if xi has any variance at all
            let xv = x.iter().map(|v| v * v).sum::<f64>();
            if xv > 1e-20 {
                assert!(crate::linalg::correlation(&c, &x).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scree_identity() {
        let p = random_panel(120, 10, 5);
        let fit = estimate_static_factors(&p, 2).unwrap();
        assert_abs_diff_eq!(fit.eigenvalues.sum(), 10.0, epsilon = 1e-8);
    }

    #[test]
    fn column_permutation_permutes_loadings() {
        let p = exact_factor_panel(150, 8, 2, 6);
        let fit = estimate_static_factors(&p, 2).unwrap();
        // permute the panel columns
        let perm = [3usize, 0, 7, 1, 5, 2, 6, 4];
        let values = DMatrix::from_fn(p.nobs(), 8, |i, j| p.values[(i, perm[j])]);
        let p2 = TimeSeriesPanel::from_matrix(values).unwrap();
        let fit2 = estimate_static_factors(&p2, 2).unwrap();
        // compare projection matrices Lambda (Lambda'Lambda)^-1 Lambda'
        let proj = |l: &DMatrix<f64>| {
            let g = (l.transpose() * l).try_inverse().unwrap();
            l * g * l.transpose()
        };
        let p1m = proj(&fit.loadings);
        let p2m = proj(&fit2.loadings);
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!(p2m[(i, j)], p1m[(perm[i], perm[j])], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn bai_ng_exact_three_factors() {
        let p = exact_factor_panel(200, 25, 3, 7);
        assert_eq!(bai_ng_ic(&p, 8).unwrap(), 3);
    }

    #[test]
    fn bai_ng_white_noise_majority_one() {
        let mut ones = 0;
        for seed in 0..20 {
            let p = random_panel(150, 30, 100 + seed);
            if bai_ng_ic(&p, 8).unwrap() == 1 {
                ones += 1;
            }
        }
        assert!(ones > 10, "white noise picked r=1 only {ones}/20 times");
    }

    #[test]
    fn dimension_errors() {
        let p = random_panel(20, 5, 8);
        assert!(estimate_static_factors(&p, 0).is_err());
        assert!(estimate_static_factors(&p, 6).is_err());
        assert!(bai_ng_ic(&p, 0).is_err());
        assert!(bai_ng_ic(&p, 5).is_err());
    }

    #[test]
    fn nonstationary_pure_trend_fit_reproduces_trend() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        // deterministic trends with small jitter so differences are not constant
        let values = DMatrix::from_fn(100, 6, |i, j| {
            (j as f64 + 1.0) + 0.3 * (j as f64 + 1.0) * i as f64
                + 0.01 * rng.sample::<f64, _>(StandardNormal)
        });
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let fit = estimate_nonstationary(&p, 1).unwrap();
        // the common component must track the deterministic trend closely
        let common = fit.common_component();
        for i in 0..100 {
            for j in 0..6 {
                let trend = (j as f64 + 1.0) + 0.3 * (j as f64 + 1.0) * i as f64;
                assert!(
                    (common[(i, j)] - trend).abs() < 0.1,
                    "common component off trend at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn nonstationary_common_trend_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let t = 300;
        let mut trend = vec![0.0f64; t];
        for i in 1..t {
            trend[i] = trend[i - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let values = DMatrix::from_fn(t, 20, |i, j| {
            (1.0 + 0.05 * j as f64) * trend[i] + 0.01 * rng.sample::<f64, _>(StandardNormal)
        });
        let p = TimeSeriesPanel::from_matrix(values).unwrap();
        let fit = estimate_nonstationary(&p, 1).unwrap();
        let f: Vec<f64> = fit.factors.column(0).iter().cloned().collect();
        // the estimator removes a fitted line per variable, so compare
        // against the linearly detrended walk
        let tn = t as f64;
        let tbar = (tn - 1.0) / 2.0;
        let ybar = trend.iter().sum::<f64>() / tn;
        let sxx: f64 = (0..t).map(|i| (i as f64 - tbar).powi(2)).sum();
        let sxy: f64 = (0..t)
            .map(|i| (i as f64 - tbar) * (trend[i] - ybar))
            .sum();
        let slope = sxy / sxx;
        let detrended: Vec<f64> = (0..t)
            .map(|i| trend[i] - ybar - slope * (i as f64 - tbar))
            .collect();
        let c = crate::linalg::correlation(&f, &detrended).abs();
        assert!(c > 0.99, "factor/trend correlation {c}");
    }

    #[test]
    fn nonstationary_matches_stationary_span_on_stationary_data() {
        let p = exact_factor_panel(300, 20, 3, 11);
        let stat = estimate_static_factors(&p, 3).unwrap();
        let nonstat = estimate_nonstationary(&p, 3).unwrap();
        let cc = crate::linalg::canonical_correlations(&stat.factors, &nonstat.factors);
        for c in cc {
            assert!(c > 0.99, "canonical correlation {c}");
        }
    }

    #[test]
    fn q_heuristic_rank_detection() {
        // rank-2 covariance plus a small full-rank floor
        let v1 = DVector::from_column_slice(&[1.0, 2.0, 0.5, -1.0]);
        let v2 = DVector::from_column_slice(&[0.5, -0.5, 1.5, 0.0]);
        let cov = &v1 * v1.transpose() * 4.0
            + &v2 * v2.transpose() * 3.0
            + DMatrix::identity(4, 4) * 1e-4;
        assert_eq!(q_heuristic(&cov, 0.95), 2);
    }

    #[test]
    fn save_dir_writes_files() {
        let p = exact_factor_panel(60, 6, 2, 12);
        let fit = estimate_static_factors(&p, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fit.save_dir(dir.path()).unwrap();
        for f in ["loadings.csv", "factors.csv", "trend.csv", "meta.json"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["r"], 2);
        assert_eq!(meta["mode"], "stationary");
    }
}
