//! VAR estimation, companion-form Wold coefficients, rank-q innovation
//! reduction and FAVAR assembly.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::{estimate_static_factors, FactorModelFit};
use crate::linalg::{least_squares, sym_eig_sorted};
use crate::panel::TimeSeriesPanel;

/// Equation-by-equation OLS fit of a VAR(p).
#[derive(Debug, Clone)]
pub struct VarFit {
    /// lag coefficient matrices D_1..D_p, each k x k, y_t = c + sum D_j y_{t-j} + e_t
    pub coeffs: Vec<DMatrix<f64>>,
    pub intercept: nalgebra::DVector<f64>,
    /// (T-p) x k residual matrix
    pub residuals: DMatrix<f64>,
    /// residual covariance e'e / (T-p)
    pub resid_cov: DMatrix<f64>,
    pub k: usize,
    pub p: usize,
}

impl VarFit {
    /// Spectral radius of the companion matrix.
    pub fn companion_spectral_radius(&self) -> f64 {
        let a = self.companion();
        a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Companion matrix (k*p x k*p).
    pub fn companion(&self) -> DMatrix<f64> {
        let (k, p) = (self.k, self.p);
        let mut a = DMatrix::zeros(k * p, k * p);
        for (j, d) in self.coeffs.iter().enumerate() {
            a.view_mut((0, j * k), (k, k)).copy_from(d);
        }
        for j in 0..p.saturating_sub(1) {
            a.view_mut(((j + 1) * k, j * k), (k, k))
                .copy_from(&DMatrix::identity(k, k));
        }
        a
    }
}

/// Moving-average representation: B_0..B_H mapping m shocks to k variables.
#[derive(Debug, Clone)]
pub struct WoldRepresentation {
    /// H+1 matrices, each k x m
    pub ma: Vec<DMatrix<f64>>,
    /// m x m shock covariance (identity after rank reduction)
    pub shock_cov: DMatrix<f64>,
    /// k x q reduction matrix when rank-reduced
    pub reduction: Option<DMatrix<f64>>,
    pub horizon: usize,
    /// recovered orthonormal shocks u_t, present after rank reduction
    pub shocks: Option<DMatrix<f64>>,
}

impl WoldRepresentation {
    pub fn nvars(&self) -> usize {
        self.ma[0].nrows()
    }

    pub fn nshocks(&self) -> usize {
        self.ma[0].ncols()
    }

    /// Long-format CSV: horizon, variable, shock, value.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["horizon", "variable", "shock", "value"])?;
        for (h, b) in self.ma.iter().enumerate() {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    wtr.write_record([
                        h.to_string(),
                        i.to_string(),
                        j.to_string(),
                        format!("{:.17e}", b[(i, j)]),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Fit a VAR(p) by equation-by-equation OLS.
pub fn fit_var(y: &DMatrix<f64>, p: usize, intercept: bool) -> Result<VarFit> {
    let (t, k) = (y.nrows(), y.ncols());
    if p == 0 {
        return Err(Error::Dimension("lag order must be positive".into()));
    }
    if t <= p || t - p <= k * p + 1 {
        return Err(Error::Dimension(format!(
            "T - p = {} too small for k*p + 1 = {} regressors",
            t.saturating_sub(p),
            k * p + 1
        )));
    }
    let nobs = t - p;
    let ncoef = k * p + usize::from(intercept);
    let mut x = DMatrix::zeros(nobs, ncoef);
    let mut yy = DMatrix::zeros(nobs, k);
    for i in 0..nobs {
        let mut c = 0;
        if intercept {
            x[(i, 0)] = 1.0;
            c = 1;
        }
        for j in 1..=p {
            for v in 0..k {
                x[(i, c)] = y[(i + p - j, v)];
                c += 1;
            }
        }
        for v in 0..k {
            yy[(i, v)] = y[(i + p, v)];
        }
    }
    let b = least_squares(&x, &yy).map_err(|e| match e {
        Error::Rank(_) => Error::Rank(name_collinear(&x, p, k, intercept)),
        other => other,
    })?;
    let fitted = &x * &b;
    let residuals = &yy - fitted;
    let resid_cov = residuals.transpose() * &residuals / nobs as f64;
    let mut coeffs = Vec::with_capacity(p);
    let off = usize::from(intercept);
    for j in 0..p {
        // rows off + j*k .. off + (j+1)*k of b hold lag-(j+1) coefficients
        let block = b.view((off + j * k, 0), (k, k)).into_owned();
        coeffs.push(block.transpose());
    }
    let intercept_vec = if intercept {
        b.row(0).transpose()
    } else {
        nalgebra::DVector::zeros(k)
    };
    Ok(VarFit {
        coeffs,
        intercept: intercept_vec,
        residuals,
        resid_cov,
        k,
        p,
    })
}

fn name_collinear(x: &DMatrix<f64>, p: usize, k: usize, intercept: bool) -> String {
    let qr = x.clone().qr();
    let r = qr.r();
    let tol = r.diagonal().amax() * 1e-10;
    let mut bad = Vec::new();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)].abs() <= tol {
            let off = usize::from(intercept);
            if intercept && i == 0 {
                bad.push("intercept".to_string());
            } else {
                let idx = i - off;
                bad.push(format!("lag {} of variable {}", idx / k + 1, idx % k));
            }
        }
    }
    let _ = p;
    format!("collinear regressors: {}", bad.join(", "))
}

/// Wold MA coefficients of a fitted VAR: Psi_0 = I,
/// Psi_h = sum_{j=1..min(h,p)} D_j Psi_{h-j}.
pub fn wold(fit: &VarFit, horizon: usize) -> WoldRepresentation {
    let k = fit.k;
    let mut ma = Vec::with_capacity(horizon + 1);
    ma.push(DMatrix::identity(k, k));
    for h in 1..=horizon {
        let mut psi = DMatrix::zeros(k, k);
        for j in 1..=h.min(fit.p) {
            psi += &fit.coeffs[j - 1] * &ma[h - j];
        }
        ma.push(psi);
    }
    let rho = fit.companion_spectral_radius();
    if rho > 1.02 {
        log::warn!("companion spectral radius {rho:.4} > 1.02: explosive VAR");
    }
    WoldRepresentation {
        ma,
        shock_cov: fit.resid_cov.clone(),
        reduction: None,
        horizon,
        shocks: None,
    }
}

/// Rank-q spectral reduction of the VAR innovations: Sigma = W M W',
/// R = W_q M_q^{1/2}, recovered shocks u_t = M_q^{-1/2} W_q' e_t with
/// identity sample covariance.
pub fn reduce_rank(fit: &VarFit, q: usize, horizon: usize) -> Result<WoldRepresentation> {
    let k = fit.k;
    if q == 0 || q > k {
        return Err(Error::Dimension(format!("q = {q} out of range for k = {k}")));
    }
    let eig = sym_eig_sorted(&fit.resid_cov);
    if eig.values[q - 1] <= 1e-12 {
        return Err(Error::RankDeficiency {
            index: q - 1,
            value: eig.values[q - 1],
        });
    }
    let wq = eig.vectors.columns(0, q).into_owned();
    let sqrt_m = DMatrix::from_diagonal(&eig.values.rows(0, q).map(|v| v.sqrt()));
    let inv_sqrt_m = DMatrix::from_diagonal(&eig.values.rows(0, q).map(|v| 1.0 / v.sqrt()));
    let reduction = &wq * &sqrt_m;
    let shocks = &fit.residuals * &wq * inv_sqrt_m;
    let square = wold(fit, horizon);
    let ma = square.ma.iter().map(|psi| psi * &reduction).collect();
    Ok(WoldRepresentation {
        ma,
        shock_cov: DMatrix::identity(q, q),
        reduction: Some(reduction),
        horizon,
        shocks: Some(shocks),
    })
}

/// Fold the factor MA through the loadings and the estimation-sample
/// scaling to get the common-component MA in original variable units:
/// B_chi(L) = diag(sd) Lambda B_F(L).
pub fn observable_ma(fm: &FactorModelFit, w: &WoldRepresentation) -> Result<WoldRepresentation> {
    if w.ma[0].nrows() != fm.r {
        return Err(Error::Dimension(format!(
            "MA variable dimension {} != r = {}",
            w.ma[0].nrows(),
            fm.r
        )));
    }
    let n = fm.loadings.nrows();
    let scaled_loadings = DMatrix::from_fn(n, fm.r, |i, j| fm.loadings[(i, j)] * fm.scaling.sds[i]);
    let ma = w.ma.iter().map(|b| &scaled_loadings * b).collect();
    Ok(WoldRepresentation {
        ma,
        shock_cov: w.shock_cov.clone(),
        reduction: None,
        horizon: w.horizon,
        shocks: w.shocks.clone(),
    })
}

/// Stack observables with principal-component factors extracted from the
/// panel and orthogonalized against the observables by OLS projection.
pub fn assemble_favar(
    observables: &DMatrix<f64>,
    panel: &TimeSeriesPanel,
    n_extra_factors: usize,
) -> Result<DMatrix<f64>> {
    let t = observables.nrows();
    if panel.nobs() != t {
        return Err(Error::Dimension(format!(
            "observables T = {t} != panel T = {}",
            panel.nobs()
        )));
    }
    if n_extra_factors == 0 {
        return Ok(observables.clone());
    }
    let m = observables.ncols();
    let fit = estimate_static_factors(panel, n_extra_factors)?;
    // project each factor on [1, observables] and keep the residual
    let mut x = DMatrix::zeros(t, m + 1);
    for i in 0..t {
        x[(i, 0)] = 1.0;
        for j in 0..m {
            x[(i, j + 1)] = observables[(i, j)];
        }
    }
    let b = least_squares(&x, &fit.factors)?;
    let ortho = &fit.factors - &x * b;
    let mut out = DMatrix::zeros(t, m + n_extra_factors);
    out.view_mut((0, 0), (t, m)).copy_from(observables);
    out.view_mut((0, m), (t, n_extra_factors)).copy_from(&ortho);
    Ok(out)
}
