//! Fiscal-foresight RBC simulation engine: the capital/tax/technology
//! system, panel generation with random loadings and measurement error,
//! and the instrument generators of varying quality.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::proxy::InstrumentSeries;

const BURN_IN: usize = 200;

/// Parameters of the fiscal-foresight data generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LeeperParams {
    pub alpha: f64,
    pub theta: f64,
    /// steady-state tax rate
    pub tau_ss: f64,
    /// foresight horizon, 0 or 2
    pub h: usize,
    /// number of artificial survey series
    pub n_extra: usize,
    /// measurement-error scale
    pub nu: f64,
    /// sample length after burn-in
    pub t: usize,
    pub seed: u64,
}

impl Default for LeeperParams {
    fn default() -> Self {
        Self {
            alpha: 0.36,
            theta: 0.2673,
            tau_ss: 0.25,
            h: 2,
            n_extra: 100,
            nu: 0.5,
            t: 200,
            seed: 0,
        }
    }
}

impl LeeperParams {
    /// kappa = (1 - theta) * tau / (1 - tau)
    pub fn kappa(&self) -> f64 {
        (1.0 - self.theta) * self.tau_ss / (1.0 - self.tau_ss)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Param(format!("alpha = {} not in (0,1)", self.alpha)));
        }
        if self.theta.abs() >= 1.0 {
            return Err(Error::Param(format!("|theta| = {} not < 1", self.theta)));
        }
        if !(0.0 < self.tau_ss && self.tau_ss < 1.0) {
            return Err(Error::Param(format!("tau = {} not in (0,1)", self.tau_ss)));
        }
        if self.h != 0 && self.h != 2 {
            return Err(Error::Param(format!("foresight horizon h = {} not in {{0, 2}}", self.h)));
        }
        if self.nu < 0.0 {
            return Err(Error::Param(format!("nu = {} negative", self.nu)));
        }
        if self.t < 10 {
            return Err(Error::Param(format!("T = {} too short", self.t)));
        }
        Ok(())
    }
}

/// One replication's worth of simulated data.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// (tau, k, a) in that order
    pub observables: TimeSeriesPanel,
    /// the n_extra artificial survey series
    pub survey_panel: TimeSeriesPanel,
    /// (tau, k) + survey series, contaminated with measurement error
    pub noisy_panel: TimeSeriesPanel,
    /// (tau, k, a) as the econometrician sees them: tau and k shared with
    /// the noisy panel, a with its own measurement error
    pub noisy_observables: DMatrix<f64>,
    /// T x 2 true shocks, columns (u_a, u_tau)
    pub true_shocks: DMatrix<f64>,
    /// T x 5 state (k, u_a, u_tau, u_tau[-1], u_tau[-2])
    pub true_factors: DMatrix<f64>,
    /// analytic MA of (a, k, tau) to (u_tau, u_a), horizons 0..=20
    pub true_irf: Vec<DMatrix<f64>>,
    /// full (n_extra + 2) x 5 loading matrix of the noiseless panel
    pub loadings: DMatrix<f64>,
}

/// Deterministic substream seed derived from (seed, index) by splitmix64
/// over the combined key.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic per-purpose RNG substream derived from (seed, index).
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// State transition matrices of the factor VAR(1)
/// F_t = A F_{t-1} + B u_t with F = (k, u_a, u_tau, u_tau[-1], u_tau[-2]).
pub fn state_matrices(params: &LeeperParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let kappa = params.kappa();
    let foresight = params.h == 2;
    let mut a = DMatrix::zeros(5, 5);
    a[(0, 0)] = params.alpha;
    if foresight {
        a[(0, 2)] = -kappa;
    }
    a[(3, 2)] = 1.0;
    a[(4, 3)] = 1.0;
    let mut b = DMatrix::zeros(5, 2);
    b[(0, 0)] = 1.0;
    if foresight {
        b[(0, 1)] = -kappa * params.theta;
    }
    b[(1, 0)] = 1.0;
    b[(2, 1)] = 1.0;
    (a, b)
}

/// Loading rows of the observed block x_t = (tau, k) on the 5-dim state.
fn observed_loadings(params: &LeeperParams) -> DMatrix<f64> {
    let mut lx = DMatrix::zeros(2, 5);
    // tau_t = u_tau[t-h]
    lx[(0, if params.h == 2 { 4 } else { 2 })] = 1.0;
    // k_t is the first state element
    lx[(1, 0)] = 1.0;
    lx
}

/// Simulate one dataset from the fiscal-foresight DGP.
pub fn simulate(params: &LeeperParams) -> Result<SimulatedDataset> {
    params.validate()?;
    let t = params.t;
    let n = params.n_extra;
    let (a_mat, b_mat) = state_matrices(params);

    let mut rng_state = substream(params.seed, 1);
    let mut rng_loadings = substream(params.seed, 2);
    let mut rng_noise = substream(params.seed, 3);

    // burn in from F_0 = 0
    let total = BURN_IN + t;
    let mut factors = DMatrix::zeros(t, 5);
    let mut shocks = DMatrix::zeros(t, 2);
    let mut state = DVector::zeros(5);
    for i in 0..total {
        let u = DVector::from_fn(2, |_, _| rng_state.sample::<f64, _>(StandardNormal));
        state = &a_mat * &state + &b_mat * &u;
        if i >= BURN_IN {
            let row = i - BURN_IN;
            factors.set_row(row, &state.transpose());
            shocks.set_row(row, &u.transpose());
        }
    }

    let lx = observed_loadings(params);
    let lam_star = DMatrix::from_fn(n, 5, |_, _| rng_loadings.sample::<f64, _>(StandardNormal));
    let mut loadings = DMatrix::zeros(n + 2, 5);
    loadings.view_mut((0, 0), (2, 5)).copy_from(&lx);
    loadings.view_mut((2, 0), (n, 5)).copy_from(&lam_star);

    let clean = &factors * loadings.transpose();
    let mut noisy = clean.clone();
    if params.nu > 0.0 {
        for j in 0..n + 2 {
            // sigma_i ~ U(0, nu) is a variance; noise sd is its square root
            let sigma: f64 = rng_noise.gen::<f64>() * params.nu;
            let sd = sigma.sqrt();
            for i in 0..t {
                noisy[(i, j)] += sd * rng_noise.sample::<f64, _>(StandardNormal);
            }
        }
    }

    let tau_col = clean.column(0).into_owned();
    let k_col = clean.column(1).into_owned();
    let a_col = factors.column(1).into_owned(); // a_t = u_{a,t}
    let obs = DMatrix::from_fn(t, 3, |i, j| match j {
        0 => tau_col[i],
        1 => k_col[i],
        _ => a_col[i],
    });
    let observables = TimeSeriesPanel::new(
        obs,
        vec!["tau".into(), "k".into(), "a".into()],
        None,
        crate::panel::Frequency::Abstract,
    )?;
    let survey_names: Vec<String> = (0..n).map(|j| format!("s{j:03}")).collect();
    let survey_panel = TimeSeriesPanel::new(
        clean.columns(2, n).into_owned(),
        survey_names.clone(),
        None,
        crate::panel::Frequency::Abstract,
    )?;
    let mut noisy_names = vec!["tau".to_string(), "k".to_string()];
    noisy_names.extend(survey_names);
    let mut noisy_observables = DMatrix::zeros(t, 3);
    noisy_observables.view_mut((0, 0), (t, 2)).copy_from(&noisy.columns(0, 2));
    noisy_observables.column_mut(2).copy_from(&a_col);
    if params.nu > 0.0 {
        let mut rng_a = substream(params.seed, 5);
        let sd = (rng_a.gen::<f64>() * params.nu).sqrt();
        for i in 0..t {
            noisy_observables[(i, 2)] += sd * rng_a.sample::<f64, _>(StandardNormal);
        }
    }
    let noisy_panel = TimeSeriesPanel::new(noisy, noisy_names, None, crate::panel::Frequency::Abstract)?;

    Ok(SimulatedDataset {
        observables,
        survey_panel,
        noisy_panel,
        noisy_observables,
        true_shocks: shocks,
        true_factors: factors,
        true_irf: theoretical_irf(params, 20),
        loadings,
    })
}

/// Analytic MA of (a, k, tau) to (u_tau, u_a) by polynomial long division
/// of the model's moving-average representation.
pub fn theoretical_irf(params: &LeeperParams, horizon: usize) -> Vec<DMatrix<f64>> {
    let alpha = params.alpha;
    let theta = params.theta;
    let kappa = params.kappa();
    let foresight = params.h == 2;
    (0..=horizon)
        .map(|h| {
            let mut b = DMatrix::zeros(3, 2);
            // a row: responds to u_a at impact only
            if h == 0 {
                b[(0, 1)] = 1.0;
            }
            // k row, u_a column: 1 / (1 - alpha L)
            b[(1, 1)] = alpha.powi(h as i32);
            // k row, u_tau column: -kappa (L + theta) / (1 - alpha L)
            if foresight {
                b[(1, 0)] = if h == 0 {
                    -kappa * theta
                } else {
                    -kappa * (1.0 + alpha * theta) * alpha.powi(h as i32 - 1)
                };
            }
            // tau row: L^h_foresight on u_tau
            let tau_lag = if foresight { 2 } else { 0 };
            if h == tau_lag {
                b[(2, 0)] = 1.0;
            }
            b
        })
        .collect()
}

/// Analytic MA restricted to the rows (tau, k), matching the ordering of
/// the observed block, shock = u_tau. Returns an (H+1) x 2 matrix.
pub fn theoretical_irf_tau_k(params: &LeeperParams, horizon: usize) -> DMatrix<f64> {
    let full = theoretical_irf(params, horizon);
    DMatrix::from_fn(horizon + 1, 2, |h, j| {
        let row = if j == 0 { 2 } else { 1 }; // tau, k
        full[h][(row, 0)]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentKind {
    /// the structural shock itself
    Perfect,
    /// z = a~^2 u_tau
    I1,
    /// I1 plus gaussian measurement error
    I2,
    /// I1 plus autoregressive carryover
    I3,
    /// I1 plus dependence on lagged observables
    I4,
}

/// Instrument generator. `square_alpha` keeps the printed a~^2 coefficient;
/// switching it off uses a~ directly, which can be negative.
pub fn make_instrument(
    kind: InstrumentKind,
    ds: &SimulatedDataset,
    seed: u64,
    square_alpha: bool,
) -> InstrumentSeries {
    let t = ds.true_shocks.nrows();
    let u_tau: Vec<f64> = ds.true_shocks.column(1).iter().cloned().collect();
    if matches!(kind, InstrumentKind::Perfect) {
        return InstrumentSeries::new(u_tau);
    }
    let mut rng = substream(seed, 4);
    let a_tilde: f64 = rng.sample(StandardNormal);
    let coef = if square_alpha { a_tilde * a_tilde } else { a_tilde };
    let base: Vec<f64> = u_tau.iter().map(|u| coef * u).collect();
    let values = match kind {
        InstrumentKind::Perfect => unreachable!(),
        InstrumentKind::I1 => base,
        InstrumentKind::I2 => {
            let sigma_eps: f64 = rng.gen::<f64>() * 0.5;
            base.iter()
                .map(|z| z + sigma_eps * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        InstrumentKind::I3 => {
            let mut z = Vec::with_capacity(t);
            let mut prev = 0.0;
            for b in &base {
                let v = b + 0.5 * prev;
                z.push(v);
                prev = v;
            }
            z
        }
        InstrumentKind::I4 => {
            // dependence on lagged y = (a, k, tau); panel stores (tau, k, a)
            let delta_tilde = [-0.6, 0.4, 0.0];
            (0..t)
                .map(|i| {
                    let mut v = base[i];
                    if i > 0 {
                        let y = [
                            ds.observables.values[(i - 1, 2)],
                            ds.observables.values[(i - 1, 1)],
                            ds.observables.values[(i - 1, 0)],
                        ];
                        for j in 0..3 {
                            v += delta_tilde[j] * y[j];
                        }
                    }
                    v
                })
                .collect()
        }
    };
    InstrumentSeries::new(values)
}
