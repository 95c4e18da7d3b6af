//! Monte Carlo experiment harness: run the simulation/estimation loop for
//! several estimators, aggregate IRFs across replications, sweep model
//! specifications and compute wild-bootstrap confidence bands.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    self, derive_seed, make_instrument, simulate, theoretical_irf_tau_k, InstrumentKind,
    LeeperParams, SimulatedDataset,
};
use crate::dynamics::{assemble_favar, fit_var, reduce_rank, wold, VarFit};
use crate::error::{Error, Result};
use crate::factor::estimate_static_factors;
use crate::linalg::correlation;
use crate::panel::TimeSeriesPanel;
use crate::proxy::{
    identified_irf, invertibility_test, project_instrument, InstrumentSeries, Irf, IrfBands,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    VarBivariate,
    VarTrivariate,
    Favar,
    Dfm,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::VarBivariate => "var_bivariate",
            Estimator::VarTrivariate => "var_trivariate",
            Estimator::Favar => "favar",
            Estimator::Dfm => "dfm",
        }
    }
}

fn default_n_reps() -> usize {
    1000
}
fn default_lags() -> usize {
    2
}
fn default_dfm_r() -> usize {
    5
}
fn default_dfm_q() -> usize {
    2
}
fn default_favar_extra() -> usize {
    3
}
fn default_horizon() -> usize {
    20
}
fn default_band_levels() -> Vec<f64> {
    vec![0.68, 0.95]
}
fn default_true() -> bool {
    true
}
fn default_leads() -> usize {
    8
}
fn default_level() -> f64 {
    0.05
}

/// Configuration of one Monte Carlo experiment; mirrors the JSON layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default)]
    pub dgp: LeeperParams,
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_lags")]
    pub lags: usize,
    #[serde(default = "default_dfm_r")]
    pub dfm_r: usize,
    #[serde(default = "default_dfm_q")]
    pub dfm_q: usize,
    #[serde(default = "default_favar_extra")]
    pub favar_extra: usize,
    pub instrument_kind: InstrumentKind,
    /// keep the nonnegative squared draw in the noisy instruments
    #[serde(default = "default_true")]
    pub square_alpha: bool,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_band_levels")]
    pub band_levels: Vec<f64>,
    #[serde(default = "default_leads")]
    pub invertibility_leads: usize,
    #[serde(default = "default_level")]
    pub invertibility_level: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_reps: default_n_reps(),
            dgp: LeeperParams::default(),
            estimators: vec![
                Estimator::VarBivariate,
                Estimator::VarTrivariate,
                Estimator::Favar,
                Estimator::Dfm,
            ],
            lags: default_lags(),
            dfm_r: default_dfm_r(),
            dfm_q: default_dfm_q(),
            favar_extra: default_favar_extra(),
            instrument_kind: InstrumentKind::Perfect,
            square_alpha: true,
            horizon: default_horizon(),
            band_levels: default_band_levels(),
            invertibility_leads: default_leads(),
            invertibility_level: default_level(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators configured".into()));
        }
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be positive".into()));
        }
        if self.lags == 0 {
            return Err(Error::Config("lag order must be positive".into()));
        }
        for l in &self.band_levels {
            if !(0.0 < *l && *l < 1.0) {
                return Err(Error::Config(format!("band level {l} not in (0,1)")));
            }
        }
        if self.dfm_q > self.dfm_r {
            return Err(Error::Config(format!(
                "q = {} exceeds r = {}",
                self.dfm_q, self.dfm_r
            )));
        }
        Ok(())
    }
}

/// One estimator's outcome in one replication.
struct RepEstimate {
    /// (H+1) x 2 responses of (tau, k) to the tax shock
    irf: DMatrix<f64>,
    frobenius_irf: f64,
    frobenius_shock: f64,
    shock_corr: f64,
    invert_reject: bool,
}

/// Aggregated results of one estimator across replications.
#[derive(Debug, Clone)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// (H+1) x 2 pointwise mean of (tau, k) responses
    pub mean_irf: DMatrix<f64>,
    pub median_irf: DMatrix<f64>,
    /// per band level: (level, lower, upper) pointwise quantiles
    pub irf_quantiles: Vec<(f64, DMatrix<f64>, DMatrix<f64>)>,
    /// mean over replications of the per-replication Frobenius distance
    pub mean_frobenius_irf: f64,
    /// Frobenius distance between the mean IRF and the analytic one
    pub frobenius_of_mean_irf: f64,
    pub mean_frobenius_shock: f64,
    pub mean_shock_corr: f64,
    pub invertibility_rejection_rate: f64,
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub summaries: Vec<EstimatorSummary>,
    /// (H+1) x 2 analytic responses of (tau, k) to the tax shock
    pub true_irf: DMatrix<f64>,
    pub n_success: usize,
    pub n_reps: usize,
    /// "rep <i> (seed <s>): <error>" lines for skipped replications
    pub failures: Vec<String>,
}

/// Frobenius distance between two same-shape response arrays.
pub fn frobenius_distance(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "shape {:?} != {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    Ok((est - truth).norm())
}

/// Identify the tax shock from a VAR fit on `y` with instrument `z`
/// (full sample; the first p values are dropped to align with residuals).
/// Returns the IRF over all variables, the unit-variance shock series and
/// the invertibility verdict.
fn proxy_var_pipeline(
    y: &DMatrix<f64>,
    z: &InstrumentSeries,
    lags: usize,
    horizon: usize,
    leads: usize,
    level: f64,
) -> Result<(Irf, Vec<f64>, bool)> {
    let fit = fit_var(y, lags, false)?;
    let w = wold(&fit, horizon);
    let z_trim = trim_instrument(z, lags, y.nrows())?;
    let pid = project_instrument(&z_trim, &fit.residuals, None, &fit.resid_cov)?;
    let irf = identified_irf(&w, &pid)?;
    let shock: Vec<f64> = pid.shock.iter().cloned().collect();
    let inv = invertibility_test(&z_trim, &fit.residuals, None, leads, level)?;
    Ok((irf, shock, inv.reject))
}

fn trim_instrument(z: &InstrumentSeries, lags: usize, t: usize) -> Result<InstrumentSeries> {
    if z.values.len() != t {
        return Err(Error::Dimension(format!(
            "instrument length {} != sample length {t}",
            z.values.len()
        )));
    }
    Ok(InstrumentSeries::new(z.values[lags..].to_vec()))
}

fn run_estimator(
    est: Estimator,
    cfg: &ExperimentConfig,
    ds: &SimulatedDataset,
    z: &InstrumentSeries,
    true_irf: &DMatrix<f64>,
) -> Result<RepEstimate> {
    // estimators see the observables as contaminated by measurement error
    let obs = &ds.noisy_observables;
    let t = obs.nrows();
    let (irf_tau_k, shock, reject) = match est {
        Estimator::VarBivariate | Estimator::VarTrivariate => {
            let k = if est == Estimator::VarBivariate { 2 } else { 3 };
            let y = obs.columns(0, k).into_owned();
            let (irf, shock, reject) = proxy_var_pipeline(
                &y,
                z,
                cfg.lags,
                cfg.horizon,
                cfg.invertibility_leads,
                cfg.invertibility_level,
            )?;
            (irf.values.columns(0, 2).into_owned(), shock, reject)
        }
        Estimator::Favar => {
            let core = obs.columns(0, 2).into_owned();
            let y = assemble_favar(&core, &ds.noisy_panel, cfg.favar_extra)?;
            let (irf, shock, reject) = proxy_var_pipeline(
                &y,
                z,
                cfg.lags,
                cfg.horizon,
                cfg.invertibility_leads,
                cfg.invertibility_level,
            )?;
            (irf.values.columns(0, 2).into_owned(), shock, reject)
        }
        Estimator::Dfm => {
            let fm = estimate_static_factors(&ds.noisy_panel, cfg.dfm_r)?.with_q(cfg.dfm_q)?;
            let vfit = fit_var(&fm.factors, cfg.lags, false)?;
            let red = reduce_rank(&vfit, cfg.dfm_q, cfg.horizon)?;
            let obs_ma = crate::dynamics::observable_ma(&fm, &red)?;
            let z_trim = trim_instrument(z, cfg.lags, t)?;
            let shocks = red
                .shocks
                .as_ref()
                .ok_or_else(|| Error::State("rank reduction stored no shocks".into()))?;
            let pid = project_instrument(&z_trim, shocks, None, &red.shock_cov)?;
            let irf = identified_irf(&obs_ma, &pid)?;
            let shock: Vec<f64> = pid.shock.iter().cloned().collect();
            let inv = invertibility_test(
                &z_trim,
                shocks,
                None,
                cfg.invertibility_leads,
                cfg.invertibility_level,
            )?;
            // noisy panel columns 0,1 are (tau, k)
            (irf.values.columns(0, 2).into_owned(), shock, inv.reject)
        }
    };

    // align the shock sign with the true tax shock before aggregation
    let u_tau: Vec<f64> = ds
        .true_shocks
        .column(1)
        .iter()
        .skip(cfg.lags)
        .cloned()
        .collect();
    let corr = correlation(&shock, &u_tau);
    let sign = if corr < 0.0 { -1.0 } else { 1.0 };
    let irf_aligned = &irf_tau_k * sign;
    let shock_aligned: Vec<f64> = shock.iter().map(|v| v * sign).collect();

    let frob_irf = frobenius_distance(&irf_aligned, true_irf)?;
    let frob_shock = shock_aligned
        .iter()
        .zip(&u_tau)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();

    Ok(RepEstimate {
        irf: irf_aligned,
        frobenius_irf: frob_irf,
        frobenius_shock: frob_shock,
        shock_corr: corr.abs(),
        invert_reject: reject,
    })
}

fn run_rep(cfg: &ExperimentConfig, rep: usize, true_irf: &DMatrix<f64>) -> Result<Vec<RepEstimate>> {
    let mut params = cfg.dgp.clone();
    params.seed = derive_seed(cfg.dgp.seed, rep as u64);
    let ds = simulate(&params)?;
    let z = make_instrument(cfg.instrument_kind, &ds, params.seed, cfg.square_alpha);
    cfg.estimators
        .iter()
        .map(|&est| run_estimator(est, cfg, &ds, &z, true_irf))
        .collect()
}

/// Linear-interpolation empirical quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn pointwise_quantile(irfs: &[&DMatrix<f64>], q: f64) -> DMatrix<f64> {
    let (r, c) = irfs[0].shape();
    DMatrix::from_fn(r, c, |i, j| {
        let mut v: Vec<f64> = irfs.iter().map(|m| m[(i, j)]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        quantile(&v, q)
    })
}

/// Run the full Monte Carlo experiment. Failed replications are logged and
/// skipped; more than 5% failures aborts the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McResult> {
    cfg.validate()?;
    let true_irf = theoretical_irf_tau_k(&cfg.dgp, cfg.horizon);

    let outcomes: Vec<(usize, Result<Vec<RepEstimate>>)> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| (rep, run_rep(cfg, rep, &true_irf)))
        .collect();

    let mut failures = Vec::new();
    let mut successes: Vec<Vec<RepEstimate>> = Vec::new();
    for (rep, out) in outcomes {
        match out {
            Ok(r) => successes.push(r),
            Err(e) => failures.push(format!(
                "rep {rep} (seed {}): {e}",
                derive_seed(cfg.dgp.seed, rep as u64)
            )),
        }
    }
    if failures.len() * 20 > cfg.n_reps {
        for f in failures.iter().take(10) {
            log::error!("{f}");
        }
        return Err(Error::ExcessFailures {
            failed: failures.len(),
            total: cfg.n_reps,
        });
    }
    if successes.is_empty() {
        return Err(Error::ExcessFailures {
            failed: failures.len(),
            total: cfg.n_reps,
        });
    }

    let n = successes.len() as f64;
    let summaries = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(e, &est)| {
            let reps: Vec<&RepEstimate> = successes.iter().map(|r| &r[e]).collect();
            let irfs: Vec<&DMatrix<f64>> = reps.iter().map(|r| &r.irf).collect();
            let shape = irfs[0].shape();
            let mut mean_irf = DMatrix::zeros(shape.0, shape.1);
            for m in &irfs {
                mean_irf += *m;
            }
            mean_irf /= n;
            let median_irf = pointwise_quantile(&irfs, 0.5);
            let irf_quantiles = cfg
                .band_levels
                .iter()
                .map(|&l| {
                    let tail = (1.0 - l) / 2.0;
                    (
                        l,
                        pointwise_quantile(&irfs, tail),
                        pointwise_quantile(&irfs, 1.0 - tail),
                    )
                })
                .collect();
            EstimatorSummary {
                estimator: est,
                frobenius_of_mean_irf: (&mean_irf - &true_irf).norm(),
                mean_irf,
                median_irf,
                irf_quantiles,
                mean_frobenius_irf: reps.iter().map(|r| r.frobenius_irf).sum::<f64>() / n,
                mean_frobenius_shock: reps.iter().map(|r| r.frobenius_shock).sum::<f64>() / n,
                mean_shock_corr: reps.iter().map(|r| r.shock_corr).sum::<f64>() / n,
                invertibility_rejection_rate: reps
                    .iter()
                    .filter(|r| r.invert_reject)
                    .count() as f64
                    / n,
            }
        })
        .collect();

    Ok(McResult {
        summaries,
        true_irf,
        n_success: successes.len(),
        n_reps: cfg.n_reps,
        failures,
    })
}

/// One candidate specification's outcome in the sweep.
#[derive(Debug, Clone)]
pub struct SpecOutcome {
    pub name: String,
    /// responses of the core variables to the identified shock
    pub irf: Option<DMatrix<f64>>,
    pub invertible: Option<bool>,
    pub error: Option<String>,
}

/// Re-estimate the proxy VAR once per candidate variable added to the core
/// set, recording per-spec failures instead of aborting.
#[allow(clippy::too_many_arguments)]
pub fn spec_sweep(
    panel: &TimeSeriesPanel,
    core: &[String],
    pool: &[String],
    z: &InstrumentSeries,
    lags: usize,
    horizon: usize,
    leads: usize,
    level: f64,
) -> Result<Vec<SpecOutcome>> {
    if pool.is_empty() {
        return Err(Error::Config("empty candidate pool".into()));
    }
    let outcomes = pool
        .par_iter()
        .map(|cand| {
            let mut names: Vec<&str> = core.iter().map(|s| s.as_str()).collect();
            names.push(cand.as_str());
            let run = || -> Result<(DMatrix<f64>, bool)> {
                let sub = panel.select(&names)?;
                let (irf, _shock, reject) =
                    proxy_var_pipeline(&sub.values, z, lags, horizon, leads, level)?;
                Ok((irf.values.columns(0, core.len()).into_owned(), !reject))
            };
            match run() {
                Ok((irf, invertible)) => SpecOutcome {
                    name: cand.clone(),
                    irf: Some(irf),
                    invertible: Some(invertible),
                    error: None,
                },
                Err(e) => SpecOutcome {
                    name: cand.clone(),
                    irf: None,
                    invertible: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(outcomes)
}

/// Pointwise quantile band set at arbitrary levels.
#[derive(Debug, Clone)]
pub struct BandSet {
    pub levels: Vec<f64>,
    pub lower: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
    pub n_draws: usize,
}

impl BandSet {
    /// Convert to the fixed 68/95 layout when both levels are present.
    pub fn to_irf_bands(&self) -> Option<IrfBands> {
        let find = |l: f64| {
            self.levels
                .iter()
                .position(|v| (v - l).abs() < 1e-9)
        };
        let (i68, i95) = (find(0.68)?, find(0.95)?);
        Some(IrfBands {
            lower68: self.lower[i68].clone(),
            upper68: self.upper[i68].clone(),
            lower95: self.lower[i95].clone(),
            upper95: self.upper[i95].clone(),
        })
    }
}

/// Wild-bootstrap confidence bands. Each draw multiplies the period-t VAR
/// residual vector and the instrument's deviation from its mean by a single
/// Rademacher weight, rebuilds the sample recursively from the fitted
/// system, and re-runs `estimate` on the rebuilt data.
///
/// `y` is the estimation sample behind `fit`; `z` is aligned with the
/// residual sample (length T - p).
pub fn wild_bootstrap_bands<F>(
    y: &DMatrix<f64>,
    fit: &VarFit,
    z: &[f64],
    b: usize,
    levels: &[f64],
    seed: u64,
    estimate: F,
) -> Result<BandSet>
where
    F: Fn(&DMatrix<f64>, &[f64]) -> Result<Irf> + Sync,
{
    if b < 50 {
        return Err(Error::Config(format!("bootstrap draws {b} < 50")));
    }
    let (t, k) = y.shape();
    let p = fit.p;
    let t_eff = t - p;
    if fit.residuals.nrows() != t_eff || fit.k != k {
        return Err(Error::Dimension(
            "VAR fit does not match the supplied sample".into(),
        ));
    }
    if z.len() != t_eff {
        return Err(Error::Dimension(format!(
            "instrument length {} != residual sample length {t_eff}",
            z.len()
        )));
    }
    let zbar = z.iter().sum::<f64>() / t_eff as f64;

    let draws: Vec<Result<Irf>> = (0..b)
        .into_par_iter()
        .map(|d| {
            let mut rng = dgp::substream(seed, 0x8000_0000 + d as u64);
            let w: Vec<f64> = (0..t_eff)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let mut ystar = DMatrix::zeros(t, k);
            ystar.view_mut((0, 0), (p, k)).copy_from(&y.view((0, 0), (p, k)));
            for i in p..t {
                let mut row = fit.intercept.clone();
                for (j, dm) in fit.coeffs.iter().enumerate() {
                    row += dm * ystar.row(i - 1 - j).transpose();
                }
                row += w[i - p] * fit.residuals.row(i - p).transpose();
                ystar.set_row(i, &row.transpose());
            }
            let zstar: Vec<f64> = z
                .iter()
                .zip(&w)
                .map(|(v, wt)| zbar + wt * (v - zbar))
                .collect();
            estimate(&ystar, &zstar)
        })
        .collect();

    let mut irfs = Vec::new();
    let mut first_err = None;
    for d in draws {
        match d {
            Ok(irf) => irfs.push(irf),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e.to_string());
                }
            }
        }
    }
    if irfs.len() < 50 || irfs.len() * 2 < b {
        return Err(Error::State(format!(
            "only {}/{b} bootstrap draws succeeded (first error: {})",
            irfs.len(),
            first_err.unwrap_or_default()
        )));
    }
    let mats: Vec<&DMatrix<f64>> = irfs.iter().map(|i| &i.values).collect();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &l in levels {
        if !(0.0 < l && l < 1.0) {
            return Err(Error::Config(format!("band level {l} not in (0,1)")));
        }
        let tail = (1.0 - l) / 2.0;
        lower.push(pointwise_quantile(&mats, tail));
        upper.push(pointwise_quantile(&mats, 1.0 - tail));
    }
    Ok(BandSet {
        levels: levels.to_vec(),
        lower,
        upper,
        n_draws: irfs.len(),
    })
}

/// Write the experiment's result files: mean_irf_<estimator>.csv,
/// bands_<estimator>.csv, frobenius.csv and failures.log.
pub fn write_results(dir: &Path, res: &McResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let vars = ["tau", "k"];
    for s in &res.summaries {
        let mut wtr = csv::Writer::from_path(dir.join(format!("mean_irf_{}.csv", s.estimator.name())))?;
        wtr.write_record(["horizon", "variable", "mean", "median", "analytic"])?;
        for h in 0..s.mean_irf.nrows() {
            for (j, v) in vars.iter().enumerate() {
                wtr.write_record([
                    h.to_string(),
                    v.to_string(),
                    format!("{:.17e}", s.mean_irf[(h, j)]),
                    format!("{:.17e}", s.median_irf[(h, j)]),
                    format!("{:.17e}", res.true_irf[(h, j)]),
                ])?;
            }
        }
        wtr.flush()?;

        let mut wtr = csv::Writer::from_path(dir.join(format!("bands_{}.csv", s.estimator.name())))?;
        wtr.write_record(["horizon", "variable", "level", "lower", "upper"])?;
        for (l, lo, hi) in &s.irf_quantiles {
            for h in 0..lo.nrows() {
                for (j, v) in vars.iter().enumerate() {
                    wtr.write_record([
                        h.to_string(),
                        v.to_string(),
                        format!("{l}"),
                        format!("{:.17e}", lo[(h, j)]),
                        format!("{:.17e}", hi[(h, j)]),
                    ])?;
                }
            }
        }
        wtr.flush()?;
    }

    let mut wtr = csv::Writer::from_path(dir.join("frobenius.csv"))?;
    wtr.write_record([
        "estimator",
        "mean_frobenius_irf",
        "frobenius_of_mean_irf",
        "mean_frobenius_shock",
        "mean_shock_correlation",
        "invertibility_rejection_rate",
    ])?;
    for s in &res.summaries {
        wtr.write_record([
            s.estimator.name().to_string(),
            format!("{:.17e}", s.mean_frobenius_irf),
            format!("{:.17e}", s.frobenius_of_mean_irf),
            format!("{:.17e}", s.mean_frobenius_shock),
            format!("{:.17e}", s.mean_shock_corr),
            format!("{:.17e}", s.invertibility_rejection_rate),
        ])?;
    }
    wtr.flush()?;

    let mut log = format!(
        "{} of {} replications succeeded\n",
        res.n_success, res.n_reps
    );
    for f in &res.failures {
        log.push_str(f);
        log.push('\n');
    }
    std::fs::write(dir.join("failures.log"), log)?;
    Ok(())
}

/// Write the spec-sweep outcomes in long format.
pub fn write_spec_sweep(dir: &Path, outcomes: &[SpecOutcome], core: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut wtr = csv::Writer::from_path(dir.join("spec_sweep.csv"))?;
    wtr.write_record(["candidate", "horizon", "variable", "value", "invertible"])?;
    for o in outcomes {
        if let Some(irf) = &o.irf {
            let inv = o
                .invertible
                .map(|b| b.to_string())
                .unwrap_or_default();
            for h in 0..irf.nrows() {
                for j in 0..irf.ncols() {
                    wtr.write_record([
                        o.name.clone(),
                        h.to_string(),
                        core[j].clone(),
                        format!("{:.17e}", irf[(h, j)]),
                        inv.clone(),
                    ])?;
                }
            }
        }
    }
    wtr.flush()?;
    let failed: Vec<String> = outcomes
        .iter()
        .filter_map(|o| o.error.as_ref().map(|e| format!("{}: {e}", o.name)))
        .collect();
    if !failed.is_empty() {
        std::fs::write(dir.join("spec_failures.log"), failed.join("\n") + "\n")?;
    }
    Ok(())
}
