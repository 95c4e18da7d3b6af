//! The empirical pipeline behind `estimate`, `invertibility-test` and
//! `spec-sweep`: nonstationary factor extraction, factor VAR, rank
//! reduction, proxy identification, normalization, FEVD and bands.

use std::path::Path;

use serde::Deserialize;

use proxydfm_core as core;
use proxydfm_core::{Error, InstrumentSeries, TimeSeriesPanel};

use crate::{load_config, load_config_required, load_instrument, write_manifest, CommonArgs, DataArgs};

fn default_date_column() -> String {
    "date".into()
}
fn default_r() -> Option<usize> {
    Some(9)
}
fn default_r_max() -> usize {
    15
}
fn default_q() -> usize {
    4
}
fn default_lags() -> usize {
    8
}
fn default_horizon() -> usize {
    48
}
fn default_impact() -> f64 {
    1.0
}
fn default_fevd_horizons() -> Vec<usize> {
    vec![0, 6, 12, 24, 36, 48]
}
fn default_mode() -> String {
    "nonstationary".into()
}
fn default_true() -> bool {
    true
}
fn default_draws() -> usize {
    500
}
fn default_levels() -> Vec<f64> {
    vec![0.68, 0.95]
}
fn default_leads() -> usize {
    8
}
fn default_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
pub struct BootstrapConfig {
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpecSweepConfig {
    pub core: Vec<String>,
    /// defaults to every non-core panel column
    #[serde(default)]
    pub pool: Option<Vec<String>>,
    #[serde(default = "default_sweep_lags")]
    pub lags: usize,
}

fn default_sweep_lags() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
pub struct InvertibilityConfig {
    #[serde(default = "default_leads")]
    pub leads: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for InvertibilityConfig {
    fn default() -> Self {
        Self {
            leads: default_leads(),
            level: default_level(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub date_column: String,
    /// static factors; null selects by information criterion up to r_max
    pub r: Option<usize>,
    pub r_max: usize,
    /// dynamic shocks
    pub q: usize,
    pub lags: usize,
    pub intercept: bool,
    pub horizon: usize,
    /// "nonstationary" (levels procedure) or "stationary"
    pub mode: String,
    /// apply the panel's transform codes before estimation
    pub apply_transforms: bool,
    pub target_variable: Option<String>,
    pub target_impact: f64,
    pub fevd_horizons: Vec<usize>,
    pub bootstrap: Option<BootstrapConfig>,
    /// core variable names for a side-by-side proxy VAR
    pub var_comparison: Option<Vec<String>>,
    pub spec_sweep: Option<SpecSweepConfig>,
    pub invertibility: Option<InvertibilityConfig>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            date_column: default_date_column(),
            r: default_r(),
            r_max: default_r_max(),
            q: default_q(),
            lags: default_lags(),
            intercept: false,
            horizon: default_horizon(),
            mode: default_mode(),
            apply_transforms: default_true(),
            target_variable: None,
            target_impact: default_impact(),
            fevd_horizons: default_fevd_horizons(),
            bootstrap: None,
            var_comparison: None,
            spec_sweep: None,
            invertibility: None,
        }
    }
}

fn load_panel(
    path: &Path,
    date_column: &str,
    apply: bool,
) -> core::Result<TimeSeriesPanel> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "panel file {} does not exist",
            path.display()
        )));
    }
    let loaded = core::load_csv(path, date_column)?;
    if !loaded.dropped_columns.is_empty() {
        log::warn!("dropped all-missing columns: {:?}", loaded.dropped_columns);
    }
    if loaded.dropped_leading + loaded.dropped_trailing > 0 {
        log::info!(
            "trimmed {} leading and {} trailing incomplete rows",
            loaded.dropped_leading,
            loaded.dropped_trailing
        );
    }
    match (apply, loaded.transform_codes) {
        (true, Some(mut spec)) => core::apply_transforms(&loaded.panel, &mut spec),
        _ => Ok(loaded.panel),
    }
}

fn fit_factors(
    panel: &TimeSeriesPanel,
    cfg: &EstimateConfig,
) -> core::Result<core::FactorModelFit> {
    let r = match cfg.r {
        Some(r) => r,
        None => {
            let r = core::bai_ng_ic(panel, cfg.r_max)?;
            log::info!("information criterion selected r = {r}");
            r
        }
    };
    let fm = match cfg.mode.as_str() {
        "nonstationary" => core::estimate_nonstationary(panel, r)?,
        "stationary" => core::estimate_static_factors(panel, r)?,
        other => return Err(Error::Config(format!("unknown mode '{other}'"))),
    };
    fm.with_q(cfg.q)
}

/// Instrument values aligned one-to-one with the residual sample
/// (panel rows lags..T), by date when both sides are dated.
fn align_full(
    z: &InstrumentSeries,
    panel: &TimeSeriesPanel,
    lags: usize,
) -> core::Result<Vec<f64>> {
    let t_eff = panel.nobs() - lags;
    match (&z.dates, &panel.dates) {
        (Some(zd), Some(pd)) => {
            let index: std::collections::HashMap<&str, usize> = zd
                .iter()
                .enumerate()
                .map(|(i, d)| (d.as_str(), i))
                .collect();
            pd[lags..]
                .iter()
                .map(|d| {
                    index
                        .get(d.as_str())
                        .map(|&i| z.values[i])
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "bootstrap needs the instrument on every date; missing {d}"
                            ))
                        })
                })
                .collect()
        }
        _ => {
            if z.values.len() == panel.nobs() {
                Ok(z.values[lags..].to_vec())
            } else if z.values.len() == t_eff {
                Ok(z.values.clone())
            } else {
                Err(Error::Dimension(format!(
                    "instrument length {} matches neither T = {} nor T - p = {t_eff}",
                    z.values.len(),
                    panel.nobs()
                )))
            }
        }
    }
}

pub fn cmd_estimate(common: &CommonArgs, data: &DataArgs) -> core::Result<()> {
    let cfg: EstimateConfig = load_config(common.config.as_deref())?;
    let z = load_instrument(&data.instrument)?;
    let panel = load_panel(&data.panel, &cfg.date_column, cfg.apply_transforms)?;
    write_manifest(common, "estimate")?;
    let out = &common.out;

    let fm = fit_factors(&panel, &cfg)?;
    let vfit = core::fit_var(&fm.factors, cfg.lags, cfg.intercept)?;
    let red = core::reduce_rank(&vfit, cfg.q, cfg.horizon)?;
    let obs_ma = core::observable_ma(&fm, &red)?;
    let shocks = red
        .shocks
        .clone()
        .ok_or_else(|| Error::State("rank reduction stored no shocks".into()))?;
    let resid_dates: Option<Vec<String>> =
        panel.dates.as_ref().map(|d| d[cfg.lags..].to_vec());
    let pid = core::project_instrument(&z, &shocks, resid_dates.as_deref(), &red.shock_cov)?;
    log::info!(
        "first-stage F = {:.2} over {} observations",
        pid.fstat_first_stage,
        pid.n_overlap
    );

    let raw_irf = core::identified_irf(&obs_ma, &pid)?;
    let target_idx = cfg
        .target_variable
        .as_ref()
        .map(|name| {
            panel.column_index(name).ok_or_else(|| {
                Error::Config(format!("target variable '{name}' not in the panel"))
            })
        })
        .transpose()?;
    let irf = match target_idx {
        Some(idx) => core::normalize_irf(&raw_irf, idx, cfg.target_impact)?,
        None => raw_irf.clone(),
    };
    // full-sample unit-variance shock, in normalized-shock units
    let eta = core::unit_variance_shock(&pid, &shocks);
    let shock_series = InstrumentSeries {
        values: eta.iter().cloned().collect(),
        dates: resid_dates.clone(),
    };
    shock_series.save_csv(&out.join("shock.csv"))?;

    let bands = match &cfg.bootstrap {
        Some(b) => {
            let z_full = align_full(&z, &panel, cfg.lags)?;
            let fm_b = fm.clone();
            let cfg_b = cfg.clone();
            let set = core::wild_bootstrap_bands(
                &fm.factors,
                &vfit,
                &z_full,
                b.draws,
                &b.levels,
                b.seed,
                move |fstar, zstar| {
                    let vf = core::fit_var(fstar, cfg_b.lags, cfg_b.intercept)?;
                    let rd = core::reduce_rank(&vf, cfg_b.q, cfg_b.horizon)?;
                    let oma = core::observable_ma(&fm_b, &rd)?;
                    let sh = rd
                        .shocks
                        .clone()
                        .ok_or_else(|| Error::State("no shocks".into()))?;
                    let zb = InstrumentSeries::new(zstar.to_vec());
                    let p = core::project_instrument(&zb, &sh, None, &rd.shock_cov)?;
                    let i = core::identified_irf(&oma, &p)?;
                    match target_idx {
                        Some(idx) => core::normalize_irf(&i, idx, cfg_b.target_impact),
                        None => Ok(i),
                    }
                },
            )?;
            log::info!("{} bootstrap draws succeeded", set.n_draws);
            write_band_csv(&out.join("bands.csv"), &set, &panel.names)?;
            set.to_irf_bands()
        }
        None => None,
    };
    irf.save_csv(&out.join("irf.csv"), Some(&panel.names), bands.as_ref())?;

    // FEVD uses the raw unit-variance shock; shares are scale invariant
    let shares = core::fevd(&obs_ma, &pid, cfg.horizon)?;
    core::save_fevd_csv(
        &shares,
        &out.join("fevd.csv"),
        Some(&panel.names),
        &cfg.fevd_horizons,
    )?;
    fm.save_dir(&out.join("factors"))?;

    if let Some(inv_cfg) = &cfg.invertibility {
        let res =
            core::invertibility_test(&z, &shocks, resid_dates.as_deref(), inv_cfg.leads, inv_cfg.level)?;
        write_invertibility(&out.join("invertibility.json"), &res, inv_cfg)?;
    }

    if let Some(core_names) = &cfg.var_comparison {
        let names: Vec<&str> = core_names.iter().map(|s| s.as_str()).collect();
        let sub = panel.select(&names)?;
        let z_full = align_full(&z, &panel, 0)?;
        let zu = InstrumentSeries::new(z_full);
        let (var_irf, _) = proxy_var(&sub.values, &zu, cfg.lags, cfg.horizon)?;
        let var_irf = match core_names.iter().position(|n| {
            Some(n.as_str()) == cfg.target_variable.as_deref()
        }) {
            Some(idx) => core::normalize_irf(&var_irf, idx, cfg.target_impact)?,
            None => var_irf,
        };
        var_irf.save_csv(&out.join("var_irf.csv"), Some(core_names), None)?;
    }

    if let Some(sweep) = &cfg.spec_sweep {
        run_sweep(&panel, &z, sweep, cfg.horizon, &cfg.invertibility.clone().unwrap_or_default(), out)?;
    }

    Ok(())
}

fn proxy_var(
    y: &nalgebra::DMatrix<f64>,
    z: &InstrumentSeries,
    lags: usize,
    horizon: usize,
) -> core::Result<(core::Irf, core::InvertibilityTest)> {
    let fit = core::fit_var(y, lags, true)?;
    let w = core::wold(&fit, horizon);
    let zt = InstrumentSeries::new(z.values[lags..].to_vec());
    let pid = core::project_instrument(&zt, &fit.residuals, None, &fit.resid_cov)?;
    let irf = core::identified_irf(&w, &pid)?;
    let inv = core::invertibility_test(&zt, &fit.residuals, None, default_leads(), default_level())?;
    Ok((irf, inv))
}

fn run_sweep(
    panel: &TimeSeriesPanel,
    z: &InstrumentSeries,
    sweep: &SpecSweepConfig,
    horizon: usize,
    inv: &InvertibilityConfig,
    out: &Path,
) -> core::Result<()> {
    let z_full = align_full(z, panel, 0)?;
    let zu = InstrumentSeries::new(z_full);
    let pool: Vec<String> = match &sweep.pool {
        Some(p) => p.clone(),
        None => panel
            .names
            .iter()
            .filter(|n| !sweep.core.contains(n))
            .cloned()
            .collect(),
    };
    let outcomes = core::spec_sweep(
        panel,
        &sweep.core,
        &pool,
        &zu,
        sweep.lags,
        horizon,
        inv.leads,
        inv.level,
    )?;
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    log::info!("spec sweep: {}/{} specifications succeeded", outcomes.len() - failed, outcomes.len());
    core::write_spec_sweep(out, &outcomes, &sweep.core)
}

fn write_band_csv(path: &Path, set: &core::BandSet, names: &[String]) -> core::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["horizon", "variable", "level", "lower", "upper"])?;
    for (i, l) in set.levels.iter().enumerate() {
        let (lo, hi) = (&set.lower[i], &set.upper[i]);
        for h in 0..lo.nrows() {
            for j in 0..lo.ncols() {
                wtr.write_record([
                    h.to_string(),
                    names[j].clone(),
                    format!("{l}"),
                    format!("{:.17e}", lo[(h, j)]),
                    format!("{:.17e}", hi[(h, j)]),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::Io(e.into()))?;
    Ok(())
}

fn write_invertibility(
    path: &Path,
    res: &core::InvertibilityTest,
    cfg: &InvertibilityConfig,
) -> core::Result<()> {
    let body = serde_json::json!({
        "f": res.f,
        "pvalue": res.pvalue,
        "reject": res.reject,
        "leads": cfg.leads,
        "level": cfg.level,
    });
    std::fs::write(path, serde_json::to_vec_pretty(&body)?)?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct InvertibilityCmdConfig {
    pub date_column: String,
    pub r: Option<usize>,
    pub r_max: usize,
    pub q: usize,
    pub lags: usize,
    pub mode: String,
    pub apply_transforms: bool,
    pub leads: usize,
    pub level: f64,
}

impl Default for InvertibilityCmdConfig {
    fn default() -> Self {
        Self {
            date_column: default_date_column(),
            r: default_r(),
            r_max: default_r_max(),
            q: default_q(),
            lags: default_lags(),
            mode: default_mode(),
            apply_transforms: true,
            leads: default_leads(),
            level: default_level(),
        }
    }
}

pub fn cmd_invertibility(common: &CommonArgs, data: &DataArgs) -> core::Result<()> {
    let cfg: InvertibilityCmdConfig = load_config(common.config.as_deref())?;
    let z = load_instrument(&data.instrument)?;
    let panel = load_panel(&data.panel, &cfg.date_column, cfg.apply_transforms)?;
    write_manifest(common, "invertibility-test")?;
    let est = EstimateConfig {
        date_column: cfg.date_column.clone(),
        r: cfg.r,
        r_max: cfg.r_max,
        q: cfg.q,
        lags: cfg.lags,
        mode: cfg.mode.clone(),
        ..Default::default()
    };
    let fm = fit_factors(&panel, &est)?;
    let vfit = core::fit_var(&fm.factors, cfg.lags, false)?;
    let red = core::reduce_rank(&vfit, cfg.q, cfg.lags.max(cfg.leads))?;
    let shocks = red
        .shocks
        .clone()
        .ok_or_else(|| Error::State("rank reduction stored no shocks".into()))?;
    let resid_dates: Option<Vec<String>> =
        panel.dates.as_ref().map(|d| d[cfg.lags..].to_vec());
    let res = core::invertibility_test(&z, &shocks, resid_dates.as_deref(), cfg.leads, cfg.level)?;
    let inv = InvertibilityConfig {
        leads: cfg.leads,
        level: cfg.level,
    };
    write_invertibility(&common.out.join("invertibility.json"), &res, &inv)?;
    println!(
        "F = {:.4}, p = {:.4} -> {}",
        res.f,
        res.pvalue,
        if res.reject {
            "reject invertibility"
        } else {
            "cannot reject invertibility"
        }
    );
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpecSweepCmdConfig {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    pub core: Vec<String>,
    #[serde(default)]
    pub pool: Option<Vec<String>>,
    #[serde(default = "default_sweep_lags")]
    pub lags: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_true")]
    pub apply_transforms: bool,
    #[serde(default)]
    pub invertibility: InvertibilityConfig,
}

pub fn cmd_spec_sweep(common: &CommonArgs, data: &DataArgs) -> core::Result<()> {
    let cfg: SpecSweepCmdConfig = match &common.config {
        Some(p) => load_config_required(p.as_path())?,
        None => {
            return Err(Error::Config(
                "spec-sweep requires --config with the core variable list".into(),
            ))
        }
    };
    let z = load_instrument(&data.instrument)?;
    let panel = load_panel(&data.panel, &cfg.date_column, cfg.apply_transforms)?;
    write_manifest(common, "spec-sweep")?;
    let sweep = SpecSweepConfig {
        core: cfg.core.clone(),
        pool: cfg.pool.clone(),
        lags: cfg.lags,
    };
    run_sweep(&panel, &z, &sweep, cfg.horizon, &cfg.invertibility, &common.out)
}
