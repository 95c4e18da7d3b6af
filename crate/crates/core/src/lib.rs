//! Structural dynamic factor models with external-instrument (proxy)
//! identification, plus a fiscal-foresight simulation engine and a Monte
//! Carlo harness for comparing proxy VAR, proxy FAVAR and proxy DFM
//! estimators on non-invertible shocks.

pub mod dgp;
pub mod dynamics;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod mc;
pub mod panel;
pub mod proxy;

pub use dgp::{
    derive_seed, make_instrument, simulate, state_matrices, substream, theoretical_irf,
    theoretical_irf_tau_k, InstrumentKind, LeeperParams, SimulatedDataset,
};
pub use dynamics::{
    assemble_favar, fit_var, observable_ma, reduce_rank, wold, VarFit, WoldRepresentation,
};
pub use error::{Error, Result};
pub use factor::{
    bai_ng_ic, estimate_nonstationary, estimate_static_factors, q_heuristic, FactorMode,
    FactorModelFit, Scaling,
};
pub use mc::{
    frobenius_distance, run_experiment, spec_sweep, wild_bootstrap_bands, write_results,
    write_spec_sweep, BandSet, Estimator, EstimatorSummary, ExperimentConfig, McResult,
    SpecOutcome,
};
pub use panel::{
    apply_transforms, invert_transforms, load_csv, standardize, CsvLoad, Frequency,
    TimeSeriesPanel, TransformCode, TransformParams, TransformSpec,
};
pub use proxy::{
    fevd, identified_irf, invertibility_test, normalize_irf, project_instrument, save_fevd_csv,
    unit_variance_shock, InstrumentSeries, InvertibilityTest, Irf, IrfBands, ProxyIdentification,
};
