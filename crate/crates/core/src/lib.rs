//! Input-output modelling of multimode cavity-magnon systems.
//!
//! The [`engine`] evaluates the exact S-matrix of any [`SystemSpec`].
//! [`closed_forms`] holds the analytic two- and three-mode expressions,
//! [`analyzer`] extracts resonances, antiresonances and phase jumps from
//! spectra, and [`fit`] recovers effective couplings from antiresonance
//! branches.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyzer;
pub mod closed_forms;
pub mod config;
pub mod engine;
pub mod fit;
pub mod io;
pub mod model;

pub use analyzer::{
    extract_branches, find_features, predict_coupling_behavior, AnalyzerError, AntiresonanceBranch, ConvergenceReport,
    FeatureKind, PhaseReference, SpectralFeature, Trace,
};
pub use closed_forms::{effective_coupling, ClosedFormError, EffectiveAntiresonance, GammaPower, TwoModeParams};
pub use config::{load_spec, ConfigError, SystemConfig};
pub use engine::{build_omega, magnon_map, s_matrix, sweep, EngineError, OmegaMatrix, Spectrum, SweepMap};
pub use fit::{fit_effective_model, fit_spectrum, EffectiveCouplingFit, FitError, FitParameter, SpectrumFit};
pub use io::IoError;
pub use model::{
    table3_cavity, CouplingBehavior, Diagnostic, FrequencyGrid, MagnonCoupling, MagnonMode, ModelError, PhaseJump,
    PhotonCoupling, PhotonMode, PortCoupling, Severity, SpherePosition, SystemSpec,
};
