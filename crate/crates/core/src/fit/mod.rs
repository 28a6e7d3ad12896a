//! Least-squares recovery of effective antiresonance couplings and of
//! full-system parameters.

pub mod lm;

use std::f64::consts::{LN_10, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{AntiresonanceBranch, Trace};
use crate::engine::EngineError;
use crate::model::{CouplingBehavior, ModelError, SystemSpec};
use lm::{LmError, LmOptions, Problem};

/// Minimum number of usable branch samples for an effective-model fit.
pub const MIN_BRANCH_SAMPLES: usize = 10;
/// Relative residual gap below which the two hypotheses count as ambiguous.
pub const AMBIGUITY_RATIO: f64 = 0.1;
/// Floor added to `|S21|²` before taking logs in spectrum fits (−80 dB).
/// Lossless data have exact zeros whose log residuals would otherwise dominate.
pub const POWER_FLOOR: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("only {usable} usable branch samples, need at least {needed}")]
    InsufficientSamples { usable: usize, needed: usize },
    #[error("fit with phi_ar = {phi_ar} did not converge after {iterations} iterations (best omega_ar {omega_ar}, |g_ar| {g_ar_magnitude}, SSR {ssr:.3e})")]
    NotConverged {
        phi_ar: f64,
        omega_ar: f64,
        g_ar_magnitude: f64,
        ssr: f64,
        iterations: usize,
    },
    #[error("spectrum fit did not converge after {iterations} iterations (best SSR {ssr:.3e})")]
    SpectrumNotConverged {
        best: Vec<f64>,
        ssr: f64,
        iterations: usize,
    },
    #[error("parameters are not identifiable from this spectrum: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("spectrum must have at least two ports")]
    NeedsTwoPorts,
    #[error("model is not finite on the fit grid")]
    NonFinite,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fitted effective antiresonance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCouplingFit {
    pub omega_ar: f64,
    pub g_ar_magnitude: f64,
    /// 0 or π.
    pub phi_ar: f64,
    pub verdict: CouplingBehavior,
    /// RMS deviation over non-merged samples, GHz.
    pub rms_residual: f64,
    /// Variances of `(omega_ar, g_ar_magnitude)`.
    pub covariance_diag: Vec<f64>,
    /// Both hypotheses fit within [`AMBIGUITY_RATIO`] of each other.
    pub ambiguous: bool,
    /// RMS residual of the rejected hypothesis.
    pub alternative_rms_residual: f64,
    pub samples: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BranchSample {
    omega_m: f64,
    value: f64,
    upper: bool,
}

/// Residuals of the effective two-level model for one `Φ_ar` hypothesis.
///
/// Parameters are `(ω_ar − center, |g_ar|)`. Each non-merged sample gives
/// one residual; every merge boundary adds `((ω_ar − ω_b)² + 4g²cos Φ_ar)/(4g₀)`,
/// which vanishes when the model's exceptional point sits on the boundary.
#[derive(Debug, Clone)]
pub struct EffectiveProblem {
    samples: Vec<BranchSample>,
    boundaries: Vec<f64>,
    center: f64,
    cos_phi: f64,
    g_scale: f64,
}

impl EffectiveProblem {
    pub fn new(branch: &AntiresonanceBranch, phi_ar: f64) -> Self {
        let mut samples = Vec::new();
        for i in 0..branch.len() {
            if branch.merged_mask[i] {
                continue;
            }
            let omega_m = branch.magnon_frequencies[i];
            if let Some(v) = branch.lower[i] {
                samples.push(BranchSample {
                    omega_m,
                    value: v,
                    upper: false,
                });
            }
            if let Some(v) = branch.upper[i] {
                samples.push(BranchSample {
                    omega_m,
                    value: v,
                    upper: true,
                });
            }
        }
        let boundaries = branch
            .merged_mask
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| 0.5 * (branch.magnon_frequencies[i] + branch.magnon_frequencies[i + 1]))
            .collect();
        let center = if branch.is_empty() {
            0.0
        } else {
            0.5 * (branch.magnon_frequencies[0] + branch.magnon_frequencies[branch.len() - 1])
        };
        let mut problem = Self {
            samples,
            boundaries,
            center,
            cos_phi: phi_ar.cos().round(),
            g_scale: 1.0,
        };
        problem.g_scale = problem.initial_guess(branch)[1].max(1e-6);
        problem
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// `(ω_ar − center, |g_ar|)` from the far-detuned asymptote and the gap or merge width.
    pub fn initial_guess(&self, branch: &AntiresonanceBranch) -> [f64; 2] {
        let omega_ar = self
            .samples
            .iter()
            .max_by(|a, b| (a.value - a.omega_m).abs().total_cmp(&(b.value - b.omega_m).abs()))
            .map_or(self.center, |s| s.value);
        let merged: Vec<f64> = (0..branch.len())
            .filter(|&i| branch.merged_mask[i])
            .map(|i| branch.magnon_frequencies[i])
            .collect();
        let g = if let (Some(lo), Some(hi)) = (
            merged.iter().copied().reduce(f64::min),
            merged.iter().copied().reduce(f64::max),
        ) {
            let step = if branch.len() > 1 {
                (branch.magnon_frequencies[branch.len() - 1] - branch.magnon_frequencies[0]).abs()
                    / (branch.len() - 1) as f64
            } else {
                0.0
            };
            (hi - lo + step) / 4.0
        } else {
            (0..branch.len())
                .filter_map(|i| match (branch.lower[i], branch.upper[i]) {
                    (Some(l), Some(u)) if !branch.merged_mask[i] => Some((u - l).abs() / 2.0),
                    _ => None,
                })
                .reduce(f64::min)
                .unwrap_or(0.0)
        };
        [omega_ar - self.center, g]
    }

    fn model(&self, x: &[f64], omega_m: f64, upper: bool) -> (f64, f64, f64) {
        let omega_ar = x[0] + self.center;
        let g = x[1];
        let det = omega_ar - omega_m;
        let disc = det * det + 4.0 * g * g * self.cos_phi;
        let mean = 0.5 * (omega_ar + omega_m);
        if disc > 0.0 {
            let s = disc.sqrt();
            let sign = if upper { 1.0 } else { -1.0 };
            (
                mean + sign * 0.5 * s,
                0.5 + sign * 0.5 * det / s,
                sign * 2.0 * g * self.cos_phi / s,
            )
        } else {
            (mean, 0.5, 0.0)
        }
    }
}

impl Problem for EffectiveProblem {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self
            .samples
            .iter()
            .map(|s| self.model(x, s.omega_m, s.upper).0 - s.value)
            .collect();
        let omega_ar = x[0] + self.center;
        for &b in &self.boundaries {
            let d = omega_ar - b;
            r.push((d * d + 4.0 * x[1] * x[1] * self.cos_phi) / (4.0 * self.g_scale));
        }
        r
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.samples.len() + self.boundaries.len();
        let mut j = DMatrix::zeros(m, 2);
        for (row, s) in self.samples.iter().enumerate() {
            let (_, d0, d1) = self.model(x, s.omega_m, s.upper);
            j[(row, 0)] = d0;
            j[(row, 1)] = d1;
        }
        let omega_ar = x[0] + self.center;
        for (k, &b) in self.boundaries.iter().enumerate() {
            let row = self.samples.len() + k;
            j[(row, 0)] = 2.0 * (omega_ar - b) / (4.0 * self.g_scale);
            j[(row, 1)] = 8.0 * x[1] * self.cos_phi / (4.0 * self.g_scale);
        }
        j
    }
}

struct Hypothesis {
    phi_ar: f64,
    params: Vec<f64>,
    ssr: f64,
    sample_rms: f64,
    covariance: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Hypothesis {
    fn into_error(self) -> FitError {
        FitError::NotConverged {
            phi_ar: self.phi_ar,
            omega_ar: self.params[0],
            g_ar_magnitude: self.params[1],
            ssr: self.ssr,
            iterations: self.iterations,
        }
    }
}

/// Fits one hypothesis; a run that exhausts its iterations still reports its best point.
fn fit_hypothesis(branch: &AntiresonanceBranch, phi_ar: f64) -> Result<Hypothesis, FitError> {
    let problem = EffectiveProblem::new(branch, phi_ar);
    let x0 = problem.initial_guess(branch);
    let n = problem.sample_count();
    let sample_rms = |r: &[f64]| (r[..n].iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    match lm::minimize(&problem, &x0, LmOptions::default()) {
        Ok(report) => Ok(Hypothesis {
            phi_ar,
            params: vec![report.params[0] + problem.center, report.params[1].abs()],
            ssr: report.ssr,
            sample_rms: sample_rms(&report.residuals),
            covariance: report.covariance_diag(),
            iterations: report.iterations,
            converged: true,
        }),
        Err(LmError::NotConverged { best, ssr, iterations }) => Ok(Hypothesis {
            phi_ar,
            params: vec![best[0] + problem.center, best[1].abs()],
            ssr,
            sample_rms: sample_rms(&problem.residuals(&best)),
            covariance: vec![f64::NAN; 2],
            iterations,
            converged: false,
        }),
        Err(LmError::NonFinite) => Err(FitError::NonFinite),
    }
}

/// Fits `ω_ar± = ½[ω_ar + ω_m ± √((ω_ar − ω_m)² + 4|g_ar|²e^{iΦ_ar})]` to
/// extracted branches for `Φ_ar = 0` and `Φ_ar = π`, keeping the better one.
pub fn fit_effective_model(branch: &AntiresonanceBranch) -> Result<EffectiveCouplingFit, FitError> {
    let usable = branch.usable_samples();
    if usable < MIN_BRANCH_SAMPLES {
        return Err(FitError::InsufficientSamples {
            usable,
            needed: MIN_BRANCH_SAMPLES,
        });
    }
    let (repulsive, attractive) = (fit_hypothesis(branch, 0.0), fit_hypothesis(branch, PI));
    let (best, other) = match (repulsive, attractive) {
        (Ok(r), Ok(a)) => {
            if r.ssr <= a.ssr {
                (r, Some(a))
            } else {
                (a, Some(r))
            }
        }
        (Ok(h), Err(_)) | (Err(_), Ok(h)) => (h, None),
        (Err(e), Err(_)) => return Err(e),
    };
    if !best.converged {
        return Err(best.into_error());
    }
    let ambiguous = other
        .as_ref()
        .is_some_and(|o| (o.ssr - best.ssr).abs() <= AMBIGUITY_RATIO * o.ssr.max(best.ssr));
    Ok(EffectiveCouplingFit {
        omega_ar: best.params[0],
        g_ar_magnitude: best.params[1],
        phi_ar: best.phi_ar,
        verdict: if best.phi_ar == 0.0 {
            CouplingBehavior::Repulsion
        } else {
            CouplingBehavior::Attraction
        },
        rms_residual: best.sample_rms,
        covariance_diag: best.covariance,
        ambiguous,
        alternative_rms_residual: other.map_or(f64::NAN, |o| o.sample_rms),
        samples: usable,
        iterations: best.iterations,
    })
}

/// A continuously adjustable parameter of a [`SystemSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    PhotonFrequency(usize),
    MagnonFrequency(usize),
    /// Total external damping of a photon mode; the split between ports is kept.
    PhotonGamma(usize),
    MagnonCoupling {
        photon: usize,
        magnon: usize,
    },
}

impl FitParameter {
    pub fn name(&self, spec: &SystemSpec) -> String {
        let photon = |p: usize| {
            spec.photon_modes
                .get(p)
                .map_or(format!("photon[{p}]"), |m| m.label.clone())
        };
        let magnon = |m: usize| {
            spec.magnon_modes
                .get(m)
                .map_or(format!("magnon[{m}]"), |x| x.label.clone())
        };
        match *self {
            Self::PhotonFrequency(p) => format!("{}.frequency", photon(p)),
            Self::MagnonFrequency(m) => format!("{}.frequency", magnon(m)),
            Self::PhotonGamma(p) => format!("{}.gamma", photon(p)),
            Self::MagnonCoupling { photon: p, magnon: m } => format!("{}-{}.g", photon(p), magnon(m)),
        }
    }

    fn check(&self, spec: &SystemSpec) -> Result<(), ModelError> {
        let np = spec.photon_modes.len();
        let nm = spec.magnon_modes.len();
        let out = |kind, index, count| Err(ModelError::IndexOutOfRange { kind, index, count });
        match *self {
            Self::PhotonFrequency(p) | Self::PhotonGamma(p) if p >= np => out("photon", p, np),
            Self::MagnonFrequency(m) if m >= nm => out("magnon", m, nm),
            Self::MagnonCoupling { photon, .. } if photon >= np => out("photon", photon, np),
            Self::MagnonCoupling { magnon, .. } if magnon >= nm => out("magnon", magnon, nm),
            _ => Ok(()),
        }
    }

    pub fn get(&self, spec: &SystemSpec) -> f64 {
        match *self {
            Self::PhotonFrequency(p) => spec.photon_modes[p].frequency,
            Self::MagnonFrequency(m) => spec.magnon_modes[m].frequency,
            Self::PhotonGamma(p) => spec.photon_modes[p].total_gamma(),
            Self::MagnonCoupling { photon, magnon } => spec.photon_modes[photon]
                .magnon_couplings
                .iter()
                .filter(|c| c.magnon == magnon)
                .map(|c| c.g)
                .sum(),
        }
    }

    pub fn set(&self, spec: &mut SystemSpec, value: f64) {
        match *self {
            Self::PhotonFrequency(p) => spec.photon_modes[p].frequency = value,
            Self::MagnonFrequency(m) => spec.magnon_modes[m].frequency = value,
            Self::PhotonGamma(p) => {
                let mode = &mut spec.photon_modes[p];
                let total = mode.total_gamma();
                let count = mode.port_couplings.len().max(1) as f64;
                for c in &mut mode.port_couplings {
                    c.gamma = if total > 0.0 {
                        c.gamma / total * value
                    } else {
                        value / count
                    };
                }
            }
            Self::MagnonCoupling { photon, magnon } => {
                let mode = &mut spec.photon_modes[photon];
                mode.magnon_couplings.retain(|c| c.magnon != magnon);
                mode.magnon_couplings
                    .push(crate::model::MagnonCoupling { magnon, g: value });
            }
        }
    }

    /// Natural size used to normalise the parameter: the mode linewidth for
    /// frequencies, otherwise the value itself, never below 1 MHz.
    pub fn scale(&self, spec: &SystemSpec) -> f64 {
        let s = match *self {
            Self::PhotonFrequency(p) => {
                let m = &spec.photon_modes[p];
                m.total_gamma() + m.intrinsic_loss
            }
            Self::MagnonFrequency(m) => spec.magnon_modes[m].intrinsic_loss,
            _ => self.get(spec).abs(),
        };
        s.max(1e-3)
    }
}

/// Log-magnitude S21 residuals of a spec against a measured trace, in
/// normalised parameters `x_k = (θ_k − θ0_k)/scale_k`.
#[derive(Debug, Clone)]
pub struct SpectrumProblem {
    base: SystemSpec,
    params: Vec<FitParameter>,
    origin: Vec<f64>,
    scales: Vec<f64>,
    freqs: Vec<f64>,
    target_db: Vec<f64>,
}

fn floored_db(z: Complex64) -> f64 {
    10.0 * (z.norm_sqr() + POWER_FLOOR).log10()
}

impl SpectrumProblem {
    pub fn new(trace: &Trace, initial: &SystemSpec, params: &[FitParameter]) -> Result<Self, FitError> {
        if initial.n_ports < 2 {
            return Err(FitError::NeedsTwoPorts);
        }
        for p in params {
            p.check(initial)?;
        }
        Ok(Self {
            base: initial.clone(),
            params: params.to_vec(),
            origin: params.iter().map(|p| p.get(initial)).collect(),
            scales: params.iter().map(|p| p.scale(initial)).collect(),
            freqs: trace.freqs().to_vec(),
            target_db: trace.values().iter().map(|&z| floored_db(z)).collect(),
        })
    }

    pub fn spec_at(&self, x: &[f64]) -> SystemSpec {
        let mut spec = self.base.clone();
        for (k, p) in self.params.iter().enumerate() {
            p.set(&mut spec, self.origin[k] + x[k] * self.scales[k]);
        }
        spec
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Residuals and, when requested, their Jacobian.
    fn evaluate(&self, x: &[f64], with_jacobian: bool) -> Result<(Vec<f64>, DMatrix<f64>), FitError> {
        let spec = self.spec_at(x);
        let np = spec.photon_modes.len();
        let k = spec.port_matrix();
        let n = spec.mode_count();
        let kmat = DMatrix::from_fn(n, spec.n_ports, |r, c| k[r][c]);
        let base = crate::engine::build_omega(&spec, 0.0).matrix;
        let cols = if with_jacobian { self.params.len() } else { 0 };
        let mut res = Vec::with_capacity(self.freqs.len());
        let mut jac = DMatrix::zeros(self.freqs.len(), cols);
        for (row, &f) in self.freqs.iter().enumerate() {
            let mut omega = base.clone();
            for d in 0..n {
                omega[(d, d)] += f;
            }
            let x_inv = omega.lu().try_inverse().ok_or(EngineError::Singular {
                freq: f,
                condition: f64::INFINITY,
            })?;
            // a = Kᵗ[1,:]·X, b = X·K*[:,0]
            let a: Vec<Complex64> = (0..n)
                .map(|q| (0..n).map(|p| kmat[(p, 1)] * x_inv[(p, q)]).sum())
                .collect();
            let b: Vec<Complex64> = (0..n)
                .map(|p| (0..n).map(|q| x_inv[(p, q)] * kmat[(q, 0)].conj()).sum())
                .collect();
            let s21: Complex64 = -I * (0..n).map(|p| kmat[(p, 1)] * b[p]).sum::<Complex64>();
            let power = s21.norm_sqr() + POWER_FLOOR;
            res.push(10.0 * power.log10() - self.target_db[row]);
            if !with_jacobian {
                continue;
            }
            for (c, param) in self.params.iter().enumerate() {
                let ds = match *param {
                    FitParameter::PhotonFrequency(p) => -I * a[p] * b[p],
                    FitParameter::MagnonFrequency(m) => -I * a[np + m] * b[np + m],
                    FitParameter::MagnonCoupling { photon, magnon } => {
                        let m = np + magnon;
                        -I * (a[photon] * b[m] + a[m] * b[photon])
                    }
                    FitParameter::PhotonGamma(p) => {
                        let total = spec.photon_modes[p].total_gamma();
                        if total <= 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            let h = 1.0 / (2.0 * total);
                            let kb: Complex64 = (0..spec.n_ports)
                                .map(|nn| {
                                    kmat[(p, nn)].conj() * (0..n).map(|s| kmat[(s, nn)] * b[s]).sum::<Complex64>()
                                })
                                .sum();
                            let ak: Complex64 = (0..spec.n_ports)
                                .map(|nn| {
                                    kmat[(p, nn)] * (0..n).map(|r| a[r] * kmat[(r, nn)].conj()).sum::<Complex64>()
                                })
                                .sum();
                            let a_domega_b = 0.5 * I * h * (a[p] * kb + b[p] * ak);
                            -I * (h * kmat[(p, 1)] * b[p] - a_domega_b + h * a[p] * kmat[(p, 0)].conj())
                        }
                    }
                };
                jac[(row, c)] = 20.0 / LN_10 * (s21.conj() * ds).re / power * self.scales[c];
            }
        }
        if res.iter().any(|r| !r.is_finite()) {
            return Err(FitError::NonFinite);
        }
        Ok((res, jac))
    }

    /// Names of parameters spanning the near-null space of the normalised `JᵀJ`.
    pub fn unidentifiable(&self, x: &[f64]) -> Result<Vec<String>, FitError> {
        let (_, j) = self.evaluate(x, true)?;
        let n = j.ncols();
        if n == 0 {
            return Ok(Vec::new());
        }
        let norms: Vec<f64> = j.column_iter().map(|c| c.norm()).collect();
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        let mut names: Vec<String> = Vec::new();
        let dead: Vec<bool> = norms
            .iter()
            .map(|&v| v <= 1e-12 * max_norm.max(f64::MIN_POSITIVE))
            .collect();
        for (param, _) in self.params.iter().zip(&dead).filter(|(_, &d)| d) {
            names.push(param.name(&self.base));
        }
        let live: Vec<usize> = (0..n).filter(|&c| !dead[c]).collect();
        if live.len() > 1 {
            let jn = DMatrix::from_fn(j.nrows(), live.len(), |r, c| j[(r, live[c])] / norms[live[c]]);
            let eig = SymmetricEigen::new(jn.transpose() * &jn);
            let top = eig.eigenvalues.amax();
            for (e, &val) in eig.eigenvalues.iter().enumerate() {
                if val <= 1e-10 * top {
                    for (c, &idx) in live.iter().enumerate() {
                        let name = self.params[idx].name(&self.base);
                        if eig.eigenvectors[(c, e)].abs() > 0.1 && !names.contains(&name) {
                            names.push(name);
                        }
                    }
                }
            }
        }
        Ok(names)
    }
}

impl Problem for SpectrumProblem {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.evaluate(x, false)
            .map(|(r, _)| r)
            .unwrap_or_else(|_| vec![f64::NAN; self.freqs.len()])
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.evaluate(x, true)
            .map(|(_, j)| j)
            .unwrap_or_else(|_| DMatrix::from_element(self.freqs.len(), self.params.len(), f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterChange {
    pub parameter: FitParameter,
    pub name: String,
    pub initial: f64,
    pub fitted: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub spec: SystemSpec,
    pub changes: Vec<ParameterChange>,
    /// RMS of the dB residual at the start and end of the fit.
    pub initial_rms_db: f64,
    pub rms_db: f64,
    pub covariance_diag: Vec<f64>,
    pub iterations: usize,
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len().max(1) as f64).sqrt()
}

/// Refines the selected parameters of `initial` by least squares on
/// `20·log10|S21|` against `trace`. Port phases stay fixed.
pub fn fit_spectrum(trace: &Trace, initial: &SystemSpec, free: &[FitParameter]) -> Result<SpectrumFit, FitError> {
    let problem = SpectrumProblem::new(trace, initial, free)?;
    let x0 = vec![0.0; free.len()];
    let (r0, _) = problem.evaluate(&x0, false)?;
    let initial_rms_db = rms(&r0);
    if free.is_empty() {
        return Ok(SpectrumFit {
            spec: initial.clone(),
            changes: Vec::new(),
            initial_rms_db,
            rms_db: initial_rms_db,
            covariance_diag: Vec::new(),
            iterations: 0,
        });
    }
    let null = problem.unidentifiable(&x0)?;
    if !null.is_empty() {
        return Err(FitError::RankDeficient(null));
    }
    let report = lm::minimize(&problem, &x0, LmOptions::default()).map_err(|e| match e {
        LmError::NotConverged { best, ssr, iterations } => FitError::SpectrumNotConverged {
            best: best
                .iter()
                .zip(&problem.origin)
                .zip(problem.scales())
                .map(|((x, o), s)| o + x * s)
                .collect(),
            ssr,
            iterations,
        },
        LmError::NonFinite => FitError::NonFinite,
    })?;
    let spec = problem.spec_at(&report.params);
    let changes = free
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let fitted = p.get(&spec);
            ParameterChange {
                parameter: *p,
                name: p.name(&spec),
                initial: problem.origin[k],
                fitted,
                delta: fitted - problem.origin[k],
            }
        })
        .collect();
    let covariance_diag = report
        .covariance_diag()
        .iter()
        .zip(problem.scales())
        .map(|(c, s)| c * s * s)
        .collect();
    Ok(SpectrumFit {
        spec,
        changes,
        initial_rms_db,
        rms_db: rms(&report.residuals),
        covariance_diag,
        iterations: report.iterations,
    })
}

/// Samples noiseless effective-model branches on a magnon grid. Columns
/// where the model's real parts coincide are marked merged and carry the
/// common value in both slots.
pub fn synthesize_branches(
    omega_ar: f64,
    g_ar_magnitude: f64,
    phi_ar: f64,
    magnon_frequencies: &[f64],
    drive_step: f64,
) -> AntiresonanceBranch {
    let mut lower = Vec::with_capacity(magnon_frequencies.len());
    let mut upper = Vec::with_capacity(magnon_frequencies.len());
    let mut merged = Vec::with_capacity(magnon_frequencies.len());
    for &wm in magnon_frequencies {
        let (p, m) = crate::closed_forms::antires_branches(Complex64::new(omega_ar, 0.0), wm, g_ar_magnitude, phi_ar);
        let (lo, hi) = if p.re <= m.re { (p.re, m.re) } else { (m.re, p.re) };
        let fused = (hi - lo).abs() <= 1e-12 * hi.abs().max(1.0) && (p.im - m.im).abs() > 0.0;
        merged.push(fused);
        lower.push(Some(lo));
        upper.push(Some(hi));
    }
    AntiresonanceBranch {
        magnon_frequencies: magnon_frequencies.to_vec(),
        lower,
        upper,
        merged_mask: merged,
        drive_step,
    }
}
