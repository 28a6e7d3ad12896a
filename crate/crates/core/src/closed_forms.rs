//! Analytic transmissions and effective-coupling expressions for systems
//! of one or two photon modes, at most one magnon, and two ports.
//!
//! Conventions match the engine: `κ_pn = √γ_pn·e^{iφ_pn}`, `S21` is the
//! transmission from port 0 to port 1, all quantities in GHz.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CouplingBehavior, MagnonMode, PhaseJump, PhotonMode, PortCoupling, SystemSpec};

/// Separation below which two poles or branches count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

const PHASE_TOL: f64 = 1e-9;
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("no finite antiresonance: 1 + δ·e^{{iΦ}} vanishes")]
    NoFiniteAntiresonance,
    #[error("degenerate poles (separation {separation:.3e} GHz)")]
    Degenerate { separation: f64 },
    #[error("phase {0} rad is neither 0 nor π")]
    InvalidPhase(f64),
    #[error("dissipation ratio must be positive, got {0}")]
    InvalidRatio(f64),
}

/// How the photon-photon crosstalk `Γ` enters the two-photon denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GammaPower {
    /// `|Γ|/4`, as typeset.
    Linear,
    /// `|Γ|²/4`, which agrees with the full S-matrix.
    #[default]
    Squared,
}

impl GammaPower {
    fn apply(self, gamma_abs: f64) -> f64 {
        match self {
            GammaPower::Linear => gamma_abs,
            GammaPower::Squared => gamma_abs * gamma_abs,
        }
    }
}

/// Two photon modes, two ports and one magnon.
///
/// `gamma[p][n]` and `phase[p][n]` describe mode `p` on port `n`. Systems
/// with a single photon mode use only index 0 and ignore `omega1`/`g1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeParams {
    pub omega0: f64,
    pub omega1: f64,
    pub gamma: [[f64; 2]; 2],
    pub phase: [[f64; 2]; 2],
    pub g0: f64,
    pub g1: f64,
    pub omega_m: f64,
}

impl TwoModeParams {
    /// One photon mode coupled to one magnon.
    pub fn photon_magnon(omega0: f64, gamma: [f64; 2], phase: [f64; 2], g0: f64, omega_m: f64) -> Self {
        Self {
            omega0,
            omega1: omega0,
            gamma: [gamma, [0.0; 2]],
            phase: [phase, [0.0; 2]],
            g0,
            g1: 0.0,
            omega_m,
        }
    }

    /// Two photon modes without magnon coupling.
    pub fn two_photons(omega0: f64, omega1: f64, gamma: [[f64; 2]; 2], phase: [[f64; 2]; 2]) -> Self {
        Self {
            omega0,
            omega1,
            gamma,
            phase,
            g0: 0.0,
            g1: 0.0,
            omega_m: 0.5 * (omega0 + omega1),
        }
    }

    pub fn kappa(&self, p: usize, n: usize) -> Complex64 {
        Complex64::from_polar(self.gamma[p][n].sqrt(), self.phase[p][n])
    }

    /// `ω̃_p = ω_p − (i/2)(γ_p0 + γ_p1)`.
    pub fn omega_tilde(&self, p: usize) -> Complex64 {
        let w = if p == 0 { self.omega0 } else { self.omega1 };
        Complex64::new(w, -0.5 * (self.gamma[p][0] + self.gamma[p][1]))
    }

    pub fn phi0(&self) -> f64 {
        self.phase[0][1] - self.phase[0][0]
    }

    pub fn phi1(&self) -> f64 {
        self.phase[1][1] - self.phase[1][0]
    }

    /// `Φ = Φ_1 − Φ_0`.
    pub fn phi(&self) -> f64 {
        self.phi1() - self.phi0()
    }

    /// `δ = √(γ_10γ_11 / γ_00γ_01)`.
    pub fn delta(&self) -> f64 {
        (self.gamma[1][0] * self.gamma[1][1] / (self.gamma[0][0] * self.gamma[0][1])).sqrt()
    }

    fn delta_phasor(&self) -> Complex64 {
        Complex64::from_polar(self.delta(), self.phi())
    }

    fn amp(&self, p: usize) -> f64 {
        (self.gamma[p][0] * self.gamma[p][1]).sqrt()
    }

    /// Crosstalk `Γ = Σ_n κ*_0n κ_1n`.
    pub fn crosstalk(&self) -> Complex64 {
        (0..2).map(|n| self.kappa(0, n).conj() * self.kappa(1, n)).sum()
    }

    /// `Γ_1`, the crosstalk correction to the two-photon numerator:
    /// `−(κ_01κ*_10·Γ + κ_11κ*_00·Γ*)`.
    pub fn gamma1(&self) -> Complex64 {
        let g = self.crosstalk();
        -(self.kappa(0, 1) * self.kappa(1, 0).conj() * g + self.kappa(1, 1) * self.kappa(0, 0).conj() * g.conj())
    }

    /// `Γ_2 = Γ_1 / (2(ω̃_1 − ω̃_0))`, the residue correction of the
    /// two-photon Lorentzian decomposition.
    pub fn gamma2(&self) -> Complex64 {
        self.gamma1() / (2.0 * (self.omega_tilde(1) - self.omega_tilde(0)))
    }

    /// `Γ_3`, the offset of the two-photon numerator from
    /// `√(γ_00γ_01)·e^{iΦ_0}(1 + δe^{iΦ})(ω − ω_ar)`. It vanishes identically.
    pub fn gamma3(&self) -> Complex64 {
        let g0tot = self.gamma[0][0] + self.gamma[0][1];
        let g1tot = self.gamma[1][0] + self.gamma[1][1];
        self.amp(0) * Complex64::from_polar(1.0, self.phi0()) * g1tot
            + self.amp(1) * Complex64::from_polar(1.0, self.phi1()) * g0tot
            + self.gamma1()
    }

    /// `Γ_4 = κ*_00κ_11 + κ*_10κ_01`, the weight of the `g_0g_1` term.
    pub fn gamma4(&self) -> Complex64 {
        self.kappa(0, 0).conj() * self.kappa(1, 1) + self.kappa(1, 0).conj() * self.kappa(0, 1)
    }

    /// Cross term `C` of the effective coupling, `−Γ_4·e^{−iΦ_0}/√(γ_00γ_01)`,
    /// i.e. `−[√(γ_11/γ_01)e^{i(φ_11−φ_01)} + √(γ_10/γ_00)e^{i(φ_00−φ_10)}]`.
    pub fn cross_factor(&self) -> Complex64 {
        -self.gamma4() * Complex64::from_polar(1.0, -self.phi0()) / self.amp(0)
    }

    /// One photon (mode 0) and the magnon.
    pub fn photon_magnon_spec(&self) -> SystemSpec {
        SystemSpec::new(2)
            .with_magnon(MagnonMode::new("m", self.omega_m))
            .with_photon(self.photon(0).with_magnon_coupling(0, self.g0))
    }

    pub fn two_photon_spec(&self) -> SystemSpec {
        SystemSpec::new(2)
            .with_photon(self.photon(0))
            .with_photon(self.photon(1))
    }

    pub fn two_photon_magnon_spec(&self) -> SystemSpec {
        SystemSpec::new(2)
            .with_magnon(MagnonMode::new("m", self.omega_m))
            .with_photon(self.photon(0).with_magnon_coupling(0, self.g0))
            .with_photon(self.photon(1).with_magnon_coupling(0, self.g1))
    }

    fn photon(&self, p: usize) -> PhotonMode {
        let w = if p == 0 { self.omega0 } else { self.omega1 };
        PhotonMode::new(
            format!("c{p}"),
            w,
            (0..2)
                .map(|n| PortCoupling::new(self.gamma[p][n], self.phase[p][n]))
                .collect(),
        )
    }
}

/// A single pole term `residue / (ω − pole)`, with the residue written as
/// `−i·amplitude·e^{iΦ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianTerm {
    pub pole: Complex64,
    pub amplitude: Complex64,
    pub phase: f64,
}

impl LorentzianTerm {
    pub fn residue(&self) -> Complex64 {
        -I * self.amplitude * Complex64::from_polar(1.0, self.phase)
    }

    pub fn eval(&self, freq: f64) -> Complex64 {
        self.residue() / (freq - self.pole)
    }
}

/// Photon-magnon transmission
/// `S21 = −i√(γ_00γ_01)·Δ_m·e^{iΦ_0} / (Δ̃_0Δ_m − g_0²)`.
pub fn s21_photon_magnon(params: &TwoModeParams, freq: f64) -> Complex64 {
    let dm = Complex64::new(freq - params.omega_m, 0.0);
    let d0 = freq - params.omega_tilde(0);
    -I * params.amp(0) * dm * Complex64::from_polar(1.0, params.phi0()) / (d0 * dm - params.g0 * params.g0)
}

/// Polariton frequencies `ω_∓`, ordered by real part.
pub fn polariton_frequencies(params: &TwoModeParams) -> (Complex64, Complex64) {
    polaritons_of(params.omega_tilde(0), params.omega_m, params.g0)
}

fn polaritons_of(w: Complex64, omega_m: f64, g: f64) -> (Complex64, Complex64) {
    let mean = 0.5 * (w + omega_m);
    let half = 0.5 * ((omega_m - w).powi(2) + 4.0 * g * g).sqrt();
    let (a, b) = (mean - half, mean + half);
    if a.re <= b.re {
        (a, b)
    } else {
        (b, a)
    }
}

/// Splits the photon-magnon transmission into the lower- and upper-polariton
/// Lorentzians. Amplitudes are `√(γ_00γ_01)/(ω_+ − ω_−)·(ω_m − ω_−)` and
/// `√(γ_00γ_01)/(ω_+ − ω_−)·(ω_+ − ω_m)`, both with phase `Φ_0`.
pub fn lorentzian_decomposition_photon_magnon(params: &TwoModeParams) -> Result<[LorentzianTerm; 2], ClosedFormError> {
    let (lo, hi) = polariton_frequencies(params);
    let split = hi - lo;
    if split.norm() < DEGENERACY_TOL {
        return Err(ClosedFormError::Degenerate {
            separation: split.norm(),
        });
    }
    let scale = params.amp(0) / split;
    let phase = params.phi0();
    Ok([
        LorentzianTerm {
            pole: lo,
            amplitude: scale * (params.omega_m - lo),
            phase,
        },
        LorentzianTerm {
            pole: hi,
            amplitude: scale * (hi - params.omega_m),
            phase,
        },
    ])
}

/// `Φ_ar = Φ_0 + π`, reduced to `[0, 2π)`.
pub fn antires_phase_factor_photon_magnon(params: &TwoModeParams) -> f64 {
    (params.phi0() + PI).rem_euclid(TAU)
}

/// Two-photon transmission with the crosstalk entering as `|Γ|²/4`.
pub fn s21_two_photons(params: &TwoModeParams, freq: f64) -> Complex64 {
    s21_two_photons_with(params, freq, GammaPower::default())
}

/// `S21 = −i[√(γ_00γ_01)Δ̃_1e^{iΦ_0} + √(γ_10γ_11)Δ̃_0e^{iΦ_1} + (i/2)Γ_1] / (Δ̃_0Δ̃_1 + |Γ|^k/4)`.
pub fn s21_two_photons_with(params: &TwoModeParams, freq: f64, power: GammaPower) -> Complex64 {
    let d0 = freq - params.omega_tilde(0);
    let d1 = freq - params.omega_tilde(1);
    let num = params.amp(0) * d1 * Complex64::from_polar(1.0, params.phi0())
        + params.amp(1) * d0 * Complex64::from_polar(1.0, params.phi1())
        + 0.5 * I * params.gamma1();
    let den = d0 * d1 + 0.25 * power.apply(params.crosstalk().norm());
    -I * num / den
}

/// Exact two-photon resonances `½[ω̃_0 + ω̃_1 ∓ √((ω̃_1 − ω̃_0)² − |Γ|^k)]`, ordered by real part.
pub fn two_photon_resonances(params: &TwoModeParams, power: GammaPower) -> (Complex64, Complex64) {
    let (w0, w1) = (params.omega_tilde(0), params.omega_tilde(1));
    let mean = 0.5 * (w0 + w1);
    let half = 0.5 * ((w1 - w0).powi(2) - power.apply(params.crosstalk().norm())).sqrt();
    let (a, b) = (mean - half, mean + half);
    if a.re <= b.re {
        (a, b)
    } else {
        (b, a)
    }
}

/// Exact partial fractions of the two-photon transmission over its two poles.
/// The term phases are `Φ_0` and `Φ_1`; amplitudes carry the rest.
pub fn lorentzian_decomposition_two_photons(params: &TwoModeParams) -> Result<[LorentzianTerm; 2], ClosedFormError> {
    let (lo, hi) = two_photon_resonances(params, GammaPower::Squared);
    let split = hi - lo;
    if split.norm() < DEGENERACY_TOL {
        return Err(ClosedFormError::Degenerate {
            separation: split.norm(),
        });
    }
    let num = |w: Complex64| {
        params.amp(0) * (w - params.omega_tilde(1)) * Complex64::from_polar(1.0, params.phi0())
            + params.amp(1) * (w - params.omega_tilde(0)) * Complex64::from_polar(1.0, params.phi1())
            + 0.5 * I * params.gamma1()
    };
    // Poles ordered by real part follow the bare modes when ω_0 < ω_1.
    let (p0, p1) = if params.omega0 <= params.omega1 {
        (lo, hi)
    } else {
        (hi, lo)
    };
    Ok([
        LorentzianTerm {
            pole: p0,
            amplitude: num(p0) / (p0 - p1) * Complex64::from_polar(1.0, -params.phi0()),
            phase: params.phi0(),
        },
        LorentzianTerm {
            pole: p1,
            amplitude: num(p1) / (p1 - p0) * Complex64::from_polar(1.0, -params.phi1()),
            phase: params.phi1(),
        },
    ])
}

/// Lorentzian form valid when `|ω_1 − ω_0| ≫ |Γ|`: poles at the bare
/// `ω̃_0`, `ω̃_1` and residues `−i(√(γ_00γ_01)e^{iΦ_0} − iΓ_2)` and
/// `−i(√(γ_10γ_11)e^{iΦ_1} + iΓ_2)`.
pub fn approx_lorentzians_two_photons(params: &TwoModeParams) -> [LorentzianTerm; 2] {
    let g2 = params.gamma2();
    let term = |p: usize, phase: f64, corr: Complex64| LorentzianTerm {
        pole: params.omega_tilde(p),
        amplitude: params.amp(p) + corr * Complex64::from_polar(1.0, -phase),
        phase,
    };
    [term(0, params.phi0(), -I * g2), term(1, params.phi1(), I * g2)]
}

/// `ω_ar = (ω_1 + δe^{iΦ}ω_0) / (1 + δe^{iΦ})`.
pub fn antires_freq_two_photons(params: &TwoModeParams) -> Result<Complex64, ClosedFormError> {
    let e = params.delta_phasor();
    let den = 1.0 + e;
    if den.norm() < DEGENERACY_TOL {
        return Err(ClosedFormError::NoFiniteAntiresonance);
    }
    Ok((params.omega1 + e * params.omega0) / den)
}

/// Where the two-photon antiresonance lies relative to the modes, with `ω_0 < ω_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AntiresRegime {
    Between,
    BelowLower,
    AboveUpper,
}

/// `true` for a phase of π, `false` for 0, modulo 2π.
fn phase_is_pi(phi: f64) -> Result<bool, ClosedFormError> {
    let r = phi.rem_euclid(TAU);
    if r < PHASE_TOL || TAU - r < PHASE_TOL {
        Ok(false)
    } else if (r - PI).abs() < PHASE_TOL {
        Ok(true)
    } else {
        Err(ClosedFormError::InvalidPhase(phi))
    }
}

pub fn classify_antires_regime(delta: f64, phi: f64) -> Result<AntiresRegime, ClosedFormError> {
    if !(delta > 0.0) {
        return Err(ClosedFormError::InvalidRatio(delta));
    }
    if !phase_is_pi(phi)? {
        return Ok(AntiresRegime::Between);
    }
    if delta > 1.0 {
        Ok(AntiresRegime::BelowLower)
    } else if delta < 1.0 {
        Ok(AntiresRegime::AboveUpper)
    } else {
        Err(ClosedFormError::NoFiniteAntiresonance)
    }
}

/// Jump direction of a feature whose normalised phase factor is `e^{iX}`:
/// `X = 0` gives a negative jump, `X = π` a positive one.
pub fn phase_jump_from_factor(factor: f64) -> Result<PhaseJump, ClosedFormError> {
    Ok(if phase_is_pi(factor)? {
        PhaseJump::Positive
    } else {
        PhaseJump::Negative
    })
}

/// Phase jumps of the two resonances and the antiresonance of a two-photon system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoPhotonJumps {
    pub mode0: PhaseJump,
    pub mode1: PhaseJump,
    pub antiresonance: PhaseJump,
}

/// The antiresonance factor is `Φ_0 + arg(1 + δe^{iΦ})`, plus π when the
/// antiresonance lies between the modes (one pole factor changes sign).
pub fn two_photon_phase_jumps(params: &TwoModeParams) -> Result<TwoPhotonJumps, ClosedFormError> {
    let w_ar = antires_freq_two_photons(params)?;
    let (lo, hi) = (params.omega0.min(params.omega1), params.omega0.max(params.omega1));
    let between = w_ar.re > lo && w_ar.re < hi;
    let factor = params.phi0() + (1.0 + params.delta_phasor()).arg() + if between { PI } else { 0.0 };
    Ok(TwoPhotonJumps {
        mode0: phase_jump_from_factor(params.phi0())?,
        mode1: phase_jump_from_factor(params.phi1())?,
        antiresonance: phase_jump_from_factor(factor)?,
    })
}

/// Two photons plus magnon with `|Γ|²/4` crosstalk.
pub fn s21_two_photons_magnon(params: &TwoModeParams, freq: f64) -> Complex64 {
    s21_two_photons_magnon_with(params, freq, GammaPower::default())
}

/// `S21 = −i·N/D` with
/// `N = √(γ_00γ_01)(Δ̃_1Δ_m − g_1²)e^{iΦ_0} + √(γ_10γ_11)(Δ̃_0Δ_m − g_0²)e^{iΦ_1} + Γ_4g_0g_1 + (i/2)Γ_1Δ_m` and
/// `D = Δ̃_0Δ̃_1Δ_m − g_0²Δ̃_1 − g_1²Δ̃_0 + |Γ|^k/4·Δ_m + (i/2)(Γ + Γ*)g_0g_1`.
pub fn s21_two_photons_magnon_with(params: &TwoModeParams, freq: f64, power: GammaPower) -> Complex64 {
    let d0 = freq - params.omega_tilde(0);
    let d1 = freq - params.omega_tilde(1);
    let dm = Complex64::new(freq - params.omega_m, 0.0);
    let (g0, g1) = (params.g0, params.g1);
    let gamma = params.crosstalk();
    let num = params.amp(0) * (d1 * dm - g1 * g1) * Complex64::from_polar(1.0, params.phi0())
        + params.amp(1) * (d0 * dm - g0 * g0) * Complex64::from_polar(1.0, params.phi1())
        + params.gamma4() * g0 * g1
        + 0.5 * I * params.gamma1() * dm;
    let den = d0 * d1 * dm - g0 * g0 * d1 - g1 * g1 * d0
        + 0.25 * power.apply(gamma.norm()) * dm
        + 0.5 * I * (gamma + gamma.conj()) * g0 * g1;
    -I * num / den
}

/// Resonances `Ω_− = ω_0^−`, `Ω_0 = ω_0^+ + ω_1^− − ω_m`, `Ω_+ = ω_1^+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeResonances {
    pub lower: Complex64,
    pub middle: Complex64,
    pub upper: Complex64,
    /// Set when both magnon couplings vanish: the middle entry then has no
    /// physical counterpart.
    pub middle_spurious: bool,
}

pub fn three_resonances(params: &TwoModeParams) -> ThreeResonances {
    let (l0, u0) = polaritons_of(params.omega_tilde(0), params.omega_m, params.g0);
    let (l1, u1) = polaritons_of(params.omega_tilde(1), params.omega_m, params.g1);
    ThreeResonances {
        lower: l0,
        middle: u0 + l1 - params.omega_m,
        upper: u1,
        middle_spurious: params.g0 == 0.0 && params.g1 == 0.0,
    }
}

/// Effective coupling between the bare antiresonance and the magnon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAntiresonance {
    pub omega_ar: Complex64,
    pub g_ar: Complex64,
    pub g_ar_squared: Complex64,
    pub g_ar_magnitude: f64,
    /// 0 when `Re(g_ar²) ≥ 0`, π otherwise.
    pub phi_ar: f64,
    /// `arg(g_ar²)`, which is 0 or ±π only in the limits of pure repulsion or attraction.
    pub argument: f64,
    pub verdict: CouplingBehavior,
}

impl EffectiveAntiresonance {
    /// `ω_ar±` at a given magnon frequency.
    pub fn branches(&self, omega_m: f64) -> (Complex64, Complex64) {
        antires_branches(self.omega_ar, omega_m, self.g_ar_magnitude, self.phi_ar)
    }
}

/// `g_ar = √[(g_1² + δe^{iΦ}g_0² + C·g_0g_1) / (1 + δe^{iΦ})]`.
pub fn effective_coupling(params: &TwoModeParams) -> Result<EffectiveAntiresonance, ClosedFormError> {
    let omega_ar = antires_freq_two_photons(params)?;
    let e = params.delta_phasor();
    let (g0, g1) = (params.g0, params.g1);
    let g2 = (g1 * g1 + e * g0 * g0 + params.cross_factor() * g0 * g1) / (1.0 + e);
    let verdict = if g2.re >= 0.0 {
        CouplingBehavior::Repulsion
    } else {
        CouplingBehavior::Attraction
    };
    // Principal root, rotated onto +i when it is purely imaginary.
    let mut g_ar = g2.sqrt();
    if g_ar.re <= 1e-12 * g_ar.norm() && g_ar.im < 0.0 {
        g_ar = -g_ar;
    }
    Ok(EffectiveAntiresonance {
        omega_ar,
        g_ar,
        g_ar_squared: g2,
        g_ar_magnitude: g2.norm().sqrt(),
        phi_ar: if verdict == CouplingBehavior::Repulsion {
            0.0
        } else {
            PI
        },
        argument: g2.arg(),
        verdict,
    })
}

/// `ω_ar± = ½[ω_ar + ω_m ± √((ω_ar − ω_m)² + 4|g_ar|²e^{iΦ_ar})]`, returned as `(ω_ar+, ω_ar−)`.
pub fn antires_branches(omega_ar: Complex64, omega_m: f64, g_ar_magnitude: f64, phi_ar: f64) -> (Complex64, Complex64) {
    let mean = 0.5 * (omega_ar + omega_m);
    let disc =
        (omega_ar - omega_m).powi(2) + 4.0 * g_ar_magnitude * g_ar_magnitude * Complex64::from_polar(1.0, phi_ar);
    let half = 0.5 * disc.sqrt();
    (mean + half, mean - half)
}

/// Eigenvalues of `[[ω_ar, g], [g·e^{iΦ_ar}, ω_m]]`. They coincide with
/// [`antires_branches`] as an unordered pair.
pub fn effective_hamiltonian_eigenvalues(
    omega_ar: Complex64,
    omega_m: f64,
    g_ar_magnitude: f64,
    phi_ar: f64,
) -> (Complex64, Complex64) {
    let h = [
        [omega_ar, Complex64::new(g_ar_magnitude, 0.0)],
        [
            g_ar_magnitude * Complex64::from_polar(1.0, phi_ar),
            Complex64::new(omega_m, 0.0),
        ],
    ];
    eigenvalues_2x2(h)
}

/// Eigenvalues of a general complex 2×2 matrix from the characteristic
/// polynomial of the trace-free part, as `(μ + s, μ − s)`.
pub fn eigenvalues_2x2(m: [[Complex64; 2]; 2]) -> (Complex64, Complex64) {
    let mu = 0.5 * (m[0][0] + m[1][1]);
    let a = m[0][0] - mu;
    let d = m[1][1] - mu;
    // det of the shifted matrix; λ'² = −det.
    let det = a * d - m[0][1] * m[1][0];
    let s = (-det).sqrt();
    (mu + s, mu - s)
}

/// Largest deviation between two unordered pairs under the better matching.
pub fn pair_distance(a: (Complex64, Complex64), b: (Complex64, Complex64)) -> f64 {
    let straight = (a.0 - b.0).norm().max((a.1 - b.1).norm());
    let crossed = (a.0 - b.1).norm().max((a.1 - b.0).norm());
    straight.min(crossed)
}

/// Re-pairs a sequence of unordered branch pairs so that each branch moves
/// continuously, by minimum total distance to the previous pair.
pub fn track_branches(pairs: &[(Complex64, Complex64)]) -> Vec<(Complex64, Complex64)> {
    let mut out: Vec<(Complex64, Complex64)> = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let next = match out.last() {
            None => (a, b),
            Some(&(pa, pb)) => {
                if (a - pa).norm() + (b - pb).norm() <= (a - pb).norm() + (b - pa).norm() {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        };
        out.push(next);
    }
    out
}
