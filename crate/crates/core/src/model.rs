//! Domain types for photon modes, magnon modes, ports and their couplings.
//!
//! All frequencies, damping rates and coupling strengths are ordinary
//! frequencies in GHz (the `ω/2π` values), never angular frequencies.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coupling strength relative to the mode frequencies above which the
/// rotating-wave description stops being trustworthy.
pub const RWA_LIMIT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid system: {}", join_messages(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("invalid frequency grid: {0}")]
    Grid(String),
    #[error("mode index {index} out of range ({count} {kind} modes)")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        count: usize,
    },
}

fn join_messages(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// External coupling of one mode to one port, `κ = √γ·e^{iφ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortCoupling {
    /// External damping rate in GHz.
    pub gamma: f64,
    /// Coupling phase in radians; canonically 0 or π.
    pub phase: f64,
}

impl PortCoupling {
    pub fn new(gamma: f64, phase: f64) -> Self {
        Self { gamma, phase }
    }

    pub fn kappa(&self) -> Complex64 {
        Complex64::from_polar(self.gamma.max(0.0).sqrt(), self.phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnonCoupling {
    pub magnon: usize,
    /// Real coupling strength `g` in GHz.
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonMode {
    pub label: String,
    pub frequency: f64,
    /// Optional non-port damping in GHz, entering as `-(i/2)·loss` on the
    /// mode frequency.
    pub intrinsic_loss: f64,
    pub port_couplings: Vec<PortCoupling>,
    pub magnon_couplings: Vec<MagnonCoupling>,
}

impl PhotonMode {
    pub fn new(label: impl Into<String>, frequency: f64, port_couplings: Vec<PortCoupling>) -> Self {
        Self {
            label: label.into(),
            frequency,
            intrinsic_loss: 0.0,
            port_couplings,
            magnon_couplings: Vec::new(),
        }
    }

    /// Mode with total external damping `frequency / q` split equally over
    /// `phases.len()` ports.
    pub fn from_quality_factor(label: impl Into<String>, frequency: f64, q: f64, phases: &[f64]) -> Self {
        let per_port = frequency / q / phases.len() as f64;
        let ports = phases.iter().map(|&p| PortCoupling::new(per_port, p)).collect();
        Self::new(label, frequency, ports)
    }

    pub fn with_magnon_coupling(mut self, magnon: usize, g: f64) -> Self {
        self.magnon_couplings.push(MagnonCoupling { magnon, g });
        self
    }

    pub fn total_gamma(&self) -> f64 {
        self.port_couplings.iter().map(|c| c.gamma).sum()
    }

    /// Complex frequency `ω_p − (i/2)(Σ_n γ_pn + loss)`.
    pub fn dressed_frequency(&self) -> Complex64 {
        Complex64::new(self.frequency, -0.5 * (self.total_gamma() + self.intrinsic_loss))
    }

    /// Port-to-port phase difference `φ_p1 − φ_p0` for a two-port mode.
    pub fn transmission_phase(&self) -> Option<f64> {
        match self.port_couplings.as_slice() {
            [a, b, ..] => Some(b.phase - a.phase),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnonMode {
    pub label: String,
    pub frequency: f64,
    pub intrinsic_loss: f64,
}

impl MagnonMode {
    pub fn new(label: impl Into<String>, frequency: f64) -> Self {
        Self {
            label: label.into(),
            frequency,
            intrinsic_loss: 0.0,
        }
    }
}

/// Direct photon–photon coupling `g_qp`; the conjugate entry is implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonCoupling {
    pub p: usize,
    pub q: usize,
    pub g: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub photon_modes: Vec<PhotonMode>,
    pub magnon_modes: Vec<MagnonMode>,
    pub n_ports: usize,
    pub photon_photon_couplings: Vec<PhotonCoupling>,
}

impl SystemSpec {
    pub fn new(n_ports: usize) -> Self {
        Self {
            photon_modes: Vec::new(),
            magnon_modes: Vec::new(),
            n_ports,
            photon_photon_couplings: Vec::new(),
        }
    }

    pub fn with_photon(mut self, mode: PhotonMode) -> Self {
        self.photon_modes.push(mode);
        self
    }

    pub fn with_magnon(mut self, mode: MagnonMode) -> Self {
        self.magnon_modes.push(mode);
        self
    }

    pub fn with_photon_coupling(mut self, p: usize, q: usize, g: Complex64) -> Self {
        self.photon_photon_couplings.push(PhotonCoupling { p, q, g });
        self
    }

    /// Total number of internal modes; photons come first, then magnons.
    pub fn mode_count(&self) -> usize {
        self.photon_modes.len() + self.magnon_modes.len()
    }

    pub fn set_magnon_frequency(&mut self, index: usize, frequency: f64) -> Result<(), ModelError> {
        let count = self.magnon_modes.len();
        let magnon = self.magnon_modes.get_mut(index).ok_or(ModelError::IndexOutOfRange {
            kind: "magnon",
            index,
            count,
        })?;
        magnon.frequency = frequency;
        Ok(())
    }

    /// The same system with every magnon (and every coupling to one) removed.
    pub fn without_magnons(&self) -> Self {
        let mut out = self.clone();
        out.magnon_modes.clear();
        for mode in &mut out.photon_modes {
            mode.magnon_couplings.clear();
        }
        out
    }

    /// Sub-system keeping only the listed photon modes, in the given order.
    /// Magnons are kept; couplings to dropped photons disappear with them.
    pub fn select_photons(&self, indices: &[usize]) -> Result<Self, ModelError> {
        let count = self.photon_modes.len();
        let mut remap = vec![None; count];
        let mut photon_modes = Vec::with_capacity(indices.len());
        for (new, &old) in indices.iter().enumerate() {
            let mode = self.photon_modes.get(old).ok_or(ModelError::IndexOutOfRange {
                kind: "photon",
                index: old,
                count,
            })?;
            remap[old] = Some(new);
            photon_modes.push(mode.clone());
        }
        let photon_photon_couplings = self
            .photon_photon_couplings
            .iter()
            .filter_map(|c| {
                Some(PhotonCoupling {
                    p: remap.get(c.p).copied().flatten()?,
                    q: remap.get(c.q).copied().flatten()?,
                    g: c.g,
                })
            })
            .collect();
        Ok(Self {
            photon_modes,
            magnon_modes: self.magnon_modes.clone(),
            n_ports: self.n_ports,
            photon_photon_couplings,
        })
    }

    /// Dense Hermitian internal-coupling matrix `G`, row-major, indexed
    /// photons first then magnons. Entry `(p, q)` holds `g_qp`.
    pub fn coupling_matrix(&self) -> Vec<Vec<Complex64>> {
        let n = self.mode_count();
        let np = self.photon_modes.len();
        let mut g = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for c in &self.photon_photon_couplings {
            if c.p < np && c.q < np && c.p != c.q {
                g[c.p][c.q] = c.g;
                g[c.q][c.p] = c.g.conj();
            }
        }
        for (p, mode) in self.photon_modes.iter().enumerate() {
            for mc in &mode.magnon_couplings {
                if mc.magnon < self.magnon_modes.len() {
                    let m = np + mc.magnon;
                    g[p][m] = Complex64::new(mc.g, 0.0);
                    g[m][p] = Complex64::new(mc.g, 0.0);
                }
            }
        }
        g
    }

    /// Port coupling matrix `K` (modes × ports). Magnon rows are zero.
    pub fn port_matrix(&self) -> Vec<Vec<Complex64>> {
        let zero = Complex64::new(0.0, 0.0);
        let mut k: Vec<Vec<Complex64>> = self
            .photon_modes
            .iter()
            .map(|m| {
                (0..self.n_ports)
                    .map(|n| m.port_couplings.get(n).map_or(zero, PortCoupling::kappa))
                    .collect()
            })
            .collect();
        k.extend(self.magnon_modes.iter().map(|_| vec![zero; self.n_ports]));
        k
    }

    /// Complex frequency of every mode including intrinsic loss but not port
    /// damping, photons first.
    pub fn internal_frequencies(&self) -> Vec<Complex64> {
        let photons = self
            .photon_modes
            .iter()
            .map(|m| Complex64::new(m.frequency, -0.5 * m.intrinsic_loss));
        let magnons = self
            .magnon_modes
            .iter()
            .map(|m| Complex64::new(m.frequency, -0.5 * m.intrinsic_loss));
        photons.chain(magnons).collect()
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_system(self)
    }

    /// Errors out when validation reports any error-level diagnostic.
    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let errors: Vec<_> = validate_system(self)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(errors))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Dotted path of the offending field, e.g. `photon_modes[2].port_couplings[0].gamma`.
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn error(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        }
    }

    fn warning(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.field, self.message)
    }
}

/// Checks shape, sign and Hermiticity constraints, and warns when a coupling
/// leaves the regime where the rotating-wave description holds.
pub fn validate_system(spec: &SystemSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.n_ports == 0 {
        out.push(Diagnostic::error("n_ports", "at least one port is required"));
    }
    let np = spec.photon_modes.len();
    let nm = spec.magnon_modes.len();

    for (p, mode) in spec.photon_modes.iter().enumerate() {
        let path = format!("photon_modes[{p}]");
        if !(mode.frequency.is_finite() && mode.frequency > 0.0) {
            out.push(Diagnostic::error(format!("{path}.frequency"), "must be positive"));
        }
        if !(mode.intrinsic_loss >= 0.0) {
            out.push(Diagnostic::error(
                format!("{path}.intrinsic_loss"),
                "must be non-negative",
            ));
        }
        if mode.port_couplings.len() != spec.n_ports {
            out.push(Diagnostic::error(
                format!("{path}.port_couplings"),
                format!(
                    "expected {} port couplings, found {}",
                    spec.n_ports,
                    mode.port_couplings.len()
                ),
            ));
        }
        for (n, pc) in mode.port_couplings.iter().enumerate() {
            if !(pc.gamma >= 0.0) || !pc.gamma.is_finite() {
                out.push(Diagnostic::error(
                    format!("{path}.port_couplings[{n}].gamma"),
                    "damping rate must be non-negative",
                ));
            } else if mode.frequency > 0.0 && pc.gamma.sqrt() / mode.frequency.sqrt() >= RWA_LIMIT {
                out.push(Diagnostic::warning(
                    format!("{path}.port_couplings[{n}].gamma"),
                    format!(
                        "|κ|/√ω = {:.3} is outside the rotating-wave regime",
                        pc.gamma.sqrt() / mode.frequency.sqrt()
                    ),
                ));
            }
            if !pc.phase.is_finite() {
                out.push(Diagnostic::error(
                    format!("{path}.port_couplings[{n}].phase"),
                    "must be finite",
                ));
            }
        }
        for (j, mc) in mode.magnon_couplings.iter().enumerate() {
            let field = format!("{path}.magnon_couplings[{j}]");
            if mc.magnon >= nm {
                out.push(Diagnostic::error(
                    field,
                    format!("magnon index {} out of range ({nm} magnons)", mc.magnon),
                ));
                continue;
            }
            if !(mc.g >= 0.0) || !mc.g.is_finite() {
                out.push(Diagnostic::error(field, "coupling strength must be non-negative"));
                continue;
            }
            let wm = spec.magnon_modes[mc.magnon].frequency;
            if mode.frequency > 0.0 && wm > 0.0 {
                let ratio = mc.g / (mode.frequency * wm).sqrt();
                if ratio >= RWA_LIMIT {
                    out.push(Diagnostic::warning(
                        field,
                        format!("g/√(ω_p·ω_m) = {ratio:.3} is outside the rotating-wave regime"),
                    ));
                }
            }
        }
    }

    for (m, magnon) in spec.magnon_modes.iter().enumerate() {
        let path = format!("magnon_modes[{m}]");
        if !(magnon.frequency.is_finite() && magnon.frequency > 0.0) {
            out.push(Diagnostic::error(format!("{path}.frequency"), "must be positive"));
        }
        if !(magnon.intrinsic_loss >= 0.0) {
            out.push(Diagnostic::error(
                format!("{path}.intrinsic_loss"),
                "must be non-negative",
            ));
        }
    }

    for (i, c) in spec.photon_photon_couplings.iter().enumerate() {
        let field = format!("photon_photon_couplings[{i}]");
        if c.p >= np || c.q >= np {
            out.push(Diagnostic::error(
                field,
                format!("mode pair ({}, {}) out of range ({np} photons)", c.p, c.q),
            ));
            continue;
        }
        if c.p == c.q {
            out.push(Diagnostic::error(
                field,
                "self-coupling is not allowed; shift the mode frequency instead",
            ));
            continue;
        }
        // An explicit reverse entry must be the complex conjugate.
        for (j, other) in spec.photon_photon_couplings.iter().enumerate().skip(i + 1) {
            let conjugate_pair = other.p == c.q && other.q == c.p;
            let duplicate = other.p == c.p && other.q == c.q;
            let tol = 1e-12 * (1.0 + c.g.norm());
            if conjugate_pair && (other.g - c.g.conj()).norm() > tol {
                out.push(Diagnostic::error(
                    format!("photon_photon_couplings[{j}]"),
                    format!(
                        "coupling matrix is not Hermitian: g_{}{} = {} but g_{}{} = {}",
                        c.q, c.p, c.g, other.q, other.p, other.g
                    ),
                ));
            }
            if duplicate && (other.g - c.g).norm() > tol {
                out.push(Diagnostic::error(
                    format!("photon_photon_couplings[{j}]"),
                    format!("conflicting duplicate entry for pair ({}, {})", c.p, c.q),
                ));
            }
        }
        let (wp, wq) = (spec.photon_modes[c.p].frequency, spec.photon_modes[c.q].frequency);
        if wp > 0.0 && wq > 0.0 {
            let ratio = c.g.norm() / (wp * wq).sqrt();
            if ratio >= RWA_LIMIT {
                out.push(Diagnostic::warning(
                    field,
                    format!("|g|/√(ω_p·ω_q) = {ratio:.3} is outside the rotating-wave regime"),
                ));
            }
        }
    }
    out
}

/// Uniform frequency grid, inclusive of both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    start: f64,
    stop: f64,
    points: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self, ModelError> {
        if points < 2 {
            return Err(ModelError::Grid(format!("need at least 2 points, got {points}")));
        }
        if !(start.is_finite() && stop.is_finite()) || start >= stop {
            return Err(ModelError::Grid(format!(
                "start ({start}) must be strictly below stop ({stop})"
            )));
        }
        Ok(Self { start, stop, points })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn stop(&self) -> f64 {
        self.stop
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.stop
        } else {
            self.start + i as f64 * self.step()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.at(i))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }
}

/// Direction of the ≈π transmission-phase change across a feature.
/// `Negative` is π/2 → −π/2, `Positive` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseJump {
    Positive,
    Negative,
    Indeterminate,
}

impl fmt::Display for PhaseJump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseJump::Positive => "positive",
            PhaseJump::Negative => "negative",
            PhaseJump::Indeterminate => "indeterminate",
        })
    }
}

/// Behaviour of two branches as the magnon is tuned through them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingBehavior {
    Repulsion,
    Attraction,
}

impl fmt::Display for CouplingBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingBehavior::Repulsion => "repulsion",
            CouplingBehavior::Attraction => "attraction",
        })
    }
}

/// YIG sphere location inside the cylindrical cavity of the reference setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpherePosition {
    /// Off-axis, near the wall: couples mainly to the negative-jump modes.
    A,
    /// On the axis: couples only to the positive-jump modes.
    B,
}

struct CavityRow {
    label: &'static str,
    frequency: f64,
    q: f64,
    g_a_mhz: f64,
    g_b_mhz: f64,
    negative_jump: bool,
}

const CAVITY_TABLE: [CavityRow; 7] = [
    CavityRow {
        label: "TE211",
        frequency: 12.4,
        q: 1525.0,
        g_a_mhz: 13.5,
        g_b_mhz: 0.0,
        negative_jump: true,
    },
    CavityRow {
        label: "TM012",
        frequency: 12.5,
        q: 4441.0,
        g_a_mhz: 39.3,
        g_b_mhz: 0.0,
        negative_jump: true,
    },
    CavityRow {
        label: "TE212",
        frequency: 14.4,
        q: 912.0,
        g_a_mhz: 30.1,
        g_b_mhz: 0.0,
        negative_jump: true,
    },
    CavityRow {
        label: "TM013",
        frequency: 15.8,
        q: 9228.0,
        g_a_mhz: 43.3,
        g_b_mhz: 0.0,
        negative_jump: true,
    },
    CavityRow {
        label: "TE113",
        frequency: 14.6,
        q: 7501.0,
        g_a_mhz: 3.6,
        g_b_mhz: 50.0,
        negative_jump: false,
    },
    CavityRow {
        label: "TM111",
        frequency: 15.2,
        q: 12023.0,
        g_a_mhz: 3.2,
        g_b_mhz: 72.2,
        negative_jump: false,
    },
    CavityRow {
        label: "TE311",
        frequency: 16.6,
        q: 739.0,
        g_a_mhz: 2.5,
        g_b_mhz: 4.5,
        negative_jump: false,
    },
];

/// Magnon frequency the reference cavity is built with; maps sweep it.
pub const CAVITY_DEFAULT_MAGNON_GHZ: f64 = 13.6;

/// Whether a reference-cavity mode shows a negative transmission phase jump.
pub fn cavity_mode_has_negative_jump(label: &str) -> Option<bool> {
    CAVITY_TABLE
        .iter()
        .find(|row| row.label == label)
        .map(|row| row.negative_jump)
}

/// Seven-mode Ku-band cylindrical cavity with one magnon, two ports.
///
/// Each mode's external damping `ω/Q` is split equally between the probes.
/// Negative-jump modes couple with phases `(0, 0)`, positive-jump modes
/// with `(0, π)`.
pub fn table3_cavity(position: SpherePosition) -> SystemSpec {
    let mut spec = SystemSpec::new(2).with_magnon(MagnonMode::new("magnon", CAVITY_DEFAULT_MAGNON_GHZ));
    for row in &CAVITY_TABLE {
        let phases = if row.negative_jump { [0.0, 0.0] } else { [0.0, PI] };
        let g_mhz = match position {
            SpherePosition::A => row.g_a_mhz,
            SpherePosition::B => row.g_b_mhz,
        };
        let mode = PhotonMode::from_quality_factor(row.label, row.frequency, row.q, &phases)
            .with_magnon_coupling(0, g_mhz * 1e-3);
        spec = spec.with_photon(mode);
    }
    spec
}

/// Quality factor of a reference-cavity mode.
pub fn cavity_quality_factor(label: &str) -> Option<f64> {
    CAVITY_TABLE.iter().find(|row| row.label == label).map(|row| row.q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_photon(omega: f64, g_frac: f64) -> SystemSpec {
        let gamma = (0.01 * omega.sqrt()).powi(2);
        SystemSpec::new(1).with_magnon(MagnonMode::new("m", omega)).with_photon(
            PhotonMode::new("c0", omega, vec![PortCoupling::new(gamma, 0.0)]).with_magnon_coupling(0, g_frac * omega),
        )
    }

    #[test]
    fn well_inside_rwa_has_no_diagnostics() {
        assert!(validate_system(&single_photon(12.0, 0.01)).is_empty());
    }

    #[test]
    fn non_hermitian_pair_is_an_error() {
        let spec = SystemSpec::new(1)
            .with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.01, 0.0)]))
            .with_photon(PhotonMode::new("b", 13.0, vec![PortCoupling::new(0.01, 0.0)]))
            .with_photon_coupling(0, 1, Complex64::new(1.0, 0.0))
            .with_photon_coupling(1, 0, Complex64::new(1.0, 0.5));
        let diags = validate_system(&spec);
        assert!(diags
            .iter()
            .any(|d| d.severity == Severity::Error && d.message.contains("Hermitian")));
        assert!(spec.ensure_valid().is_err());
    }

    #[test]
    fn strong_magnon_coupling_warns() {
        // g / sqrt(ω0·ωm) = 0.15 with ω0 = ωm
        let spec = single_photon(10.0, 0.15);
        let diags = validate_system(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert!(spec.ensure_valid().is_ok());
    }

    #[test]
    fn negative_gamma_and_port_mismatch_are_errors() {
        let spec = SystemSpec::new(2).with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(-0.01, 0.0)]));
        let diags = validate_system(&spec);
        let errors: Vec<_> = diags.iter().filter(|d| d.severity == Severity::Error).collect();
        assert_eq!(errors.len(), 2, "{diags:?}");
    }

    #[test]
    fn validation_is_pure() {
        let spec = single_photon(10.0, 0.15);
        assert_eq!(validate_system(&spec), validate_system(&spec));
    }

    #[test]
    fn table3_position_a_te212() {
        let spec = table3_cavity(SpherePosition::A);
        let te212 = spec.photon_modes.iter().find(|m| m.label == "TE212").unwrap();
        assert_eq!(te212.frequency, 14.4);
        assert!((te212.frequency / te212.total_gamma() - 912.0).abs() < 1e-9);
        assert!((te212.magnon_couplings[0].g - 0.0301).abs() < 1e-15);
        assert!(spec.ensure_valid().is_ok());
    }

    #[test]
    fn table3_position_b_tm111() {
        let spec = table3_cavity(SpherePosition::B);
        let tm111 = spec.photon_modes.iter().find(|m| m.label == "TM111").unwrap();
        assert!((tm111.magnon_couplings[0].g - 0.0722).abs() < 1e-15);
        let zero_b = ["TE211", "TM012", "TE212", "TM013"];
        for label in zero_b {
            let m = spec.photon_modes.iter().find(|m| m.label == label).unwrap();
            assert_eq!(m.magnon_couplings[0].g, 0.0);
        }
    }

    #[test]
    fn table3_phase_groups_differ_by_pi() {
        for pos in [SpherePosition::A, SpherePosition::B] {
            let spec = table3_cavity(pos);
            let phase = |label: &str| {
                spec.photon_modes
                    .iter()
                    .find(|m| m.label == label)
                    .unwrap()
                    .transmission_phase()
                    .unwrap()
            };
            for neg in ["TE211", "TM012", "TE212", "TM013"] {
                for posj in ["TE113", "TM111", "TE311"] {
                    let diff = (phase(posj) - phase(neg)).rem_euclid(2.0 * PI);
                    assert!((diff - PI).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn magnon_rows_of_k_are_zero() {
        let spec = table3_cavity(SpherePosition::A);
        let k = spec.port_matrix();
        assert_eq!(k.len(), 8);
        assert!(k[7].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn coupling_matrix_is_hermitian() {
        let spec = table3_cavity(SpherePosition::A).with_photon_coupling(0, 2, Complex64::new(0.001, 0.002));
        let g = spec.coupling_matrix();
        for (p, row) in g.iter().enumerate() {
            for (q, value) in row.iter().enumerate() {
                assert_eq!(*value, g[q][p].conj());
            }
        }
    }

    #[test]
    fn grid_rules() {
        assert!(FrequencyGrid::new(1.0, 2.0, 1).is_err());
        assert!(FrequencyGrid::new(2.0, 1.0, 5).is_err());
        let g = FrequencyGrid::new(1.0, 2.0, 2).unwrap();
        assert_eq!(g.to_vec(), vec![1.0, 2.0]);
        let g = FrequencyGrid::new(12.0, 17.0, 4001).unwrap();
        let v = g.to_vec();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*v.last().unwrap(), 17.0);
    }

    #[test]
    fn select_photons_remaps_couplings() {
        let spec = table3_cavity(SpherePosition::A).with_photon_coupling(1, 3, Complex64::new(0.001, 0.0));
        let sub = spec.select_photons(&[3, 1]).unwrap();
        assert_eq!(sub.photon_modes[0].label, "TM013");
        assert_eq!(sub.photon_photon_couplings[0].p, 1);
        assert_eq!(sub.photon_photon_couplings[0].q, 0);
        assert!(spec.select_photons(&[9]).is_err());
    }
}
