//! Exact S-matrix evaluation, `S = 1 − i·Kᵗ·Ω⁻¹·K*`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FrequencyGrid, ModelError, SystemSpec};

/// Condition-number estimate above which Ω counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("singular Ω at {freq} GHz (condition estimate {condition:.3e})")]
    Singular { freq: f64, condition: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The matrix Ω at one real drive frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix {
    pub freq: f64,
    pub matrix: DMatrix<Complex64>,
}

impl OmegaMatrix {
    /// `(Ω − Ω†)/2i`: the port damping Gram matrix (scaled by ½) plus intrinsic loss.
    pub fn anti_hermitian_part(&self) -> DMatrix<Complex64> {
        (&self.matrix - self.matrix.adjoint()) / (2.0 * I)
    }
}

/// Builds Ω with entries `Ω[p][q] = (ω − ω_p)δ_pq + (i/2)Σ_n κ*_pn κ_qn − g_qp`.
pub fn build_omega(spec: &SystemSpec, freq: f64) -> OmegaMatrix {
    let Evaluator { base, .. } = Evaluator::full(spec);
    OmegaMatrix {
        freq,
        matrix: shifted(&base, freq),
    }
}

fn shifted(base: &DMatrix<Complex64>, freq: f64) -> DMatrix<Complex64> {
    let mut m = base.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += freq;
    }
    m
}

/// Precomputed frequency-independent pieces of the S-matrix.
#[derive(Debug, Clone)]
pub struct Evaluator {
    /// `Ω(ω) − ω·1`.
    base: DMatrix<Complex64>,
    /// Port couplings of the kept modes, `P × N`.
    k: DMatrix<Complex64>,
    n_ports: usize,
}

impl Evaluator {
    /// Keeps only modes linked to a port through couplings; the others never
    /// influence S and would make Ω singular when lossless.
    pub fn new(spec: &SystemSpec) -> Self {
        let g = spec.coupling_matrix();
        let k = spec.port_matrix();
        let n = spec.mode_count();
        let zero = Complex64::new(0.0, 0.0);
        let mut keep = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&p| k[p].iter().any(|&x| x != zero)).collect();
        for &p in &stack {
            keep[p] = true;
        }
        while let Some(p) = stack.pop() {
            for q in 0..n {
                if !keep[q] && g[p][q] != zero {
                    keep[q] = true;
                    stack.push(q);
                }
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&p| keep[p]).collect();
        Self::from_parts(spec, &kept)
    }

    fn full(spec: &SystemSpec) -> Self {
        let all: Vec<usize> = (0..spec.mode_count()).collect();
        Self::from_parts(spec, &all)
    }

    fn from_parts(spec: &SystemSpec, kept: &[usize]) -> Self {
        let g = spec.coupling_matrix();
        let k = spec.port_matrix();
        let w = spec.internal_frequencies();
        let n_ports = spec.n_ports;
        let p = kept.len();
        let kmat = DMatrix::from_fn(p, n_ports, |r, c| k[kept[r]][c]);
        let mut base = DMatrix::from_fn(p, p, |r, c| -g[kept[c]][kept[r]]);
        for r in 0..p {
            base[(r, r)] -= w[kept[r]];
        }
        // (i/2) Σ_n κ*_pn κ_qn, row p column q.
        let gram = kmat.conjugate() * kmat.transpose();
        base += gram * (0.5 * I);
        Self { base, k: kmat, n_ports }
    }

    pub fn mode_count(&self) -> usize {
        self.base.nrows()
    }

    pub fn s_matrix(&self, freq: f64) -> Result<DMatrix<Complex64>, EngineError> {
        let identity = DMatrix::<Complex64>::identity(self.n_ports, self.n_ports);
        if self.mode_count() == 0 {
            return Ok(identity);
        }
        let omega = shifted(&self.base, freq);
        let singular = |condition: f64| EngineError::Singular { freq, condition };
        let inv = omega
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| singular(f64::INFINITY))?;
        let condition = norm1(&omega) * norm1(&inv);
        if !condition.is_finite() || condition > SINGULAR_CONDITION {
            return Err(singular(condition));
        }
        Ok(identity - self.k.transpose() * inv * self.k.conjugate() * I)
    }
}

fn norm1(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Full scattering matrix at one frequency; `S[(j, i)]` is the transmission from port `i` to port `j`.
pub fn s_matrix(spec: &SystemSpec, freq: f64) -> Result<DMatrix<Complex64>, EngineError> {
    Evaluator::new(spec).s_matrix(freq)
}

/// S-matrices over a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub s: Vec<DMatrix<Complex64>>,
}

impl Spectrum {
    pub fn n_ports(&self) -> usize {
        self.s.first().map_or(0, |m| m.nrows())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.grid.to_vec()
    }

    /// `S_ij` along the grid (0-based output `i`, input `j`).
    pub fn element(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.s.iter().map(|m| m[(i, j)]).collect()
    }

    /// Transmission from the first port to the second (`S21`).
    pub fn s21(&self) -> Vec<Complex64> {
        self.element(1, 0)
    }

    pub fn magnitude(&self, i: usize, j: usize) -> Vec<f64> {
        self.s.iter().map(|m| m[(i, j)].norm()).collect()
    }

    pub fn magnitude_db(&self, i: usize, j: usize) -> Vec<f64> {
        self.s.iter().map(|m| to_db(m[(i, j)])).collect()
    }

    pub fn phase_unwrapped(&self, i: usize, j: usize) -> Vec<f64> {
        let raw: Vec<f64> = self.s.iter().map(|m| m[(i, j)].arg()).collect();
        unwrap_phase(&raw)
    }
}

/// `20·log10|z|`; exact zeros map to `-inf`.
pub fn to_db(z: Complex64) -> f64 {
    20.0 * z.norm().log10()
}

/// Removes jumps larger than π between successive samples.
pub fn unwrap_phase(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &x in raw {
        if let Some(p) = prev {
            let d = x - p;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(x + offset);
        prev = Some(x);
    }
    out
}

pub fn sweep(spec: &SystemSpec, grid: &FrequencyGrid) -> Result<Spectrum, EngineError> {
    sweep_with(&Evaluator::new(spec), grid)
}

fn sweep_with(eval: &Evaluator, grid: &FrequencyGrid) -> Result<Spectrum, EngineError> {
    let s = (0..grid.len())
        .into_par_iter()
        .map(|i| eval.s_matrix(grid.at(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Spectrum { grid: *grid, s })
}

/// Complex `S21` over a (magnon frequency × drive frequency) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMap {
    pub magnon_grid: FrequencyGrid,
    pub drive_grid: FrequencyGrid,
    /// Row-major: one row of drive samples per magnon frequency.
    pub s21: Vec<Complex64>,
}

impl SweepMap {
    pub fn get(&self, magnon: usize, drive: usize) -> Complex64 {
        self.s21[magnon * self.drive_grid.len() + drive]
    }

    pub fn row(&self, magnon: usize) -> &[Complex64] {
        let n = self.drive_grid.len();
        &self.s21[magnon * n..(magnon + 1) * n]
    }

    pub fn row_db(&self, magnon: usize) -> Vec<f64> {
        self.row(magnon).iter().map(|&z| to_db(z)).collect()
    }
}

/// Sweeps the drive frequency for every magnon frequency in `magnon_grid`.
pub fn magnon_map(
    spec: &SystemSpec,
    magnon_index: usize,
    magnon_grid: &FrequencyGrid,
    drive_grid: &FrequencyGrid,
) -> Result<SweepMap, EngineError> {
    if spec.n_ports < 2 {
        return Err(ModelError::Grid("S21 needs at least two ports".into()).into());
    }
    let mut probe = spec.clone();
    probe.set_magnon_frequency(magnon_index, magnon_grid.start())?;
    let rows = (0..magnon_grid.len())
        .into_par_iter()
        .map(|mi| {
            let mut local = spec.clone();
            local.set_magnon_frequency(magnon_index, magnon_grid.at(mi))?;
            let eval = Evaluator::new(&local);
            drive_grid
                .iter()
                .map(|f| eval.s_matrix(f).map(|s| s[(1, 0)]))
                .collect::<Result<Vec<_>, EngineError>>()
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(SweepMap {
        magnon_grid: *magnon_grid,
        drive_grid: *drive_grid,
        s21: rows.concat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{table3_cavity, MagnonMode, PhotonMode, PortCoupling, SpherePosition};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn one_mode_one_port_omega() {
        let spec = SystemSpec::new(1).with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.1, 0.0)]));
        let om = build_omega(&spec, 12.0);
        assert!((om.matrix[(0, 0)] - c(0.0, 0.05)).norm() < 1e-15);
        let s = s_matrix(&spec, 12.0).unwrap();
        assert!((s[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn magnon_coupling_enters_off_diagonal() {
        let spec = SystemSpec::new(1)
            .with_magnon(MagnonMode::new("m", 12.0))
            .with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.1, 0.0)]).with_magnon_coupling(0, 0.02));
        let om = build_omega(&spec, 11.0);
        assert_eq!(om.matrix[(0, 1)], c(-0.02, 0.0));
        assert_eq!(om.matrix[(1, 0)], c(-0.02, 0.0));
    }

    #[test]
    fn opposite_phase_groups_have_no_cross_damping() {
        let spec = SystemSpec::new(2)
            .with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.01, 0.0); 2]))
            .with_photon(PhotonMode::new(
                "b",
                14.0,
                vec![PortCoupling::new(0.01, 0.0), PortCoupling::new(0.01, PI)],
            ));
        let om = build_omega(&spec, 13.0);
        assert!(om.matrix[(0, 1)].norm() < 1e-17);
        assert!(om.matrix[(1, 0)].norm() < 1e-17);
    }

    #[test]
    fn single_mode_two_ports_transmits_fully() {
        let spec = SystemSpec::new(2).with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.02, 0.0); 2]));
        let s = s_matrix(&spec, 12.0).unwrap();
        assert!((s[(1, 0)] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!(s[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn transmission_vanishes_at_magnon_frequency() {
        let spec = SystemSpec::new(2).with_magnon(MagnonMode::new("m", 12.3)).with_photon(
            PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.02, 0.0); 2]).with_magnon_coupling(0, 0.05),
        );
        let s = s_matrix(&spec, 12.3).unwrap();
        assert!(s[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn decoupled_lossless_magnon_is_ignored() {
        let spec = table3_cavity(SpherePosition::B);
        // The magnon couples to nothing once every g is zeroed.
        let mut bare = spec.clone();
        for m in &mut bare.photon_modes {
            m.magnon_couplings.clear();
        }
        let s = s_matrix(&bare, 13.6).unwrap();
        let t = s_matrix(&bare.without_magnons(), 13.6).unwrap();
        assert!((s - t).norm() < 1e-15);
    }

    #[test]
    fn dark_state_pole_is_reported() {
        // Two degenerate modes on one port leave a lossless dark combination.
        let spec = SystemSpec::new(1)
            .with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.01, 0.0)]))
            .with_photon(PhotonMode::new("b", 12.0, vec![PortCoupling::new(0.01, 0.0)]));
        match s_matrix(&spec, 12.0) {
            Err(EngineError::Singular { freq, .. }) => assert_eq!(freq, 12.0),
            other => panic!("expected singular, got {other:?}"),
        }
        assert!(s_matrix(&spec, 12.1).is_ok());
    }

    #[test]
    fn anti_hermitian_part_is_half_the_gram_matrix() {
        let spec = table3_cavity(SpherePosition::A);
        let om = build_omega(&spec, 13.0);
        let k = spec.port_matrix();
        let n = spec.mode_count();
        let ah = om.anti_hermitian_part();
        for p in 0..n {
            for q in 0..n {
                let gram: Complex64 = (0..2).map(|i| k[p][i].conj() * k[q][i]).sum();
                assert!((ah[(p, q)] - gram * 0.5).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn unwrap_removes_jumps() {
        let raw = [3.0, -3.0, -2.9, 3.1];
        let u = unwrap_phase(&raw);
        for w in u.windows(2) {
            assert!((w[1] - w[0]).abs() <= PI);
        }
        assert!((u[1] - (2.0 * PI - 3.0)).abs() < 1e-15);
    }

    #[test]
    fn bare_table3_cavity_shows_seven_peaks() {
        let mut spec = table3_cavity(SpherePosition::A);
        for m in &mut spec.photon_modes {
            m.magnon_couplings.clear();
        }
        let grid = FrequencyGrid::new(12.0, 17.0, 50_001).unwrap();
        let spectrum = sweep(&spec, &grid).unwrap();
        let mag = spectrum.magnitude(1, 0);
        let f = spectrum.frequencies();
        for mode in &spec.photon_modes {
            let (i, _) = mag
                .iter()
                .enumerate()
                .filter(|(i, _)| (f[*i] - mode.frequency).abs() < 0.02)
                .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
            assert!(
                (f[i] - mode.frequency).abs() <= 2.0 * grid.step(),
                "{}: {}",
                mode.label,
                f[i]
            );
        }
    }

    #[test]
    fn two_point_grid_has_two_samples() {
        let spec = table3_cavity(SpherePosition::A);
        let grid = FrequencyGrid::new(12.0, 13.0, 2).unwrap();
        assert_eq!(sweep(&spec, &grid).unwrap().s.len(), 2);
    }

    #[test]
    fn decoupled_map_is_constant_along_magnon_axis() {
        let mut spec = table3_cavity(SpherePosition::B);
        for m in &mut spec.photon_modes {
            m.magnon_couplings.clear();
        }
        let mg = FrequencyGrid::new(13.0, 14.0, 5).unwrap();
        let dg = FrequencyGrid::new(13.0, 14.0, 101).unwrap();
        let map = magnon_map(&spec, 0, &mg, &dg).unwrap();
        for mi in 1..5 {
            assert_eq!(map.row(mi), map.row(0));
        }
    }

    #[test]
    fn map_rejects_bad_magnon_index() {
        let spec = table3_cavity(SpherePosition::B);
        let g = FrequencyGrid::new(13.0, 14.0, 3).unwrap();
        assert!(matches!(
            magnon_map(&spec, 3, &g, &g),
            Err(EngineError::Model(ModelError::IndexOutOfRange { .. }))
        ));
    }
}
