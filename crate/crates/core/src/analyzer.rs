//! Feature extraction from transmission spectra and maps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{sweep, unwrap_phase, EngineError, Spectrum, SweepMap};
use crate::model::{CouplingBehavior, FrequencyGrid, ModelError, PhaseJump, SystemSpec};

pub const DEFAULT_PROMINENCE_DB: f64 = 3.0;
/// Branch extraction ignores shallower dips, which are interference ripple
/// rather than antiresonances.
pub const DEFAULT_BRANCH_PROMINENCE_DB: f64 = 20.0;
/// Phase-jump sampling distance in linewidths.
pub const JUMP_SPAN_LINEWIDTHS: f64 = 5.0;
const MIN_POINTS: usize = 5;
const FLOOR_DB: f64 = -400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyzerError {
    #[error("insufficient data: {points} points, need at least {needed}")]
    InsufficientData { points: usize, needed: usize },
    #[error("frequencies must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("frequency and value columns differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot predict coupling from an indeterminate phase jump")]
    IndeterminateJump,
    #[error("no antiresonance inside {0}–{1} GHz in any column")]
    NoBranch(f64, f64),
    #[error("ordering index {index} out of range for {count} photon modes")]
    BadOrdering { index: usize, count: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One complex transmission element sampled on increasing frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    freqs: Vec<f64>,
    values: Vec<Complex64>,
}

impl Trace {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self, AnalyzerError> {
        if freqs.len() != values.len() {
            return Err(AnalyzerError::LengthMismatch(freqs.len(), values.len()));
        }
        if let Some(i) = freqs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(AnalyzerError::NotIncreasing(i + 1));
        }
        Ok(Self { freqs, values })
    }

    /// `S_ij` of a spectrum (0-based indices).
    pub fn from_spectrum(spectrum: &Spectrum, i: usize, j: usize) -> Self {
        Self {
            freqs: spectrum.frequencies(),
            values: spectrum.element(i, j),
        }
    }

    pub fn s21(spectrum: &Spectrum) -> Self {
        Self::from_spectrum(spectrum, 1, 0)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.values.iter().map(|z| to_db_floored(*z)).collect()
    }

    /// Multiplies every sample by `e^{iθ}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let r = Complex64::from_polar(1.0, theta);
        Self {
            freqs: self.freqs.clone(),
            values: self.values.iter().map(|z| z * r).collect(),
        }
    }
}

fn to_db_floored(z: Complex64) -> f64 {
    (20.0 * z.norm().log10()).max(FLOOR_DB)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Resonance,
    Antiresonance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFeature {
    pub kind: FeatureKind,
    /// Refined frequency in GHz.
    pub frequency: f64,
    pub prominence_db: f64,
    pub phase_jump: PhaseJump,
    /// Full width in GHz; NaN when no crossing is found on either side.
    pub linewidth: f64,
    /// Grid index of the sampled extremum.
    pub index: usize,
}

impl SpectralFeature {
    /// A resonance with a determinate phase jump. Broad background maxima
    /// between deep antiresonances have none.
    pub fn is_mode_resonance(&self) -> bool {
        self.kind == FeatureKind::Resonance && self.phase_jump != PhaseJump::Indeterminate
    }
}

/// Sampled extremum of a dB curve, before refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub kind: FeatureKind,
    pub index: usize,
    pub prominence_db: f64,
}

/// Interior local extrema of `db` with at least `min_prominence_db` of
/// topographic prominence, sorted by index. Maxima are resonances, minima
/// antiresonances.
pub fn find_extrema(db: &[f64], min_prominence_db: f64) -> Vec<Extremum> {
    let neg: Vec<f64> = db.iter().map(|x| -x).collect();
    let mut out: Vec<Extremum> = peaks(db)
        .into_iter()
        .map(|i| (FeatureKind::Resonance, i, prominence(db, i)))
        .chain(
            peaks(&neg)
                .into_iter()
                .map(|i| (FeatureKind::Antiresonance, i, prominence(&neg, i))),
        )
        .filter(|&(_, _, p)| p >= min_prominence_db)
        .map(|(kind, index, prominence_db)| Extremum {
            kind,
            index,
            prominence_db,
        })
        .collect();
    out.sort_by_key(|e| e.index);
    out
}

/// Interior local maxima; a flat top counts once, at its middle.
fn peaks(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Height above the higher of the two lowest points reachable before
/// meeting a sample higher than the peak.
fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left = h;
    for k in (0..i).rev() {
        if y[k] > h {
            break;
        }
        left = left.min(y[k]);
    }
    let mut right = h;
    for &v in &y[i + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv == 0.0 || !curv.is_finite() {
        return None;
    }
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curv);
    (v >= x[0] && v <= x[2]).then_some(v)
}

/// Refines a sampled extremum. Maxima use the dB curve, minima `|S|²`,
/// which stays smooth through an exact zero.
fn refine(trace: &Trace, db: &[f64], e: &Extremum) -> f64 {
    let i = e.index;
    let x = [trace.freqs[i - 1], trace.freqs[i], trace.freqs[i + 1]];
    let y = match e.kind {
        FeatureKind::Resonance => [db[i - 1], db[i], db[i + 1]],
        FeatureKind::Antiresonance => [
            trace.values[i - 1].norm_sqr(),
            trace.values[i].norm_sqr(),
            trace.values[i + 1].norm_sqr(),
        ],
    };
    parabola_vertex(x, y).unwrap_or(x[1])
}

/// Full width at a level `drop` dB below a maximum (or above a minimum),
/// by linear interpolation. One-sided crossings count double.
fn width_at(freqs: &[f64], db: &[f64], i: usize, kind: FeatureKind, drop: f64) -> f64 {
    let sign = if kind == FeatureKind::Resonance { 1.0 } else { -1.0 };
    let level = sign * db[i] - drop;
    let y = |k: usize| sign * db[k];
    let mut left = None;
    for k in (0..i).rev() {
        if y(k) <= level {
            let t = (y(k + 1) - level) / (y(k + 1) - y(k));
            left = Some(freqs[k + 1] - t * (freqs[k + 1] - freqs[k]));
            break;
        }
    }
    let mut right = None;
    for k in i + 1..freqs.len() {
        if y(k) <= level {
            let t = (y(k - 1) - level) / (y(k - 1) - y(k));
            right = Some(freqs[k - 1] + t * (freqs[k] - freqs[k - 1]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (freqs[i] - l),
        (None, Some(r)) => 2.0 * (r - freqs[i]),
        (None, None) => f64::NAN,
    }
}

/// Locates resonances (maxima of |S|) and antiresonances (minima) whose
/// prominence reaches `min_prominence_db`, sorted by frequency. Phase jumps
/// use the absolute convention; see [`assign_phase_jumps`] for others.
///
/// Resonance widths are taken `min(3 dB, prominence/2)` below the peak and
/// antiresonance widths at half the prominence above the dip. Resonances
/// narrower than three samples get an indeterminate phase jump.
pub fn find_features(trace: &Trace, min_prominence_db: f64) -> Result<Vec<SpectralFeature>, AnalyzerError> {
    if trace.len() < MIN_POINTS {
        return Err(AnalyzerError::InsufficientData {
            points: trace.len(),
            needed: MIN_POINTS,
        });
    }
    let db = trace.magnitude_db();
    let mut features: Vec<SpectralFeature> = find_extrema(&db, min_prominence_db)
        .iter()
        .map(|e| {
            let drop = match e.kind {
                FeatureKind::Resonance => (0.5 * e.prominence_db).min(3.0),
                FeatureKind::Antiresonance => 0.5 * e.prominence_db,
            };
            SpectralFeature {
                kind: e.kind,
                frequency: refine(trace, &db, e),
                prominence_db: e.prominence_db,
                phase_jump: PhaseJump::Indeterminate,
                linewidth: width_at(&trace.freqs, &db, e.index, e.kind, drop),
                index: e.index,
            }
        })
        .collect();
    assign_phase_jumps(trace, &mut features, PhaseReference::Absolute);
    Ok(features)
}

/// Reference direction for reading phase jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhaseReference {
    /// The input-output convention itself: a jump from `+i` towards `−i` is negative.
    Absolute,
    /// Rotates the reference so that the antiresonance nearest this
    /// frequency reads positive. Invariant under a global phase of the data.
    AnchoredAntiresonance(f64),
}

/// Sample indices on either side of feature `k`, at most
/// [`JUMP_SPAN_LINEWIDTHS`] linewidths away and never past the midpoint to a
/// neighbouring feature.
fn jump_samples(trace: &Trace, features: &[SpectralFeature], k: usize) -> Option<(usize, usize)> {
    let f = &features[k];
    if !f.linewidth.is_finite() || f.linewidth <= 0.0 {
        return None;
    }
    let i = f.index;
    let n = trace.len();
    if i < 2 || i + 2 >= n {
        return None;
    }
    let step = 0.5 * (trace.freqs[i + 1] - trace.freqs[i - 1]);
    if f.kind == FeatureKind::Resonance && f.linewidth < 3.0 * step {
        return None;
    }
    let span = JUMP_SPAN_LINEWIDTHS * f.linewidth;
    let mut lo = f.frequency - span;
    let mut hi = f.frequency + span;
    if k > 0 {
        lo = lo.max(0.5 * (features[k - 1].frequency + f.frequency));
    }
    if k + 1 < features.len() {
        hi = hi.min(0.5 * (features[k + 1].frequency + f.frequency));
    }
    let il = trace.freqs.partition_point(|&x| x < lo).min(i - 2);
    let ir = trace
        .freqs
        .partition_point(|&x| x <= hi)
        .saturating_sub(1)
        .max(i + 2)
        .min(n - 1);
    Some((il, ir))
}

/// `S(right) − S(left)` and the unwrapped phase change between the samples.
fn chord(trace: &Trace, il: usize, ir: usize) -> (Complex64, f64) {
    let raw: Vec<f64> = trace.values[il..=ir].iter().map(|z| z.arg()).collect();
    let u = unwrap_phase(&raw);
    (trace.values[ir] - trace.values[il], u[u.len() - 1] - u[0])
}

/// Direction of the phase jump across feature `k`.
///
/// The jump is determinate when the unwrapped phase changes by more than
/// π/2 between the two samples. Its sign follows the chord `S_R − S_L`:
/// pointing towards `+i` (after removing the reference rotation) is positive.
pub fn phase_jump(trace: &Trace, features: &[SpectralFeature], k: usize, reference: PhaseReference) -> PhaseJump {
    let theta = match reference_angle(trace, features, reference) {
        Some(t) => t,
        None => return PhaseJump::Indeterminate,
    };
    jump_with_angle(trace, features, k, theta)
}

fn jump_with_angle(trace: &Trace, features: &[SpectralFeature], k: usize, theta: f64) -> PhaseJump {
    let Some((il, ir)) = jump_samples(trace, features, k) else {
        return PhaseJump::Indeterminate;
    };
    let (c, dphi) = chord(trace, il, ir);
    if dphi.abs() <= 0.5 * PI {
        return PhaseJump::Indeterminate;
    }
    let dir = (c * Complex64::from_polar(1.0, -theta)).im;
    if dir > 0.0 {
        PhaseJump::Positive
    } else if dir < 0.0 {
        PhaseJump::Negative
    } else {
        PhaseJump::Indeterminate
    }
}

fn reference_angle(trace: &Trace, features: &[SpectralFeature], reference: PhaseReference) -> Option<f64> {
    match reference {
        PhaseReference::Absolute => Some(0.0),
        PhaseReference::AnchoredAntiresonance(freq) => {
            let k = nearest_antiresonance(features, freq)?;
            let (il, ir) = jump_samples(trace, features, k)?;
            let (c, _) = chord(trace, il, ir);
            (c.norm() > 0.0).then(|| c.arg() - 0.5 * PI)
        }
    }
}

/// Index of the antiresonance closest to `freq`.
pub fn nearest_antiresonance(features: &[SpectralFeature], freq: f64) -> Option<usize> {
    features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == FeatureKind::Antiresonance)
        .min_by(|a, b| (a.1.frequency - freq).abs().total_cmp(&(b.1.frequency - freq).abs()))
        .map(|(k, _)| k)
}

/// Recomputes every feature's phase jump against `reference`.
pub fn assign_phase_jumps(trace: &Trace, features: &mut [SpectralFeature], reference: PhaseReference) {
    let theta = reference_angle(trace, features, reference);
    let jumps: Vec<PhaseJump> = (0..features.len())
        .map(|k| match theta {
            Some(t) => jump_with_angle(trace, features, k, t),
            None => PhaseJump::Indeterminate,
        })
        .collect();
    for (f, j) in features.iter_mut().zip(jumps) {
        f.phase_jump = j;
    }
}

/// Opposite jumps of an antiresonance and a mode lead to repulsion of the
/// antiresonance and the hybridised mode, equal jumps to attraction.
pub fn predict_coupling_behavior(
    antires_jump: PhaseJump,
    mode_jump: PhaseJump,
) -> Result<CouplingBehavior, AnalyzerError> {
    match (antires_jump, mode_jump) {
        (PhaseJump::Indeterminate, _) | (_, PhaseJump::Indeterminate) => Err(AnalyzerError::IndeterminateJump),
        (a, m) if a == m => Ok(CouplingBehavior::Attraction),
        _ => Ok(CouplingBehavior::Repulsion),
    }
}

/// Antiresonance branches extracted from a magnon map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiresonanceBranch {
    pub magnon_frequencies: Vec<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    /// Columns where the branches have fused into a single dip.
    pub merged_mask: Vec<bool>,
    /// Drive-grid spacing of the source map.
    pub drive_step: f64,
}

impl AntiresonanceBranch {
    pub fn len(&self) -> usize {
        self.magnon_frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnon_frequencies.is_empty()
    }

    pub fn has_merged_region(&self) -> bool {
        self.merged_mask.iter().any(|&m| m)
    }

    /// Number of non-merged samples across both branches.
    pub fn usable_samples(&self) -> usize {
        (0..self.len())
            .filter(|&i| !self.merged_mask[i])
            .map(|i| self.lower[i].is_some() as usize + self.upper[i].is_some() as usize)
            .sum()
    }

    /// Adjacent-column jumps larger than `factor` drive steps, ignoring gaps
    /// and merge boundaries. Returns the offending column indices.
    pub fn continuity_violations(&self, factor: f64) -> Vec<usize> {
        let limit = factor * self.drive_step;
        let mut out = Vec::new();
        for i in 1..self.len() {
            if self.merged_mask[i] != self.merged_mask[i - 1] {
                continue;
            }
            for b in [&self.lower, &self.upper] {
                if let (Some(a), Some(c)) = (b[i - 1], b[i]) {
                    if (c - a).abs() > limit {
                        out.push(i);
                    }
                }
            }
        }
        out.dedup();
        out
    }
}

/// Refined positions of the (at most two) most prominent |S21| minima of
/// one map row inside `window`, ascending.
fn column_minima(freqs: &[f64], row: &[Complex64], window: (f64, f64), min_prominence_db: f64) -> Vec<f64> {
    let lo = freqs.partition_point(|&x| x < window.0);
    let hi = freqs.partition_point(|&x| x <= window.1);
    if hi < lo + 3 {
        return Vec::new();
    }
    let f = &freqs[lo..hi];
    let v = &row[lo..hi];
    let db: Vec<f64> = v.iter().map(|z| to_db_floored(*z)).collect();
    let mut minima: Vec<Extremum> = find_extrema(&db, min_prominence_db)
        .into_iter()
        .filter(|e| e.kind == FeatureKind::Antiresonance)
        .collect();
    minima.sort_by(|a, b| b.prominence_db.total_cmp(&a.prominence_db));
    minima.truncate(2);
    let trace = Trace {
        freqs: f.to_vec(),
        values: v.to_vec(),
    };
    let mut out: Vec<f64> = minima.iter().map(|e| refine(&trace, &db, e)).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Follows the antiresonance branches through a magnon map.
///
/// Each column keeps its two most prominent minima in `window`. Runs of
/// single-minimum columns enclosed by two-minimum columns are merged
/// regions; single minima at the ends of the sweep are attached to the
/// nearer branch of the closest two-minimum column. Columns without any
/// minimum are gaps.
pub fn extract_branches(
    map: &SweepMap,
    window: (f64, f64),
    min_prominence_db: f64,
) -> Result<AntiresonanceBranch, AnalyzerError> {
    let freqs = map.drive_grid.to_vec();
    let n = map.magnon_grid.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|mi| column_minima(&freqs, map.row(mi), window, min_prominence_db))
        .collect();
    if cols.iter().all(|c| c.is_empty()) {
        return Err(AnalyzerError::NoBranch(window.0, window.1));
    }
    let mut lower = vec![None; n];
    let mut upper = vec![None; n];
    let mut merged = vec![false; n];
    let pairs: Vec<usize> = (0..n).filter(|&i| cols[i].len() == 2).collect();
    for i in 0..n {
        match cols[i].len() {
            2 => {
                lower[i] = Some(cols[i][0]);
                upper[i] = Some(cols[i][1]);
            }
            1 => {
                let x = cols[i][0];
                let before = pairs.iter().rev().find(|&&j| j < i);
                let after = pairs.iter().find(|&&j| j > i);
                if before.is_some() && after.is_some() {
                    merged[i] = true;
                    lower[i] = Some(x);
                    upper[i] = Some(x);
                } else if let Some(&j) = before.or(after) {
                    if (x - cols[j][0]).abs() <= (x - cols[j][1]).abs() {
                        lower[i] = Some(x);
                    } else {
                        upper[i] = Some(x);
                    }
                } else {
                    lower[i] = Some(x);
                }
            }
            _ => {}
        }
    }
    Ok(AntiresonanceBranch {
        magnon_frequencies: map.magnon_grid.to_vec(),
        lower,
        upper,
        merged_mask: merged,
        drive_step: map.drive_grid.step(),
    })
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    /// Drive-grid spacing in GHz.
    pub step: f64,
    /// Sweep margin beyond the outermost included mode (and the reference), GHz.
    pub margin: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            step: 5e-4,
            margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mode_counts: Vec<usize>,
    /// Labels of the modes in inclusion order.
    pub labels: Vec<String>,
    /// `None` when no antiresonance exists for that mode count.
    pub antires_freq: Vec<Option<f64>>,
    pub reference_freq: f64,
    pub mismatch: Vec<Option<f64>>,
}

/// Photon-mode indices ordered by distance of their frequency to `reference`.
pub fn nearest_first_ordering(spec: &SystemSpec, reference: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..spec.photon_modes.len()).collect();
    idx.sort_by(|&a, &b| {
        let da = (spec.photon_modes[a].frequency - reference).abs();
        let db = (spec.photon_modes[b].frequency - reference).abs();
        da.total_cmp(&db)
    });
    idx
}

/// Antiresonance of the magnon-free system built from the first `k` modes
/// of `ordering`, for each `k`. The antiresonance reported is the |S21|
/// minimum nearest `reference_freq`, refined by golden-section search.
pub fn convergence_study(
    full_spec: &SystemSpec,
    ordering: &[usize],
    reference_freq: f64,
    options: ConvergenceOptions,
) -> Result<ConvergenceReport, AnalyzerError> {
    let count = full_spec.photon_modes.len();
    if let Some(&index) = ordering.iter().find(|&&i| i >= count) {
        return Err(AnalyzerError::BadOrdering { index, count });
    }
    let base = full_spec.without_magnons();
    let mut report = ConvergenceReport {
        mode_counts: Vec::new(),
        labels: ordering.iter().map(|&i| base.photon_modes[i].label.clone()).collect(),
        antires_freq: Vec::new(),
        reference_freq,
        mismatch: Vec::new(),
    };
    for k in 1..=ordering.len() {
        let sub = base.select_photons(&ordering[..k])?;
        let found = nearest_minimum(&sub, reference_freq, options)?;
        report.mode_counts.push(k);
        report.antires_freq.push(found);
        report.mismatch.push(found.map(|f| (f - reference_freq).abs()));
    }
    Ok(report)
}

fn nearest_minimum(
    spec: &SystemSpec,
    reference: f64,
    options: ConvergenceOptions,
) -> Result<Option<f64>, AnalyzerError> {
    let freqs = spec.photon_modes.iter().map(|m| m.frequency);
    let lo = freqs.clone().fold(reference, f64::min) - options.margin;
    let hi = freqs.fold(reference, f64::max) + options.margin;
    let points = ((hi - lo) / options.step).round() as usize + 1;
    let grid = FrequencyGrid::new(lo, hi, points)?;
    let spectrum = sweep(spec, &grid)?;
    let mag = spectrum.magnitude(1, 0);
    let neg: Vec<f64> = mag.iter().map(|x| -x).collect();
    let Some(i) = peaks(&neg).into_iter().min_by(|&a, &b| {
        (grid.at(a) - reference)
            .abs()
            .total_cmp(&(grid.at(b) - reference).abs())
    }) else {
        return Ok(None);
    };
    let eval = crate::engine::Evaluator::new(spec);
    let f = golden_section_min(
        |x| eval.s_matrix(x).map_or(f64::INFINITY, |s| s[(1, 0)].norm()),
        grid.at(i - 1),
        grid.at(i + 1),
        1e-10,
    );
    Ok(Some(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{antires_branches, TwoModeParams};
    use crate::model::{cavity_mode_has_negative_jump, table3_cavity, PhotonMode, PortCoupling, SpherePosition};

    fn trace_of(spec: &SystemSpec, lo: f64, hi: f64, n: usize) -> Trace {
        let grid = FrequencyGrid::new(lo, hi, n).unwrap();
        Trace::s21(&sweep(spec, &grid).unwrap())
    }

    #[test]
    fn single_mode_gives_one_resonance() {
        let spec = SystemSpec::new(2).with_photon(PhotonMode::new("a", 12.0, vec![PortCoupling::new(0.005, 0.0); 2]));
        let grid = FrequencyGrid::new(11.9, 12.1003, 1001).unwrap();
        let t = Trace::s21(&sweep(&spec, &grid).unwrap());
        let f = find_features(&t, DEFAULT_PROMINENCE_DB).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FeatureKind::Resonance);
        assert!((f[0].frequency - 12.0).abs() <= 0.5 * grid.step());
        assert!((f[0].linewidth - 0.01).abs() < 1e-3);
        assert_eq!(f[0].phase_jump, PhaseJump::Negative);
    }

    #[test]
    fn photon_magnon_features_and_jumps() {
        let p = TwoModeParams::photon_magnon(12.0, [0.002, 0.002], [0.0, 0.0], 0.03, 12.01);
        let t = trace_of(&p.photon_magnon_spec(), 11.85, 12.15, 6001);
        let f = find_features(&t, DEFAULT_PROMINENCE_DB).unwrap();
        let kinds: Vec<FeatureKind> = f.iter().map(|x| x.kind).collect();
        assert_eq!(
            kinds,
            [
                FeatureKind::Resonance,
                FeatureKind::Antiresonance,
                FeatureKind::Resonance
            ]
        );
        assert!((f[1].frequency - 12.01).abs() < 1e-6);
        let jumps: Vec<PhaseJump> = f.iter().map(|x| x.phase_jump).collect();
        assert_eq!(jumps, [PhaseJump::Negative, PhaseJump::Positive, PhaseJump::Negative]);
    }

    #[test]
    fn anchored_jumps_ignore_global_phase() {
        let p = TwoModeParams::photon_magnon(12.0, [0.002, 0.002], [0.0, PI], 0.03, 12.01);
        let t = trace_of(&p.photon_magnon_spec(), 11.85, 12.15, 3001);
        let reference = PhaseReference::AnchoredAntiresonance(12.01);
        let mut base = find_features(&t, DEFAULT_PROMINENCE_DB).unwrap();
        assign_phase_jumps(&t, &mut base, reference);
        for theta in [0.3, 1.7, PI, -2.2] {
            let r = t.rotated(theta);
            let mut f = find_features(&r, DEFAULT_PROMINENCE_DB).unwrap();
            assign_phase_jumps(&r, &mut f, reference);
            assert_eq!(f, base);
        }
    }

    #[test]
    fn mirrored_db_swaps_kinds() {
        let spec = table3_cavity(SpherePosition::A).without_magnons();
        let t = trace_of(&spec, 12.0, 17.0, 20001);
        let db = t.magnitude_db();
        let mut sorted = db.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let mirrored: Vec<f64> = db.iter().map(|x| 2.0 * median - x).collect();
        let a = find_extrema(&db, 3.0);
        let b = find_extrema(&mirrored, 3.0);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.index, y.index);
            assert_ne!(x.kind, y.kind);
            assert!((x.prominence_db - y.prominence_db).abs() < 1e-9);
        }
    }

    #[test]
    fn table3_jumps_match_the_table() {
        let spec = table3_cavity(SpherePosition::A).without_magnons();
        let t = trace_of(&spec, 12.0, 17.0, 50001);
        let f = find_features(&t, DEFAULT_PROMINENCE_DB).unwrap();
        let res: Vec<&SpectralFeature> = f.iter().filter(|x| x.is_mode_resonance()).collect();
        assert_eq!(res.len(), 7);
        for m in &spec.photon_modes {
            let r = res
                .iter()
                .min_by(|a, b| {
                    (a.frequency - m.frequency)
                        .abs()
                        .total_cmp(&(b.frequency - m.frequency).abs())
                })
                .unwrap();
            let want = if cavity_mode_has_negative_jump(&m.label).unwrap() {
                PhaseJump::Negative
            } else {
                PhaseJump::Positive
            };
            assert_eq!(r.phase_jump, want, "{}", m.label);
        }
        let k = nearest_antiresonance(&f, 13.59).unwrap();
        assert!((f[k].frequency - 13.59).abs() < 0.1);
        assert_eq!(f[k].phase_jump, PhaseJump::Positive);
    }

    #[test]
    fn too_few_points() {
        let t = Trace::new(vec![1.0, 2.0], vec![Complex64::new(1.0, 0.0); 2]).unwrap();
        assert!(matches!(
            find_features(&t, 3.0),
            Err(AnalyzerError::InsufficientData { .. })
        ));
    }

    #[test]
    fn coupling_rule() {
        use CouplingBehavior::*;
        use PhaseJump::*;
        assert_eq!(predict_coupling_behavior(Positive, Negative).unwrap(), Repulsion);
        assert_eq!(predict_coupling_behavior(Positive, Positive).unwrap(), Attraction);
        assert_eq!(predict_coupling_behavior(Negative, Negative).unwrap(), Attraction);
        assert!(predict_coupling_behavior(Indeterminate, Negative).is_err());
    }

    /// Map whose |S21| vanishes exactly on the effective-model branches.
    fn synthetic_map(omega_ar: f64, g: f64, phi: f64) -> SweepMap {
        let mg = FrequencyGrid::new(13.3, 13.7, 501).unwrap();
        let dg = FrequencyGrid::new(13.3, 13.7, 2001).unwrap();
        let mut s21 = Vec::new();
        for wm in mg.iter() {
            let (a, b) = antires_branches(Complex64::new(omega_ar, 0.0), wm, g, phi);
            for f in dg.iter() {
                s21.push((f - a) * (f - b) / ((f - 13.0 + 0.01 * Complex64::i()) * (f - 14.0 + 0.01 * Complex64::i())));
            }
        }
        SweepMap {
            magnon_grid: mg,
            drive_grid: dg,
            s21,
        }
    }

    #[test]
    fn repulsive_synthetic_branches() {
        let map = synthetic_map(13.5, 0.02, 0.0);
        let b = extract_branches(&map, (13.3, 13.7), DEFAULT_BRANCH_PROMINENCE_DB).unwrap();
        assert!(!b.has_merged_region());
        let mut gap = f64::INFINITY;
        for i in 0..b.len() {
            let wm = b.magnon_frequencies[i];
            let (hi, lo) = antires_branches(Complex64::new(13.5, 0.0), wm, 0.02, 0.0);
            if let (Some(l), Some(u)) = (b.lower[i], b.upper[i]) {
                assert!((l - lo.re).abs() <= b.drive_step && (u - hi.re).abs() <= b.drive_step);
                gap = gap.min(u - l);
            }
        }
        assert!((gap - 0.04).abs() <= b.drive_step);
        assert!(b.continuity_violations(5.0).is_empty());
    }

    #[test]
    fn attractive_synthetic_branches_merge() {
        let (w, g) = (13.5, 0.02);
        let map = synthetic_map(w, g, PI);
        let b = extract_branches(&map, (13.3, 13.7), DEFAULT_BRANCH_PROMINENCE_DB).unwrap();
        for i in 0..b.len() {
            let d = (b.magnon_frequencies[i] - w).abs();
            // Exclude columns within a map step of the exceptional points.
            if (d - 2.0 * g).abs() > 0.006 {
                assert_eq!(b.merged_mask[i], d < 2.0 * g, "column {i}");
            }
        }
    }

    #[test]
    fn table3_convergence_shapes() {
        let spec = table3_cavity(SpherePosition::A);
        let order = nearest_first_ordering(&spec, 13.589);
        assert_eq!(spec.photon_modes[order[0]].label, "TE212");
        let r = convergence_study(&spec, &order, 13.589, ConvergenceOptions::default()).unwrap();
        assert_eq!(r.mode_counts, (1..=7).collect::<Vec<_>>());
        assert_eq!(r.antires_freq[0], None);
        let mut rev = order.clone();
        rev.reverse();
        let r2 = convergence_study(&spec, &rev, 13.589, ConvergenceOptions::default()).unwrap();
        assert!((r.antires_freq[6].unwrap() - r2.antires_freq[6].unwrap()).abs() < 1e-8);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let x = golden_section_min(|x| (x - 1.234).powi(2), 0.0, 3.0, 1e-12);
        assert!((x - 1.234).abs() < 1e-9);
    }
}
