//! CSV and Touchstone import/export.
//!
//! Every float is written as `{:.11e}` (12 significant digits), so equal
//! inputs always give byte-identical files.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::analyzer::{AnalyzerError, AntiresonanceBranch, Trace};
use crate::engine::{to_db, unwrap_phase, Spectrum, SweepMap};
use crate::model::FrequencyGrid;

pub const SPECTRUM_HEADER: [&str; 5] = ["freq_ghz", "re_s21", "im_s21", "mag_db", "phase_rad"];
pub const MAP_HEADER: [&str; 6] = ["f_magnon_ghz", "f_drive_ghz", "re_s21", "im_s21", "mag_db", "phase_rad"];
pub const BRANCH_HEADER: [&str; 5] = ["f_magnon_ghz", "lower_ghz", "upper_ghz", "merged", "drive_step_ghz"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// `row` counts data rows from 1, excluding the header.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
}

fn fmt(x: f64) -> String {
    format!("{x:.11e}")
}

fn csv_error(e: csv::Error) -> IoError {
    let row = e.position().map_or(0, |p| p.record().saturating_sub(1) as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::Io(io),
        kind => IoError::Row {
            row,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes the S21 columns plus one `re_sIJ,im_sIJ` pair (1-based) per extra element.
pub fn write_spectrum_csv(out: impl Write, spectrum: &Spectrum, extra: &[(usize, usize)]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = SPECTRUM_HEADER.iter().map(|s| s.to_string()).collect();
    for &(i, j) in extra {
        header.push(format!("re_s{}{}", i + 1, j + 1));
        header.push(format!("im_s{}{}", i + 1, j + 1));
    }
    w.write_record(&header).map_err(csv_error)?;
    let s21 = spectrum.s21();
    let phase = spectrum.phase_unwrapped(1, 0);
    for (k, f) in spectrum.grid.iter().enumerate() {
        let z = s21[k];
        let mut rec = vec![fmt(f), fmt(z.re), fmt(z.im), fmt(to_db(z)), fmt(phase[k])];
        for &(i, j) in extra {
            let e = spectrum.s[k][(i, j)];
            rec.push(fmt(e.re));
            rec.push(fmt(e.im));
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IoError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IoError::Header(format!("missing column `{name}`")))
}

fn field(rec: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64, IoError> {
    let raw = rec.get(idx).ok_or_else(|| IoError::Row {
        row,
        message: format!("missing `{name}`"),
    })?;
    raw.trim().parse::<f64>().map_err(|_| IoError::Row {
        row,
        message: format!("`{name}` is not a number: {raw:?}"),
    })
}

fn optional_field(rec: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<Option<f64>, IoError> {
    match rec.get(idx).map(str::trim) {
        None | Some("") => Ok(None),
        Some(_) => field(rec, idx, row, name).map(Some),
    }
}

/// Reads the S21 trace of a spectrum CSV; extra columns are ignored.
pub fn read_spectrum_csv(input: impl Read) -> Result<Trace, IoError> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    let cols = [
        column(&headers, "freq_ghz")?,
        column(&headers, "re_s21")?,
        column(&headers, "im_s21")?,
    ];
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(csv_error)?;
        let f = field(&rec, cols[0], row, "freq_ghz")?;
        let re = field(&rec, cols[1], row, "re_s21")?;
        let im = field(&rec, cols[2], row, "im_s21")?;
        if let Some(&last) = freqs.last() {
            if f <= last {
                return Err(IoError::Row {
                    row,
                    message: format!("frequency {f} does not increase"),
                });
            }
        }
        freqs.push(f);
        values.push(Complex64::new(re, im));
    }
    Ok(Trace::new(freqs, values)?)
}

/// Long format, one row per (magnon, drive) pair, magnon-major.
pub fn write_map_csv(out: impl Write, map: &SweepMap) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MAP_HEADER).map_err(csv_error)?;
    for (mi, fm) in map.magnon_grid.iter().enumerate() {
        for (di, fd) in map.drive_grid.iter().enumerate() {
            let z = map.get(mi, di);
            w.write_record([fmt(fm), fmt(fd), fmt(z.re), fmt(z.im), fmt(to_db(z)), fmt(z.arg())])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn grid_from(values: &[f64], name: &str) -> Result<FrequencyGrid, IoError> {
    let n = values.len();
    if n < 2 {
        return Err(IoError::Header(format!("{name} grid needs at least 2 distinct values")));
    }
    let grid =
        FrequencyGrid::new(values[0], values[n - 1], n).map_err(|e| IoError::Header(format!("{name} grid: {e}")))?;
    let tol = 1e-9 * grid.step();
    for (i, v) in values.iter().enumerate() {
        if (grid.at(i) - v).abs() > tol.max(1e-11 * v.abs()) {
            return Err(IoError::Header(format!("{name} grid is not uniform at index {i}")));
        }
    }
    Ok(grid)
}

/// Reads a long-format map written by [`write_map_csv`].
pub fn read_map_csv(input: impl Read) -> Result<SweepMap, IoError> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    let names = ["f_magnon_ghz", "f_drive_ghz", "re_s21", "im_s21"];
    let cols: Vec<usize> = names.iter().map(|n| column(&headers, n)).collect::<Result<_, _>>()?;
    let mut magnons: Vec<f64> = Vec::new();
    let mut drives: Vec<f64> = Vec::new();
    let mut s21 = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(csv_error)?;
        let v: Vec<f64> = (0..4)
            .map(|c| field(&rec, cols[c], row, names[c]))
            .collect::<Result<_, _>>()?;
        if magnons.last() != Some(&v[0]) {
            magnons.push(v[0]);
        }
        if magnons.len() == 1 {
            drives.push(v[1]);
        } else {
            let di = (s21.len()) % drives.len();
            if drives[di] != v[1] {
                return Err(IoError::Row {
                    row,
                    message: format!(
                        "drive frequency {} does not repeat the first block ({})",
                        v[1], drives[di]
                    ),
                });
            }
        }
        s21.push(Complex64::new(v[2], v[3]));
    }
    if drives.is_empty() || s21.len() != magnons.len() * drives.len() {
        return Err(IoError::Header("map is not a complete magnon × drive grid".into()));
    }
    Ok(SweepMap {
        magnon_grid: grid_from(&magnons, "magnon")?,
        drive_grid: grid_from(&drives, "drive")?,
        s21,
    })
}

/// Branch samples; absent values are empty fields.
pub fn write_branch_csv(out: impl Write, branch: &AntiresonanceBranch) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BRANCH_HEADER).map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    for i in 0..branch.len() {
        w.write_record([
            fmt(branch.magnon_frequencies[i]),
            opt(branch.lower[i]),
            opt(branch.upper[i]),
            (branch.merged_mask[i] as u8).to_string(),
            fmt(branch.drive_step),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_branch_csv(input: impl Read) -> Result<AntiresonanceBranch, IoError> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    let cols: Vec<usize> = BRANCH_HEADER
        .iter()
        .map(|n| column(&headers, n))
        .collect::<Result<_, _>>()?;
    let mut b = AntiresonanceBranch {
        magnon_frequencies: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        merged_mask: Vec::new(),
        drive_step: 0.0,
    };
    for (k, rec) in r.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(csv_error)?;
        b.magnon_frequencies.push(field(&rec, cols[0], row, BRANCH_HEADER[0])?);
        b.lower.push(optional_field(&rec, cols[1], row, BRANCH_HEADER[1])?);
        b.upper.push(optional_field(&rec, cols[2], row, BRANCH_HEADER[2])?);
        let merged = match rec.get(cols[3]).map(str::trim) {
            Some("1") | Some("true") => true,
            Some("0") | Some("false") | Some("") | None => false,
            Some(other) => {
                return Err(IoError::Row {
                    row,
                    message: format!("`merged` must be 0 or 1, got {other:?}"),
                })
            }
        };
        b.merged_mask.push(merged);
        b.drive_step = field(&rec, cols[4], row, BRANCH_HEADER[4])?;
    }
    Ok(b)
}

/// Touchstone v1 with `# GHz S RI R 50`. One- and two-port data go on a
/// single line per frequency (two-port order S11 S21 S12 S22); larger
/// networks write one matrix row per line.
pub fn write_touchstone(mut out: impl Write, spectrum: &Spectrum) -> Result<(), IoError> {
    let n = spectrum.n_ports();
    writeln!(out, "! {n}-port S-parameters")?;
    writeln!(out, "# GHz S RI R 50")?;
    for (k, f) in spectrum.grid.iter().enumerate() {
        let s = &spectrum.s[k];
        let pair = |i: usize, j: usize| format!("{} {}", fmt(s[(i, j)].re), fmt(s[(i, j)].im));
        if n <= 2 {
            let order: Vec<(usize, usize)> = if n == 1 {
                vec![(0, 0)]
            } else {
                vec![(0, 0), (1, 0), (0, 1), (1, 1)]
            };
            let body: Vec<String> = order.iter().map(|&(i, j)| pair(i, j)).collect();
            writeln!(out, "{} {}", fmt(f), body.join(" "))?;
        } else {
            for i in 0..n {
                let body: Vec<String> = (0..n).map(|j| pair(i, j)).collect();
                if i == 0 {
                    writeln!(out, "{} {}", fmt(f), body.join(" "))?;
                } else {
                    writeln!(out, "{}", body.join(" "))?;
                }
            }
        }
    }
    Ok(())
}

/// Reads one- or two-port Touchstone v1 data in RI format.
pub fn read_touchstone(input: impl BufRead, n_ports: usize) -> Result<Vec<(f64, DMatrix<Complex64>)>, IoError> {
    if !(1..=2).contains(&n_ports) {
        return Err(IoError::Header(format!(
            "only 1- and 2-port files are supported, asked for {n_ports}"
        )));
    }
    let mut scale = None;
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let text = line.split('!').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(opts) = text.strip_prefix('#') {
            let upper = opts.to_ascii_uppercase();
            let tokens: Vec<&str> = upper.split_whitespace().collect();
            if !tokens.contains(&"RI") {
                return Err(IoError::Line {
                    line: line_no,
                    message: "only RI data are supported".into(),
                });
            }
            scale = Some(match tokens.first() {
                Some(&"HZ") => 1e-9,
                Some(&"KHZ") => 1e-6,
                Some(&"MHZ") => 1e-3,
                _ => 1.0,
            });
            continue;
        }
        let nums: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| IoError::Line {
                    line: line_no,
                    message: format!("not a number: {t:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let expected = 1 + 2 * n_ports * n_ports;
        if nums.len() != expected {
            return Err(IoError::Line {
                line: line_no,
                message: format!("expected {expected} values, found {}", nums.len()),
            });
        }
        let c = |k: usize| Complex64::new(nums[1 + 2 * k], nums[2 + 2 * k]);
        let m = if n_ports == 1 {
            DMatrix::from_element(1, 1, c(0))
        } else {
            DMatrix::from_row_slice(2, 2, &[c(0), c(2), c(1), c(3)])
        };
        let scale = scale.ok_or_else(|| IoError::Line {
            line: line_no,
            message: "data before the option line".into(),
        })?;
        out.push((nums[0] * scale, m));
    }
    Ok(out)
}

/// Unwrapped S21 phase of a trace, for reports.
pub fn trace_phase(trace: &Trace) -> Vec<f64> {
    unwrap_phase(&trace.values().iter().map(|z| z.arg()).collect::<Vec<_>>())
}
