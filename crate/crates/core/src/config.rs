//! JSON configuration schema for [`SystemSpec`].
//!
//! ```json
//! {
//!   "ports": 2,
//!   "photon_modes": [
//!     { "label": "TE211", "freq_ghz": 12.4, "q_factor": 1525,
//!       "port_phases_rad": [0, 0], "magnon_couplings_ghz": [0.0135] }
//!   ],
//!   "magnon_modes": [ { "label": "yig", "freq_ghz": 13.6, "linewidth_ghz": 0 } ],
//!   "photon_photon_couplings": [ { "p": 0, "q": 1, "re": 0.001, "im": 0 } ]
//! }
//! ```
//!
//! A photon mode gives either `q_factor` (total external damping `ω/Q`,
//! split equally between ports) or an explicit `gamma_per_port_ghz` array.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Diagnostic, MagnonCoupling, MagnonMode, ModelError, PhotonCoupling, PhotonMode, PortCoupling, Severity, SystemSpec,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub ports: usize,
    pub photon_modes: Vec<PhotonModeConfig>,
    #[serde(default)]
    pub magnon_modes: Vec<MagnonModeConfig>,
    #[serde(default)]
    pub photon_photon_couplings: Vec<PhotonCouplingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonModeConfig {
    pub label: String,
    pub freq_ghz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_per_port_ghz: Option<Vec<f64>>,
    pub port_phases_rad: Vec<f64>,
    #[serde(default)]
    pub magnon_couplings_ghz: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub intrinsic_loss_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnonModeConfig {
    pub label: String,
    pub freq_ghz: f64,
    #[serde(default)]
    pub linewidth_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonCouplingConfig {
    pub p: usize,
    pub q: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

impl SystemConfig {
    /// Builds and validates the system. Warnings are returned alongside.
    pub fn to_spec(&self) -> Result<(SystemSpec, Vec<Diagnostic>), ConfigError> {
        let n_magnons = self.magnon_modes.len();
        let mut spec = SystemSpec::new(self.ports);
        for (p, m) in self.photon_modes.iter().enumerate() {
            let path = format!("photon_modes[{p}]");
            if m.port_phases_rad.len() != self.ports {
                return Err(field_error(
                    format!("{path}.port_phases_rad"),
                    format!("expected {} entries, found {}", self.ports, m.port_phases_rad.len()),
                ));
            }
            let gammas = match (&m.q_factor, &m.gamma_per_port_ghz) {
                (Some(_), Some(_)) => {
                    return Err(field_error(
                        path,
                        "give either q_factor or gamma_per_port_ghz, not both",
                    ))
                }
                (None, None) => return Err(field_error(path, "one of q_factor or gamma_per_port_ghz is required")),
                (Some(q), None) => {
                    if !(*q > 0.0) {
                        return Err(field_error(format!("{path}.q_factor"), "must be positive"));
                    }
                    vec![m.freq_ghz / q / self.ports as f64; self.ports]
                }
                (None, Some(g)) => {
                    if g.len() != self.ports {
                        return Err(field_error(
                            format!("{path}.gamma_per_port_ghz"),
                            format!("expected {} entries, found {}", self.ports, g.len()),
                        ));
                    }
                    g.clone()
                }
            };
            if m.magnon_couplings_ghz.len() > n_magnons {
                return Err(field_error(
                    format!("{path}.magnon_couplings_ghz"),
                    format!(
                        "{} entries but only {n_magnons} magnon modes",
                        m.magnon_couplings_ghz.len()
                    ),
                ));
            }
            spec.photon_modes.push(PhotonMode {
                label: m.label.clone(),
                frequency: m.freq_ghz,
                intrinsic_loss: m.intrinsic_loss_ghz,
                port_couplings: gammas
                    .iter()
                    .zip(&m.port_phases_rad)
                    .map(|(&g, &ph)| PortCoupling::new(g, ph))
                    .collect(),
                magnon_couplings: m
                    .magnon_couplings_ghz
                    .iter()
                    .enumerate()
                    .map(|(magnon, &g)| MagnonCoupling { magnon, g })
                    .collect(),
            });
        }
        spec.magnon_modes = self
            .magnon_modes
            .iter()
            .map(|m| MagnonMode {
                label: m.label.clone(),
                frequency: m.freq_ghz,
                intrinsic_loss: m.linewidth_ghz,
            })
            .collect();
        spec.photon_photon_couplings = self
            .photon_photon_couplings
            .iter()
            .map(|c| PhotonCoupling {
                p: c.p,
                q: c.q,
                g: Complex64::new(c.re, c.im),
            })
            .collect();

        let diags = spec.validate();
        let (errors, warnings): (Vec<_>, Vec<_>) = diags.into_iter().partition(|d| d.severity == Severity::Error);
        if !errors.is_empty() {
            return Err(ModelError::Invalid(errors).into());
        }
        Ok((spec, warnings))
    }

    /// Exact configuration for a spec; damping is written per port.
    pub fn from_spec(spec: &SystemSpec) -> Self {
        let n_magnons = spec.magnon_modes.len();
        let photon_modes = spec
            .photon_modes
            .iter()
            .map(|m| {
                let mut couplings = vec![0.0; n_magnons];
                for mc in &m.magnon_couplings {
                    if mc.magnon < n_magnons {
                        couplings[mc.magnon] = mc.g;
                    }
                }
                PhotonModeConfig {
                    label: m.label.clone(),
                    freq_ghz: m.frequency,
                    q_factor: None,
                    gamma_per_port_ghz: Some(m.port_couplings.iter().map(|c| c.gamma).collect()),
                    port_phases_rad: m.port_couplings.iter().map(|c| c.phase).collect(),
                    magnon_couplings_ghz: couplings,
                    intrinsic_loss_ghz: m.intrinsic_loss,
                }
            })
            .collect();
        Self {
            ports: spec.n_ports,
            photon_modes,
            magnon_modes: spec
                .magnon_modes
                .iter()
                .map(|m| MagnonModeConfig {
                    label: m.label.clone(),
                    freq_ghz: m.frequency,
                    linewidth_ghz: m.intrinsic_loss,
                })
                .collect(),
            photon_photon_couplings: spec
                .photon_photon_couplings
                .iter()
                .map(|c| PhotonCouplingConfig {
                    p: c.p,
                    q: c.q,
                    re: c.g.re,
                    im: c.g.im,
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_spec(path: &Path) -> Result<(SystemSpec, Vec<Diagnostic>), ConfigError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    SystemConfig::from_json(&text, &display)?.to_spec()
}
