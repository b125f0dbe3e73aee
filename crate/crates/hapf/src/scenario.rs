//! Scenario configuration.
//!
//! Scenarios are plain-text documents of `[section]` headers and
//! `key = value` lines. Blank lines and `#` comments are ignored. Parsing is
//! strict: unknown sections or keys are errors, every diagnostic carries a
//! line number, and omitted keys fall back to the reference rig defaults.
//!
//! Sections and keys (defaults in parentheses):
//!
//! ```text
//! [circuit]     v_s_rms (220), f1 (50), l_s (0.0016), r_s (0.01),
//!               l_l (0.023), c_l (50e-6), r_l (78), c_dc (4500e-6),
//!               l_f (0.0025), r_on (1e-3), r_off (1e6), dt (2e-6)
//! [filter_5th]  c (20e-6), l (0.0199), r (0.629)
//! [filter_7th]  c (10e-6), l (0.0204), r (0.902)
//! [filter_hp]   c (3.25e-6), l (0.025), r (260)
//! [controller]  v_dc_ref (750), dc_gain (50), dc_filter_tau (0.005),
//!               band_half_width (0.5), v_dc_init (v_dc_ref)
//! [run]         mode (hybrid), t_end (0.3), t_settle (0.1), out_dir (out)
//! [analysis]    n_cycles (10), h_max (50)
//! ```

use std::path::PathBuf;

use thiserror::Error;

use crate::circuit::{CircuitParams, Mode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key '{key}' in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Controller settings shared by the DC-bus regulator and the comparator.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub v_dc_ref: f64,
    pub dc_gain: f64,
    pub dc_filter_tau: f64,
    pub band_half_width: f64,
    /// Initial bus voltage; `None` means pre-charged to the reference.
    pub v_dc_init: Option<f64>,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            v_dc_ref: 750.0,
            dc_gain: 50.0,
            dc_filter_tau: 5e-3,
            band_half_width: 0.5,
            v_dc_init: None,
        }
    }
}

/// Measurement window settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisParams {
    /// Fundamental cycles in the analysis window.
    pub n_cycles: usize,
    /// Highest harmonic order kept in spectra and THD.
    pub h_max: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            n_cycles: 10,
            h_max: 50,
        }
    }
}

/// One complete run description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub circuit: CircuitParams,
    pub control: ControlParams,
    pub mode: Mode,
    /// Simulated span, seconds.
    pub t_end: f64,
    /// Measurements start here, seconds.
    pub t_settle: f64,
    pub analysis: AnalysisParams,
    pub out_dir: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            circuit: CircuitParams::default(),
            control: ControlParams::default(),
            mode: Mode::Hybrid,
            t_end: 0.3,
            t_settle: 0.1,
            analysis: AnalysisParams::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl Scenario {
    pub fn v_dc_init(&self) -> f64 {
        self.control.v_dc_init.unwrap_or(self.control.v_dc_ref)
    }

    /// Checks the cross-field invariants that parsing alone cannot see.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.circuit;
        let positive = [
            ("v_s_rms", c.v_s_rms),
            ("f1", c.f1),
            ("l_s", c.l_s),
            ("r_s", c.r_s),
            ("l_l", c.l_l),
            ("c_l", c.c_l),
            ("r_l", c.r_l),
            ("c_dc", c.c_dc),
            ("l_f", c.l_f),
            ("r_on", c.r_on),
            ("r_off", c.r_off),
            ("dt", c.dt),
            ("dc_gain", self.control.dc_gain),
            ("v_dc_ref", self.control.v_dc_ref),
            ("dc_filter_tau", self.control.dc_filter_tau),
            ("band_half_width", self.control.band_half_width),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        for (i, b) in c.branches.iter().enumerate() {
            for (name, value) in [("c", b.c), ("l", b.l), ("r", b.r)] {
                if !value.is_finite() || value <= 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "filter branch {i}: {name} must be positive, got {value}"
                    )));
                }
            }
        }
        if c.dt > 5e-6 {
            return Err(ConfigError::Invalid(format!(
                "dt = {} s exceeds the 5e-6 s ceiling",
                c.dt
            )));
        }
        if let Some(v0) = self.control.v_dc_init {
            if !v0.is_finite() || v0 < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "v_dc_init must be non-negative, got {v0}"
                )));
            }
        }
        if self.analysis.n_cycles < 5 {
            return Err(ConfigError::Invalid(format!(
                "n_cycles must be at least 5, got {}",
                self.analysis.n_cycles
            )));
        }
        if self.analysis.h_max < 2 {
            return Err(ConfigError::Invalid(format!(
                "h_max must be at least 2, got {}",
                self.analysis.h_max
            )));
        }
        if !self.t_settle.is_finite() || self.t_settle < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "t_settle must be non-negative, got {}",
                self.t_settle
            )));
        }
        let window = self.analysis.n_cycles as f64 / c.f1;
        // Tolerate rounding in t_settle + window (e.g. 0.1 + 0.2 in binary).
        if self.t_end < self.t_settle + window - 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "t_end = {} s is shorter than t_settle + analysis window = {} s",
                self.t_end,
                self.t_settle + window
            )));
        }
        // The spectrum demands a window of exactly n_cycles periods; reject
        // f1/dt combinations that cannot deliver one before simulating.
        let window_samples = self.analysis.n_cycles as f64 / (c.f1 * c.dt);
        if (window_samples - window_samples.round()).abs() > 1e-6 {
            return Err(ConfigError::Invalid(format!(
                "{} cycles at f1 = {} Hz spans {window_samples} samples at dt = {} s, \
                 not an integer",
                self.analysis.n_cycles, c.f1, c.dt
            )));
        }
        if self.analysis.h_max as f64 * c.f1 > 0.5 / c.dt {
            return Err(ConfigError::Invalid(format!(
                "h_max = {} at f1 = {} Hz exceeds the Nyquist limit of dt = {} s",
                self.analysis.h_max, c.f1, c.dt
            )));
        }
        Ok(())
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("value '{value}' for '{key}' is not a number"),
    })
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("value '{value}' for '{key}' is not a non-negative integer"),
    })
}

/// Parses a scenario document, rejecting anything outside the documented
/// schema. An empty document yields the default scenario.
pub fn load_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let mut sc = Scenario::default();
    let mut section: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }

        if let Some(name) = content.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                line,
                message: "section header missing closing ']'".into(),
            })?;
            let name = name.trim();
            match name {
                "circuit" | "filter_5th" | "filter_7th" | "filter_hp" | "controller" | "run"
                | "analysis" => section = Some(name.to_string()),
                other => {
                    return Err(ConfigError::UnknownSection {
                        line,
                        name: other.to_string(),
                    })
                }
            }
            continue;
        }

        let (key, value) = content.split_once('=').ok_or(ConfigError::Parse {
            line,
            message: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let section_name = section.clone().ok_or(ConfigError::Parse {
            line,
            message: format!("key '{key}' appears before any [section] header"),
        })?;

        let unknown = || ConfigError::UnknownKey {
            line,
            section: section_name.clone(),
            key: key.to_string(),
        };

        match section_name.as_str() {
            "circuit" => {
                let target = match key {
                    "v_s_rms" => &mut sc.circuit.v_s_rms,
                    "f1" => &mut sc.circuit.f1,
                    "l_s" => &mut sc.circuit.l_s,
                    "r_s" => &mut sc.circuit.r_s,
                    "l_l" => &mut sc.circuit.l_l,
                    "c_l" => &mut sc.circuit.c_l,
                    "r_l" => &mut sc.circuit.r_l,
                    "c_dc" => &mut sc.circuit.c_dc,
                    "l_f" => &mut sc.circuit.l_f,
                    "r_on" => &mut sc.circuit.r_on,
                    "r_off" => &mut sc.circuit.r_off,
                    "dt" => &mut sc.circuit.dt,
                    _ => return Err(unknown()),
                };
                *target = parse_f64(line, key, value)?;
            }
            "filter_5th" | "filter_7th" | "filter_hp" => {
                let branch = match section_name.as_str() {
                    "filter_5th" => &mut sc.circuit.branches[0],
                    "filter_7th" => &mut sc.circuit.branches[1],
                    _ => &mut sc.circuit.branches[2],
                };
                let target = match key {
                    "c" => &mut branch.c,
                    "l" => &mut branch.l,
                    "r" => &mut branch.r,
                    _ => return Err(unknown()),
                };
                *target = parse_f64(line, key, value)?;
            }
            "controller" => match key {
                "v_dc_ref" => sc.control.v_dc_ref = parse_f64(line, key, value)?,
                "dc_gain" => sc.control.dc_gain = parse_f64(line, key, value)?,
                "dc_filter_tau" => sc.control.dc_filter_tau = parse_f64(line, key, value)?,
                "band_half_width" => sc.control.band_half_width = parse_f64(line, key, value)?,
                "v_dc_init" => sc.control.v_dc_init = Some(parse_f64(line, key, value)?),
                _ => return Err(unknown()),
            },
            "run" => match key {
                "mode" => {
                    sc.mode = value
                        .parse()
                        .map_err(|message| ConfigError::Parse { line, message })?
                }
                "t_end" => sc.t_end = parse_f64(line, key, value)?,
                "t_settle" => sc.t_settle = parse_f64(line, key, value)?,
                "out_dir" => sc.out_dir = PathBuf::from(value),
                _ => return Err(unknown()),
            },
            "analysis" => match key {
                "n_cycles" => sc.analysis.n_cycles = parse_usize(line, key, value)?,
                "h_max" => sc.analysis.h_max = parse_usize(line, key, value)?,
                _ => return Err(unknown()),
            },
            _ => unreachable!("section names validated above"),
        }
    }

    sc.validate()?;
    Ok(sc)
}
