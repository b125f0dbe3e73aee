//! Scenario execution and file artifacts.
//!
//! A run advances the plant to `t_end`, measures the analysis window that
//! opens at `t_settle`, and writes three artifacts into the output
//! directory: a decimated time-series CSV, one spectrum CSV per analyzed
//! source-current channel, and a key = value summary document. All floats
//! are serialized with 17 significant digits, so identical scenarios produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::{dft_spectrum, ieee519_verdict, AnalysisError, Spectrum, IEEE519_THD_LIMIT};
use crate::circuit::{step, Controllers, Mode, SimState, SolverError};
use crate::hysteresis::SwitchCommand;
use crate::scenario::{ConfigError, Scenario};

/// Time-series rows keep every 10th solver step; analysis always uses the
/// undecimated internal buffers.
pub const DECIMATION: usize = 10;

/// Column order of the time-series CSV.
pub const TIMESERIES_HEADER: [&str; 22] = [
    "time_s",
    "v_pcc_r_V",
    "v_pcc_y_V",
    "v_pcc_b_V",
    "i_src_r_A",
    "i_src_y_A",
    "i_src_b_A",
    "i_load_r_A",
    "i_load_y_A",
    "i_load_b_A",
    "i_passive_r_A",
    "i_passive_y_A",
    "i_passive_b_A",
    "i_filter_r_A",
    "i_filter_y_A",
    "i_filter_b_A",
    "i_ref_r_A",
    "i_ref_y_A",
    "i_ref_b_A",
    "v_dc_V",
    "v_rect_dc_V",
    "p_ave_W",
];

/// Names of the channels whose spectra are computed and written.
pub const ANALYZED_CHANNELS: [&str; 3] = ["i_src_r_A", "i_src_y_A", "i_src_b_A"];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Headline measurements of one run, mirrored by the summary document.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub f1: f64,
    pub dt: f64,
    pub n_cycles: usize,
    pub h_max: usize,
    pub t_settle: f64,
    pub t_end: f64,
    /// Source-current THD per phase (r, y, b), fractions.
    pub thd: [f64; 3],
    pub thd_mean: f64,
    /// Fundamental rms per phase, amperes.
    pub fundamental_rms: [f64; 3],
    /// Cosine of the fundamental voltage/current angle, mean over phases.
    pub displacement_pf: f64,
    pub v_dc_min: f64,
    pub v_dc_mean: f64,
    pub v_dc_max: f64,
    /// Mean converter switching frequency per leg over the window, hertz.
    pub mean_switching_hz: f64,
    pub ieee519_pass: bool,
    /// Largest PCC current residual seen at any step, amperes.
    pub kcl_max: f64,
    /// Fraction of post-settling samples with every phase inside the
    /// hysteresis band plus the one-step slew allowance.
    pub band_containment: f64,
    /// Phase-r harmonic magnitudes relative to the fundamental, orders
    /// `2..=h_max`.
    pub harmonic_rel: Vec<f64>,
}

impl RunSummary {
    /// Channels the summary quotes; each must exist in the time-series CSV.
    pub fn referenced_channels(&self) -> Vec<&'static str> {
        vec![
            "i_src_r_A",
            "i_src_y_A",
            "i_src_b_A",
            "v_dc_V",
            "i_filter_r_A",
            "i_filter_y_A",
            "i_filter_b_A",
            "i_ref_r_A",
            "i_ref_y_A",
            "i_ref_b_A",
        ]
    }

    /// Serializes the summary in its documented key = value layout.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "f1_hz = {}", fmt_f64(self.f1));
        let _ = writeln!(s, "dt_s = {}", fmt_f64(self.dt));
        let _ = writeln!(s, "n_cycles = {}", self.n_cycles);
        let _ = writeln!(s, "h_max = {}", self.h_max);
        let _ = writeln!(s, "t_settle_s = {}", fmt_f64(self.t_settle));
        let _ = writeln!(s, "t_end_s = {}", fmt_f64(self.t_end));
        for (k, channel) in ANALYZED_CHANNELS.iter().enumerate() {
            let _ = writeln!(s, "thd_{channel} = {}", fmt_f64(self.thd[k]));
        }
        let _ = writeln!(s, "thd_mean = {}", fmt_f64(self.thd_mean));
        for (k, channel) in ANALYZED_CHANNELS.iter().enumerate() {
            let _ = writeln!(
                s,
                "fund_rms_{channel} = {}",
                fmt_f64(self.fundamental_rms[k])
            );
        }
        let _ = writeln!(s, "displacement_pf = {}", fmt_f64(self.displacement_pf));
        let _ = writeln!(s, "v_dc_min_V = {}", fmt_f64(self.v_dc_min));
        let _ = writeln!(s, "v_dc_mean_V = {}", fmt_f64(self.v_dc_mean));
        let _ = writeln!(s, "v_dc_max_V = {}", fmt_f64(self.v_dc_max));
        let _ = writeln!(s, "mean_switching_hz = {}", fmt_f64(self.mean_switching_hz));
        let _ = writeln!(s, "ieee519_pass = {}", self.ieee519_pass);
        let _ = writeln!(s, "kcl_max_A = {}", fmt_f64(self.kcl_max));
        let _ = writeln!(s, "band_containment = {}", fmt_f64(self.band_containment));
        for (i, rel) in self.harmonic_rel.iter().enumerate() {
            let _ = writeln!(s, "harm_rel_h{:02} = {}", i + 2, fmt_f64(*rel));
        }
        s
    }

    /// Parses a summary document written by [`RunSummary::to_text`].
    pub fn from_text(text: &str) -> Result<RunSummary, SummaryParseError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| SummaryParseError {
                line: idx + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let lookup = |key: &str| -> Result<&str, SummaryParseError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| SummaryParseError {
                    line: 0,
                    message: format!("missing key '{key}'"),
                })
        };
        let num = |key: &str| -> Result<f64, SummaryParseError> {
            lookup(key)?.parse().map_err(|_| SummaryParseError {
                line: 0,
                message: format!("key '{key}' is not a number"),
            })
        };
        let int = |key: &str| -> Result<usize, SummaryParseError> {
            lookup(key)?.parse().map_err(|_| SummaryParseError {
                line: 0,
                message: format!("key '{key}' is not an integer"),
            })
        };

        let mode: Mode = lookup("mode")?
            .parse()
            .map_err(|message| SummaryParseError { line: 0, message })?;
        let h_max = int("h_max")?;
        let mut harmonic_rel = Vec::with_capacity(h_max.saturating_sub(1));
        for h in 2..=h_max {
            harmonic_rel.push(num(&format!("harm_rel_h{h:02}"))?);
        }
        Ok(RunSummary {
            mode,
            f1: num("f1_hz")?,
            dt: num("dt_s")?,
            n_cycles: int("n_cycles")?,
            h_max,
            t_settle: num("t_settle_s")?,
            t_end: num("t_end_s")?,
            thd: [
                num("thd_i_src_r_A")?,
                num("thd_i_src_y_A")?,
                num("thd_i_src_b_A")?,
            ],
            thd_mean: num("thd_mean")?,
            fundamental_rms: [
                num("fund_rms_i_src_r_A")?,
                num("fund_rms_i_src_y_A")?,
                num("fund_rms_i_src_b_A")?,
            ],
            displacement_pf: num("displacement_pf")?,
            v_dc_min: num("v_dc_min_V")?,
            v_dc_mean: num("v_dc_mean_V")?,
            v_dc_max: num("v_dc_max_V")?,
            mean_switching_hz: num("mean_switching_hz")?,
            ieee519_pass: lookup("ieee519_pass")? == "true",
            kcl_max: num("kcl_max_A")?,
            band_containment: num("band_containment")?,
            harmonic_rel,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("summary parse error (line {line}): {message}")]
pub struct SummaryParseError {
    pub line: usize,
    pub message: String,
}

/// Paths written by [`run`] plus the in-memory summary.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub timeseries_path: PathBuf,
    pub spectrum_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    /// Spectra of the analyzed channels, phase order r, y, b.
    pub spectra: Vec<Spectrum>,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn count_leg_changes(a: SwitchCommand, b: SwitchCommand) -> usize {
    a.as_array()
        .iter()
        .zip(b.as_array().iter())
        .filter(|(x, y)| x != y)
        .count()
}

/// Executes a scenario end to end and writes its artifacts.
pub fn run(scenario: &Scenario) -> Result<RunArtifacts, RunError> {
    scenario.validate()?;
    let p = &scenario.circuit;
    let dt = p.dt;
    let n_steps = (scenario.t_end / dt).round() as usize;
    let window_len = (scenario.analysis.n_cycles as f64 / (p.f1 * dt)).round() as usize;
    let settle_steps = (scenario.t_settle / dt).round() as usize;

    let mut state = if scenario.mode.passive_enabled() {
        SimState::initial_settled(p, scenario.v_dc_init())
    } else {
        SimState::initial(scenario.v_dc_init())
    };
    let mut ctrl = Controllers::new(
        p,
        scenario.control.v_dc_ref,
        scenario.control.dc_gain,
        scenario.control.dc_filter_tau,
        scenario.control.band_half_width,
    );

    let mut i_src_buf: [Vec<f64>; 3] = [
        Vec::with_capacity(window_len),
        Vec::with_capacity(window_len),
        Vec::with_capacity(window_len),
    ];
    let mut v_pcc_buf: [Vec<f64>; 3] = [
        Vec::with_capacity(window_len),
        Vec::with_capacity(window_len),
        Vec::with_capacity(window_len),
    ];

    let mut csv = String::new();
    csv.push_str(&TIMESERIES_HEADER.join(","));
    csv.push('\n');

    let mut kcl_max = 0.0f64;
    let mut v_dc_min = f64::INFINITY;
    let mut v_dc_max = f64::NEG_INFINITY;
    let mut v_dc_sum = 0.0;
    let mut leg_changes = 0usize;
    let mut contained = 0usize;
    let mut post_settle = 0usize;

    for n in 0..n_steps {
        let prev_cmd = state.cmd;
        let out = step(&mut state, p, scenario.mode, &mut ctrl)?;
        kcl_max = kcl_max.max(out.kcl_residual);

        let in_window = n >= settle_steps && n < settle_steps + window_len;
        if in_window {
            let i = out.i_source.as_array();
            let v = out.v_pcc.as_array();
            for k in 0..3 {
                i_src_buf[k].push(i[k]);
                v_pcc_buf[k].push(v[k]);
            }
            v_dc_min = v_dc_min.min(state.v_dc);
            v_dc_max = v_dc_max.max(state.v_dc);
            v_dc_sum += state.v_dc;
            leg_changes += count_leg_changes(prev_cmd, state.cmd);
        }
        if n >= settle_steps {
            post_settle += 1;
            let slack = scenario.control.band_half_width + dt * state.v_dc / p.l_f;
            let err = out.i_filter - out.i_ref;
            let worst = err.r.abs().max(err.y.abs()).max(err.b.abs());
            if worst <= slack {
                contained += 1;
            }
        }

        if (n + 1) % DECIMATION == 0 {
            let row = [
                state.time,
                out.v_pcc.r,
                out.v_pcc.y,
                out.v_pcc.b,
                out.i_source.r,
                out.i_source.y,
                out.i_source.b,
                out.i_load.r,
                out.i_load.y,
                out.i_load.b,
                out.i_passive.r,
                out.i_passive.y,
                out.i_passive.b,
                out.i_filter.r,
                out.i_filter.y,
                out.i_filter.b,
                out.i_ref.r,
                out.i_ref.y,
                out.i_ref.b,
                state.v_dc,
                state.rectifier.v_dc,
                out.p_ave,
            ];
            let mut first = true;
            for value in row {
                if !first {
                    csv.push(',');
                }
                csv.push_str(&fmt_f64(value));
                first = false;
            }
            csv.push('\n');
        }
    }

    // Windowed measurements.
    let mut spectra = Vec::with_capacity(3);
    let mut thd = [0.0; 3];
    let mut fundamental_rms = [0.0; 3];
    let mut dpf_sum = 0.0;
    let mut all_pass = true;
    for k in 0..3 {
        let spec = dft_spectrum(
            &i_src_buf[k],
            dt,
            p.f1,
            scenario.analysis.n_cycles,
            scenario.analysis.h_max,
        )?;
        let vspec = dft_spectrum(
            &v_pcc_buf[k],
            dt,
            p.f1,
            scenario.analysis.n_cycles,
            scenario.analysis.h_max,
        )?;
        thd[k] = spec.thd;
        fundamental_rms[k] = spec.magnitudes[1] / 2.0f64.sqrt();
        dpf_sum += (vspec.phases[1] - spec.phases[1]).cos();
        all_pass &= ieee519_verdict(&spec, IEEE519_THD_LIMIT)
            .map(|r| r.pass)
            .unwrap_or(false);
        spectra.push(spec);
    }
    let window_duration = window_len as f64 * dt;
    let summary = RunSummary {
        mode: scenario.mode,
        f1: p.f1,
        dt,
        n_cycles: scenario.analysis.n_cycles,
        h_max: scenario.analysis.h_max,
        t_settle: scenario.t_settle,
        t_end: scenario.t_end,
        thd,
        thd_mean: (thd[0] + thd[1] + thd[2]) / 3.0,
        fundamental_rms,
        displacement_pf: dpf_sum / 3.0,
        v_dc_min,
        v_dc_mean: v_dc_sum / window_len as f64,
        v_dc_max,
        mean_switching_hz: leg_changes as f64 / (2.0 * 3.0 * window_duration),
        ieee519_pass: all_pass,
        kcl_max,
        band_containment: if post_settle == 0 {
            1.0
        } else {
            contained as f64 / post_settle as f64
        },
        harmonic_rel: spectra[0].magnitudes[2..]
            .iter()
            .map(|m| m / spectra[0].magnitudes[1])
            .collect(),
    };

    // Artifacts.
    fs::create_dir_all(&scenario.out_dir)?;
    let timeseries_path = scenario.out_dir.join("timeseries.csv");
    fs::write(&timeseries_path, csv)?;

    let mut spectrum_paths = Vec::with_capacity(3);
    for (k, channel) in ANALYZED_CHANNELS.iter().enumerate() {
        let mut text = String::from("order,frequency_hz,magnitude_A,phase_rad\n");
        for (h, (mag, ph)) in spectra[k]
            .magnitudes
            .iter()
            .zip(spectra[k].phases.iter())
            .enumerate()
        {
            let _ = writeln!(
                text,
                "{h},{},{},{}",
                fmt_f64(h as f64 * p.f1),
                fmt_f64(*mag),
                fmt_f64(*ph)
            );
        }
        let path = scenario.out_dir.join(format!("spectrum_{channel}.csv"));
        fs::write(&path, text)?;
        spectrum_paths.push(path);
    }

    let summary_path = scenario.out_dir.join("summary.txt");
    fs::write(&summary_path, summary.to_text())?;

    Ok(RunArtifacts {
        summary,
        timeseries_path,
        spectrum_paths,
        summary_path,
        spectra,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("analysis window mismatch: {0}")]
    WindowMismatch(String),
}

/// Per-harmonic attenuation between two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicAttenuation {
    pub order: usize,
    pub base_rel: f64,
    pub comp_rel: f64,
    /// base / comp; 1.0 means unchanged.
    pub ratio: f64,
}

/// THD reduction and per-harmonic attenuation table.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub thd_base: f64,
    pub thd_comp: f64,
    /// Mean-THD ratio base / comp.
    pub reduction_ratio: f64,
    pub rows: Vec<HarmonicAttenuation>,
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "thd_base = {:.4}", self.thd_base)?;
        writeln!(f, "thd_comp = {:.4}", self.thd_comp)?;
        writeln!(f, "reduction_ratio = {:.2}", self.reduction_ratio)?;
        writeln!(f, "order base_rel comp_rel attenuation")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:5} {:.6} {:.6} {:.3}",
                row.order, row.base_rel, row.comp_rel, row.ratio
            )?;
        }
        Ok(())
    }
}

fn attenuation_ratio(base: f64, comp: f64) -> f64 {
    if base == comp {
        1.0
    } else if comp == 0.0 {
        f64::INFINITY
    } else {
        base / comp
    }
}

/// Compares two summaries taken over the same analysis window.
pub fn compare(base: &RunSummary, comp: &RunSummary) -> Result<Comparison, CompareError> {
    if base.f1 != comp.f1 {
        return Err(CompareError::WindowMismatch(format!(
            "f1 {} Hz vs {} Hz",
            base.f1, comp.f1
        )));
    }
    if base.n_cycles != comp.n_cycles || base.h_max != comp.h_max {
        return Err(CompareError::WindowMismatch(format!(
            "n_cycles/h_max {}/{} vs {}/{}",
            base.n_cycles, base.h_max, comp.n_cycles, comp.h_max
        )));
    }
    let rows = base
        .harmonic_rel
        .iter()
        .zip(comp.harmonic_rel.iter())
        .enumerate()
        .map(|(i, (b, c))| HarmonicAttenuation {
            order: i + 2,
            base_rel: *b,
            comp_rel: *c,
            ratio: attenuation_ratio(*b, *c),
        })
        .collect();
    Ok(Comparison {
        thd_base: base.thd_mean,
        thd_comp: comp.thd_mean,
        reduction_ratio: attenuation_ratio(base.thd_mean, comp.thd_mean),
        rows,
    })
}
