//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solver failure,
//! 3 compliance-threshold failure under `--assert-ieee519`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hapf::analysis::{dft_spectrum, parseval_check, rms};
use hapf::runner::{self, RunError, RunSummary};
use hapf::scenario::load_scenario;

#[derive(Parser)]
#[command(
    name = "hapf",
    version,
    about = "Time-domain simulator of a three-phase hybrid active power filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        /// Scenario config file; omit to run the defaults.
        scenario: Option<PathBuf>,
        /// Override the run mode (baseline, passive_only, hybrid).
        #[arg(long)]
        mode: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the simulated span in seconds.
        #[arg(long)]
        t_end: Option<f64>,
        /// Exit with code 3 unless the run meets the 5% THD ceiling.
        #[arg(long)]
        assert_ieee519: bool,
    },
    /// Compare two summary documents (baseline vs compensated).
    Compare {
        summary_a: PathBuf,
        summary_b: PathBuf,
    },
    /// Compute the spectrum of one channel of a time-series CSV.
    Spectrum {
        csv: PathBuf,
        /// Channel name as it appears in the CSV header.
        #[arg(long)]
        channel: String,
        /// Fundamental frequency in hertz.
        #[arg(long, default_value_t = 50.0)]
        f1: f64,
        /// Fundamental cycles analyzed, taken from the end of the file.
        #[arg(long, default_value_t = 10)]
        n_cycles: usize,
        /// Highest harmonic order reported.
        #[arg(long, default_value_t = 50)]
        h_max: usize,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Run {
            scenario,
            mode,
            out_dir,
            t_end,
            assert_ieee519,
        } => cmd_run(scenario, mode, out_dir, t_end, assert_ieee519),
        Command::Compare {
            summary_a,
            summary_b,
        } => cmd_compare(&summary_a, &summary_b),
        Command::Spectrum {
            csv,
            channel,
            f1,
            n_cycles,
            h_max,
        } => cmd_spectrum(&csv, &channel, f1, n_cycles, h_max),
    };

    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<u8, (u8, String)>;

fn usage_err<E: std::fmt::Display>(e: E) -> (u8, String) {
    (EXIT_USAGE, e.to_string())
}

/// Writes to stdout, swallowing a closed pipe (e.g. `hapf ... | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn cmd_run(
    scenario_path: Option<PathBuf>,
    mode: Option<String>,
    out_dir: Option<PathBuf>,
    t_end: Option<f64>,
    assert_ieee519: bool,
) -> CmdResult {
    let text = match &scenario_path {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| usage_err(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut scenario = load_scenario(&text).map_err(usage_err)?;
    if let Some(mode) = mode {
        scenario.mode = mode.parse().map_err(usage_err)?;
    }
    if let Some(dir) = out_dir {
        scenario.out_dir = dir;
    }
    if let Some(t) = t_end {
        scenario.t_end = t;
    }
    scenario.validate().map_err(usage_err)?;

    let artifacts = runner::run(&scenario).map_err(|e| match e {
        RunError::Config(c) => usage_err(c),
        RunError::Solver(s) => (EXIT_SOLVER, s.to_string()),
        RunError::Analysis(a) => (EXIT_SOLVER, a.to_string()),
        RunError::Io(io) => (EXIT_SOLVER, io.to_string()),
    })?;

    let s = &artifacts.summary;
    let mut text = String::new();
    let _ = writeln!(text, "mode              {}", s.mode);
    let _ = writeln!(
        text,
        "analysis window   {} cycles from t = {} s, harmonics <= {}",
        s.n_cycles, s.t_settle, s.h_max
    );
    let _ = writeln!(
        text,
        "thd (r, y, b)     {:.4}  {:.4}  {:.4}   mean {:.4}",
        s.thd[0], s.thd[1], s.thd[2], s.thd_mean
    );
    let _ = writeln!(
        text,
        "fundamental rms   {:.3} A  {:.3} A  {:.3} A",
        s.fundamental_rms[0], s.fundamental_rms[1], s.fundamental_rms[2]
    );
    let _ = writeln!(text, "displacement pf   {:.4}", s.displacement_pf);
    let _ = writeln!(
        text,
        "v_dc min/mean/max {:.1} / {:.1} / {:.1} V",
        s.v_dc_min, s.v_dc_mean, s.v_dc_max
    );
    let _ = writeln!(text, "mean switching    {:.0} Hz", s.mean_switching_hz);
    let _ = writeln!(text, "band containment  {:.4}", s.band_containment);
    let _ = writeln!(text, "kcl residual max  {:.3e} A", s.kcl_max);
    let _ = writeln!(
        text,
        "ieee519 (5% thd)  {}",
        if s.ieee519_pass { "pass" } else { "fail" }
    );
    let _ = writeln!(text, "artifacts in      {}", scenario.out_dir.display());
    emit(&text);

    if assert_ieee519 && !s.ieee519_pass {
        return Ok(EXIT_THRESHOLD);
    }
    Ok(0)
}

fn cmd_compare(path_a: &PathBuf, path_b: &PathBuf) -> CmdResult {
    let read = |p: &PathBuf| -> Result<RunSummary, (u8, String)> {
        let text = fs::read_to_string(p)
            .map_err(|e| usage_err(format!("cannot read {}: {e}", p.display())))?;
        RunSummary::from_text(&text).map_err(usage_err)
    };
    let a = read(path_a)?;
    let b = read(path_b)?;
    let report = runner::compare(&a, &b).map_err(usage_err)?;
    emit(&report.to_string());
    Ok(0)
}

fn cmd_spectrum(csv: &PathBuf, channel: &str, f1: f64, n_cycles: usize, h_max: usize) -> CmdResult {
    let text = fs::read_to_string(csv)
        .map_err(|e| usage_err(format!("cannot read {}: {e}", csv.display())))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| usage_err("empty CSV"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let time_col = columns
        .iter()
        .position(|c| *c == "time_s")
        .ok_or_else(|| usage_err("CSV has no time_s column"))?;
    let chan_col = columns
        .iter()
        .position(|c| *c == channel)
        .ok_or_else(|| usage_err(format!("CSV has no channel '{channel}'")))?;

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |col: usize| -> Result<f64, (u8, String)> {
            fields
                .get(col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| usage_err(format!("bad value in row {} col {col}", idx + 2)))
        };
        times.push(parse(time_col)?);
        values.push(parse(chan_col)?);
    }
    if times.len() < 2 {
        return Err(usage_err("CSV holds fewer than two samples"));
    }
    let dt = times[1] - times[0];
    for pair in times.windows(2) {
        if ((pair[1] - pair[0]) - dt).abs() > 1e-9 * dt.max(1e-12) {
            return Err(usage_err("time column is not uniformly spaced"));
        }
    }

    // Analyze the trailing n_cycles window.
    let window = (n_cycles as f64 / (f1 * dt)).round() as usize;
    if window == 0 || window > values.len() {
        return Err(usage_err(format!(
            "need {window} samples for {n_cycles} cycles, CSV holds {}",
            values.len()
        )));
    }
    let tail = &values[values.len() - window..];
    let spec = dft_spectrum(tail, dt, f1, n_cycles, h_max).map_err(usage_err)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "channel {channel}: rms {:.6}, thd {:.6}",
        rms(tail),
        spec.thd
    );
    let _ = writeln!(
        text,
        "parseval residual {:.3e}",
        parseval_check(tail, &spec)
    );
    let _ = writeln!(text, "order  freq_hz  magnitude  phase_rad");
    for h in 0..=spec.h_max() {
        let _ = writeln!(
            text,
            "{h:5}  {:7.1}  {:.6e}  {:+.6}",
            h as f64 * f1,
            spec.magnitudes[h],
            spec.phases[h]
        );
    }
    emit(&text);
    Ok(0)
}
