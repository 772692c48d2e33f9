//! Orchestration behind the command-line verbs: sessions, sweeps, transcript
//! CSV and JSON reports.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{self, SeedMode, SessionStats, SweepParameter, SweepResult};
use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::optics::Port;
use crate::protocol::{abort_rule, run_session, truth_table, RoundRecord, SessionOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    IoError = 3,
    /// The error check fired: Eve detected.
    Abort = 4,
}

impl ExitStatus {
    pub fn of_error(err: &Error) -> Self {
        if err.is_io() {
            ExitStatus::IoError
        } else {
            ExitStatus::ConfigError
        }
    }

    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Transcript columns, in file order.
pub const TRANSCRIPT_COLUMNS: [&str; 14] = [
    "round",
    "phi_m_deg",
    "group",
    "alice_c",
    "alice_click",
    "alice_bit",
    "theta2_deg",
    "bob_click",
    "bob_outcome",
    "bob_bit",
    "coincident",
    "disclosed",
    "eve_stole",
    "eve_click",
];

fn fmt_deg(radians: f64) -> String {
    let d = (radians.to_degrees() * 1e6).round() / 1e6;
    format!("{}", d + 0.0)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn transcript_row(r: &RoundRecord, audit: bool) -> [String; 14] {
    let hidden = |s: String| if audit { s } else { String::new() };
    let eve_stole = r.eve.map(|e| flag(e.stole_photon).to_string());
    let eve_click = r
        .eve
        .map(|e| e.measured_click.map_or("none", Port::name).to_string());
    [
        r.round_index.to_string(),
        hidden(fmt_deg(r.phi_m)),
        r.alice.group.name().to_string(),
        r.alice.chosen_c.name().to_string(),
        r.alice.detection.label().to_string(),
        fmt_opt(r.alice.recorded_bit),
        fmt_deg(r.bob.theta2),
        r.bob.detection.label().to_string(),
        r.bob
            .outcome
            .map(|o| o.name())
            .unwrap_or_default()
            .to_string(),
        fmt_opt(r.bob.inferred_bit),
        flag(r.coincident).to_string(),
        flag(r.disclosed).to_string(),
        hidden(eve_stole.unwrap_or_default()),
        hidden(eve_click.unwrap_or_default()),
    ]
}

/// Writes one CSV row per round. The ground-truth columns (`phi_m_deg`,
/// `eve_*`) stay empty unless `audit` is set; the header never changes.
pub fn write_transcript<W: Write>(records: &[RoundRecord], audit: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSCRIPT_COLUMNS)?;
    for r in records {
        w.write_record(transcript_row(r, audit))?;
    }
    w.flush()?;
    Ok(())
}

/// The JSON report: session stats plus the config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: &'static str,
    #[serde(flatten)]
    pub stats: SessionStats,
    pub abort_threshold: f64,
    pub expected_honest_qber: f64,
    pub config: SessionConfig,
}

impl Report {
    pub fn new(config: &SessionConfig, stats: SessionStats) -> Self {
        let threshold = abort_rule(config).threshold(stats.disclosed as usize);
        Report {
            version: VERSION,
            abort_threshold: threshold,
            expected_honest_qber: analysis::expected_honest_qber(config),
            config: config.clone(),
            stats,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.stats.eve_detection {
            ExitStatus::Abort
        } else {
            ExitStatus::Success
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub audit: bool,
    pub transcript: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub quiet: bool,
}

pub struct RunOutput {
    pub outcome: SessionOutcome,
    pub report: Report,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs one session and writes the requested outputs. Without `--report`
/// the JSON goes to stdout unless `quiet`.
pub fn run(config: &SessionConfig, opts: &RunOptions) -> Result<RunOutput> {
    let outcome = run_session(config)?;
    let report = Report::new(config, outcome.stats.clone());

    if let Some(path) = &opts.transcript {
        let mut file = create(path)?;
        write_transcript(&outcome.records, opts.audit, &mut file)?;
        file.flush()?;
    }
    let json = report.to_json()?;
    match &opts.report {
        Some(path) => {
            let mut file = create(path)?;
            file.write_all(json.as_bytes())?;
            file.flush()?;
        }
        None if !opts.quiet => io::stdout().write_all(json.as_bytes())?,
        None => {}
    }
    Ok(RunOutput { outcome, report })
}

/// Combined sweep CSV columns.
pub const SWEEP_COLUMNS: [&str; 15] = [
    "parameter",
    "value",
    "seed",
    "rounds",
    "coincident",
    "sifted",
    "disclosed",
    "mismatches",
    "qber",
    "sift_rate",
    "raw_key_rate_per_round",
    "eve_detection",
    "check_error_rate",
    "pns_stolen_fraction",
    "eve_phase_id_rate",
];

/// Writes the combined table: one row per sweep point.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for p in &result.points {
        let s = &p.stats;
        w.write_record([
            result.parameter.name().to_string(),
            p.value.clone(),
            p.config.seed.to_string(),
            s.rounds_total.to_string(),
            s.coincident.to_string(),
            s.sifted.to_string(),
            s.disclosed.to_string(),
            s.mismatches.to_string(),
            fmt_opt(s.qber),
            fmt_opt(s.sift_rate),
            s.raw_key_rate_per_round.to_string(),
            s.eve_detection.to_string(),
            fmt_opt(s.check_error_rate),
            s.pns_stolen_fraction.to_string(),
            fmt_opt(s.eve_phase_id_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs a sweep and writes `point_NN.json` per value plus `sweep.csv` into
/// `out_dir`.
pub fn run_sweep(
    config: &SessionConfig,
    parameter: SweepParameter,
    values: &[String],
    seeds: SeedMode,
    out_dir: &Path,
) -> Result<SweepResult> {
    let result = analysis::sweep(config, parameter, values, seeds)?;
    fs::create_dir_all(out_dir)?;
    for (i, p) in result.points.iter().enumerate() {
        let report = Report::new(&p.config, p.stats.clone());
        fs::write(
            out_dir.join(format!("point_{i:02}.json")),
            report.to_json()?,
        )?;
    }
    let mut file = create(&out_dir.join("sweep.csv"))?;
    write_sweep_csv(&result, &mut file)?;
    file.flush()?;
    Ok(result)
}

/// Human-readable ideal-case table of all 16 combinations.
pub fn format_truth_table(theta1_deg: f64) -> String {
    let mut out = format!(
        "{:>6} {:>3} {:>5} {:>6} {:>7} {:>5} {:>7} {:>5} {:>5} {:>5}\n",
        "phi_m", "C", "group", "theta2", "A_term", "A_bit", "B_term", "B_out", "B_bit", "agree"
    );
    for row in truth_table(theta1_deg) {
        out.push_str(&format!(
            "{:>6} {:>3} {:>5} {:>6} {:>7.3} {:>5} {:>7.3} {:>5} {:>5} {:>5}\n",
            row.phi_m_deg,
            row.chosen_c.name(),
            row.chosen_c.group().name(),
            row.theta2_deg,
            row.alice_term + 0.0,
            fmt_opt(row.alice_bit),
            row.bob_term + 0.0,
            row.bob_outcome.map(|o| o.name()).unwrap_or("-"),
            fmt_opt(row.bob_bit),
            if row.agree() { "yes" } else { "NO" },
        ));
    }
    out
}
