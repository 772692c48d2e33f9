//! Session configuration and its flat `key = value` text format.
//!
//! One setting per line, `#` starts a comment, nesting uses dotted keys:
//!
//! ```text
//! n_c = 0.1
//! rounds = 100000
//! seed = 42
//! detector.bob.dark_count_prob = 1e-5
//! eve.kind = intercept_resend
//! alpha_eta_intact = false
//! ```
//!
//! `key: value` is accepted as well. Every omitted key takes the ideal-device,
//! no-adversary default.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackTarget, ChannelParams, EveKind, EveStrategy, ResendPolicy};
use crate::error::{Error, Result};
use crate::optics::DetectorParams;
use crate::protocol::DoubleClickPolicy;

/// Optional departures from the honest source, for diagnostic runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceOverride {
    /// Horizontal-mode mean; `n_c` when absent.
    pub n_x: Option<f64>,
    /// Vertical-mode mean; `n_c` when absent.
    pub n_y: Option<f64>,
    pub phi_a_deg: f64,
    pub phi_b_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_c: f64,
    pub rounds: u64,
    pub seed: u64,
    pub theta1_deg: f64,
    pub source: SourceOverride,
    pub detector_alice: DetectorParams,
    pub detector_bob: DetectorParams,
    pub channel: ChannelParams,
    pub eve: EveStrategy,
    pub alpha_eta_intact: bool,
    pub error_check_fraction: f64,
    pub double_click_policy: DoubleClickPolicy,
    /// Fixed abort threshold on the error-check rate. `None` derives it from
    /// the expected honest error rate of the configured devices.
    pub abort_threshold: Option<f64>,
}

impl SessionConfig {
    /// Ideal devices, lossless channel, no Eve, no error check.
    pub fn ideal(n_c: f64, rounds: u64, seed: u64) -> Self {
        SessionConfig {
            n_c,
            rounds,
            seed,
            theta1_deg: 45.0,
            source: SourceOverride::default(),
            detector_alice: DetectorParams::IDEAL,
            detector_bob: DetectorParams::IDEAL,
            channel: ChannelParams::LOSSLESS,
            eve: EveStrategy::default(),
            alpha_eta_intact: true,
            error_check_fraction: 0.0,
            double_click_policy: DoubleClickPolicy::Discard,
            abort_threshold: None,
        }
    }

    /// Mode means `(n_x, n_y)` the source emits.
    pub fn source_means(&self) -> (f64, f64) {
        (
            self.source.n_x.unwrap_or(self.n_c),
            self.source.n_y.unwrap_or(self.n_c),
        )
    }

    pub fn is_honest_source(&self) -> bool {
        let (n_x, n_y) = self.source_means();
        n_x == self.n_c && n_y == self.n_c && self.source.phi_a_deg == self.source.phi_b_deg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_c > 0.0 && self.n_c < 1.0) {
            return Err(Error::config(
                "n_c",
                format!(
                    "{} violates the protocol condition n_x = n_y = n_c < 1 (must lie in (0, 1))",
                    self.n_c
                ),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be a positive integer"));
        }
        finite("theta1_deg", self.theta1_deg)?;
        for (key, mean) in [
            ("source.n_x", self.source.n_x),
            ("source.n_y", self.source.n_y),
        ] {
            if let Some(m) = mean {
                if !(0.0..1.0).contains(&m) {
                    return Err(Error::config(key, format!("{m} must lie in [0, 1)")));
                }
            }
        }
        finite("source.phi_a_deg", self.source.phi_a_deg)?;
        finite("source.phi_b_deg", self.source.phi_b_deg)?;
        unit("detector.alice.efficiency", self.detector_alice.efficiency)?;
        unit(
            "detector.alice.dark_count_prob",
            self.detector_alice.dark_count_prob,
        )?;
        unit("detector.bob.efficiency", self.detector_bob.efficiency)?;
        unit(
            "detector.bob.dark_count_prob",
            self.detector_bob.dark_count_prob,
        )?;
        unit(
            "channel.transmittance_alice",
            self.channel.transmittance_alice,
        )?;
        unit("channel.transmittance_bob", self.channel.transmittance_bob)?;
        if let Some(theta) = self.eve.theta_e_deg {
            if theta != 45.0 && theta != -45.0 {
                return Err(Error::config(
                    "eve.theta_e_deg",
                    format!("{theta} must be 45, -45 or `random`"),
                ));
            }
        }
        if let Some(r) = self.eve.resend_n_c {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config(
                    "eve.resend_n_c",
                    format!("{r} must lie in (0, 1)"),
                ));
            }
        }
        if self.eve.kind == EveKind::InterceptResend && self.alpha_eta_intact {
            return Err(Error::config(
                "eve.kind",
                "intercept_resend is disabled while alpha_eta_intact = true; \
                 set alpha_eta_intact = false to assume the phase-coding layer is broken",
            ));
        }
        unit("error_check_fraction", self.error_check_fraction)?;
        if let Some(t) = self.abort_threshold {
            unit("abort_threshold", t)?;
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Unknown keys and unparsable values
    /// are errors naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        match key {
            "n_c" => self.n_c = number(key, value)?,
            "rounds" => self.rounds = integer(key, value)?,
            "seed" => self.seed = integer(key, value)?,
            "theta1_deg" => self.theta1_deg = number(key, value)?,
            "source.n_x" => self.source.n_x = Some(number(key, value)?),
            "source.n_y" => self.source.n_y = Some(number(key, value)?),
            "source.phi_a_deg" => self.source.phi_a_deg = number(key, value)?,
            "source.phi_b_deg" => self.source.phi_b_deg = number(key, value)?,
            "detector.efficiency" => {
                let v = number(key, value)?;
                self.detector_alice.efficiency = v;
                self.detector_bob.efficiency = v;
            }
            "detector.dark_count_prob" => {
                let v = number(key, value)?;
                self.detector_alice.dark_count_prob = v;
                self.detector_bob.dark_count_prob = v;
            }
            "detector.alice.efficiency" => self.detector_alice.efficiency = number(key, value)?,
            "detector.alice.dark_count_prob" => {
                self.detector_alice.dark_count_prob = number(key, value)?
            }
            "detector.bob.efficiency" => self.detector_bob.efficiency = number(key, value)?,
            "detector.bob.dark_count_prob" => {
                self.detector_bob.dark_count_prob = number(key, value)?
            }
            "channel.transmittance" => {
                let v = number(key, value)?;
                self.channel.transmittance_alice = v;
                self.channel.transmittance_bob = v;
            }
            "channel.transmittance_alice" => self.channel.transmittance_alice = number(key, value)?,
            "channel.transmittance_bob" => self.channel.transmittance_bob = number(key, value)?,
            "eve.kind" | "eve" => {
                self.eve.kind = EveKind::parse(value).ok_or_else(|| bad(key, value))?
            }
            "eve.theta_e_deg" => {
                self.eve.theta_e_deg = if value.eq_ignore_ascii_case("random") {
                    None
                } else {
                    Some(number(key, value)?)
                }
            }
            "eve.resend_policy" => {
                self.eve.resend_policy =
                    ResendPolicy::parse(value).ok_or_else(|| bad(key, value))?
            }
            "eve.target" => {
                self.eve.target = AttackTarget::parse(value).ok_or_else(|| bad(key, value))?
            }
            "eve.resend_n_c" => self.eve.resend_n_c = Some(number(key, value)?),
            "alpha_eta_intact" => self.alpha_eta_intact = boolean(key, value)?,
            "error_check_fraction" => self.error_check_fraction = number(key, value)?,
            "double_click_policy" => {
                self.double_click_policy =
                    DoubleClickPolicy::parse(value).ok_or_else(|| bad(key, value))?
            }
            "abort_threshold" => {
                self.abort_threshold = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(number(key, value)?)
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Renders the config in the text format, every key explicit. Parsing the
    /// output yields an equal config.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, none: &str| v.map_or(none.to_string(), |x| x.to_string());
        let mut lines = vec![
            format!("n_c = {}", self.n_c),
            format!("rounds = {}", self.rounds),
            format!("seed = {}", self.seed),
            format!("theta1_deg = {}", self.theta1_deg),
        ];
        if let Some(v) = self.source.n_x {
            lines.push(format!("source.n_x = {v}"));
        }
        if let Some(v) = self.source.n_y {
            lines.push(format!("source.n_y = {v}"));
        }
        lines.extend([
            format!("source.phi_a_deg = {}", self.source.phi_a_deg),
            format!("source.phi_b_deg = {}", self.source.phi_b_deg),
            format!(
                "detector.alice.efficiency = {}",
                self.detector_alice.efficiency
            ),
            format!(
                "detector.alice.dark_count_prob = {}",
                self.detector_alice.dark_count_prob
            ),
            format!("detector.bob.efficiency = {}", self.detector_bob.efficiency),
            format!(
                "detector.bob.dark_count_prob = {}",
                self.detector_bob.dark_count_prob
            ),
            format!(
                "channel.transmittance_alice = {}",
                self.channel.transmittance_alice
            ),
            format!(
                "channel.transmittance_bob = {}",
                self.channel.transmittance_bob
            ),
            format!("eve.kind = {}", self.eve.kind.name()),
            format!("eve.theta_e_deg = {}", opt(self.eve.theta_e_deg, "random")),
            format!("eve.resend_policy = {}", self.eve.resend_policy.name()),
            format!("eve.target = {}", self.eve.target.name()),
        ]);
        if let Some(v) = self.eve.resend_n_c {
            lines.push(format!("eve.resend_n_c = {v}"));
        }
        lines.extend([
            format!("alpha_eta_intact = {}", self.alpha_eta_intact),
            format!("error_check_fraction = {}", self.error_check_fraction),
            format!("double_click_policy = {}", self.double_click_policy.name()),
            format!("abort_threshold = {}", opt(self.abort_threshold, "auto")),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

const REQUIRED: [&str; 2] = ["n_c", "rounds"];

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<SessionConfig> {
    let mut config = SessionConfig::ideal(0.0, 0, 0);
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
        let key = key.trim();
        if value.trim().is_empty() {
            return Err(Error::config(key, "missing value"));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::config(key, format!("set twice (line {})", idx + 1)));
        }
        config.set(key, value)?;
    }
    for key in REQUIRED {
        if !seen.contains(key) {
            return Err(Error::config(key, "required key is missing"));
        }
    }
    config.validate()?;
    Ok(config)
}

/// Reads and parses a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SessionConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Lowercases and strips `_`/`-` so `InterceptResend`, `intercept_resend` and
/// `intercept-resend` compare equal.
pub(crate) fn normalize_name(value: &str) -> String {
    value
        .chars()
        .filter(|c| *c != '_' && *c != '-')
        .flat_map(char::to_lowercase)
        .collect()
}

fn bad(key: &str, value: &str) -> Error {
    Error::config(key, format!("unrecognized value `{value}`"))
}

fn number(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| bad(key, value))?;
    finite(key, v)?;
    Ok(v)
}

fn integer(key: &str, value: &str) -> Result<u64> {
    value.replace('_', "").parse().map_err(|_| bad(key, value))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} is not a finite number")))
    }
}

fn unit(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} is outside [0, 1]")))
    }
}
