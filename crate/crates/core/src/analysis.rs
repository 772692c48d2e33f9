//! Session metrics, closed-form expectations and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{apply_channel, EveKind, Party};
use crate::config::{normalize_name, SessionConfig};
use crate::error::{Error, Result};
use crate::optics::{
    alice_interference_term, bob_interference_term, deg, port_means, CorrelationFunction,
    DetectorParams, Port, PulsePair,
};
use crate::protocol::{
    announced_bit, bob_infer_bit, run_round, run_session, BobOutcome, DoubleClickPolicy,
    ErrorCheck, GuessAngle, RoundRecord, SiftedBitPair,
};
use crate::rng::{child_seed, round_stream};

/// Per-round counters. Tallies of disjoint round sets merge by addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub rounds: u64,
    pub coincident: u64,
    pub disclosed: u64,
    /// Rounds carrying a reconciled bit on both sides.
    pub sifted: u64,
    pub mismatches: u64,
    pub alice_valid: u64,
    pub bob_valid: u64,
    /// Rounds where the port that should stay dark at Alice clicked.
    pub alice_wrong_port_clicks: u64,
    /// Same for Bob.
    pub bob_wrong_port_clicks: u64,
    pub pns_stolen: u64,
    pub pns_stolen_coincident: u64,
    /// Beams attacked by intercept-resend.
    pub eve_attacked: u64,
    /// Of those, beams where Eve deduced the true phase.
    pub eve_identified: u64,
}

impl Tally {
    pub fn observe(&mut self, r: &RoundRecord) {
        self.rounds += 1;
        self.coincident += r.coincident as u64;
        self.disclosed += r.disclosed as u64;
        self.alice_valid += r.alice.recorded_bit.is_some() as u64;
        self.bob_valid += r.bob.outcome.is_some() as u64;
        if let (Some(a), Some(b)) = (r.alice.recorded_bit, r.bob.inferred_bit) {
            self.sifted += 1;
            self.mismatches += (a != b) as u64;
        }

        let alice_term = alice_interference_term(r.alice.chosen_c, r.alice.theta1, r.phi_m);
        if let Some(port) = Port::from_term(alice_term) {
            self.alice_wrong_port_clicks += r.alice.detection.clicked(port.opposite()) as u64;
        }
        let bob_term = bob_interference_term(r.bob.theta2, r.phi_m);
        if let Some(port) = Port::from_term(bob_term) {
            self.bob_wrong_port_clicks += r.bob.detection.clicked(port.opposite()) as u64;
        }

        for eve in [r.eve, r.eve_beam1].into_iter().flatten() {
            match eve.kind {
                EveKind::Pns if eve.stole_photon => {
                    self.pns_stolen += 1;
                    self.pns_stolen_coincident += r.coincident as u64;
                }
                EveKind::InterceptResend => {
                    self.eve_attacked += 1;
                    let hit = eve
                        .inferred_phi_m
                        .is_some_and(|phi| (phi - r.phi_m).abs() < 1e-9);
                    self.eve_identified += hit as u64;
                }
                _ => {}
            }
        }
    }

    pub fn merge(self, o: Tally) -> Tally {
        Tally {
            rounds: self.rounds + o.rounds,
            coincident: self.coincident + o.coincident,
            disclosed: self.disclosed + o.disclosed,
            sifted: self.sifted + o.sifted,
            mismatches: self.mismatches + o.mismatches,
            alice_valid: self.alice_valid + o.alice_valid,
            bob_valid: self.bob_valid + o.bob_valid,
            alice_wrong_port_clicks: self.alice_wrong_port_clicks + o.alice_wrong_port_clicks,
            bob_wrong_port_clicks: self.bob_wrong_port_clicks + o.bob_wrong_port_clicks,
            pns_stolen: self.pns_stolen + o.pns_stolen,
            pns_stolen_coincident: self.pns_stolen_coincident + o.pns_stolen_coincident,
            eve_attacked: self.eve_attacked + o.eve_attacked,
            eve_identified: self.eve_identified + o.eve_identified,
        }
    }

    pub fn from_records(records: &[RoundRecord]) -> Tally {
        records.iter().fold(Tally::default(), |mut t, r| {
            t.observe(r);
            t
        })
    }

    pub fn qber(&self) -> Option<f64> {
        ratio(self.mismatches, self.sifted)
    }

    pub fn coincidence_rate(&self) -> f64 {
        ratio(self.coincident, self.rounds).unwrap_or(0.0)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Streams `config.rounds` rounds into a [`Tally`] without keeping the
/// transcript. Every coincident round is announced and sifted; there is no
/// error check. Memory use is independent of the round count.
pub fn tally_rounds(config: &SessionConfig) -> Result<Tally> {
    config.validate()?;
    (0..config.rounds)
        .into_par_iter()
        .try_fold(Tally::default, |mut tally, i| {
            let mut record = run_round(config, i, &mut round_stream(config.seed, i))?;
            record.bob.inferred_bit = announced_bit(&record)?;
            tally.observe(&record);
            Ok::<_, Error>(tally)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

/// Aggregate results of one session; serialized into the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub rounds_total: u64,
    pub coincident: u64,
    pub sifted: u64,
    pub disclosed: u64,
    pub mismatches: u64,
    /// Mismatches over sifted pairs; `None` without sifted pairs.
    pub qber: Option<f64>,
    /// Sifted pairs over non-disclosed coincident rounds.
    pub sift_rate: Option<f64>,
    /// Sifted bits per emitted round.
    pub raw_key_rate_per_round: f64,
    /// The error check aborted the session.
    pub eve_detection: bool,
    pub check_error_rate: Option<f64>,
    /// Rounds in which a PNS Eve kept a photon, over all rounds.
    pub pns_stolen_fraction: f64,
    /// Intercepted beams in which Eve deduced the true phase.
    pub eve_phase_id_rate: Option<f64>,
}

pub fn compute_stats(
    records: &[RoundRecord],
    sifted: &[SiftedBitPair],
    check: &ErrorCheck,
) -> SessionStats {
    let tally = Tally::from_records(records);
    let sifted_count = sifted.len() as u64;
    let mismatches = sifted.iter().filter(|p| p.alice_bit != p.bob_bit).count() as u64;
    let disclosed = check.disclosed.len() as u64;
    let eligible = tally.coincident - disclosed;
    SessionStats {
        rounds_total: tally.rounds,
        coincident: tally.coincident,
        sifted: sifted_count,
        disclosed,
        mismatches,
        qber: ratio(mismatches, sifted_count),
        sift_rate: if check.abort {
            None
        } else {
            ratio(sifted_count, eligible)
        },
        raw_key_rate_per_round: ratio(sifted_count, tally.rounds).unwrap_or(0.0),
        eve_detection: check.abort,
        check_error_rate: check.error_rate,
        pns_stolen_fraction: ratio(tally.pns_stolen, tally.rounds).unwrap_or(0.0),
        eve_phase_id_rate: ratio(tally.eve_identified, tally.eve_attacked),
    }
}

/// Probabilities of a party ending with a valid `+` or `-` detection when
/// its ports receive the given means.
pub fn valid_click_probabilities(
    mu_plus: f64,
    mu_minus: f64,
    det: &DetectorParams,
    policy: DoubleClickPolicy,
) -> (f64, f64) {
    let pp = det.click_probability(mu_plus);
    let pm = det.click_probability(mu_minus);
    let split = match policy {
        DoubleClickPolicy::Discard => 0.0,
        DoubleClickPolicy::RandomAssign => 0.5 * pp * pm,
    };
    (pp * (1.0 - pm) + split, pm * (1.0 - pp) + split)
}

/// Closed-form per-round expectations of an Eve-free session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HonestExpectation {
    pub coincidence_per_round: f64,
    pub qber: f64,
}

/// Expected coincidence rate and QBER without Eve, averaging over the 16
/// equally likely (phase, correlation function, guess) combinations.
pub fn honest_expectation(config: &SessionConfig) -> HonestExpectation {
    let (n_x, n_y) = config.source_means();
    let theta1 = deg(config.theta1_deg);
    let mut coincidence = 0.0;
    let mut error = 0.0;
    for phi in [deg(90.0), deg(-90.0)] {
        let source = PulsePair {
            n_x,
            n_y,
            phi_m: phi,
            phi_a: deg(config.source.phi_a_deg),
            phi_b: deg(config.source.phi_b_deg),
        };
        let beam1 = apply_channel(&source, &config.channel, Party::Alice);
        let beam2 = apply_channel(&source, &config.channel, Party::Bob);
        for c in CorrelationFunction::ALL {
            let term = alice_interference_term(c, theta1, beam1.effective_phase());
            let (mp, mm) = port_means(&beam1, term);
            let (a1, a0) = valid_click_probabilities(
                mp,
                mm,
                &config.detector_alice,
                config.double_click_policy,
            );
            for guess in [GuessAngle::Plus45, GuessAngle::Minus45] {
                let term = bob_interference_term(guess.radians(), beam2.effective_phase());
                let (mp, mm) = port_means(&beam2, term);
                let (yes, no) = valid_click_probabilities(
                    mp,
                    mm,
                    &config.detector_bob,
                    config.double_click_policy,
                );
                for (alice_bit, pa) in [(1u8, a1), (0u8, a0)] {
                    for (outcome, pb) in [(BobOutcome::Yes, yes), (BobOutcome::No, no)] {
                        let p = pa * pb / 16.0;
                        coincidence += p;
                        let bob_bit = bob_infer_bit(c.group(), guess.radians(), outcome)
                            .expect("guess angles are valid by construction");
                        if bob_bit != alice_bit {
                            error += p;
                        }
                    }
                }
            }
        }
    }
    HonestExpectation {
        coincidence_per_round: coincidence,
        qber: if coincidence > 0.0 {
            error / coincidence
        } else {
            0.0
        },
    }
}

/// Expected honest QBER; zero for ideal detectors and a balanced source.
pub fn expected_honest_qber(config: &SessionConfig) -> f64 {
    honest_expectation(config).qber
}

/// Probability that a pulse with total mean `mu` carries two or more
/// photons: `1 - e^{-mu}(1 + mu)`. The fraction of rounds a PNS Eve can
/// exploit.
pub fn pns_leak_estimate(mu: f64) -> f64 {
    1.0 - (-mu).exp() * (1.0 + mu)
}

/// Dark-port mean at full interference for unequal mode means:
/// `(sqrt n_x - sqrt n_y)^2 / 2`.
pub fn dark_port_residual(n_x: f64, n_y: f64) -> f64 {
    let d = n_x.sqrt() - n_y.sqrt();
    0.5 * d * d
}

/// Cost of violating `n_x = n_y`, measured against a balanced source with
/// the same total mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MismatchPenalty {
    pub residual_mean: f64,
    /// `1 - e^{-residual}`: click probability of Bob's dark port.
    pub predicted_wrong_port_click_rate: f64,
    pub wrong_port_click_rate: f64,
    pub qber: Option<f64>,
    pub baseline_qber: Option<f64>,
    pub excess_error_rate: f64,
    pub rounds: u64,
}

/// Runs an ideal-device session with mode means `(n_x, n_y)` and a balanced
/// baseline at `n_c = (n_x + n_y) / 2`, both on the same seed.
pub fn mismatch_penalty(n_x: f64, n_y: f64, rounds: u64, seed: u64) -> Result<MismatchPenalty> {
    for (key, v) in [("source.n_x", n_x), ("source.n_y", n_y)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::config(key, format!("{v} must lie in (0, 1)")));
        }
    }
    let baseline = SessionConfig::ideal(0.5 * (n_x + n_y), rounds, seed);
    let mut skewed = baseline.clone();
    skewed.source.n_x = Some(n_x);
    skewed.source.n_y = Some(n_y);

    let base = tally_rounds(&baseline)?;
    let tally = tally_rounds(&skewed)?;
    let residual = dark_port_residual(n_x, n_y);
    Ok(MismatchPenalty {
        residual_mean: residual,
        predicted_wrong_port_click_rate: 1.0 - (-residual).exp(),
        wrong_port_click_rate: tally.bob_wrong_port_clicks as f64 / rounds as f64,
        qber: tally.qber(),
        baseline_qber: base.qber(),
        excess_error_rate: tally.qber().unwrap_or(0.0) - base.qber().unwrap_or(0.0),
        rounds,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn scaling_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Source mean photon number per mode.
    MeanPhotonNumber,
    /// Transmittance of both arms.
    Transmittance,
    /// Dark-count probability of all four detectors.
    DarkCountProb,
    /// Eve's strategy.
    Eve,
}

impl SweepParameter {
    pub fn parse(value: &str) -> Option<Self> {
        match normalize_name(value).as_str() {
            "nc" => Some(SweepParameter::MeanPhotonNumber),
            "transmittance" => Some(SweepParameter::Transmittance),
            "darkcountprob" => Some(SweepParameter::DarkCountProb),
            "eve" => Some(SweepParameter::Eve),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::MeanPhotonNumber => "n_c",
            SweepParameter::Transmittance => "transmittance",
            SweepParameter::DarkCountProb => "dark_count_prob",
            SweepParameter::Eve => "eve",
        }
    }

    fn config_key(self) -> &'static str {
        match self {
            SweepParameter::MeanPhotonNumber => "n_c",
            SweepParameter::Transmittance => "channel.transmittance",
            SweepParameter::DarkCountProb => "detector.dark_count_prob",
            SweepParameter::Eve => "eve.kind",
        }
    }

    /// Copy of `base` with this parameter set to `value`, validated.
    pub fn apply(self, base: &SessionConfig, value: &str) -> Result<SessionConfig> {
        let mut config = base.clone();
        config.set(self.config_key(), value)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SeedMode {
    /// Each point gets its own seed derived from the base seed.
    #[default]
    Independent,
    /// Every point reuses the base seed (common random numbers).
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: String,
    pub config: SessionConfig,
    pub stats: SessionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
}

/// One full session per value. Points run concurrently.
pub fn sweep(
    base: &SessionConfig,
    parameter: SweepParameter,
    values: &[String],
    seeds: SeedMode,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::EmptySweep(parameter.name().to_string()));
    }
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut config = parameter.apply(base, v)?;
            if seeds == SeedMode::Independent {
                config.seed = child_seed(base.seed, i as u64);
            }
            Ok((v.clone(), config))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = configs
        .into_par_iter()
        .map(|(value, config)| {
            let stats = run_session(&config)?.stats;
            Ok(SweepPoint {
                value,
                config,
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { parameter, points })
}
