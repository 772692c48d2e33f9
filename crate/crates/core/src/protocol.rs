//! The key-generation state machine.
//!
//! One round: the source emits a pulse pair with a random phase of +-90 deg,
//! Alice picks a correlation function and records her click as a bit, Bob
//! picks an analyzer angle of +-45 deg and records Yes/No. After all rounds
//! Bob may disclose part of his results for an error check; if no abort
//! follows, Alice announces her group for every remaining round and Bob turns
//! each coincident Yes/No into her key bit.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    apply_channel, eve_intercept_resend, eve_pns, AttackTarget, EveKind, EveRecord, Party,
};
use crate::analysis::{self, SessionStats};
use crate::config::{normalize_name, SessionConfig};
use crate::error::{check_probability, Error, Result};
use crate::optics::{
    alice_interference_term, bob_interference_term, deg, port_means, sample_detection,
    CorrelationFunction, DetectionEvent, Port, PulsePair,
};
use crate::rng::{round_stream, session_stream};

/// A key bit, 0 or 1.
pub type Bit = u8;

/// Public label Alice announces; hides which of its two correlation
/// functions she used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupLabel {
    Psi,
    Phi,
}

impl GroupLabel {
    pub fn members(self) -> [CorrelationFunction; 2] {
        match self {
            GroupLabel::Psi => [CorrelationFunction::C1, CorrelationFunction::C2],
            GroupLabel::Phi => [CorrelationFunction::C3, CorrelationFunction::C4],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupLabel::Psi => "Psi",
            GroupLabel::Phi => "Phi",
        }
    }
}

impl CorrelationFunction {
    pub fn group(self) -> GroupLabel {
        match self {
            CorrelationFunction::C1 | CorrelationFunction::C2 => GroupLabel::Psi,
            CorrelationFunction::C3 | CorrelationFunction::C4 => GroupLabel::Phi,
        }
    }

    /// C1, C3 carry bit 0; C2, C4 carry bit 1.
    pub fn key_bit(self) -> Bit {
        match self {
            CorrelationFunction::C1 | CorrelationFunction::C3 => 0,
            CorrelationFunction::C2 | CorrelationFunction::C4 => 1,
        }
    }
}

/// The correlation function of `group` whose key bit is `bit`: the one
/// Alice effectively used once her click has corrected her nominal choice.
pub fn effective_correlation(group: GroupLabel, bit: Bit) -> CorrelationFunction {
    let [a, b] = group.members();
    if a.key_bit() == bit {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BobOutcome {
    Yes,
    No,
}

impl BobOutcome {
    pub fn from_port(port: Port) -> Self {
        match port {
            Port::Plus => BobOutcome::Yes,
            Port::Minus => BobOutcome::No,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BobOutcome::Yes => "yes",
            BobOutcome::No => "no",
        }
    }
}

/// Bob's two analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuessAngle {
    /// +45 deg, a guess on {C1, C4}.
    Plus45,
    /// -45 deg, a guess on {C2, C3}.
    Minus45,
}

impl GuessAngle {
    pub fn radians(self) -> f64 {
        match self {
            GuessAngle::Plus45 => FRAC_PI_4,
            GuessAngle::Minus45 => -FRAC_PI_4,
        }
    }

    pub fn degrees(self) -> f64 {
        match self {
            GuessAngle::Plus45 => 45.0,
            GuessAngle::Minus45 => -45.0,
        }
    }

    pub fn from_radians(theta: f64) -> Result<Self> {
        const TOL: f64 = 1e-9;
        if (theta - FRAC_PI_4).abs() < TOL {
            Ok(GuessAngle::Plus45)
        } else if (theta + FRAC_PI_4).abs() < TOL {
            Ok(GuessAngle::Minus45)
        } else {
            Err(Error::GuessAngle(theta.to_degrees()))
        }
    }

    /// The correlation functions this setting guesses on.
    pub fn guess_set(self) -> [CorrelationFunction; 2] {
        match self {
            GuessAngle::Plus45 => [CorrelationFunction::C1, CorrelationFunction::C4],
            GuessAngle::Minus45 => [CorrelationFunction::C2, CorrelationFunction::C3],
        }
    }

    /// The guessed correlation function inside `group`.
    pub fn guess_in(self, group: GroupLabel) -> CorrelationFunction {
        let [a, b] = self.guess_set();
        if a.group() == group {
            a
        } else {
            b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DoubleClickPolicy {
    /// A double click is an invalid detection.
    #[default]
    Discard,
    /// A double click is replaced by a uniformly chosen single click.
    RandomAssign,
}

impl DoubleClickPolicy {
    pub fn parse(value: &str) -> Option<Self> {
        match normalize_name(value).as_str() {
            "discard" => Some(DoubleClickPolicy::Discard),
            "randomassign" => Some(DoubleClickPolicy::RandomAssign),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DoubleClickPolicy::Discard => "discard",
            DoubleClickPolicy::RandomAssign => "random_assign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliceRound {
    pub group: GroupLabel,
    pub chosen_c: CorrelationFunction,
    /// Analyzer angle, radians.
    pub theta1: f64,
    pub detection: DetectionEvent,
    pub recorded_bit: Option<Bit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BobRound {
    /// Analyzer angle, radians.
    pub theta2: f64,
    pub detection: DetectionEvent,
    pub outcome: Option<BobOutcome>,
    /// Alice's bit as Bob reconstructs it after the group announcement.
    pub inferred_bit: Option<Bit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u64,
    /// Source phase, radians. Ground truth, unknown to both parties.
    pub phi_m: f64,
    pub alice: AliceRound,
    pub bob: BobRound,
    pub coincident: bool,
    /// Bob disclosed this round for the error check; it never becomes key.
    pub disclosed: bool,
    /// Eve's view of beam 2.
    pub eve: Option<EveRecord>,
    /// Eve's view of beam 1 when she attacks both beams.
    pub eve_beam1: Option<EveRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedBitPair {
    pub alice_bit: Bit,
    pub bob_bit: Bit,
    pub round_index: u64,
}

fn random_sign_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        FRAC_PI_2
    } else {
        -FRAC_PI_2
    }
}

/// Honest source: a random phase of +-90 deg on a pulse pair with
/// `n_x = n_y = n_c`.
pub fn source_emit<R: Rng + ?Sized>(n_c: f64, rng: &mut R) -> Result<(f64, PulsePair)> {
    if !(n_c > 0.0 && n_c < 1.0) {
        return Err(Error::MeanPhotonNumber(n_c));
    }
    let phi_m = random_sign_phase(rng);
    Ok((phi_m, PulsePair::honest(n_c, phi_m)))
}

/// Alice's uniform choice among the four correlation functions.
pub fn alice_choose<R: Rng + ?Sized>(rng: &mut R) -> (GroupLabel, CorrelationFunction) {
    let c = CorrelationFunction::ALL[rng.random_range(0..4)];
    (c.group(), c)
}

/// Sets Alice's bit from her detection: `+` is 1, `-` is 0, whatever her
/// nominal choice. Vacuum and double clicks leave it empty.
pub fn alice_record(mut round: AliceRound) -> AliceRound {
    round.recorded_bit = round.detection.valid_port().map(|port| match port {
        Port::Plus => 1,
        Port::Minus => 0,
    });
    round
}

/// Bob's uniform choice of analyzer angle, radians.
pub fn bob_guess<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        GuessAngle::Plus45.radians()
    } else {
        GuessAngle::Minus45.radians()
    }
}

/// Sets Bob's Yes (`+`) or No (`-`) from his detection.
pub fn bob_record(mut round: BobRound) -> BobRound {
    round.outcome = round.detection.valid_port().map(BobOutcome::from_port);
    round
}

/// Alice's key bit as Bob reconstructs it: Yes confirms the correlation
/// function he guessed inside the announced group, No selects the other one.
pub fn bob_infer_bit(group: GroupLabel, theta2: f64, outcome: BobOutcome) -> Result<Bit> {
    let guessed = GuessAngle::from_radians(theta2)?.guess_in(group);
    Ok(match outcome {
        BobOutcome::Yes => guessed.key_bit(),
        BobOutcome::No => 1 - guessed.key_bit(),
    })
}

/// Resolves a double click under `policy`; other events pass through.
pub fn resolve_double_click<R: Rng + ?Sized>(
    event: DetectionEvent,
    policy: DoubleClickPolicy,
    rng: &mut R,
) -> DetectionEvent {
    match policy {
        DoubleClickPolicy::RandomAssign if event.is_double() => {
            DetectionEvent::single(if rng.random_bool(0.5) {
                Port::Plus
            } else {
                Port::Minus
            })
        }
        _ => event,
    }
}

/// The random settings of one round, drawn up front.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundChoices {
    pub phi_m: f64,
    pub chosen_c: CorrelationFunction,
    pub theta2: f64,
}

impl RoundChoices {
    pub fn draw<R: Rng + ?Sized>(config: &SessionConfig, rng: &mut R) -> Result<Self> {
        let (phi_m, _) = source_emit(config.n_c, rng)?;
        let (_, chosen_c) = alice_choose(rng);
        let theta2 = bob_guess(rng);
        Ok(RoundChoices {
            phi_m,
            chosen_c,
            theta2,
        })
    }
}

/// Runs one round with freshly drawn settings.
pub fn run_round<R: Rng + ?Sized>(
    config: &SessionConfig,
    round_index: u64,
    rng: &mut R,
) -> Result<RoundRecord> {
    let choices = RoundChoices::draw(config, rng)?;
    run_round_with(config, round_index, choices, rng)
}

/// Runs one round with the given settings: source, adversary, channel,
/// detection at both parties, and the parties' local records.
pub fn run_round_with<R: Rng + ?Sized>(
    config: &SessionConfig,
    round_index: u64,
    choices: RoundChoices,
    rng: &mut R,
) -> Result<RoundRecord> {
    let (n_x, n_y) = config.source_means();
    let source = PulsePair {
        n_x,
        n_y,
        phi_m: choices.phi_m,
        phi_a: deg(config.source.phi_a_deg),
        phi_b: deg(config.source.phi_b_deg),
    };

    let mut beam1 = source;
    let mut beam2 = source;
    let mut eve = None;
    let mut eve_beam1 = None;
    match config.eve.kind {
        EveKind::None => {}
        EveKind::InterceptResend => {
            let (out, rec) = eve_intercept_resend(&beam2, &config.eve, round_index, rng)?;
            beam2 = out;
            eve = Some(rec);
            if config.eve.target == AttackTarget::BothBeams {
                let (out, rec) = eve_intercept_resend(&beam1, &config.eve, round_index, rng)?;
                beam1 = out;
                eve_beam1 = Some(rec);
            }
        }
        EveKind::Pns => {
            let (out, rec) = eve_pns(&beam2, &config.eve, round_index, rng)?;
            beam2 = out;
            eve = Some(rec);
        }
    }
    let beam1 = apply_channel(&beam1, &config.channel, Party::Alice);
    let beam2 = apply_channel(&beam2, &config.channel, Party::Bob);

    let theta1 = deg(config.theta1_deg);
    let alice_term = alice_interference_term(choices.chosen_c, theta1, beam1.effective_phase());
    let (mu_plus, mu_minus) = port_means(&beam1, alice_term);
    let detection = sample_detection(mu_plus, mu_minus, &config.detector_alice, rng);
    let detection = resolve_double_click(detection, config.double_click_policy, rng);
    let alice = alice_record(AliceRound {
        group: choices.chosen_c.group(),
        chosen_c: choices.chosen_c,
        theta1,
        detection,
        recorded_bit: None,
    });

    let bob_term = bob_interference_term(choices.theta2, beam2.effective_phase());
    let (mu_plus, mu_minus) = port_means(&beam2, bob_term);
    let detection = sample_detection(mu_plus, mu_minus, &config.detector_bob, rng);
    let detection = resolve_double_click(detection, config.double_click_policy, rng);
    let bob = bob_record(BobRound {
        theta2: choices.theta2,
        detection,
        outcome: None,
        inferred_bit: None,
    });

    Ok(RoundRecord {
        round_index,
        phi_m: choices.phi_m,
        coincident: alice.recorded_bit.is_some() && bob.outcome.is_some(),
        alice,
        bob,
        disclosed: false,
        eve,
        eve_beam1,
    })
}

/// Generates every round of a session. Rounds run in parallel, each on its
/// own `(seed, round_index)` stream, so the result does not depend on
/// scheduling.
pub fn generate_rounds(config: &SessionConfig) -> Result<Vec<RoundRecord>> {
    (0..config.rounds)
        .into_par_iter()
        .map(|i| run_round(config, i, &mut round_stream(config.seed, i)))
        .collect()
}

/// Bob's inferred bit for a coincident round, using the group Alice
/// announces for it. `None` for rounds that cannot yield a key bit.
pub fn announced_bit(record: &RoundRecord) -> Result<Option<Bit>> {
    if !record.coincident {
        return Ok(None);
    }
    match record.bob.outcome {
        Some(outcome) => bob_infer_bit(record.alice.group, record.bob.theta2, outcome).map(Some),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftOutcome {
    pub pairs: Vec<SiftedBitPair>,
    /// Sifted pairs over non-disclosed coincident rounds; `None` when there
    /// are no such rounds.
    pub sift_rate: Option<f64>,
}

/// Reconciles every non-disclosed coincident round into a bit pair. No round
/// is dropped for a setting mismatch.
pub fn sift(records: &[RoundRecord]) -> Result<SiftOutcome> {
    let mut pairs = Vec::new();
    let mut eligible = 0usize;
    for record in records.iter().filter(|r| r.coincident && !r.disclosed) {
        eligible += 1;
        if let (Some(alice_bit), Some(bob_bit)) =
            (record.alice.recorded_bit, announced_bit(record)?)
        {
            pairs.push(SiftedBitPair {
                alice_bit,
                bob_bit,
                round_index: record.round_index,
            });
        }
    }
    let sift_rate = (eligible > 0).then(|| pairs.len() as f64 / eligible as f64);
    Ok(SiftOutcome { pairs, sift_rate })
}

/// The outcome Alice expects Bob to have seen at `theta2`, from her group and
/// recorded bit alone.
pub fn alice_expected_outcome(alice: &AliceRound, theta2: f64) -> Option<BobOutcome> {
    let bit = alice.recorded_bit?;
    let effective = effective_correlation(alice.group, bit);
    let want = if bit == 1 { 1.0 } else { -1.0 };
    let phi = [FRAC_PI_2, -FRAC_PI_2].into_iter().max_by(|a, b| {
        let ta = want * alice_interference_term(effective, alice.theta1, *a);
        let tb = want * alice_interference_term(effective, alice.theta1, *b);
        ta.total_cmp(&tb)
    })?;
    Port::from_term(bob_interference_term(theta2, phi)).map(BobOutcome::from_port)
}

/// How the error-check rate is turned into an abort decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbortRule {
    /// Abort when the error rate exceeds this value.
    Fixed(f64),
    /// Abort above `expected + 3 sigma` of the binomial error rate over the
    /// disclosed rounds. With `expected = 0` any error aborts.
    HonestBaseline { expected: f64 },
}

impl AbortRule {
    pub fn threshold(&self, disclosed: usize) -> f64 {
        match *self {
            AbortRule::Fixed(t) => t,
            AbortRule::HonestBaseline { expected } => {
                if expected <= 0.0 || disclosed == 0 {
                    expected.max(0.0)
                } else {
                    let sigma = (expected * (1.0 - expected) / disclosed as f64).sqrt();
                    (expected + 3.0 * sigma).min(1.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCheck {
    /// Round indices Bob disclosed, ascending.
    pub disclosed: Vec<u64>,
    pub mismatches: usize,
    /// `None` when nothing was disclosed.
    pub error_rate: Option<f64>,
    pub threshold: f64,
    /// Raised by Alice; no group is announced afterwards.
    pub abort: bool,
}

/// Bob discloses a uniformly random `fraction` of the coincident rounds with
/// their angle and outcome. Alice compares each with the outcome her own
/// record predicts.
pub fn error_check<R: Rng + ?Sized>(
    records: &[RoundRecord],
    fraction: f64,
    rule: AbortRule,
    rng: &mut R,
) -> Result<ErrorCheck> {
    check_probability("error_check_fraction", fraction)?;
    let coincident: Vec<&RoundRecord> = records.iter().filter(|r| r.coincident).collect();
    let count = (fraction * coincident.len() as f64).round() as usize;
    let mut picked: Vec<&RoundRecord> = index::sample(rng, coincident.len(), count)
        .into_iter()
        .map(|i| coincident[i])
        .collect();
    picked.sort_by_key(|r| r.round_index);

    let mismatches = picked
        .iter()
        .filter(|r| alice_expected_outcome(&r.alice, r.bob.theta2) != r.bob.outcome)
        .count();
    let error_rate = (count > 0).then(|| mismatches as f64 / count as f64);
    let threshold = rule.threshold(count);
    Ok(ErrorCheck {
        disclosed: picked.iter().map(|r| r.round_index).collect(),
        mismatches,
        error_rate,
        threshold,
        abort: error_rate.is_some_and(|e| e > threshold),
    })
}

/// A completed session.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub records: Vec<RoundRecord>,
    pub check: ErrorCheck,
    pub sifted: Vec<SiftedBitPair>,
    pub sift_rate: Option<f64>,
    pub stats: SessionStats,
}

/// The abort rule a config implies.
pub fn abort_rule(config: &SessionConfig) -> AbortRule {
    match config.abort_threshold {
        Some(t) => AbortRule::Fixed(t),
        None => AbortRule::HonestBaseline {
            expected: analysis::expected_honest_qber(config),
        },
    }
}

/// Runs a full session: all rounds, the optional error check, then group
/// announcement and sifting unless the check aborted.
pub fn run_session(config: &SessionConfig) -> Result<SessionOutcome> {
    config.validate()?;
    let mut records = generate_rounds(config)?;

    let mut rng = session_stream(config.seed);
    let check = error_check(
        &records,
        config.error_check_fraction,
        abort_rule(config),
        &mut rng,
    )?;
    for &i in &check.disclosed {
        records[i as usize].disclosed = true;
    }

    let (sifted, sift_rate) = if check.abort {
        (Vec::new(), None)
    } else {
        let outcome = sift(&records)?;
        for pair in &outcome.pairs {
            records[pair.round_index as usize].bob.inferred_bit = Some(pair.bob_bit);
        }
        (outcome.pairs, outcome.sift_rate)
    };

    let stats = analysis::compute_stats(&records, &sifted, &check);
    Ok(SessionOutcome {
        records,
        check,
        sifted,
        sift_rate,
        stats,
    })
}

/// One line of the ideal-case truth table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub phi_m_deg: f64,
    pub chosen_c: CorrelationFunction,
    pub theta2_deg: f64,
    pub alice_term: f64,
    pub alice_bit: Option<Bit>,
    pub bob_term: f64,
    pub bob_outcome: Option<BobOutcome>,
    pub bob_bit: Option<Bit>,
}

impl TruthRow {
    pub fn agree(&self) -> bool {
        self.alice_bit.is_some() && self.alice_bit == self.bob_bit
    }
}

/// Noise-free outcome of all 16 combinations of source phase, Alice's
/// correlation function and Bob's angle, with Alice's analyzer at `theta1_deg`.
pub fn truth_table(theta1_deg: f64) -> Vec<TruthRow> {
    let theta1 = deg(theta1_deg);
    let mut rows = Vec::with_capacity(16);
    for phi_deg in [-90.0, 90.0] {
        let phi = deg(phi_deg);
        for c in CorrelationFunction::ALL {
            for guess in [GuessAngle::Plus45, GuessAngle::Minus45] {
                let alice_term = alice_interference_term(c, theta1, phi);
                let alice_bit = Port::from_term(alice_term).map(|p| match p {
                    Port::Plus => 1,
                    Port::Minus => 0,
                });
                let bob_term = bob_interference_term(guess.radians(), phi);
                let bob_outcome = Port::from_term(bob_term).map(BobOutcome::from_port);
                let bob_bit = bob_outcome.map(|o| {
                    bob_infer_bit(c.group(), guess.radians(), o)
                        .expect("guess angles are valid by construction")
                });
                rows.push(TruthRow {
                    phi_m_deg: phi_deg,
                    chosen_c: c,
                    theta2_deg: guess.degrees(),
                    alice_term,
                    alice_bit,
                    bob_term,
                    bob_outcome,
                    bob_bit,
                });
            }
        }
    }
    rows
}
