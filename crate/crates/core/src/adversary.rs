//! Channel loss and the two eavesdropping strategies: intercept-resend and
//! photon-number splitting.
//!
//! Eve sits next to the source. She attacks the Bob-bound beam (beam 2), and
//! optionally beam 1 as well for intercept-resend. Her detectors are ideal.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::normalize_name;
use crate::error::{Error, Result};
use crate::optics::{
    bob_interference_term, deg, port_means, sample_detection, sample_poisson, DetectorParams, Port,
    PulsePair,
};

/// Multiplicative thinning of the mean photon numbers on each arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub transmittance_alice: f64,
    pub transmittance_bob: f64,
}

impl ChannelParams {
    pub const LOSSLESS: ChannelParams = ChannelParams {
        transmittance_alice: 1.0,
        transmittance_bob: 1.0,
    };

    pub fn symmetric(transmittance: f64) -> Self {
        ChannelParams {
            transmittance_alice: transmittance,
            transmittance_bob: transmittance,
        }
    }

    pub fn transmittance(&self, party: Party) -> f64 {
        match party {
            Party::Alice => self.transmittance_alice,
            Party::Bob => self.transmittance_bob,
        }
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::LOSSLESS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum EveKind {
    #[default]
    None,
    InterceptResend,
    Pns,
}

impl EveKind {
    pub fn parse(value: &str) -> Option<Self> {
        match normalize_name(value).as_str() {
            "none" | "off" => Some(EveKind::None),
            "interceptresend" | "ir" => Some(EveKind::InterceptResend),
            "pns" | "photonnumbersplitting" => Some(EveKind::Pns),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EveKind::None => "none",
            EveKind::InterceptResend => "intercept_resend",
            EveKind::Pns => "pns",
        }
    }
}

/// What an intercept-resend Eve does when her own measurement is not a
/// single click (vacuum, or a double click).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResendPolicy {
    ResendOnClickElseVacuum,
    #[default]
    ResendAlwaysGuessOnVacuum,
}

impl ResendPolicy {
    pub fn parse(value: &str) -> Option<Self> {
        match normalize_name(value).as_str() {
            "resendonclickelsevacuum" => Some(ResendPolicy::ResendOnClickElseVacuum),
            "resendalwaysguessonvacuum" => Some(ResendPolicy::ResendAlwaysGuessOnVacuum),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResendPolicy::ResendOnClickElseVacuum => "resend_on_click_else_vacuum",
            ResendPolicy::ResendAlwaysGuessOnVacuum => "resend_always_guess_on_vacuum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AttackTarget {
    /// Only the Bob-bound beam.
    #[default]
    Beam2,
    /// Intercept-resend on both beams, independently.
    BothBeams,
}

impl AttackTarget {
    pub fn parse(value: &str) -> Option<Self> {
        match normalize_name(value).as_str() {
            "beam2" | "bob" => Some(AttackTarget::Beam2),
            "both" | "bothbeams" => Some(AttackTarget::BothBeams),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackTarget::Beam2 => "beam2",
            AttackTarget::BothBeams => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EveStrategy {
    pub kind: EveKind,
    /// Eve's analyzer angle in degrees; `None` picks +45 or -45 at random
    /// every round.
    pub theta_e_deg: Option<f64>,
    pub resend_policy: ResendPolicy,
    pub target: AttackTarget,
    /// Mean photon number per mode of resent pulses; defaults to the mean of
    /// the intercepted pulse, i.e. Eve mimics the source.
    pub resend_n_c: Option<f64>,
}

impl EveStrategy {
    pub fn intercept_resend(policy: ResendPolicy) -> Self {
        EveStrategy {
            kind: EveKind::InterceptResend,
            resend_policy: policy,
            ..Default::default()
        }
    }

    pub fn pns() -> Self {
        EveStrategy {
            kind: EveKind::Pns,
            ..Default::default()
        }
    }
}

/// Eve's view of one attacked beam in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EveRecord {
    pub round_index: u64,
    pub kind: EveKind,
    /// Port of Eve's single click, if she had one.
    pub measured_click: Option<Port>,
    /// Phase she deduced from that click, radians.
    pub inferred_phi_m: Option<f64>,
    pub stole_photon: bool,
}

impl EveRecord {
    fn new(round_index: u64, kind: EveKind) -> Self {
        EveRecord {
            round_index,
            kind,
            measured_click: None,
            inferred_phi_m: None,
            stole_photon: false,
        }
    }
}

/// Thins both mode means by the party's transmittance. Phases are untouched.
pub fn apply_channel(pulse: &PulsePair, params: &ChannelParams, party: Party) -> PulsePair {
    let t = params.transmittance(party);
    PulsePair {
        n_x: pulse.n_x * t,
        n_y: pulse.n_y * t,
        ..*pulse
    }
}

/// The honest phase in {+90, -90} deg that sends light to `port` of an
/// analyzer at `theta_e`.
pub fn infer_phase(theta_e: f64, port: Port) -> f64 {
    let want = match port {
        Port::Plus => 1.0,
        Port::Minus => -1.0,
    };
    [FRAC_PI_2, -FRAC_PI_2]
        .into_iter()
        .max_by(|a, b| {
            let ta = want * bob_interference_term(theta_e, *a);
            let tb = want * bob_interference_term(theta_e, *b);
            ta.total_cmp(&tb)
        })
        .unwrap_or(FRAC_PI_2)
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        FRAC_PI_2
    } else {
        -FRAC_PI_2
    }
}

/// Eve measures the pulse with Bob's analyzer and resends a fresh
/// honest-statistics pulse carrying the phase she deduced.
///
/// A single click identifies the phase. On vacuum or double clicks the
/// resend policy decides between sending vacuum and resending with a
/// uniformly guessed phase.
pub fn eve_intercept_resend<R: Rng + ?Sized>(
    pulse: &PulsePair,
    strategy: &EveStrategy,
    round_index: u64,
    rng: &mut R,
) -> Result<(PulsePair, EveRecord)> {
    if strategy.kind != EveKind::InterceptResend {
        return Err(Error::WrongStrategy {
            expected: "intercept-resend",
            found: strategy.kind,
        });
    }
    let theta_e = match strategy.theta_e_deg {
        Some(d) => deg(d),
        None => {
            if rng.random_bool(0.5) {
                deg(45.0)
            } else {
                deg(-45.0)
            }
        }
    };
    let term = bob_interference_term(theta_e, pulse.effective_phase());
    let (mu_plus, mu_minus) = port_means(pulse, term);
    let event = sample_detection(mu_plus, mu_minus, &DetectorParams::IDEAL, rng);

    let mut record = EveRecord::new(round_index, EveKind::InterceptResend);
    let resend_mean = strategy.resend_n_c.unwrap_or(0.5 * pulse.total_mean());
    let offset = pulse.phi_a - pulse.phi_b;
    let resend = |effective: f64| PulsePair {
        n_x: resend_mean,
        n_y: resend_mean,
        phi_m: effective - offset,
        phi_a: pulse.phi_a,
        phi_b: pulse.phi_b,
    };

    let out = match event.valid_port() {
        Some(port) => {
            let inferred = infer_phase(theta_e, port);
            record.measured_click = Some(port);
            record.inferred_phi_m = Some(inferred);
            resend(inferred)
        }
        None => match strategy.resend_policy {
            ResendPolicy::ResendOnClickElseVacuum => PulsePair {
                n_x: 0.0,
                n_y: 0.0,
                ..*pulse
            },
            ResendPolicy::ResendAlwaysGuessOnVacuum => resend(random_phase(rng)),
        },
    };
    Ok((out, record))
}

/// Photon-number splitting: when the pulse holds two or more photons Eve
/// keeps one and forwards the rest, modeled as rescaling both mode means by
/// `(k - 1) / k` for the sampled total `k`. Phases are never touched.
pub fn eve_pns<R: Rng + ?Sized>(
    pulse: &PulsePair,
    strategy: &EveStrategy,
    round_index: u64,
    rng: &mut R,
) -> Result<(PulsePair, EveRecord)> {
    if strategy.kind != EveKind::Pns {
        return Err(Error::WrongStrategy {
            expected: "photon-number-splitting",
            found: strategy.kind,
        });
    }
    let mut record = EveRecord::new(round_index, EveKind::Pns);
    let k = sample_poisson(pulse.total_mean(), rng);
    if k < 2 {
        return Ok((*pulse, record));
    }
    record.stole_photon = true;
    let keep = (k - 1) as f64 / k as f64;
    let forwarded = PulsePair {
        n_x: pulse.n_x * keep,
        n_y: pulse.n_y * keep,
        ..*pulse
    };
    Ok((forwarded, record))
}
