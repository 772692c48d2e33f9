//! Interference terms, per-port mean photon numbers and detector sampling for
//! the two-mode weak-coherent source.
//!
//! The model stays at the level of expectation values: each analyzer port
//! receives a Poisson-distributed photon number whose mean is the port share
//! of `n_x + n_y` set by the interference term. Threshold detectors then turn
//! photon counts into clicks.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Result};

/// Converts an angle in degrees (the unit used at every interface) to radians.
pub fn deg(degrees: f64) -> f64 {
    degrees.to_radians()
}

/// Optical signal of one round as seen by one party or by Eve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    /// Mean photon number of the horizontal (x) mode.
    pub n_x: f64,
    /// Mean photon number of the vertical (y) mode.
    pub n_y: f64,
    /// Modulated phase, radians. An honest source emits +pi/2 or -pi/2.
    pub phi_m: f64,
    /// Static phase of the source-side arm, radians.
    pub phi_a: f64,
    /// Static phase of the receiver-side arm, radians.
    pub phi_b: f64,
}

impl PulsePair {
    /// Pulse from an honest source: equal mode means, aligned arms.
    pub fn honest(n_c: f64, phi_m: f64) -> Self {
        PulsePair {
            n_x: n_c,
            n_y: n_c,
            phi_m,
            phi_a: 0.0,
            phi_b: 0.0,
        }
    }

    pub fn vacuum(phi_m: f64) -> Self {
        Self::honest(0.0, phi_m)
    }

    /// Phase entering the interference terms: `phi_m + phi_a - phi_b`.
    /// Equal to `phi_m` when the arms are aligned.
    pub fn effective_phase(&self) -> f64 {
        self.phi_m + self.phi_a - self.phi_b
    }

    pub fn total_mean(&self) -> f64 {
        self.n_x + self.n_y
    }

    pub fn is_vacuum(&self) -> bool {
        self.n_x == 0.0 && self.n_y == 0.0
    }
}

/// The four bi-partite correlation functions Alice can select with her
/// wave plates. Each fixes the sign pattern of her interference term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrelationFunction {
    C1,
    C2,
    C3,
    C4,
}

impl CorrelationFunction {
    pub const ALL: [CorrelationFunction; 4] = [
        CorrelationFunction::C1,
        CorrelationFunction::C2,
        CorrelationFunction::C3,
        CorrelationFunction::C4,
    ];

    /// Overall sign of Alice's interference term.
    pub fn outer_sign(self) -> f64 {
        match self {
            CorrelationFunction::C1 | CorrelationFunction::C3 => -1.0,
            CorrelationFunction::C2 | CorrelationFunction::C4 => 1.0,
        }
    }

    /// Sign of `phi_m` inside Alice's cosine.
    pub fn phase_sign(self) -> f64 {
        match self {
            CorrelationFunction::C1 | CorrelationFunction::C4 => 1.0,
            CorrelationFunction::C2 | CorrelationFunction::C3 => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorrelationFunction::C1 => "C1",
            CorrelationFunction::C2 => "C2",
            CorrelationFunction::C3 => "C3",
            CorrelationFunction::C4 => "C4",
        }
    }
}

impl std::fmt::Display for CorrelationFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Analyzer output port. `Plus` is the transmitted port, `Minus` the reflected one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    Plus,
    Minus,
}

impl Port {
    pub fn opposite(self) -> Port {
        match self {
            Port::Plus => Port::Minus,
            Port::Minus => Port::Plus,
        }
    }

    /// Port favored by an interference term; `None` when the term is zero.
    pub fn from_term(term: f64) -> Option<Port> {
        if term > 0.0 {
            Some(Port::Plus)
        } else if term < 0.0 {
            Some(Port::Minus)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Port::Plus => "plus",
            Port::Minus => "minus",
        }
    }
}

/// Which of a party's two detectors fired in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub plus_click: bool,
    pub minus_click: bool,
}

impl DetectionEvent {
    pub const VACUUM: DetectionEvent = DetectionEvent {
        plus_click: false,
        minus_click: false,
    };

    pub fn single(port: Port) -> Self {
        DetectionEvent {
            plus_click: port == Port::Plus,
            minus_click: port == Port::Minus,
        }
    }

    /// The clicking port when exactly one detector fired.
    pub fn valid_port(&self) -> Option<Port> {
        match (self.plus_click, self.minus_click) {
            (true, false) => Some(Port::Plus),
            (false, true) => Some(Port::Minus),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.valid_port().is_some()
    }

    pub fn is_vacuum(&self) -> bool {
        !self.plus_click && !self.minus_click
    }

    pub fn is_double(&self) -> bool {
        self.plus_click && self.minus_click
    }

    pub fn clicked(&self, port: Port) -> bool {
        match port {
            Port::Plus => self.plus_click,
            Port::Minus => self.minus_click,
        }
    }

    /// Transcript label: `none`, `plus`, `minus` or `both`.
    pub fn label(&self) -> &'static str {
        match (self.plus_click, self.minus_click) {
            (false, false) => "none",
            (true, false) => "plus",
            (false, true) => "minus",
            (true, true) => "both",
        }
    }
}

/// Threshold single-photon detector pair. Both detectors of a party share
/// these parameters; efficiency and dark counts act independently per port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_count_prob: f64,
}

impl DetectorParams {
    pub const IDEAL: DetectorParams = DetectorParams {
        efficiency: 1.0,
        dark_count_prob: 0.0,
    };

    pub fn new(efficiency: f64, dark_count_prob: f64) -> Result<Self> {
        let params = DetectorParams {
            efficiency,
            dark_count_prob,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("efficiency", self.efficiency)?;
        check_probability("dark_count_prob", self.dark_count_prob)
    }

    /// Closed-form click probability of one port with mean photon number `mu`:
    /// `1 - (1 - dark) * exp(-efficiency * mu)`.
    pub fn click_probability(&self, mu: f64) -> f64 {
        1.0 - (1.0 - self.dark_count_prob) * (-self.efficiency * mu).exp()
    }
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self::IDEAL
    }
}

/// Alice's interference term `outer * cos(2 theta1 + phase_sign * phi_m)`.
pub fn alice_interference_term(c: CorrelationFunction, theta1: f64, phi_m: f64) -> f64 {
    c.outer_sign() * (2.0 * theta1 + c.phase_sign() * phi_m).cos()
}

/// Bob's interference term `cos(2 theta2 + phi_m)`; the same for every
/// correlation function Alice may have picked.
pub fn bob_interference_term(theta2: f64, phi_m: f64) -> f64 {
    (2.0 * theta2 + phi_m).cos()
}

/// Splits `n_x + n_y` between the `+` and `-` ports:
/// `mu_pm = (n_x + n_y +- 2 sqrt(n_x n_y) term) / 2`.
///
/// The two means are non-negative and sum to exactly `n_x + n_y`.
/// The pulse phase is not consulted; it already lives in `term`.
pub fn port_means(pulse: &PulsePair, term: f64) -> (f64, f64) {
    let (bright, dark) = split_means(pulse.n_x, pulse.n_y, term.abs().min(1.0));
    debug_assert!(bright + dark == pulse.n_x + pulse.n_y);
    if term >= 0.0 {
        (bright, dark)
    } else {
        (dark, bright)
    }
}

// Returns (larger, smaller) port mean for a non-negative term. Written as
// (sqrt(n_x) - sqrt(n_y))^2 + 2 sqrt(n_x n_y)(1 +- term) so that the dark port
// is exactly zero for equal means at full interference.
fn split_means(n_x: f64, n_y: f64, term: f64) -> (f64, f64) {
    let total = n_x + n_y;
    let (rx, ry) = (n_x.sqrt(), n_y.sqrt());
    let residual = (rx - ry) * (rx - ry);
    // sqrt of the product is exact for equal means, unlike the product of roots
    let cross = (n_x * n_y).sqrt();
    let bright = (0.5 * (residual + 2.0 * cross * (1.0 + term))).clamp(0.5 * total, total);
    // Sterbenz: bright lies in [total/2, total], so the subtraction is exact.
    let dark = total - bright;
    (bright, dark)
}

/// Photon bookkeeping for one port in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PortSample {
    /// Photons arriving at the port.
    pub photons: u64,
    /// Photons surviving the efficiency thinning.
    pub detected: u64,
    pub dark_count: bool,
}

impl PortSample {
    pub fn click(&self) -> bool {
        self.detected > 0 || self.dark_count
    }
}

/// Per-port photon counts behind a [`DetectionEvent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PortCounts {
    pub plus: PortSample,
    pub minus: PortSample,
}

impl PortCounts {
    pub fn event(&self) -> DetectionEvent {
        DetectionEvent {
            plus_click: self.plus.click(),
            minus_click: self.minus.click(),
        }
    }

    pub fn port(&self, port: Port) -> &PortSample {
        match port {
            Port::Plus => &self.plus,
            Port::Minus => &self.minus,
        }
    }
}

/// Draws a Poisson photon number with mean `mu`.
pub fn sample_poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    // `mu` is a finite positive mean here, so construction cannot fail.
    let poisson = Poisson::new(mu).expect("finite positive Poisson mean");
    poisson.sample(rng) as u64
}

/// Samples one port: Poisson arrivals, Bernoulli efficiency thinning, and an
/// independent dark count.
pub fn sample_port<R: Rng + ?Sized>(mu: f64, det: &DetectorParams, rng: &mut R) -> PortSample {
    let photons = sample_poisson(mu, rng);
    let detected = if det.efficiency >= 1.0 {
        photons
    } else {
        (0..photons)
            .filter(|_| rng.random_bool(det.efficiency))
            .count() as u64
    };
    let dark_count = det.dark_count_prob > 0.0 && rng.random_bool(det.dark_count_prob);
    PortSample {
        photons,
        detected,
        dark_count,
    }
}

/// Samples both ports and keeps the photon counts.
pub fn sample_photon_counts<R: Rng + ?Sized>(
    mu_plus: f64,
    mu_minus: f64,
    det: &DetectorParams,
    rng: &mut R,
) -> PortCounts {
    let plus = sample_port(mu_plus, det, rng);
    let minus = sample_port(mu_minus, det, rng);
    PortCounts { plus, minus }
}

/// Samples the detection event of a party whose ports receive the given means.
/// Double clicks are returned as such; resolving them is protocol policy.
pub fn sample_detection<R: Rng + ?Sized>(
    mu_plus: f64,
    mu_minus: f64,
    det: &DetectorParams,
    rng: &mut R,
) -> DetectionEvent {
    sample_photon_counts(mu_plus, mu_minus, det, rng).event()
}

/// Two-photon contribution at an analyzer set to `theta`:
/// `n_x^2 + n_y^2 + 2 n_x n_y + 2 (n_x + n_y) sqrt(n_x n_y) cos(2 theta + phi)`,
/// with `phi` the pulse's effective phase.
///
/// At destructive interference this reduces to `(n_x + n_y)(sqrt n_x - sqrt n_y)^2`,
/// which vanishes only for equal mode means.
pub fn two_photon_expectation(pulse: &PulsePair, theta: f64) -> f64 {
    let total = pulse.total_mean();
    let cos = (2.0 * theta + pulse.effective_phase())
        .cos()
        .clamp(-1.0, 1.0);
    let (rx, ry) = (pulse.n_x.sqrt(), pulse.n_y.sqrt());
    let residual = (rx - ry) * (rx - ry);
    total * (residual + 2.0 * rx * ry * (1.0 + cos))
}
