//! Monte-Carlo simulator for intrinsic-correlation quantum key generation.
//!
//! A source between Alice and Bob emits a two-mode weak coherent pulse pair
//! with a random +-90 deg phase. Alice encodes her key bit in the choice of
//! one of four correlation functions, Bob guesses with his analyzer angle,
//! and a public group announcement lets him recover her bit from his
//! Yes/No outcome whether or not the guess was right.
//!
//! * [`optics`]: interference terms, port means, detector sampling
//! * [`protocol`]: the round state machine, sifting, error check, sessions
//! * [`adversary`]: channel loss, intercept-resend and PNS attacks
//! * [`analysis`]: statistics, closed-form expectations, sweeps
//! * [`config`] and [`cli`]: configuration text, transcripts and reports

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod optics;
pub mod protocol;
pub mod rng;

pub use adversary::{ChannelParams, EveKind, EveStrategy, ResendPolicy};
pub use analysis::{SessionStats, Tally};
pub use config::{load_config, parse_config, SessionConfig};
pub use error::{Error, Result};
pub use optics::{CorrelationFunction, DetectionEvent, DetectorParams, Port, PulsePair};
pub use protocol::{run_session, GroupLabel, RoundRecord, SessionOutcome};
