//! Numerical laboratory for a discrete-modulated local-local-oscillator
//! CV-QKD link: constellation shaping, constant-composition distribution
//! matching, the transmit/receive DSP chain, fiber channel and detector
//! models, channel-parameter estimation, and asymptotic secret-key rates.

pub mod channel;
pub mod constellation;
pub mod cvqw;
pub mod estimation;
pub mod harness;
pub mod optimizer;
pub mod rate;
pub mod rxchain;
pub mod seed;
pub mod shaping;
pub mod txchain;

mod fock;

pub use channel::{ChannelParams, DetectorParams, PolRotation};
pub use constellation::Constellation;
pub use estimation::EstimationResult;
pub use harness::ExperimentConfig;
pub use rate::{RateParams, RateReport, ZModel};
pub use rxchain::RecoveredBlock;
pub use shaping::Composition;
pub use txchain::{FrameLayout, WaveformBuffer};
