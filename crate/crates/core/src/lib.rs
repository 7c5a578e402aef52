//! Multilevel coded pulse-position modulation for covert communication.

pub mod adversary;
pub mod channels;
pub mod codec;
pub mod error;
pub mod extractor;
pub mod levels;
pub mod polar;
pub mod ppm;

pub use adversary::{DetectionReport, KlOracle, LinearCode, TinyCodebook};
pub use codec::{ChainReport, ResolvabilityMode, Session, SessionConfig};
pub use channels::{divergence_stats, Divergence, DivergenceStats, Dmc, LogBase};
pub use error::{Error, Result};
pub use extractor::{BinaryField, Elem, ExtractorConfig};
pub use levels::{LevelChannel, PlanConfig, RatePlan, UPolicy};
pub use polar::{PolarLevelCode, Reliability};
pub use ppm::{PpmFrame, SuperOutput};
