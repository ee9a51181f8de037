//! Integer forcing-and-forward for MIMO multi-pair two-way relaying.
//!
//! A relay decodes integer combinations (equations) of the pair-aligned user
//! signals, then broadcasts them back; each user recovers its partner's
//! message from the equations it can decode best.

pub mod bc;
pub mod cone;
pub mod ecv;
pub mod error;
pub mod eval;
pub mod iflr;
pub mod linalg;
pub mod ma;
pub mod model;

pub use bc::{BcCriterion, BcDesign};
pub use ecv::Criterion;
pub use error::{IffError, Result};
pub use eval::{monte_carlo, EvalReport, McPoint, Scheme};
pub use iflr::{EquationSet, NoiseProfile};
pub use ma::MaDesign;
pub use model::{ChannelSet, Csi, PrecoderSet, SystemConfig};
