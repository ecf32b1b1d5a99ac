//! Schedule-aware loss-curve toolkit: multi-power-law evaluation and
//! fitting, learning-rate schedule optimization, and noisy quadratic SGD
//! simulation for checking the theory-side estimates.

pub mod curvefile;
pub mod fit;
pub mod law;
pub mod metrics;
pub mod optimize;
pub mod quad;
pub mod schedule;
pub mod special;

pub use law::{LawVariant, LossCurve, MplParams};
pub use metrics::Metrics;
pub use schedule::{Schedule, ScheduleKind, StageSpec};
