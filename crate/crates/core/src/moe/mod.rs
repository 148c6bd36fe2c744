//! Mixture-of-experts connector: gate, experts, top-K routing, auxiliary
//! losses, routing statistics and checkpoints.

mod aux;
pub mod checkpoint;
mod connector;
mod count;
mod expert;
mod routing;

pub use aux::{aux_losses, usage_stats, AuxLossConfig, AuxLosses, UsageCounter, UsageStats};
pub use connector::{MoECache, MoEConnector, MoEGrads, RoutingTrace};
pub use count::{param_count, ParamCounts};
pub use expert::{ExpertCache, ExpertMLP};
pub use routing::{route_top_k, top_k_indices, GateNet};
