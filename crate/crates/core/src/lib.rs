//! Federated layered linear contextual bandits with finite adversarial action
//! sets.
//!
//! Clients run a layered successive-screening policy over shared ridge
//! statistics and synchronize with a star-topology server only when their
//! local information has grown enough to matter (a determinant-ratio test).
//! Asynchronous and synchronous regimes are provided, as are
//! variance-adaptive and corruption-robust weightings.

pub mod bandit;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod orchestrator;
pub mod protocol;
mod serde_ext;

pub use bandit::{
    build_schedule, corruption_weight, cslucb_update, initial_screen, layer_filter, sigma_bar,
    slucb_select, slucb_update, vslucb_update, ClientState, LayerEstimates, LayerSchedule,
    SelectMode, SelectionResult, SigmaBarParams,
};
pub use config::{AlgoConfig, Variant};
pub use env::{EnvSpec, LinearEnv};
pub use error::{Error, Result};
pub use linalg::{DeltaStats, RidgeStats};
pub use metrics::{ExperimentLog, RoundRecord};
pub use orchestrator::{execute, Algo, ArrivalSpec, RunOptions, RunRequest};
pub use protocol::{async_trigger, sync_layer, sync_trigger, CommEvent, CommLog, ServerState};
