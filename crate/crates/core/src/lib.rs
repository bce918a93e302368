//! Two-level private information retrieval over replicated servers.
//!
//! Messages `1..=K1` are private against `T1` colluding servers and all `K2`
//! messages against `T2 <= T1`. Two linear codes are provided, successive
//! cancellation ([`ns_engine`]) and block cancellation ([`nb_engine`]),
//! together with exact rate formulas ([`capacity`]), a structural privacy
//! audit ([`audit`]) and a multi-server harness ([`net`]).

pub mod algebra;
pub mod audit;
pub mod capacity;
pub mod cli;
pub mod error;
pub mod mds;
pub mod nb_engine;
pub mod net;
pub mod ns_engine;
pub mod ns_params;
pub mod plan;

pub use error::{Error, Result};
