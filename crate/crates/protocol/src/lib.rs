//! Four-round robust secure aggregation with trust scores.
//!
//! Clients and the server are state machines exchanging [`wire::Envelope`]s
//! through a [`mailbox::Mailbox`] that the server relays. [`engine::Engine`]
//! drives one iteration end to end.

pub mod client;
pub mod config;
pub mod crypto;
pub mod engine;
pub mod mailbox;
pub mod round;
pub mod server;
pub mod traffic;
pub mod trust;
pub mod wire;

pub use config::{ConfigError, ProtocolConfig};
pub use crypto::CryptoMode;
pub use engine::{Engine, EngineError, IterationReport};
pub use round::{Abort, Fault, Offense, RoundState};
