//! Ticket-based authentication and key management for mobile wireless sensor
//! networks, with a deterministic discrete-event simulator, an attacker
//! model, and cost instrumentation.

pub mod crypto;
pub mod keychain;
pub mod metrics;
pub mod protocol;
pub mod simnet;
pub mod ticket;
