//! Cheat-penalised point games for weak coin flipping.
//!
//! Finds approximate time-independent point games with a four-step numerical
//! search, checks their validity, converts them into time-dependent point
//! games with round and qubit counts, and evaluates reference protocols.

pub mod par;
pub mod points;
pub mod profile;
pub mod validity;
pub mod search;
pub mod convert;
pub mod baselines;
pub mod cli;
