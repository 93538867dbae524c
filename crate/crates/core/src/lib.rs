//! Time-bound watermarking for generated token sequences.
//!
//! A document generated in time window `t` carries a fresh random payload
//! expanded by a BCH(63,10) code and embedded through green/red vocabulary
//! biasing keyed by the window's hash-chain key `K_t`. Given only the tokens,
//! an auditor holding historical keys recovers the payload under each
//! candidate key and verifies it against the first-stage positions, which
//! pins the generation window exactly.

pub mod analysis;
pub mod attack;
pub mod bch;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod keychain;
pub mod source;
pub mod wm;

pub use error::{Error, Result};
