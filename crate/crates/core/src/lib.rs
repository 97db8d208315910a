//! Context extraction, prompt assembly and evaluation for generating
//! exceptional-behavior tests (EBTs) on Java repositories.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod expr;
pub mod genbackend;
pub mod guardexpr;
pub mod instrument;
pub mod jmodel;
pub mod lexer;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod stacktrace;

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}
