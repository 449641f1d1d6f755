pub mod coordinator;
pub mod error;
pub mod harness;
pub mod health;
pub mod network;
pub mod numerics;
pub mod regulators;
pub mod selftest;
pub mod training;

pub use error::{MsthError, Result};
