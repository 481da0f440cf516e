//! Cylinder benchmark driver and verification suites behind the `emacflow`
//! binary.

pub mod config;
pub mod record;
pub mod runner;
pub mod verify;
