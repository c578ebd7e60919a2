// Per-coordinate updates index several parallel state vectors at once.
#![allow(clippy::needless_range_loop)]

pub mod adaptivity;
pub mod anon;
pub mod error;
pub mod frame;
pub mod harness;
pub mod optim;
pub mod precond;
pub mod testbed;
