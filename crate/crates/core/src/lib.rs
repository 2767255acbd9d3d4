//! Adaptive task allocation for multi-human multi-robot teams.
//!
//! The crate bundles a partially observed team simulator, human and robot
//! performance models, a small reverse-mode autodiff library, hierarchical
//! allocation policies, their training loop and an evaluation bench.

pub mod agents;
pub mod alloc;
pub mod autodiff;
pub mod sim;
pub mod policy;
pub mod train;
pub mod eval;
pub mod config;
pub mod cli;
