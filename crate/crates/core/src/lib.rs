//! Blind tracking of a terminal's UI state and pointer location from its
//! input events, with a ground-truth terminal simulator and an input
//! interposer that launches value-injection attacks.

pub mod attack;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod service;
pub mod terminal;
pub mod trace;
