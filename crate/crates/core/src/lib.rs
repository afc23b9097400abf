//! Nonadiabatic holonomic gates on a three-level Λ system and on an
//! electron-nuclear spin register, checked against direct propagation, with
//! state/process tomography and a photon-counting readout model.

pub mod cli;
pub mod error;
pub mod experiment_model;
pub mod gates;
pub mod linalg;
pub mod optimize;
pub mod propagation;
pub mod pulses;
pub mod state_algebra;
pub mod tomography;

pub use error::{Error, Result};
