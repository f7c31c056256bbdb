//! Optimal control of spin ensembles with continuous and discrete phase pulses.
//!
//! The crate provides exact Bloch-picture propagation of an inhomogeneous
//! ensemble ([`spin`]), continuous phase GRAPE ([`grape`]), discrete-pulse
//! GRAPE over a finite codebook of phases ([`discrete`]), circular Lloyd
//! quantization of continuous pulses ([`lloyd`]), brute-force verifiers
//! ([`oracles`]) and the experiment harness behind the `pulseforge` CLI
//! ([`experiment`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrete;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod grape;
pub mod lloyd;
pub mod oracles;
pub mod spin;

pub use error::{Error, Result};
