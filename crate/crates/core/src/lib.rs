//! Pulse-level simulation and analysis of attenuation-based shot-noise
//! measurement for GG02 continuous-variable QKD.
//!
//! Bob applies a randomly chosen attenuation ratio to each incoming pulse.
//! Grouping pulses by ratio and projecting Bob's data onto Alice's symbols
//! splits every group into a signal variance and a noise variance. In an
//! honest system both the noise-vs-signal and the signal-vs-attenuation
//! relations are affine; the [`estimator::gate`] rejects blocks where either
//! fit degrades, which is how saturation and wavelength attacks that fake the
//! shot-noise level get caught.
//!
//! Module map:
//!
//! * [`params`], [`rng`]: system configuration and deterministic sub-streams.
//! * [`schedule`]: geometric attenuation schedules and random assignment.
//! * [`attack`]: intercept-resend, wavelength injection and saturation models.
//! * [`sim`]: pulse and block simulation, streaming group moments.
//! * [`stats`], [`estimator`]: projection, affine fits, SNU normalization, gate.
//! * [`keyrate`]: excess-noise referral and the collective key rate.
//! * [`config`], [`trace`], [`cli`]: run files, traces, reports, commands.
#![allow(clippy::neg_cmp_op_on_partial_ord)]


pub mod attack;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod keyrate;
pub mod params;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod stats;
pub mod trace;

pub use attack::{AttackConfig, AttackPipeline, WavelengthPoly};
pub use error::{Error, Result};
pub use estimator::{
    fit_affine, gate, gate_block, BlockVerdict, GateVerdict, GroupStats, LinearFit, RejectReason,
    Thresholds,
};
pub use params::{Quadrature, SystemParams};
pub use schedule::AttenuationSchedule;
pub use sim::{simulate_block, simulate_block_moments, PulseRecord};
