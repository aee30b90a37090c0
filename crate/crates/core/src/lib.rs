//! Soft real-time scheduling simulator and control co-design analyzer.
//!
//! The crate covers two halves of one problem:
//!
//! * scheduling: periodic and sporadic tasks on one processor under EDF or
//!   fixed priorities, optionally behind Constant Bandwidth Server reservations
//!   ([`sim`]), plus offline metrics over the resulting traces
//!   ([`analysis`]);
//! * control: discretization and LQR/LQG synthesis of linear plants
//!   ([`control`], [`linalg`]) and the models of computation that turn
//!   reservation parameters into stochastic closed-loop behaviour ([`moc`]).
//!
//! [`experiment`] ties both together in the bandwidth-versus-stability sweep,
//! and [`render`] draws schedules as ASCII or SVG.

pub mod analysis;
pub mod config;
pub mod control;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod moc;
pub mod render;
pub mod sim;
pub mod taskmodel;

pub use error::{Error, Result};
pub use sim::trace::{Event, EventKind, Trace};
pub use sim::{simulate, SchedulerConfig, SchedulerKind};
pub use taskmodel::{
    utilization, ExecTimeModel, JobOutcome, JobRecord, MissPolicy, Rational, ReservationSpec,
    TaskId, TaskSpec, Tick,
};
