//! Block-parallel streaming waveform matching.
//!
//! The crate models a real-time trigger that compares an incoming sample stream
//! against a stored template using interval matching: every compared sample must
//! fall inside a per-position corridor, and a window whose in-corridor count reaches
//! the threshold is a match. The [`engine`] module simulates the hardware datapath
//! cycle by cycle (shift register, `d` matcher lanes, adder trees, trigger logic with
//! hold-off) and also provides a scalar reference matcher and a fast batch matcher.
//!
//! The remaining modules cover the offline side of the workflow: [`similarity`]
//! measures, template construction and threshold [`calibration`], a [`resource`]
//! estimator for the FPGA footprint, a deterministic [`synth`]etic trace generator
//! and the file formats in [`io`].

pub mod calibration;
pub mod engine;
pub mod error;
pub mod io;
pub mod resource;
pub mod similarity;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{make_interval_template, IntervalTemplate, Precision, Sample, Template, Trace};
