//! The parallel matching datapath.
//!
//! Every clock cycle the engine takes a block of `d` samples, shifts it into a
//! shift register ([`ShiftRegister`]) and lets `d` matcher lanes score the `d`
//! windows that start in one block. Lane scores pass through an `l`-cycle latency
//! pipe into the [`TriggerLogic`], which applies hold-off and emits a trigger that
//! is aligned with the delayed sample output.
//!
//! Besides the cycle model ([`Engine`], [`run_engine`]) the module provides the
//! scalar oracle [`scalar_reference_match`] and the throughput path [`batch_match`].
//! All three agree on match start indices and scores.

mod batch;
mod kernel;
mod reference;
mod sim;
mod srg;
mod trigger;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{IntervalTemplate, Precision, Sample};

pub use batch::{batch_match, batch_match_parallel};
pub use reference::{apply_holdoff, scalar_reference_match};
pub use sim::{run_engine, Engine, EngineRun, StepOutput};
pub use srg::ShiftRegister;
pub use trigger::{TriggerLogic, TriggerState};

/// Extra buffered samples: pipeline latency in samples plus the positional buffer.
pub fn compute_excess_samples(
    latency: usize,
    parallelism: usize,
    positional_buffer: usize,
) -> usize {
    latency * parallelism + positional_buffer
}

/// Shift register length for a template of `template_len` samples.
pub fn compute_srg_length(template_len: usize, excess: usize) -> usize {
    template_len + excess
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Samples per clock cycle, `d`.
    pub parallelism: usize,
    pub precision: Precision,
    /// Cycles between a window completing and its valid bit reaching the trigger logic.
    pub latency: usize,
    pub positional_buffer: usize,
    /// Minimum distance between two accepted match starts. Defaults to the window span.
    pub holdoff: Option<usize>,
    /// Trigger pulse width in samples. Defaults to the window span, capped at the hold-off.
    pub trigger_duration: Option<usize>,
    /// Fill value for the empty shift register and for padding a trailing partial block.
    pub idle_value: Sample,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            parallelism: 32,
            precision: Precision::DEFAULT,
            latency: 4,
            positional_buffer: 0,
            holdoff: None,
            trigger_duration: None,
            idle_value: 0,
        }
    }
}

impl EngineConfig {
    pub fn with_parallelism(mut self, d: usize) -> Self {
        self.parallelism = d;
        self
    }

    pub fn with_latency(mut self, l: usize) -> Self {
        self.latency = l;
        self
    }

    pub fn with_positional_buffer(mut self, samples: usize) -> Self {
        self.positional_buffer = samples;
        self
    }

    pub fn with_holdoff(mut self, samples: usize) -> Self {
        self.holdoff = Some(samples);
        self
    }

    pub fn with_trigger_duration(mut self, samples: usize) -> Self {
        self.trigger_duration = Some(samples);
        self
    }

    pub fn excess_samples(&self) -> usize {
        compute_excess_samples(self.latency, self.parallelism, self.positional_buffer)
    }

    pub fn srg_length(&self, template_len: usize) -> usize {
        compute_srg_length(template_len, self.excess_samples())
    }

    pub fn holdoff_for(&self, span: usize) -> usize {
        self.holdoff.unwrap_or(span)
    }

    pub fn trigger_duration_for(&self, span: usize) -> usize {
        self.trigger_duration
            .unwrap_or_else(|| span.min(self.holdoff_for(span)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::invalid("parallelism must be at least 1"));
        }
        if self.holdoff == Some(0) {
            return Err(Error::invalid("hold-off must be at least one sample"));
        }
        if self.trigger_duration == Some(0) {
            return Err(Error::invalid(
                "trigger duration must be at least one sample",
            ));
        }
        if let (Some(h), Some(t)) = (self.holdoff, self.trigger_duration) {
            if t > h {
                return Err(Error::invalid(format!(
                    "trigger duration {t} exceeds hold-off {h}; pulses would overlap"
                )));
            }
        }
        if !self.precision.contains(self.idle_value as i32) {
            return Err(Error::invalid(format!(
                "idle value {} outside the {}-bit sample range",
                self.idle_value,
                self.precision.bits()
            )));
        }
        Ok(())
    }

    /// Resolves the datapath dimensions for one interval template.
    pub fn geometry(&self, it: &IntervalTemplate) -> Result<EngineGeometry> {
        self.validate()?;
        let d = self.parallelism;
        let span = it.span();
        let holdoff = self.holdoff_for(span);
        let trigger_duration = self.trigger_duration_for(span);
        if trigger_duration > holdoff {
            return Err(Error::invalid(format!(
                "trigger duration {trigger_duration} exceeds hold-off {holdoff}; pulses would overlap"
            )));
        }
        let excess = self.excess_samples();
        let srg_length = compute_srg_length(it.template_len(), excess);
        // Lane d-1 reaches d-1 samples past lane 0.
        let window_blocks = (span + d - 1).div_ceil(d);
        // The oldest stage must still hold the first sample of an operation when its
        // valid bit leaves the latency pipe.
        let min_stages = window_blocks + self.latency + self.positional_buffer.div_ceil(d);
        let stages = srg_length.div_ceil(d).max(min_stages);
        Ok(EngineGeometry {
            parallelism: d,
            span,
            template_len: it.template_len(),
            excess,
            srg_length,
            window_blocks,
            stages,
            holdoff,
            trigger_duration,
        })
    }
}

/// Resolved datapath dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EngineGeometry {
    pub parallelism: usize,
    pub span: usize,
    pub template_len: usize,
    pub excess: usize,
    /// `n + e` samples.
    pub srg_length: usize,
    /// Blocks a lane group reads: `ceil((span + d - 1) / d)`.
    pub window_blocks: usize,
    /// Physical register stages of `d` samples each.
    pub stages: usize,
    pub holdoff: usize,
    pub trigger_duration: usize,
}

impl EngineGeometry {
    pub fn capacity(&self) -> usize {
        self.stages * self.parallelism
    }

    /// Constant delay, in samples, between a sample entering and leaving the engine.
    pub fn output_delay(&self) -> usize {
        (self.stages - 1) * self.parallelism
    }
}

/// One accepted match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchEvent {
    /// Stream index of the first sample of the matched window.
    pub start_index: usize,
    /// `start_index mod d`.
    pub lane: usize,
    pub score: u32,
    /// Stream index at which the trigger rises: `start_index - positional_buffer`,
    /// saturating at 0. On the engine output it appears `output_delay` samples later.
    pub trigger_index: usize,
}
