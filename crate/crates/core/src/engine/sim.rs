use std::collections::VecDeque;

use super::kernel::score_windows;
use super::{EngineConfig, EngineGeometry, MatchEvent, ShiftRegister, TriggerLogic, TriggerState};
use crate::error::{Error, Result};
use crate::trace::{IntervalTemplate, Sample, Trace};

/// Everything the datapath produces in one clock cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub cycle: u64,
    /// The `d` samples leaving the oldest register stage.
    pub samples: Vec<Sample>,
    /// Stream index of `samples[0]`, `None` while the register still drains idle fill.
    pub output_start: Option<usize>,
    /// Lane valid bits leaving the latency pipe this cycle.
    pub valid: Vec<bool>,
    pub lane_scores: Vec<u32>,
    /// Stream index of the window scored by lane 0, when a lane group left the pipe.
    pub valid_start: Option<usize>,
    /// Trigger output, one bit per output sample.
    pub trigger: Vec<bool>,
    /// Matches accepted by the trigger logic this cycle.
    pub events: Vec<MatchEvent>,
}

impl StepOutput {
    pub fn trigger_bit(&self) -> bool {
        self.trigger.iter().any(|&b| b)
    }
}

struct Loaded {
    it: IntervalTemplate,
    geom: EngineGeometry,
    srg: ShiftRegister,
    // (cycle scored, lane-0 start, lane scores)
    pipe: VecDeque<(u64, usize, Vec<u32>)>,
    spare: Vec<Vec<u32>>,
    trigger: TriggerLogic,
    cycle: u64,
}

/// Cycle-accurate model of the parallel matcher.
///
/// Blocks must be applied in stream order; identical block sequences yield
/// identical outputs.
pub struct Engine {
    cfg: EngineConfig,
    loaded: Option<Loaded>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Engine { cfg, loaded: None })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Loads a template and resets all state.
    pub fn load(&mut self, it: IntervalTemplate) -> Result<&EngineGeometry> {
        let geom = self.cfg.geometry(&it)?;
        let srg = ShiftRegister::new(geom.parallelism, geom.stages, self.cfg.idle_value);
        let trigger = TriggerLogic::new(&geom, self.cfg.positional_buffer);
        let loaded = self.loaded.insert(Loaded {
            it,
            geom,
            srg,
            pipe: VecDeque::new(),
            spare: Vec::new(),
            trigger,
            cycle: 0,
        });
        Ok(&loaded.geom)
    }

    pub fn geometry(&self) -> Option<&EngineGeometry> {
        self.loaded.as_ref().map(|l| &l.geom)
    }

    pub fn trigger_state(&self) -> Option<TriggerState> {
        self.loaded.as_ref().map(|l| l.trigger.state())
    }

    pub fn cycle(&self) -> u64 {
        self.loaded.as_ref().map_or(0, |l| l.cycle)
    }

    /// Restricts accepted matches to windows that end within the first `limit` samples.
    pub fn set_stream_limit(&mut self, limit: Option<usize>) -> Result<()> {
        let loaded = self.loaded.as_mut().ok_or(Error::NotInitialized)?;
        loaded.trigger.set_stream_limit(limit);
        Ok(())
    }

    pub fn step(&mut self, block: &[Sample]) -> Result<StepOutput> {
        let mut out = StepOutput::default();
        self.step_into(block, &mut out)?;
        Ok(out)
    }

    /// Advances one clock cycle, reusing the buffers in `out`.
    pub fn step_into(&mut self, block: &[Sample], out: &mut StepOutput) -> Result<()> {
        let d = self.cfg.parallelism;
        let precision = self.cfg.precision;
        let l = self.loaded.as_mut().ok_or(Error::NotInitialized)?;
        if block.len() != d {
            return Err(Error::invalid(format!(
                "block holds {} samples, engine expects {d}",
                block.len()
            )));
        }
        precision.check(block)?;

        let cycle = l.cycle;
        l.srg.push(block);

        // Lane group scoring: block `cycle + 1 - G` is the newest whose d windows are complete.
        let g = l.geom.window_blocks as u64;
        if cycle + 1 >= g {
            let first_start = (cycle + 1 - g) as usize * d;
            let window = l.srg.window();
            let data = &window[window.len() - l.geom.window_blocks * d..];
            let mut scores = l.spare.pop().unwrap_or_default();
            scores.resize(d, 0);
            score_windows(data, &l.it, &mut scores);
            l.pipe.push_back((cycle, first_start, scores));
        }

        out.cycle = cycle;
        out.events.clear();
        out.valid.clear();
        out.lane_scores.clear();
        out.valid_start = None;
        if l.pipe
            .front()
            .is_some_and(|(scored, ..)| scored + self.cfg.latency as u64 == cycle)
        {
            let (_, first_start, scores) = l.pipe.pop_front().expect("front checked");
            let threshold = l.it.threshold();
            out.valid.extend(scores.iter().map(|&s| s >= threshold));
            out.lane_scores.extend_from_slice(&scores);
            out.valid_start = Some(first_start);
            l.trigger
                .accept_lanes(first_start, &scores, threshold, &mut out.events);
            l.spare.push(scores);
        } else {
            out.valid.resize(d, false);
            out.lane_scores.resize(d, 0);
        }

        out.samples.clear();
        out.samples.extend_from_slice(l.srg.oldest());
        out.trigger.clear();
        out.trigger.resize(d, false);
        let drained = l.geom.stages as u64 - 1;
        out.output_start = if cycle >= drained {
            let first = (cycle - drained) as usize * d;
            l.trigger.emit(first, &mut out.trigger);
            Some(first)
        } else {
            None
        };

        l.cycle += 1;
        Ok(())
    }
}

/// Result of driving the engine over a finite stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineRun {
    pub events: Vec<MatchEvent>,
    /// Trigger bit for each input sample, aligned to the stream index.
    pub trigger: Vec<bool>,
    /// Raw engine output, including the leading idle fill and trailing padding.
    pub output: Vec<Sample>,
    pub output_delay: usize,
    pub cycles: u64,
    pub geometry: EngineGeometry,
}

/// Runs the cycle model over `stream` and drains it.
///
/// A trailing partial block is padded with the idle value; matches whose window
/// reaches into the padding are discarded.
pub fn run_engine(stream: &Trace, it: &IntervalTemplate, cfg: &EngineConfig) -> Result<EngineRun> {
    let mut engine = Engine::new(cfg.clone())?;
    let geometry = *engine.load(it.clone())?;
    engine.set_stream_limit(Some(stream.len()))?;

    let d = cfg.parallelism;
    let samples = stream.samples();
    let blocks = samples.len().div_ceil(d);
    let cycles = if blocks == 0 {
        0
    } else {
        blocks + geometry.stages - 1
    };

    let mut events = Vec::new();
    let mut trigger = Vec::with_capacity(blocks * d);
    let mut output = Vec::with_capacity(cycles * d);
    let mut block = vec![cfg.idle_value; d];
    let mut step = StepOutput::default();
    for c in 0..cycles {
        let from = (c * d).min(samples.len());
        let to = (from + d).min(samples.len());
        block[..to - from].copy_from_slice(&samples[from..to]);
        block[to - from..].fill(cfg.idle_value);
        engine.step_into(&block, &mut step)?;
        events.extend_from_slice(&step.events);
        output.extend_from_slice(&step.samples);
        if step.output_start.is_some() {
            trigger.extend_from_slice(&step.trigger);
        }
    }
    trigger.truncate(samples.len());
    Ok(EngineRun {
        events,
        trigger,
        output,
        output_delay: geometry.output_delay(),
        cycles: cycles as u64,
        geometry,
    })
}
