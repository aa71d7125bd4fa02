use super::{EngineConfig, MatchEvent};
use crate::error::Result;
use crate::similarity::interval_score;
use crate::trace::{IntervalTemplate, Trace};

/// Scores every window start one at a time and applies the hold-off policy.
///
/// This is the correctness oracle for the cycle model: it shares no code with the
/// engine's shift register, lane kernel or trigger logic.
pub fn scalar_reference_match(
    stream: &Trace,
    it: &IntervalTemplate,
    cfg: &EngineConfig,
) -> Result<Vec<MatchEvent>> {
    cfg.validate()?;
    let span = it.span();
    let samples = stream.samples();
    if samples.len() < span {
        return Ok(Vec::new());
    }
    let mut matches = Vec::new();
    for start in 0..=samples.len() - span {
        let score = interval_score(&samples[start..start + span], it)?;
        if score >= it.threshold() {
            matches.push((start, score));
        }
    }
    Ok(apply_holdoff(&matches, span, cfg))
}

/// Turns raw `(start, score)` matches, sorted by start, into events.
///
/// A match is kept when no kept match started less than `holdoff` samples earlier.
pub fn apply_holdoff(matches: &[(usize, u32)], span: usize, cfg: &EngineConfig) -> Vec<MatchEvent> {
    let holdoff = cfg.holdoff_for(span);
    let mut events: Vec<MatchEvent> = Vec::new();
    for &(start, score) in matches {
        if let Some(last) = events.last() {
            if start < last.start_index + holdoff {
                continue;
            }
        }
        events.push(MatchEvent {
            start_index: start,
            lane: start % cfg.parallelism,
            score,
            trigger_index: start.saturating_sub(cfg.positional_buffer),
        });
    }
    events
}
