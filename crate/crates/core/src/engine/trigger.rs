use std::collections::VecDeque;

use serde::Serialize;

use super::{EngineGeometry, MatchEvent};

/// Observable state of the trigger output and the hold-off counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TriggerState {
    pub asserted: bool,
    pub remaining_duration: usize,
    pub holdoff_remaining: usize,
}

#[derive(Debug, Clone, Copy)]
struct Pulse {
    at: usize,
    len: usize,
}

/// Turns lane valid bits into match events and a trigger waveform.
///
/// Valid bits are consumed lane by lane in start-index order. The first valid
/// lane outside hold-off is accepted and reloads the hold-off counter, which then
/// counts down once per start position. Each accepted match schedules a pulse that
/// starts at the operation's first sample, `start - positional_buffer`, on the
/// delayed output.
#[derive(Debug, Clone)]
pub struct TriggerLogic {
    holdoff: usize,
    duration: usize,
    positional_buffer: usize,
    parallelism: usize,
    span: usize,
    stream_limit: Option<usize>,
    holdoff_remaining: usize,
    next_start: usize,
    pending: VecDeque<Pulse>,
    remaining: usize,
}

impl TriggerLogic {
    pub(crate) fn new(geom: &EngineGeometry, positional_buffer: usize) -> Self {
        TriggerLogic {
            holdoff: geom.holdoff,
            duration: geom.trigger_duration,
            positional_buffer,
            parallelism: geom.parallelism,
            span: geom.span,
            stream_limit: None,
            holdoff_remaining: 0,
            next_start: 0,
            pending: VecDeque::new(),
            remaining: 0,
        }
    }

    /// Windows reaching past `limit` samples are never accepted.
    pub(crate) fn set_stream_limit(&mut self, limit: Option<usize>) {
        self.stream_limit = limit;
    }

    pub fn state(&self) -> TriggerState {
        TriggerState {
            asserted: self.remaining > 0,
            remaining_duration: self.remaining,
            holdoff_remaining: self.holdoff_remaining,
        }
    }

    /// Consumes the lane scores for windows starting at `first_start ..`.
    pub(crate) fn accept_lanes(
        &mut self,
        first_start: usize,
        scores: &[u32],
        threshold: u32,
        events: &mut Vec<MatchEvent>,
    ) {
        debug_assert_eq!(
            first_start, self.next_start,
            "lane blocks must arrive in order"
        );
        self.next_start = first_start + scores.len();
        for (j, &score) in scores.iter().enumerate() {
            let start = first_start + j;
            self.holdoff_remaining = self.holdoff_remaining.saturating_sub(1);
            let in_stream = self
                .stream_limit
                .is_none_or(|limit| start + self.span <= limit);
            if score < threshold || !in_stream || self.holdoff_remaining > 0 {
                continue;
            }
            self.holdoff_remaining = self.holdoff;
            let rise = start as i64 - self.positional_buffer as i64;
            let fall = rise + self.duration as i64;
            let trigger_index = rise.max(0) as usize;
            if fall > 0 {
                self.pending.push_back(Pulse {
                    at: trigger_index,
                    len: fall as usize - trigger_index,
                });
            }
            events.push(MatchEvent {
                start_index: start,
                lane: start % self.parallelism,
                score,
                trigger_index,
            });
        }
    }

    /// Produces the trigger bits for output samples `first ..first + bits.len()`.
    pub(crate) fn emit(&mut self, first: usize, bits: &mut [bool]) {
        for (k, bit) in bits.iter_mut().enumerate() {
            let idx = first + k;
            if self.remaining == 0 {
                if let Some(p) = self.pending.front() {
                    debug_assert!(
                        p.at >= idx,
                        "pulse at {} scheduled after its output slot",
                        p.at
                    );
                    if p.at == idx {
                        self.remaining = p.len;
                        self.pending.pop_front();
                    }
                }
            }
            *bit = self.remaining > 0;
            self.remaining = self.remaining.saturating_sub(1);
        }
    }
}
