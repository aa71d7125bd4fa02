use rayon::prelude::*;

use super::kernel::score_windows;
use crate::trace::{IntervalTemplate, Trace};

const SEGMENT: usize = 1 << 16;

/// All `(start, score)` pairs whose score reaches the threshold, without hold-off.
pub fn batch_match(stream: &Trace, it: &IntervalTemplate) -> Vec<(usize, u32)> {
    let Some(starts) = start_count(stream, it) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut scores = vec![0; SEGMENT.min(starts)];
    for first in (0..starts).step_by(SEGMENT) {
        scan(stream, it, first, starts, &mut scores, &mut out);
    }
    out
}

/// [`batch_match`] split into independent segments across the rayon pool.
///
/// Each segment reads `span - 1` samples past its last start, so no window is
/// lost at a seam; results come back in start order.
pub fn batch_match_parallel(stream: &Trace, it: &IntervalTemplate) -> Vec<(usize, u32)> {
    let Some(starts) = start_count(stream, it) else {
        return Vec::new();
    };
    let firsts: Vec<usize> = (0..starts).step_by(SEGMENT).collect();
    firsts
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let mut scores = vec![0; SEGMENT.min(starts - first)];
            scan(stream, it, first, starts, &mut scores, &mut out);
            out
        })
        .collect::<Vec<_>>()
        .concat()
}

fn start_count(stream: &Trace, it: &IntervalTemplate) -> Option<usize> {
    (stream.len() >= it.span()).then(|| stream.len() - it.span() + 1)
}

fn scan(
    stream: &Trace,
    it: &IntervalTemplate,
    first: usize,
    starts: usize,
    scores: &mut [u32],
    out: &mut Vec<(usize, u32)>,
) {
    let n = SEGMENT.min(starts - first);
    let scores = &mut scores[..n];
    score_windows(
        &stream.samples()[first..first + n - 1 + it.span()],
        it,
        scores,
    );
    let threshold = it.threshold();
    out.extend(
        scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= threshold)
            .map(|(j, &s)| (first + j, s)),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{scalar_reference_match, EngineConfig};
    use crate::trace::{make_interval_template, Precision, Template};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_zero_matches_every_start() {
        let t = Template::new(vec![1, 2, 3, 4], Precision::DEFAULT).unwrap();
        let it = make_interval_template(&t, 0)
            .unwrap()
            .with_threshold(0)
            .unwrap();
        let s = Trace::new(vec![9; 1000], Precision::DEFAULT).unwrap();
        assert_eq!(batch_match(&s, &it).len(), 997);
    }

    #[test]
    fn equals_reference_without_holdoff_and_parallel_equals_serial() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let n = rng.random_range(8..64);
            let c: Vec<i16> = (0..n).map(|_| rng.random_range(-40..40)).collect();
            let stride = rng.random_range(1..4);
            let t = Template::new(c, Precision::DEFAULT)
                .unwrap()
                .with_stride(stride)
                .unwrap();
            let it = make_interval_template(&t, rng.random_range(0..30)).unwrap();
            let m = it.len() as u32;
            let it = it.with_threshold(rng.random_range(m / 3..=m)).unwrap();
            let len = rng.random_range(100..150_000);
            let s: Vec<i16> = (0..len).map(|_| rng.random_range(-40..40)).collect();
            let s = Trace::new(s, Precision::DEFAULT).unwrap();

            let cfg = EngineConfig::default()
                .with_holdoff(1)
                .with_trigger_duration(1);
            let oracle: Vec<(usize, u32)> = scalar_reference_match(&s, &it, &cfg)
                .unwrap()
                .into_iter()
                .map(|e| (e.start_index, e.score))
                .collect();
            let serial = batch_match(&s, &it);
            assert_eq!(serial, oracle);
            assert_eq!(batch_match_parallel(&s, &it), serial);
        }
    }
}
