//! Lane scoring shared by the cycle model and the batch matcher.
//!
//! Scores are accumulated position-major: for each compared template position the
//! inner loop walks a run of consecutive window starts, which keeps the stream
//! reads contiguous for any stride and lets the loop vectorize.

use crate::trace::{IntervalTemplate, Sample};

const CHUNK: usize = 512;
// u16 lane counters are flushed before they can wrap.
const FLUSH_EVERY: usize = u16::MAX as usize;

/// Writes into `out[j]` the interval score of the window starting at `data[j]`.
///
/// `data` must hold at least `out.len() - 1 + it.span()` samples.
pub(crate) fn score_windows(data: &[Sample], it: &IntervalTemplate, out: &mut [u32]) {
    if out.is_empty() {
        return;
    }
    assert!(
        data.len() + 1 >= out.len() + it.span(),
        "window data too short"
    );
    let stride = it.stride();
    let mut acc = [0u16; CHUNK];
    for (ci, out_chunk) in out.chunks_mut(CHUNK).enumerate() {
        let base = ci * CHUNK;
        let len = out_chunk.len();
        let acc = &mut acc[..len];
        acc.fill(0);
        out_chunk.fill(0);
        for (pos, (&hi, &lo)) in it.upper().iter().zip(it.lower()).enumerate() {
            // lo <= s <= hi  <=>  (s - lo) mod 2^16 <= hi - lo
            let lo = lo as u16;
            let range = (hi as u16).wrapping_sub(lo);
            let from = base + pos * stride;
            for (a, &s) in acc.iter_mut().zip(&data[from..from + len]) {
                *a = a.wrapping_add(((s as u16).wrapping_sub(lo) <= range) as u16);
            }
            if (pos + 1) % FLUSH_EVERY == 0 {
                flush(acc, out_chunk);
            }
        }
        flush(acc, out_chunk);
    }
}

fn flush(acc: &mut [u16], out: &mut [u32]) {
    for (o, a) in out.iter_mut().zip(acc.iter_mut()) {
        *o += *a as u32;
        *a = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::interval_score;
    use crate::trace::{make_interval_template, Precision, Template};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_interval_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..60 {
            let p = Precision::new(if case % 3 == 0 { 16 } else { 14 }).unwrap();
            let n = rng.random_range(1..300);
            let stride = rng.random_range(1..5);
            let c: Vec<i16> = (0..n)
                .map(|_| rng.random_range(p.min()..=p.max()) as i16)
                .collect();
            let t = Template::new(c, p).unwrap().with_stride(stride).unwrap();
            let it = make_interval_template(&t, rng.random_range(0..20000)).unwrap();
            let starts = rng.random_range(1..1500);
            let data: Vec<i16> = (0..starts - 1 + it.span())
                .map(|_| rng.random_range(p.min()..=p.max()) as i16)
                .collect();
            let mut out = vec![0; starts];
            score_windows(&data, &it, &mut out);
            for (j, &s) in out.iter().enumerate() {
                assert_eq!(
                    s,
                    interval_score(&data[j..], &it).unwrap(),
                    "case {case} start {j}"
                );
            }
        }
    }

    #[test]
    fn counts_past_u16_range() {
        let n = 70_000;
        let t = Template::new(vec![5; n], Precision::DEFAULT).unwrap();
        let it = make_interval_template(&t, 0).unwrap();
        let data = vec![5i16; n + 1];
        let mut out = vec![0; 2];
        score_windows(&data, &it, &mut out);
        assert_eq!(out, vec![n as u32; 2]);
    }
}
