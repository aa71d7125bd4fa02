//! Building and calibrating a template from a long recording.
//!
//! The workflow is: find the operations in the recording with a correlation
//! locator, average the located windows into a template, optionally subsample
//! it, then sweep the corridor offset and pick the offset and threshold that best
//! separate operation windows from background windows.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{make_interval_template, IntervalTemplate, Sample, Template, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocatorParams {
    /// Minimum Pearson correlation for a location.
    pub threshold: f64,
    /// Spacing of the coarse correlation scan.
    pub coarse_step: usize,
    /// Coarse peaks below this are ignored; refined peaks between this and
    /// `threshold` become rejection candidates.
    pub candidate_floor: f64,
    /// Relative slack when testing a candidate against the located period.
    pub period_tolerance: f64,
}

impl Default for LocatorParams {
    fn default() -> Self {
        LocatorParams {
            threshold: 0.8,
            coarse_step: 2,
            candidate_floor: 0.3,
            period_tolerance: 0.25,
        }
    }
}

impl LocatorParams {
    fn validate(&self) -> Result<()> {
        if self.coarse_step == 0 {
            return Err(Error::invalid("coarse step must be at least 1"));
        }
        if !(self.candidate_floor <= self.threshold && self.threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "need candidate_floor <= threshold <= 1, got {} and {}",
                self.candidate_floor, self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub correlation: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatedOperations {
    /// Strictly increasing start indices, at least `span` apart.
    pub locations: Vec<usize>,
    /// Correlation of each location with the seed.
    #[serde(default)]
    pub correlations: Vec<f64>,
    pub span: usize,
    #[serde(default)]
    pub rejected: Vec<Rejection>,
}

impl LocatedOperations {
    /// Wraps known locations, e.g. from ground truth.
    pub fn from_locations(mut locations: Vec<usize>, span: usize) -> Result<Self> {
        locations.sort_unstable();
        if locations.windows(2).any(|w| w[1] - w[0] < span) {
            return Err(Error::invalid("locations must be at least one span apart"));
        }
        Ok(LocatedOperations {
            correlations: vec![1.0; locations.len()],
            locations,
            span,
            rejected: Vec::new(),
        })
    }
}

/// Sliding Pearson correlation against a fixed seed, in exact integer moments.
struct SlidingCorrelation<'a> {
    data: &'a [Sample],
    seed: &'a [Sample],
    sum: Vec<i64>,
    sum_sq: Vec<i64>,
    seed_sum: i128,
    seed_var: f64,
}

impl<'a> SlidingCorrelation<'a> {
    fn new(data: &'a [Sample], seed: &'a [Sample]) -> Result<Self> {
        let n = seed.len() as i128;
        let seed_sum: i128 = seed.iter().map(|&s| s as i128).sum();
        let seed_sq: i128 = seed.iter().map(|&s| (s as i128).pow(2)).sum();
        let seed_var = n * seed_sq - seed_sum * seed_sum;
        if seed_var == 0 {
            return Err(Error::UndefinedCorrelation);
        }
        let mut sum = Vec::with_capacity(data.len() + 1);
        let mut sum_sq = Vec::with_capacity(data.len() + 1);
        let (mut a, mut b) = (0i64, 0i64);
        sum.push(0);
        sum_sq.push(0);
        for &s in data {
            a += s as i64;
            b += (s as i64).pow(2);
            sum.push(a);
            sum_sq.push(b);
        }
        Ok(SlidingCorrelation {
            data,
            seed,
            sum,
            sum_sq,
            seed_sum,
            seed_var: seed_var as f64,
        })
    }

    fn last_start(&self) -> usize {
        self.data.len() - self.seed.len()
    }

    /// Correlation of the window at `x`; a flat window counts as 0.
    fn at(&self, x: usize) -> f64 {
        let n = self.seed.len();
        let window = &self.data[x..x + n];
        let dot: i64 = window
            .iter()
            .zip(self.seed)
            .map(|(&a, &b)| a as i64 * b as i64)
            .sum();
        let s = (self.sum[x + n] - self.sum[x]) as i128;
        let ss = (self.sum_sq[x + n] - self.sum_sq[x]) as i128;
        let n = n as i128;
        let var = n * ss - s * s;
        if var == 0 {
            return 0.0;
        }
        let cov = n * dot as i128 - s * self.seed_sum;
        (cov as f64 / (var as f64 * self.seed_var).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Finds occurrences of `seed` in `recording` by normalized cross-correlation.
///
/// A coarse scan at `coarse_step` finds peaks, each is refined at single-sample
/// resolution, and non-maximum suppression keeps the strongest peak within one
/// seed length. Peaks at or above the threshold become locations. Where the median
/// spacing of the locations predicts an operation that was not found, the strongest
/// weaker peak overlapping that slot is reported as rejected.
pub fn locate_operations(
    recording: &Trace,
    seed: &[Sample],
    expected_count: Option<usize>,
    params: &LocatorParams,
) -> Result<LocatedOperations> {
    params.validate()?;
    let span = seed.len();
    if span < 2 {
        return Err(Error::invalid("seed segment needs at least two samples"));
    }
    if span >= recording.len() {
        return Err(Error::invalid(format!(
            "seed of {span} samples is not shorter than the recording ({})",
            recording.len()
        )));
    }
    let corr = SlidingCorrelation::new(recording.samples(), seed)?;
    let last = corr.last_start();
    let step = params.coarse_step;

    let coarse: Vec<(usize, f64)> = (0..=last / step)
        .into_par_iter()
        .map(|k| (k * step, corr.at(k * step)))
        .collect();

    let mut candidates: Vec<(usize, f64)> = (0..coarse.len())
        .into_par_iter()
        .filter(|&k| {
            let r = coarse[k].1;
            r >= params.candidate_floor
                && (k == 0 || coarse[k - 1].1 <= r)
                && coarse.get(k + 1).is_none_or(|next| next.1 < r)
        })
        .map(|k| {
            let centre = coarse[k].0;
            let lo = centre.saturating_sub(step - 1);
            let hi = (centre + step - 1).min(last);
            (lo..=hi)
                .map(|x| (x, corr.at(x)))
                .fold((centre, f64::NEG_INFINITY), |best, c| {
                    if c.1 > best.1 {
                        c
                    } else {
                        best
                    }
                })
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates.dedup_by_key(|c| c.0);

    // Non-maximum suppression, strongest first.
    let mut kept_at = BTreeSet::new();
    let mut kept = Vec::new();
    for (x, r) in candidates {
        let lo = x.saturating_sub(span - 1);
        if kept_at.range(lo..x + span).next().is_none() {
            kept_at.insert(x);
            kept.push((x, r));
        }
    }

    let (mut accepted, weak): (Vec<_>, Vec<_>) =
        kept.into_iter().partition(|&(_, r)| r >= params.threshold);
    let mut rejected = Vec::new();
    if let Some(limit) = expected_count {
        // `accepted` is still ordered strongest first.
        for (x, r) in accepted.drain(limit.min(accepted.len())..) {
            rejected.push(Rejection {
                index: x,
                correlation: r,
                reason: format!("beyond the expected count of {limit}"),
            });
        }
    }
    accepted.sort_by_key(|&(x, _)| x);

    let locations: Vec<usize> = accepted.iter().map(|&(x, _)| x).collect();
    let period = median_spacing(&locations);
    let slack = period.map_or(0.0, |p| params.period_tolerance * p);
    let slots = period.map_or_else(Vec::new, |p| {
        missing_slots(&locations, p, slack, recording.len(), span)
    });
    let mut claimed = vec![false; slots.len()];
    // `weak` is ordered strongest first, so each slot keeps its best candidate.
    for (x, r) in weak {
        if period.is_some() {
            let (xf, w) = (x as f64, span as f64);
            let slot = (0..slots.len())
                .filter(|&k| !claimed[k] && xf < slots[k] + w + slack && xf + w > slots[k] - slack)
                .min_by(|&a, &b| (slots[a] - xf).abs().total_cmp(&(slots[b] - xf).abs()));
            match slot {
                Some(k) => claimed[k] = true,
                None => continue,
            }
        }
        rejected.push(Rejection {
            index: x,
            correlation: r,
            reason: format!(
                "correlation {r:.3} below locator threshold {:.3}",
                params.threshold
            ),
        });
    }
    rejected.sort_by_key(|r| r.index);

    Ok(LocatedOperations {
        correlations: accepted.iter().map(|&(_, r)| r).collect(),
        locations,
        span,
        rejected,
    })
}

/// Starts where the located period predicts an operation that was not located.
fn missing_slots(
    locations: &[usize],
    period: f64,
    slack: f64,
    len: usize,
    span: usize,
) -> Vec<f64> {
    let mut slots = Vec::new();
    let mut s = locations[0] as f64 - period;
    while s >= -slack {
        slots.push(s.max(0.0));
        s -= period;
    }
    for w in locations.windows(2) {
        let gap = (w[1] - w[0]) as f64;
        let k = (gap / period).round().max(1.0) as usize;
        slots.extend((1..k).map(|j| w[0] as f64 + j as f64 * gap / k as f64));
    }
    let mut s = *locations.last().unwrap() as f64 + period;
    while s + (span as f64) <= len as f64 + slack {
        slots.push(s);
        s += period;
    }
    slots
}

fn median_spacing(locations: &[usize]) -> Option<f64> {
    if locations.len() < 2 {
        return None;
    }
    let mut gaps: Vec<usize> = locations.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    Some(gaps[gaps.len() / 2] as f64)
}

fn nearest_distance(sorted: &[usize], x: usize) -> Option<usize> {
    let i = sorted.partition_point(|&l| l < x);
    let after = sorted.get(i).map(|&l| l - x);
    let before = i.checked_sub(1).map(|j| x - sorted[j]);
    match (before, after) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn div_round_half_away(p: i64, q: i64) -> i64 {
    if p >= 0 {
        (2 * p + q) / (2 * q)
    } else {
        -((-2 * p + q) / (2 * q))
    }
}

/// Averages the located windows sample by sample, rounding half away from zero.
pub fn build_template(
    recording: &Trace,
    ops: &LocatedOperations,
    length: usize,
) -> Result<Template> {
    if ops.locations.is_empty() {
        return Err(Error::invalid("no located operations to average"));
    }
    if length == 0 {
        return Err(Error::invalid("template length must be positive"));
    }
    let samples = recording.samples();
    if let Some(&bad) = ops.locations.iter().find(|&&l| l + length > samples.len()) {
        return Err(Error::invalid(format!(
            "window at {bad} of {length} samples runs past the recording ({})",
            samples.len()
        )));
    }
    let mut sums = vec![0i64; length];
    for &loc in &ops.locations {
        for (acc, &s) in sums.iter_mut().zip(&samples[loc..loc + length]) {
            *acc += s as i64;
        }
    }
    let count = ops.locations.len() as i64;
    let averaged = sums
        .into_iter()
        .map(|s| div_round_half_away(s, count) as Sample)
        .collect();
    Template::new(averaged, recording.precision())
}

/// Sets the comparison stride; the underlying samples are kept.
pub fn subsample_template(template: &Template, stride: usize) -> Result<Template> {
    template.clone().with_stride(stride)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    /// Every `background_step`-th window start is sampled for the background set.
    pub background_step: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            background_step: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub chosen_offset: u32,
    pub chosen_threshold: u32,
    /// Lowest score among the located operation windows.
    pub true_score_min: u32,
    /// Highest score among the sampled background windows.
    pub background_score_max: u32,
    /// `true_score_min - background_score_max`.
    pub margin: i64,
    pub true_windows: usize,
    pub background_windows: usize,
    pub compared_positions: usize,
}

impl CalibrationReport {
    pub fn succeeded(&self) -> bool {
        self.margin > 0
            && self.background_score_max < self.chosen_threshold
            && self.chosen_threshold <= self.true_score_min
    }
}

/// Window starts at least one operation span away from every located operation.
fn background_starts(
    len: usize,
    window: usize,
    ops: &LocatedOperations,
    step: usize,
) -> Vec<usize> {
    if len < window {
        return Vec::new();
    }
    (0..=len - window)
        .step_by(step)
        .filter(|&x| nearest_distance(&ops.locations, x).is_none_or(|d| d >= ops.span))
        .collect()
}

/// Per-offset scores of one window, via the histogram of |t - c| over compared positions.
///
/// Recorded samples lie inside the precision range, so saturating the corridor
/// bounds never changes membership and `t` is inside `c ± o` exactly when `|t - c| <= o`.
fn offset_scores(
    window: &[Sample],
    compared: &[i32],
    stride: usize,
    offsets: &RangeInclusive<u32>,
    hist: &mut Vec<u32>,
) {
    let (lo, hi) = (*offsets.start() as usize, *offsets.end() as usize);
    hist.clear();
    hist.resize(hi + 2, 0);
    for (&t, &c) in window.iter().step_by(stride).zip(compared) {
        let dev = (t as i32 - c).unsigned_abs() as usize;
        hist[dev.min(hi + 1)] += 1;
    }
    hist.truncate(hi + 1);
    let mut running = 0;
    for h in hist.iter_mut() {
        running += *h;
        *h = running;
    }
    hist.drain(..lo);
}

/// Sweeps `offsets` and picks the corridor offset and threshold with the widest margin
/// between located operations and background.
///
/// Ties go to the smaller offset. The threshold is the midpoint of the true
/// minimum and background maximum, rounded up.
pub fn calibrate(
    recording: &Trace,
    ops: &LocatedOperations,
    template: &Template,
    offsets: RangeInclusive<u32>,
    options: &CalibrationOptions,
) -> Result<(IntervalTemplate, CalibrationReport)> {
    if ops.locations.is_empty() {
        return Err(Error::invalid("no located operations to calibrate on"));
    }
    if offsets.is_empty() {
        return Err(Error::invalid("offset range is empty"));
    }
    if options.background_step == 0 {
        return Err(Error::invalid("background step must be at least 1"));
    }
    if recording.precision().bits() > template.precision().bits() {
        return Err(Error::invalid(
            "recording precision exceeds the template precision",
        ));
    }
    let samples = recording.samples();
    let stride = template.stride();
    let compared: Vec<i32> = template.compared_samples().map(|c| c as i32).collect();
    let window = (compared.len() - 1) * stride + 1;
    if let Some(&bad) = ops.locations.iter().find(|&&l| l + window > samples.len()) {
        return Err(Error::invalid(format!(
            "operation window at {bad} runs past the recording"
        )));
    }
    let background = background_starts(samples.len(), window, ops, options.background_step);
    if background.is_empty() {
        return Err(Error::NoBackground);
    }

    let width = offsets.clone().count();
    let fold = |starts: &[usize], init: u32, pick: fn(u32, u32) -> u32| -> Vec<u32> {
        starts
            .par_iter()
            .fold(
                || (vec![init; width], Vec::new()),
                |(mut acc, mut hist), &x| {
                    offset_scores(
                        &samples[x..x + window],
                        &compared,
                        stride,
                        &offsets,
                        &mut hist,
                    );
                    for (a, &s) in acc.iter_mut().zip(&hist) {
                        *a = pick(*a, s);
                    }
                    (acc, hist)
                },
            )
            .map(|(acc, _)| acc)
            .reduce(
                || vec![init; width],
                |a, b| a.iter().zip(&b).map(|(&x, &y)| pick(x, y)).collect(),
            )
    };
    let true_min = fold(&ops.locations, u32::MAX, u32::min);
    let background_max = fold(&background, 0, u32::max);

    let (best, margin) = (0..width)
        .map(|k| (k, true_min[k] as i64 - background_max[k] as i64))
        .fold((0, i64::MIN), |best, c| if c.1 > best.1 { c } else { best });
    let chosen_offset = offsets.start() + best as u32;
    let (t, b) = (true_min[best], background_max[best]);
    let mut report = CalibrationReport {
        chosen_offset,
        chosen_threshold: t,
        true_score_min: t,
        background_score_max: b,
        margin,
        true_windows: ops.locations.len(),
        background_windows: background.len(),
        compared_positions: compared.len(),
    };
    if margin <= 0 {
        return Err(Error::CalibrationFailed(Box::new(report)));
    }
    report.chosen_threshold = (t + b).div_ceil(2);
    let it =
        make_interval_template(template, chosen_offset)?.with_threshold(report.chosen_threshold)?;
    Ok((it, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{interval_score, pearson_correlation};
    use crate::trace::Precision;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace(s: Vec<Sample>) -> Trace {
        Trace::new(s, Precision::DEFAULT).unwrap()
    }

    fn wavy(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|j| {
                let env: f64 = rng.random_range(0.3..1.0);
                (1500.0 * env * (j as f64 * 0.6).sin()) as Sample
            })
            .collect()
    }

    fn noisy(len: usize, amp: i16, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-amp..=amp)).collect()
    }

    #[test]
    fn sliding_correlation_matches_pearson() {
        let data = noisy(3000, 800, 1);
        let seed = wavy(100, 2);
        let corr = SlidingCorrelation::new(&data, &seed).unwrap();
        for x in (0..=corr.last_start()).step_by(37) {
            let want = pearson_correlation(&data[x..x + 100], &seed).unwrap();
            assert!((corr.at(x) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn locates_noiseless_embeddings_exactly() {
        let seed = wavy(120, 7);
        let mut s = vec![0; 256 * 300 + 500];
        let positions: Vec<usize> = (0..256).map(|k| 250 + k * 300 + (k * 7) % 23).collect();
        for &p in &positions {
            s[p..p + 120].copy_from_slice(&seed);
        }
        let ops = locate_operations(&trace(s), &seed, None, &LocatorParams::default()).unwrap();
        assert_eq!(ops.locations, positions);
        assert!(ops.rejected.is_empty());
        assert!(ops.correlations.iter().all(|&r| r > 0.999));
    }

    #[test]
    fn pure_noise_has_no_locations() {
        let ops = locate_operations(
            &trace(noisy(20_000, 300, 3)),
            &wavy(200, 4),
            None,
            &LocatorParams::default(),
        )
        .unwrap();
        assert!(ops.locations.is_empty());
    }

    #[test]
    fn locator_errors() {
        let p = LocatorParams::default();
        assert!(matches!(
            locate_operations(&trace(noisy(1000, 10, 1)), &[4; 50], None, &p),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(
            locate_operations(&trace(noisy(100, 10, 1)), &noisy(100, 10, 2), None, &p).is_err()
        );
    }

    #[test]
    fn expected_count_caps_locations() {
        let seed = wavy(60, 9);
        let mut s = vec![0; 5000];
        for p in [300, 1300, 2300, 3300] {
            s[p..p + 60].copy_from_slice(&seed);
        }
        let ops = locate_operations(&trace(s), &seed, Some(3), &LocatorParams::default()).unwrap();
        assert_eq!(ops.locations.len(), 3);
        assert_eq!(ops.rejected.len(), 1);
    }

    #[test]
    fn deformed_operations_are_rejected() {
        let scenario = crate::synth::Scenario {
            operations: 20,
            deformed: 2,
            pattern_length: 400,
            gap_min: 500,
            gap_max: 700,
            ..Default::default()
        };
        let (rec, truth) = scenario.document().unwrap().generate().unwrap();
        let good: Vec<usize> = truth
            .iter()
            .filter(|g| g.well_formed)
            .map(|g| g.position)
            .collect();
        let seed = &rec.samples()[good[0]..good[0] + 400];
        let ops = locate_operations(&rec, seed, None, &LocatorParams::default()).unwrap();
        assert_eq!(ops.locations, good);
        assert_eq!(ops.rejected.len(), 2);
        for (rej, g) in ops.rejected.iter().zip(&truth) {
            assert!(rej.index.abs_diff(g.position) < 400, "{rej:?} {g:?}");
        }
    }

    #[test]
    fn build_template_means() {
        let rec = trace(vec![0, 10, 2, 10, 7, 7]);
        let ops = LocatedOperations::from_locations(vec![0, 2], 2).unwrap();
        assert_eq!(build_template(&rec, &ops, 2).unwrap().samples(), &[1, 10]);
        let rec = trace(vec![1, 2, -1, -2]);
        let ops = LocatedOperations::from_locations(vec![0, 2], 2).unwrap();
        // 0/2 and 0/2; then halves round away from zero.
        assert_eq!(build_template(&rec, &ops, 2).unwrap().samples(), &[0, 0]);
        let rec = trace(vec![1, -1, 0, -2]);
        assert_eq!(build_template(&rec, &ops, 2).unwrap().samples(), &[1, -2]);
    }

    #[test]
    fn averaging_shrinks_noise_by_root_count() {
        use rand_distr::{Distribution, Normal};
        let truth = wavy(500, 17);
        let sigma = 40.0;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut s = Vec::new();
        for _ in 0..254 {
            s.extend(
                truth
                    .iter()
                    .map(|&v| (v as f64 + noise.sample(&mut rng)).round() as Sample),
            );
        }
        let rec = trace(s);
        let ops =
            LocatedOperations::from_locations((0..254).map(|k| k * 500).collect(), 500).unwrap();
        let t = build_template(&rec, &ops, 500).unwrap();
        let mse = t
            .samples()
            .iter()
            .zip(&truth)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            / 500.0;
        // Noise of the mean plus the two rounding steps.
        let expected = sigma * sigma / 254.0 + 2.0 / 12.0;
        assert!(
            (mse / expected - 1.0).abs() < 0.2,
            "mse {mse} vs {expected}"
        );
    }

    proptest::proptest! {
        #[test]
        fn template_lies_within_window_range(
            windows in proptest::collection::vec(proptest::collection::vec(-8192i16..=8191, 12), 1..8)
        ) {
            let s: Vec<Sample> = windows.concat();
            let ops = LocatedOperations::from_locations((0..windows.len()).map(|k| k * 12).collect(), 12).unwrap();
            let t = build_template(&trace(s), &ops, 12).unwrap();
            proptest::prop_assert_eq!(t.len(), 12);
            for i in 0..12 {
                let lo = windows.iter().map(|w| w[i]).min().unwrap();
                let hi = windows.iter().map(|w| w[i]).max().unwrap();
                proptest::prop_assert!(lo <= t.samples()[i] && t.samples()[i] <= hi);
            }
        }
    }

    #[test]
    fn build_template_errors() {
        let rec = trace(vec![0; 10]);
        let empty = LocatedOperations::from_locations(vec![], 3).unwrap();
        assert!(build_template(&rec, &empty, 3).is_err());
        let ops = LocatedOperations::from_locations(vec![8], 3).unwrap();
        assert!(build_template(&rec, &ops, 3).is_err());
    }

    #[test]
    fn subsample_counts() {
        let t = Template::new((0..10).collect(), Precision::DEFAULT).unwrap();
        let s = subsample_template(&t, 3).unwrap();
        assert_eq!(s.compared_len(), 4);
        assert_eq!(s.compared_samples().collect::<Vec<_>>(), vec![0, 3, 6, 9]);
        assert_eq!(subsample_template(&t, 1).unwrap(), t);
        assert!(subsample_template(&t, 0).is_err());
    }

    #[test]
    fn offset_histogram_matches_interval_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = Precision::DEFAULT;
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let stride = rng.random_range(1..5);
            let c: Vec<Sample> = (0..n).map(|_| rng.random_range(-8192..=8191)).collect();
            let t = Template::new(c, p).unwrap().with_stride(stride).unwrap();
            let w: Vec<Sample> = (0..n).map(|_| rng.random_range(-8192..=8191)).collect();
            let compared: Vec<i32> = t.compared_samples().map(|c| c as i32).collect();
            let lo = rng.random_range(0..3000);
            let offsets = lo..=lo + rng.random_range(0..50);
            let mut hist = Vec::new();
            offset_scores(&w, &compared, stride, &offsets, &mut hist);
            for (k, o) in offsets.clone().enumerate() {
                let it = make_interval_template(&t, o).unwrap();
                assert_eq!(hist[k], interval_score(&w, &it).unwrap());
            }
        }
    }

    fn calibration_fixture(noise: i16) -> (Trace, LocatedOperations, Template) {
        let pattern = wavy(64, 11);
        let mut s = noisy(100_000, 10, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let locations: Vec<usize> = (0..254).map(|k| 200 + k * 390).collect();
        for &p in &locations {
            for (j, &v) in pattern.iter().enumerate() {
                s[p + j] = v + rng.random_range(-noise..=noise);
            }
        }
        let rec = trace(s);
        let ops = LocatedOperations::from_locations(locations, 64).unwrap();
        let tpl = build_template(&rec, &ops, 64).unwrap();
        (rec, ops, tpl)
    }

    #[test]
    fn noiseless_calibration_picks_exact_corridor() {
        let (rec, ops, tpl) = calibration_fixture(0);
        let (it, report) =
            calibrate(&rec, &ops, &tpl, 0..=20, &CalibrationOptions::default()).unwrap();
        assert_eq!(report.chosen_offset, 0);
        assert_eq!(report.true_score_min, 64);
        assert!(report.succeeded());
        assert_eq!(it.threshold(), report.chosen_threshold);
        assert_eq!(report.margin, 64 - report.background_score_max as i64);
    }

    #[test]
    fn noisy_calibration_covers_noise() {
        let (rec, ops, tpl) = calibration_fixture(5);
        let (it, report) =
            calibrate(&rec, &ops, &tpl, 0..=20, &CalibrationOptions::default()).unwrap();
        assert!(report.chosen_offset >= 5, "{report:?}");
        for &loc in &ops.locations {
            assert!(interval_score(&rec.samples()[loc..], &it).unwrap() >= it.threshold());
        }
        assert!(report.background_score_max < report.chosen_threshold);
    }

    #[test]
    fn indistinguishable_background_fails() {
        let pattern = wavy(50, 3);
        let s: Vec<Sample> = pattern.iter().copied().cycle().take(50 * 40).collect();
        let rec = trace(s);
        let ops = LocatedOperations::from_locations(vec![0, 500, 1000], 50).unwrap();
        let tpl = build_template(&rec, &ops, 50).unwrap();
        let err = calibrate(
            &rec,
            &ops,
            &tpl,
            0..=10,
            &CalibrationOptions { background_step: 1 },
        )
        .unwrap_err();
        match err {
            Error::CalibrationFailed(report) => assert!(report.margin <= 0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn calibration_input_errors() {
        let (rec, ops, tpl) = calibration_fixture(0);
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 5..=4;
        assert!(calibrate(&rec, &ops, &tpl, empty, &CalibrationOptions::default()).is_err());
        let none = LocatedOperations::from_locations(vec![], 64).unwrap();
        assert!(calibrate(&rec, &none, &tpl, 0..=3, &CalibrationOptions::default()).is_err());
        let packed =
            LocatedOperations::from_locations((0..1562).map(|k| k * 64).collect(), 64).unwrap();
        assert!(matches!(
            calibrate(&rec, &packed, &tpl, 0..=3, &CalibrationOptions::default()),
            Err(Error::NoBackground)
        ));
    }
}
