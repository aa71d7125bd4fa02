//! Reference similarity measures: Pearson correlation, SAD and interval matching.
//!
//! These run offline (calibration, localization, oracles). Only interval matching
//! has a real-time counterpart, in [`crate::engine`].

use crate::error::{Error, Result};
use crate::trace::{IntervalTemplate, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimilarityScore {
    Pearson(f64),
    Sad(u64),
    Interval(u32),
}

impl SimilarityScore {
    pub fn kind(&self) -> &'static str {
        match self {
            SimilarityScore::Pearson(_) => "pearson",
            SimilarityScore::Sad(_) => "sad",
            SimilarityScore::Interval(_) => "interval",
        }
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Pearson correlation coefficient, two-pass (means first, then moments).
///
/// The result is clamped to `[-1, 1]`. Constant input has no defined
/// correlation and is reported as [`Error::UndefinedCorrelation`].
pub fn pearson_correlation<T: Copy + Into<f64>>(t: &[T], c: &[T]) -> Result<f64> {
    same_len(t.len(), c.len())?;
    if t.len() < 2 {
        return Err(Error::invalid("correlation needs at least two samples"));
    }
    let n = t.len() as f64;
    let t_mean = t.iter().map(|&x| x.into()).sum::<f64>() / n;
    let c_mean = c.iter().map(|&x| x.into()).sum::<f64>() / n;
    let (mut cov, mut t_var, mut c_var) = (0.0, 0.0, 0.0);
    for (&a, &b) in t.iter().zip(c) {
        let da = a.into() - t_mean;
        let db = b.into() - c_mean;
        cov += da * db;
        t_var += da * da;
        c_var += db * db;
    }
    if t_var == 0.0 || c_var == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((cov / (t_var * c_var).sqrt()).clamp(-1.0, 1.0))
}

/// Sum of absolute differences, accumulated in 64 bits.
pub fn sad<T: Copy + Into<i64>>(t: &[T], c: &[T]) -> Result<u64> {
    same_len(t.len(), c.len())?;
    Ok(t.iter()
        .zip(c)
        .map(|(&a, &b)| (a.into() - b.into()).unsigned_abs())
        .sum())
}

/// 1 if `lower <= sample <= upper`, else 0. Both ends are inclusive.
#[inline]
pub fn interval_indicator(sample: Sample, upper: Sample, lower: Sample) -> u32 {
    (lower <= sample && sample <= upper) as u32
}

/// Counts compared positions whose sample lies inside the corridor.
///
/// `t` must cover the template span; samples at `0, stride, 2·stride, …` are compared.
pub fn interval_score(t: &[Sample], it: &IntervalTemplate) -> Result<u32> {
    if t.len() < it.span() {
        return Err(Error::invalid(format!(
            "segment of {} samples shorter than the template span {}",
            t.len(),
            it.span()
        )));
    }
    Ok(interval_score_unchecked(t, it))
}

#[inline]
pub(crate) fn interval_score_unchecked(t: &[Sample], it: &IntervalTemplate) -> u32 {
    t.iter()
        .step_by(it.stride())
        .zip(it.upper().iter().zip(it.lower()))
        .map(|(&s, (&u, &l))| interval_indicator(s, u, l))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{make_interval_template, Precision, Template};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact-integer Pearson: n·Σxy − ΣxΣy over the product of the variance numerators.
    fn pearson_oracle(t: &[i16], c: &[i16]) -> f64 {
        let n = t.len() as i128;
        let sx: i128 = t.iter().map(|&x| x as i128).sum();
        let sy: i128 = c.iter().map(|&x| x as i128).sum();
        let sxy: i128 = t.iter().zip(c).map(|(&x, &y)| x as i128 * y as i128).sum();
        let sxx: i128 = t.iter().map(|&x| x as i128 * x as i128).sum();
        let syy: i128 = c.iter().map(|&x| x as i128 * x as i128).sum();
        let cov = n * sxy - sx * sy;
        let vx = n * sxx - sx * sx;
        let vy = n * syy - sy * sy;
        cov as f64 / ((vx as f64).sqrt() * (vy as f64).sqrt())
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_correlation(&[1i16, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(
            pearson_correlation(&[1i16, 2, 3], &[3, 2, 1]).unwrap(),
            -1.0
        );
        assert_eq!(
            pearson_correlation(&[1i16, 2, 3, 4], &[11, 12, 13, 14]).unwrap(),
            1.0
        );
    }

    #[test]
    fn pearson_matches_exact_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t: Vec<i16> = (0..64).map(|_| rng.random_range(-8192..=8191)).collect();
            let c: Vec<i16> = (0..64).map(|_| rng.random_range(-8192..=8191)).collect();
            let r = pearson_correlation(&t, &c).unwrap();
            assert!((r - pearson_oracle(&t, &c)).abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson_correlation(&[5i16, 5, 5], &[1, 2, 3]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(matches!(
            pearson_correlation(&[1i16, 2, 3], &[1, 2]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sad_examples() {
        assert_eq!(sad(&[0i16, 0], &[3, -4]).unwrap(), 7);
        assert_eq!(sad(&[5i16, -7, 9], &[5, -7, 9]).unwrap(), 0);
        assert!(sad(&[0i16], &[1, 2]).is_err());
    }

    #[test]
    fn sad_worst_case_does_not_overflow() {
        let t = vec![-8192i16; 1500];
        let c = vec![8192i16; 1500];
        let oracle: i128 = t
            .iter()
            .zip(&c)
            .map(|(&a, &b)| (a as i128 - b as i128).abs())
            .sum();
        assert_eq!(oracle, 24_576_000);
        assert_eq!(sad(&t, &c).unwrap() as i128, oracle);

        let t = vec![i16::MIN; 100_000];
        let c = vec![i16::MAX; 100_000];
        assert_eq!(sad(&t, &c).unwrap(), 65_535 * 100_000);
    }

    #[test]
    fn indicator_is_inclusive() {
        assert_eq!(interval_indicator(5, 10, 0), 1);
        assert_eq!(interval_indicator(10, 10, 0), 1);
        assert_eq!(interval_indicator(0, 10, 0), 1);
        assert_eq!(interval_indicator(11, 10, 0), 0);
        assert_eq!(interval_indicator(-1, 10, 0), 0);
    }

    fn it_from(samples: &[i16], stride: usize, offset: u32) -> IntervalTemplate {
        let t = Template::new(samples.to_vec(), Precision::DEFAULT)
            .unwrap()
            .with_stride(stride)
            .unwrap();
        make_interval_template(&t, offset).unwrap()
    }

    #[test]
    fn interval_score_examples() {
        let c = [3i16, -2, 7, 100, -50];
        assert_eq!(interval_score(&c, &it_from(&c, 1, 0)).unwrap(), 5);
        assert_eq!(interval_score(&c, &it_from(&c, 1, 9)).unwrap(), 5);
        let shifted: Vec<i16> = c.iter().map(|x| x + 1).collect();
        assert_eq!(interval_score(&shifted, &it_from(&c, 1, 0)).unwrap(), 0);
        assert!(interval_score(&c[..4], &it_from(&c, 1, 0)).is_err());
    }

    #[test]
    fn interval_score_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for stride in [1usize, 2, 3, 4] {
            let n = 128 * stride;
            let c: Vec<i16> = (0..n).map(|_| rng.random_range(-500..=500)).collect();
            let t: Vec<i16> = (0..n).map(|_| rng.random_range(-500..=500)).collect();
            let it = it_from(&c, stride, rng.random_range(0..300));
            assert_eq!(it.len(), 128);
            let mut count = 0;
            for i in 0..it.len() {
                let s = t[i * stride];
                if it.lower()[i] <= s && s <= it.upper()[i] {
                    count += 1;
                }
            }
            assert_eq!(interval_score(&t, &it).unwrap(), count);
        }
    }

    proptest! {
        #[test]
        fn interval_monotone_in_offset(
            pair in prop::collection::vec((-8192i16..=8191, -8192i16..=8191), 1..100),
            a in 0u32..3000, b in 0u32..3000,
        ) {
            let (t, c): (Vec<i16>, Vec<i16>) = pair.into_iter().unzip();
            let (a, b) = (a.min(b), a.max(b));
            let sa = interval_score(&t, &it_from(&c, 1, a)).unwrap();
            let sb = interval_score(&t, &it_from(&c, 1, b)).unwrap();
            prop_assert!(sa <= sb);
            prop_assert!(sb as usize <= c.len());
        }

        #[test]
        fn joint_translation_invariance(
            pair in prop::collection::vec((-4000i16..=4000, -4000i16..=4000), 2..100),
            delta in -4000i16..=4000, off in 0u32..200,
        ) {
            let (t, c): (Vec<i16>, Vec<i16>) = pair.into_iter().unzip();
            let t2: Vec<i16> = t.iter().map(|x| x + delta).collect();
            let c2: Vec<i16> = c.iter().map(|x| x + delta).collect();
            prop_assert_eq!(sad(&t, &c).unwrap(), sad(&t2, &c2).unwrap());
            prop_assert_eq!(
                interval_score(&t, &it_from(&c, 1, off)).unwrap(),
                interval_score(&t2, &it_from(&c2, 1, off)).unwrap()
            );
            if let (Ok(r1), Ok(r2)) = (pearson_correlation(&t, &c), pearson_correlation(&t2, &c2)) {
                prop_assert!((r1 - r2).abs() < 1e-9);
            }
        }

        #[test]
        fn pearson_affine_invariance(
            pair in prop::collection::vec((-8192i16..=8191, -8192i16..=8191), 2..200),
            alpha in 0.001f64..1000.0, beta in -1e5f64..1e5,
        ) {
            let (t, c): (Vec<i16>, Vec<i16>) = pair.into_iter().unzip();
            let tf: Vec<f64> = t.iter().map(|&x| x as f64).collect();
            let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
            let scaled: Vec<f64> = cf.iter().map(|x| alpha * x + beta).collect();
            if let Ok(r) = pearson_correlation(&tf, &cf) {
                let r2 = pearson_correlation(&tf, &scaled).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn sad_symmetric_and_zero_iff_equal(
            pair in prop::collection::vec((-8192i16..=8191, -8192i16..=8191), 0..100),
        ) {
            let (t, c): (Vec<i16>, Vec<i16>) = pair.into_iter().unzip();
            let d = sad(&t, &c).unwrap();
            prop_assert_eq!(d, sad(&c, &t).unwrap());
            prop_assert_eq!(d == 0, t == c);
        }
    }
}
