//! Samples, traces and templates.
//!
//! Samples live in an `i16` container whatever the configured ADC precision;
//! the precision is enforced by range checks when a trace or template is built.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A signed ADC code.
pub type Sample = i16;

/// ADC resolution in bits, 1..=16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Precision(u8);

impl Precision {
    pub const DEFAULT: Precision = Precision(14);

    pub fn new(bits: u8) -> Result<Self> {
        if (1..=16).contains(&bits) {
            Ok(Precision(bits))
        } else {
            Err(Error::invalid(format!(
                "precision must be 1..=16 bits, got {bits}"
            )))
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn min(self) -> i32 {
        -(1i32 << (self.0 - 1))
    }

    pub fn max(self) -> i32 {
        (1i32 << (self.0 - 1)) - 1
    }

    pub fn contains(self, value: i32) -> bool {
        (self.min()..=self.max()).contains(&value)
    }

    /// Saturates `value` into the representable range.
    pub fn clamp(self, value: i64) -> Sample {
        value.clamp(self.min() as i64, self.max() as i64) as Sample
    }

    pub(crate) fn check(self, samples: &[Sample]) -> Result<()> {
        match samples.iter().position(|&s| !self.contains(s as i32)) {
            None => Ok(()),
            Some(i) => Err(Error::invalid(format!(
                "sample {} at index {i} outside the {}-bit range [{}, {}]",
                samples[i],
                self.0,
                self.min(),
                self.max()
            ))),
        }
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::DEFAULT
    }
}

impl TryFrom<u8> for Precision {
    type Error = Error;

    fn try_from(bits: u8) -> Result<Self> {
        Precision::new(bits)
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> u8 {
        p.0
    }
}

/// A finite recording or stream excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<Sample>,
    precision: Precision,
    pub sample_rate_hz: f64,
    pub label: String,
}

impl Trace {
    pub fn new(samples: Vec<Sample>, precision: Precision) -> Result<Self> {
        precision.check(&samples)?;
        Ok(Trace {
            samples,
            precision,
            sample_rate_hz: 10e9,
            label: String::new(),
        })
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Self {
        self.sample_rate_hz = hz;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

/// A reference waveform of `n` samples.
///
/// `stride` selects which samples take part in a comparison: positions
/// `0, stride, 2·stride, …`. `positional_buffer` counts samples of the operation
/// that precede the template and must stay buffered for output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    samples: Vec<Sample>,
    stride: usize,
    positional_buffer: usize,
    precision: Precision,
}

impl Template {
    pub fn new(samples: Vec<Sample>, precision: Precision) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("template must hold at least one sample"));
        }
        precision.check(&samples)?;
        Ok(Template {
            samples,
            stride: 1,
            positional_buffer: 0,
            precision,
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        self.stride = stride;
        Ok(self)
    }

    pub fn with_positional_buffer(mut self, samples: usize) -> Self {
        self.positional_buffer = samples;
        self
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn positional_buffer(&self) -> usize {
        self.positional_buffer
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Number of compared positions, `ceil(n / stride)`.
    pub fn compared_len(&self) -> usize {
        self.samples.len().div_ceil(self.stride)
    }

    pub fn compared_samples(&self) -> impl Iterator<Item = Sample> + '_ {
        self.samples.iter().step_by(self.stride).copied()
    }
}

/// Precomputed per-position corridor bounds and the match threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalTemplate {
    upper: Vec<Sample>,
    lower: Vec<Sample>,
    threshold: u32,
    source_stride: usize,
    template_len: usize,
}

impl IntervalTemplate {
    /// Builds an interval template from raw bounds.
    ///
    /// `template_len` is the length `n` of the template the bounds came from; it
    /// sizes the shift register and must cover the compared span.
    pub fn new(
        upper: Vec<Sample>,
        lower: Vec<Sample>,
        threshold: u32,
        source_stride: usize,
        template_len: usize,
    ) -> Result<Self> {
        if upper.is_empty() {
            return Err(Error::invalid(
                "interval template needs at least one position",
            ));
        }
        if upper.len() != lower.len() {
            return Err(Error::invalid(format!(
                "upper has {} bounds but lower has {}",
                upper.len(),
                lower.len()
            )));
        }
        if source_stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if let Some(i) = upper.iter().zip(&lower).position(|(u, l)| u < l) {
            return Err(Error::invalid(format!(
                "upper bound {} below lower bound {} at position {i}",
                upper[i], lower[i]
            )));
        }
        let span = (upper.len() - 1) * source_stride + 1;
        if template_len < span {
            return Err(Error::invalid(format!(
                "template length {template_len} shorter than the compared span {span}"
            )));
        }
        let it = IntervalTemplate {
            upper,
            lower,
            threshold: 0,
            source_stride,
            template_len,
        };
        it.with_threshold(threshold)
    }

    /// Replaces the threshold; it must not exceed the number of compared positions.
    pub fn with_threshold(mut self, threshold: u32) -> Result<Self> {
        if threshold as usize > self.upper.len() {
            return Err(Error::invalid(format!(
                "threshold {threshold} exceeds the {} compared positions",
                self.upper.len()
            )));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn upper(&self) -> &[Sample] {
        &self.upper
    }

    pub fn lower(&self) -> &[Sample] {
        &self.lower
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn stride(&self) -> usize {
        self.source_stride
    }

    pub fn template_len(&self) -> usize {
        self.template_len
    }

    /// Number of compared positions `m`.
    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Samples covered by one window, `(m - 1) * stride + 1`.
    pub fn span(&self) -> usize {
        (self.upper.len() - 1) * self.source_stride + 1
    }
}

/// Derives corridor bounds `c_i ± offset` for every compared template position.
///
/// Bounds saturate at the template's precision range. The threshold starts at
/// `m`; calibration lowers it.
pub fn make_interval_template(template: &Template, offset: u32) -> Result<IntervalTemplate> {
    let p = template.precision();
    let (upper, lower) = template
        .compared_samples()
        .map(|c| {
            let c = c as i64;
            (p.clamp(c + offset as i64), p.clamp(c - offset as i64))
        })
        .unzip::<_, _, Vec<_>, Vec<_>>();
    let m = upper.len() as u32;
    IntervalTemplate::new(upper, lower, m, template.stride(), template.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tpl(samples: &[Sample]) -> Template {
        Template::new(samples.to_vec(), Precision::DEFAULT).unwrap()
    }

    #[test]
    fn precision_ranges() {
        let p = Precision::DEFAULT;
        assert_eq!((p.min(), p.max()), (-8192, 8191));
        let p16 = Precision::new(16).unwrap();
        assert_eq!((p16.min(), p16.max()), (i16::MIN as i32, i16::MAX as i32));
        assert!(Precision::new(0).is_err());
        assert!(Precision::new(17).is_err());
    }

    #[test]
    fn trace_rejects_out_of_range() {
        assert!(Trace::new(vec![0, 9000], Precision::DEFAULT).is_err());
        assert!(Trace::new(vec![-8192, 8191], Precision::DEFAULT).is_ok());
    }

    #[test]
    fn interval_bounds() {
        let it = make_interval_template(&tpl(&[0, 100, -100]), 10).unwrap();
        assert_eq!(it.upper(), &[10, 110, -90]);
        assert_eq!(it.lower(), &[-10, 90, -110]);
        assert_eq!(it.threshold(), 3);
    }

    #[test]
    fn interval_bounds_saturate() {
        let it = make_interval_template(&tpl(&[8190]), 10).unwrap();
        assert_eq!(it.upper(), &[8191]);
        assert_eq!(it.lower(), &[8180]);
        let it = make_interval_template(&tpl(&[-8190]), 10).unwrap();
        assert_eq!(it.lower(), &[-8192]);
    }

    #[test]
    fn stride_four_of_2800() {
        let t = tpl(&vec![1; 2800]).with_stride(4).unwrap();
        let it = make_interval_template(&t, 3).unwrap();
        assert_eq!(it.len(), 700);
        assert_eq!(it.span(), 2797);
        assert_eq!(it.template_len(), 2800);
    }

    #[test]
    fn empty_template_rejected() {
        assert!(Template::new(vec![], Precision::DEFAULT).is_err());
        assert!(tpl(&[1]).with_stride(0).is_err());
    }

    #[test]
    fn threshold_above_m_rejected() {
        let it = make_interval_template(&tpl(&[1, 2, 3]), 0).unwrap();
        assert!(it.clone().with_threshold(4).is_err());
        assert!(it.with_threshold(3).is_ok());
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(IntervalTemplate::new(vec![0], vec![1], 1, 1, 1).is_err());
        assert!(IntervalTemplate::new(vec![0, 1], vec![0], 1, 1, 2).is_err());
    }

    fn template_strategy() -> impl Strategy<Value = Template> {
        (prop::collection::vec(-8192i16..=8191, 1..200), 1usize..6).prop_map(|(s, stride)| {
            Template::new(s, Precision::DEFAULT)
                .unwrap()
                .with_stride(stride)
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn zero_offset_collapses_bounds(t in template_strategy()) {
            let it = make_interval_template(&t, 0).unwrap();
            for (i, c) in t.compared_samples().enumerate() {
                prop_assert_eq!(it.upper()[i], c);
                prop_assert_eq!(it.lower()[i], c);
            }
        }

        #[test]
        fn compared_len_is_ceil(t in template_strategy(), off in 0u32..500) {
            let it = make_interval_template(&t, off).unwrap();
            prop_assert_eq!(it.len(), t.len().div_ceil(t.stride()));
        }

        #[test]
        fn wider_offset_widens_bounds(t in template_strategy(), a in 0u32..2000, b in 0u32..2000) {
            let (a, b) = (a.min(b), a.max(b));
            let ia = make_interval_template(&t, a).unwrap();
            let ib = make_interval_template(&t, b).unwrap();
            for i in 0..ia.len() {
                prop_assert!(ia.upper()[i] <= ib.upper()[i]);
                prop_assert!(ia.lower()[i] >= ib.lower()[i]);
            }
        }
    }
}
