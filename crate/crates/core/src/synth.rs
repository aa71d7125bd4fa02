//! Deterministic synthetic side-channel recordings.
//!
//! Every sample is a pure function of `(seed, index)`: randomness comes from a
//! ChaCha stream positioned at a fixed word offset per sample, so a trace is
//! identical however its generation is partitioned.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Precision, Sample, Template, Trace};

// ChaCha words reserved per sample and stream.
const WORDS_PER_SAMPLE: u128 = 16;
const BACKGROUND_STREAM: u64 = 0;
const EMBEDDING_STREAM: u64 = 1;
const DEFORM_STREAM: u64 = 2;
const PARTITION: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Integer uniform on `[-amplitude, amplitude]`.
    Uniform,
    /// Rounded normal with standard deviation `amplitude`.
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default)]
    pub amplitude: u32,
}

/// Exact rational gain, written `"num/den"` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scale {
    pub num: i64,
    pub den: i64,
}

impl Scale {
    pub const ONE: Scale = Scale { num: 1, den: 1 };

    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den <= 0 {
            return Err(Error::invalid(format!(
                "scale denominator must be positive, got {den}"
            )));
        }
        Ok(Scale { num, den })
    }

    /// `value * num / den`, rounded half away from zero.
    fn apply(self, value: i64) -> i64 {
        let p = value * self.num;
        let q = self.den;
        if p >= 0 {
            (2 * p + q) / (2 * q)
        } else {
            -((-2 * p + q) / (2 * q))
        }
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale::ONE
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("scale must look like `3/2` or `2`, got {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => Scale::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => Scale::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl TryFrom<String> for Scale {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scale> for String {
    fn from(s: Scale) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embedding {
    pub pattern_id: String,
    pub position: usize,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub vertical_offset: i32,
    #[serde(default)]
    pub noise_amplitude: u32,
    /// Leading pattern samples replaced by unrelated values of the same spread.
    #[serde(default)]
    pub deform_prefix: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub length: usize,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub embeddings: Vec<Embedding>,
}

fn default_sample_rate() -> f64 {
    10e9
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub position: usize,
    pub pattern_id: String,
    pub well_formed: bool,
}

struct Placed<'a> {
    emb: &'a Embedding,
    pattern: &'a [Sample],
    // Deformation draws uniformly from [lo, hi], matching the pattern's mean and variance.
    deform_lo: i64,
    deform_hi: i64,
}

fn noise(kind: NoiseKind, amplitude: u32, rng: &mut ChaCha8Rng) -> i64 {
    if amplitude == 0 {
        return 0;
    }
    match kind {
        NoiseKind::Uniform => rng.random_range(-(amplitude as i64)..=amplitude as i64),
        NoiseKind::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            (z * amplitude as f64).round() as i64
        }
    }
}

struct Streams {
    background: ChaCha8Rng,
    embedding: ChaCha8Rng,
    deform: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Streams {
            background: stream(BACKGROUND_STREAM),
            embedding: stream(EMBEDDING_STREAM),
            deform: stream(DEFORM_STREAM),
        }
    }
}

fn at(rng: &mut ChaCha8Rng, index: usize) -> &mut ChaCha8Rng {
    rng.set_word_pos(index as u128 * WORDS_PER_SAMPLE);
    rng
}

fn place<'a>(
    spec: &'a SynthSpec,
    patterns: &'a BTreeMap<String, Template>,
) -> Result<Vec<Placed<'a>>> {
    let mut placed = Vec::with_capacity(spec.embeddings.len());
    for emb in &spec.embeddings {
        let pattern = patterns
            .get(&emb.pattern_id)
            .ok_or_else(|| Error::invalid(format!("unknown pattern id {:?}", emb.pattern_id)))?
            .samples();
        if emb.position + pattern.len() > spec.length {
            return Err(Error::invalid(format!(
                "embedding of {:?} at {} runs past the trace length {}",
                emb.pattern_id, emb.position, spec.length
            )));
        }
        if emb.scale.den <= 0 {
            return Err(Error::invalid("scale denominator must be positive"));
        }
        let n = pattern.len() as f64;
        let mean = pattern.iter().map(|&s| s as f64).sum::<f64>() / n;
        let sd = (pattern
            .iter()
            .map(|&s| (s as f64 - mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let half = 3f64.sqrt() * sd;
        placed.push(Placed {
            emb,
            pattern,
            deform_lo: (mean - half).round() as i64,
            deform_hi: (mean + half).round() as i64,
        });
    }
    placed.sort_by_key(|p| p.emb.position);
    for w in placed.windows(2) {
        if w[0].emb.position + w[0].pattern.len() > w[1].emb.position {
            return Err(Error::invalid(format!(
                "embeddings at {} and {} overlap",
                w[0].emb.position, w[1].emb.position
            )));
        }
    }
    Ok(placed)
}

fn fill(
    spec: &SynthSpec,
    placed: &[Placed<'_>],
    first: usize,
    out: &mut [Sample],
    streams: &mut Streams,
) {
    let bg = spec.background;
    // Index of the first embedding that ends after `first`.
    let mut k = placed.partition_point(|p| p.emb.position + p.pattern.len() <= first);
    for (off, slot) in out.iter_mut().enumerate() {
        let i = first + off;
        while k < placed.len() && placed[k].emb.position + placed[k].pattern.len() <= i {
            k += 1;
        }
        let value = match placed.get(k).filter(|p| p.emb.position <= i) {
            Some(p) => {
                let j = i - p.emb.position;
                let base = if j < p.emb.deform_prefix {
                    at(&mut streams.deform, i).random_range(p.deform_lo..=p.deform_hi)
                } else {
                    p.pattern[j] as i64
                };
                p.emb.scale.apply(base)
                    + p.emb.vertical_offset as i64
                    + noise(
                        bg.noise_kind,
                        p.emb.noise_amplitude,
                        at(&mut streams.embedding, i),
                    )
            }
            None => noise(bg.noise_kind, bg.amplitude, at(&mut streams.background, i)),
        };
        *slot = spec.precision.clamp(value);
    }
}

/// Renders the trace described by `spec` and lists every embedding.
///
/// `well_formed` is true exactly for embeddings without a deformed prefix.
pub fn generate(
    spec: &SynthSpec,
    patterns: &BTreeMap<String, Template>,
) -> Result<(Trace, Vec<GroundTruth>)> {
    let placed = place(spec, patterns)?;
    let mut samples = vec![0; spec.length];
    samples.par_chunks_mut(PARTITION).enumerate().for_each_init(
        || Streams::new(spec.seed),
        |streams, (c, chunk)| fill(spec, &placed, c * PARTITION, chunk, streams),
    );
    let truth = placed
        .iter()
        .map(|p| GroundTruth {
            position: p.emb.position,
            pattern_id: p.emb.pattern_id.clone(),
            well_formed: p.emb.deform_prefix == 0,
        })
        .collect();
    let trace = Trace::new(samples, spec.precision)?
        .with_sample_rate(spec.sample_rate_hz)
        .with_label(format!("synth seed {}", spec.seed));
    Ok((trace, truth))
}

/// A CO-like burst: a carrier of `period` samples whose amplitude is redrawn
/// uniformly in `[0.3, 1.0] * amplitude` for every carrier cycle.
pub fn carrier_pattern(
    length: usize,
    period: usize,
    amplitude: u32,
    seed: u64,
    precision: Precision,
) -> Result<Template> {
    if period < 2 {
        return Err(Error::invalid("carrier period must be at least 2 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cycles = length.div_ceil(period);
    let envelope: Vec<f64> = (0..cycles).map(|_| rng.random_range(0.3..=1.0)).collect();
    let samples = (0..length)
        .map(|j| {
            let phase = std::f64::consts::TAU * j as f64 / period as f64;
            let v = amplitude as f64 * envelope[j / period] * phase.sin();
            precision.clamp(v.round() as i64)
        })
        .collect();
    Template::new(samples, precision)
}

/// Pattern definition inside a synthesis document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternSource {
    Samples {
        samples: Vec<Sample>,
    },
    Carrier {
        length: usize,
        period: usize,
        amplitude: u32,
        seed: u64,
    },
}

impl PatternSource {
    pub fn build(&self, precision: Precision) -> Result<Template> {
        match self {
            PatternSource::Samples { samples } => Template::new(samples.clone(), precision),
            PatternSource::Carrier {
                length,
                period,
                amplitude,
                seed,
            } => carrier_pattern(*length, *period, *amplitude, *seed, precision),
        }
    }
}

/// The human-readable synthesis configuration: a [`SynthSpec`] plus its patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDocument {
    #[serde(flatten)]
    pub spec: SynthSpec,
    pub patterns: BTreeMap<String, PatternSource>,
}

impl SynthDocument {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("synthesis document: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synthesis document serializes")
    }

    pub fn generate(&self) -> Result<(Trace, Vec<GroundTruth>)> {
        let patterns = self
            .patterns
            .iter()
            .map(|(id, src)| Ok((id.clone(), src.build(self.spec.precision)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        generate(&self.spec, &patterns)
    }
}

/// A recording of repeated cryptographic operations with a few deformed ones first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub operations: usize,
    pub deformed: usize,
    pub pattern_length: usize,
    pub carrier_period: usize,
    pub amplitude: u32,
    pub noise: u32,
    pub noise_kind: NoiseKind,
    pub gap_min: usize,
    pub gap_max: usize,
    /// Fraction of a deformed operation's leading samples that are replaced.
    pub deform_fraction: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            operations: 256,
            deformed: 2,
            pattern_length: 2800,
            carrier_period: 10,
            amplitude: 2000,
            noise: 40,
            noise_kind: NoiseKind::Gaussian,
            gap_min: 3000,
            gap_max: 4000,
            deform_fraction: 0.6,
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn document(&self) -> Result<SynthDocument> {
        if self.deformed > self.operations {
            return Err(Error::invalid("more deformed operations than operations"));
        }
        if self.gap_min > self.gap_max {
            return Err(Error::invalid("gap_min exceeds gap_max"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(3);
        let deform_prefix = (self.pattern_length as f64 * self.deform_fraction).round() as usize;
        let mut position = self.gap_min;
        let mut embeddings = Vec::with_capacity(self.operations);
        for k in 0..self.operations {
            embeddings.push(Embedding {
                pattern_id: "co".into(),
                position,
                scale: Scale::ONE,
                vertical_offset: 0,
                noise_amplitude: self.noise,
                deform_prefix: if k < self.deformed { deform_prefix } else { 0 },
            });
            position += self.pattern_length + rng.random_range(self.gap_min..=self.gap_max);
        }
        let patterns = BTreeMap::from([(
            "co".to_string(),
            PatternSource::Carrier {
                length: self.pattern_length,
                period: self.carrier_period,
                amplitude: self.amplitude,
                seed: self.seed.wrapping_add(0x5eed),
            },
        )]);
        Ok(SynthDocument {
            spec: SynthSpec {
                length: position,
                seed: self.seed,
                precision: Precision::DEFAULT,
                sample_rate_hz: default_sample_rate(),
                background: Background {
                    noise_kind: self.noise_kind,
                    amplitude: self.noise,
                },
                embeddings,
            },
            patterns,
        })
    }
}
