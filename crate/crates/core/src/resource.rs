//! LUT footprint of the parallel matcher on an FPGA.
//!
//! The model is piecewise linear in the number of compared template positions and
//! passes exactly through the synthesized reference points for `d = 32` on a
//! Kintex UltraScale KU085. Other parallelism degrees scale linearly in `d / 32`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REFERENCE_PARALLELISM: usize = 32;

/// (compared positions, LUTs) measured at `d = 32`.
const LUT_BASED_ANCHORS: [(u64, u64); 3] = [(700, 169_386), (1400, 338_948), (2800, 680_472)];
const CARRY_LOGIC_ANCHORS: [(u64, u64); 3] = [(700, 611_651), (1400, 1_222_969), (2800, 2_447_523)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdderStyle {
    /// Comparators and 1-bit adder trees built from dedicated carry chains.
    CarryLogic,
    /// Comparators and adder trees mapped onto plain LUT6 cells.
    LutBased,
}

impl AdderStyle {
    /// Average LUTs one comparator costs per template sample.
    pub fn comparator_luts_per_sample(self) -> u32 {
        match self {
            AdderStyle::CarryLogic => 22,
            AdderStyle::LutBased => 6,
        }
    }

    fn anchors(self) -> &'static [(u64, u64); 3] {
        match self {
            AdderStyle::CarryLogic => &CARRY_LOGIC_ANCHORS,
            AdderStyle::LutBased => &LUT_BASED_ANCHORS,
        }
    }
}

impl fmt::Display for AdderStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdderStyle::CarryLogic => "carry_logic",
            AdderStyle::LutBased => "lut_based",
        })
    }
}

impl FromStr for AdderStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carry" | "carry_logic" | "carry-logic" => Ok(AdderStyle::CarryLogic),
            "lut" | "lut_based" | "lut-based" => Ok(AdderStyle::LutBased),
            other => Err(Error::invalid(format!(
                "unknown adder style {other:?}, expected `lut` or `carry`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub lut_capacity: u64,
}

impl DeviceProfile {
    pub fn new(name: impl Into<String>, lut_capacity: u64) -> Result<Self> {
        if lut_capacity == 0 {
            return Err(Error::invalid("device LUT capacity must be positive"));
        }
        Ok(DeviceProfile {
            name: name.into(),
            lut_capacity,
        })
    }

    /// Kintex UltraScale KU085. The capacity makes 338,948 LUTs exactly 68 %.
    pub fn ku085() -> Self {
        DeviceProfile {
            name: "KU085".into(),
            lut_capacity: 498_453,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceEstimate {
    pub luts: u64,
    pub utilization_fraction: f64,
    pub adder_style: AdderStyle,
    pub comparator_luts_per_sample: u32,
    pub fits: bool,
}

impl ResourceEstimate {
    pub fn utilization_percent(&self) -> f64 {
        self.utilization_fraction * 100.0
    }
}

/// Unrounded LUT count for `m` compared positions at `d = 32`.
fn luts_at_reference(m: f64, style: AdderStyle) -> f64 {
    let a = style.anchors();
    // Segment through the two anchors bracketing m; the outer segments extrapolate.
    let (lo, hi) = if m <= a[1].0 as f64 {
        (a[0], a[1])
    } else {
        (a[1], a[2])
    };
    let slope = (hi.1 as f64 - lo.1 as f64) / (hi.0 as f64 - lo.0 as f64);
    lo.1 as f64 + slope * (m - lo.0 as f64)
}

fn luts_exact(m: f64, style: AdderStyle, parallelism: usize) -> f64 {
    luts_at_reference(m, style) * parallelism as f64 / REFERENCE_PARALLELISM as f64
}

/// LUTs for `m` compared template positions with `d` parallel lanes on `device`.
pub fn estimate_luts(
    template_samples: usize,
    adder_style: AdderStyle,
    parallelism: usize,
    device: &DeviceProfile,
) -> Result<ResourceEstimate> {
    if template_samples == 0 {
        return Err(Error::invalid(
            "template must have at least one compared sample",
        ));
    }
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    let luts = luts_exact(template_samples as f64, adder_style, parallelism)
        .round()
        .max(0.0) as u64;
    let utilization_fraction = luts as f64 / device.lut_capacity as f64;
    Ok(ResourceEstimate {
        luts,
        utilization_fraction,
        adder_style,
        comparator_luts_per_sample: adder_style.comparator_luts_per_sample(),
        fits: utilization_fraction <= 1.0,
    })
}

/// Largest template length whose estimate stays within `1 - reserve_fraction` of the device.
///
/// Returns 0 when not even one compared position fits.
pub fn max_template_length(
    device: &DeviceProfile,
    adder_style: AdderStyle,
    parallelism: usize,
    reserve_fraction: f64,
) -> Result<usize> {
    if !(0.0..1.0).contains(&reserve_fraction) {
        return Err(Error::invalid(format!(
            "reserve fraction must lie in [0, 1), got {reserve_fraction}"
        )));
    }
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    let budget = device.lut_capacity as f64 * (1.0 - reserve_fraction);
    let fits = |m: usize| {
        estimate_luts(m, adder_style, parallelism, device)
            .map(|e| e.utilization_fraction <= 1.0 - reserve_fraction)
            .unwrap_or(false)
    };
    if device.lut_capacity == 0 || !fits(1) {
        return Ok(0);
    }
    // Invert the segment the budget falls into, then settle the rounding.
    let scale = parallelism as f64 / REFERENCE_PARALLELISM as f64;
    let target = budget / scale;
    let a = adder_style.anchors();
    let (lo, hi) = if target <= a[1].1 as f64 {
        (a[0], a[1])
    } else {
        (a[1], a[2])
    };
    let slope = (hi.1 as f64 - lo.1 as f64) / (hi.0 as f64 - lo.0 as f64);
    let mut m = (lo.0 as f64 + (target - lo.1 as f64) / slope)
        .floor()
        .max(1.0) as usize;
    while m > 1 && !fits(m) {
        m -= 1;
    }
    while fits(m + 1) {
        m += 1;
    }
    Ok(m)
}
