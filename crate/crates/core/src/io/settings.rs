use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, FormatError};
use crate::calibration::{CalibrationOptions, LocatorParams};
use crate::engine::EngineConfig;
use crate::resource::{AdderStyle, DeviceProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Comparison stride applied to the built template before calibrating.
    pub stride: usize,
    pub offset_min: u32,
    pub offset_max: u32,
    pub background_step: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            stride: 4,
            offset_min: 0,
            offset_max: 512,
            background_step: CalibrationOptions::default().background_step,
        }
    }
}

impl CalibrationSettings {
    pub fn offsets(&self) -> RangeInclusive<u32> {
        self.offset_min..=self.offset_max
    }

    pub fn options(&self) -> CalibrationOptions {
        CalibrationOptions {
            background_step: self.background_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSettings {
    pub name: String,
    pub lut_capacity: u64,
    pub adder: AdderStyle,
    /// Fraction of LUTs kept free for the rest of the design.
    pub reserve_fraction: f64,
}

impl Default for DeviceSettings {
    fn default() -> Self {
        let ku = DeviceProfile::ku085();
        DeviceSettings {
            name: ku.name,
            lut_capacity: ku.lut_capacity,
            adder: AdderStyle::LutBased,
            reserve_fraction: 0.32,
        }
    }
}

impl DeviceSettings {
    pub fn profile(&self) -> crate::Result<DeviceProfile> {
        DeviceProfile::new(self.name.clone(), self.lut_capacity)
    }
}

/// Everything a configuration file can set. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub engine: EngineConfig,
    pub locator: LocatorParams,
    pub calibration: CalibrationSettings,
    pub device: DeviceSettings,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        toml::from_str(text).map_err(|e| FormatError::parse("config", e.message()))
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Settings::from_toml(&read_text(path)?)
            .map_err(|e| FormatError::parse(path.display().to_string(), e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}
