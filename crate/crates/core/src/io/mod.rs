//! File formats: the binary trace container, the template document, CSV tables and
//! the settings file.
//!
//! Binary trace layout, all integers little-endian:
//!
//! | offset | size | field                         |
//! |-------:|-----:|-------------------------------|
//! | 0      | 4    | magic `WMTR`                  |
//! | 4      | 2    | format version (1)            |
//! | 6      | 1    | precision in bits             |
//! | 7      | 1    | reserved, 0                   |
//! | 8      | 8    | sample count `N` (u64)        |
//! | 16     | 8    | sample rate in Hz (f64)       |
//! | 24     | 2N   | samples (i16)                 |

mod settings;
mod tables;
mod template_file;
mod trace_file;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use settings::{CalibrationSettings, DeviceSettings, Settings};
pub use tables::{
    read_events, read_ground_truth, read_trigger_runs, trigger_from_runs, trigger_runs,
    write_events, write_ground_truth, write_plot, write_trigger_runs,
};
pub use template_file::{load_template, save_template, IntervalSection, TemplateFile};
pub use trace_file::{
    load_trace, read_trace, save_trace, write_trace, FORMAT_VERSION, HEADER_LEN, MAGIC,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected \"WMTR\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("bad header: {0}")]
    BadHeader(String),

    #[error("truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingData { expected: u64, actual: u64 },

    #[error("sample {value} at index {index} is outside the {bits}-bit range")]
    RangeViolation { index: usize, value: i16, bits: u8 },

    #[error("{what}: {message}")]
    Parse { what: String, message: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        FormatError::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// True when the file could not be opened, read or written, as opposed to being malformed.
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// Reads a JSON document such as a located-operations file.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| FormatError::parse(path.display().to_string(), e))
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| FormatError::parse("json", e))?;
    text.push('\n');
    write_text(path, &text)
}
