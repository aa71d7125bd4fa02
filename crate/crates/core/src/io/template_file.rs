use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, write_text, FormatError};
use crate::calibration::CalibrationReport;
use crate::trace::{IntervalTemplate, Precision, Sample, Template};

/// Calibrated corridor stored alongside the template samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSection {
    pub offset: u32,
    pub threshold: u32,
    pub upper: Vec<Sample>,
    pub lower: Vec<Sample>,
}

/// JSON template document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFile {
    pub precision: Precision,
    pub stride: usize,
    pub positional_buffer: usize,
    pub samples: Vec<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CalibrationReport>,
}

impl TemplateFile {
    pub fn from_template(t: &Template) -> Self {
        TemplateFile {
            precision: t.precision(),
            stride: t.stride(),
            positional_buffer: t.positional_buffer(),
            samples: t.samples().to_vec(),
            interval: None,
            report: None,
        }
    }

    pub fn with_interval(mut self, it: &IntervalTemplate, offset: u32) -> Self {
        self.interval = Some(IntervalSection {
            offset,
            threshold: it.threshold(),
            upper: it.upper().to_vec(),
            lower: it.lower().to_vec(),
        });
        self
    }

    pub fn with_report(mut self, report: CalibrationReport) -> Self {
        self.report = Some(report);
        self
    }

    pub fn template(&self) -> Result<Template, FormatError> {
        Template::new(self.samples.clone(), self.precision)
            .and_then(|t| t.with_stride(self.stride))
            .map(|t| t.with_positional_buffer(self.positional_buffer))
            .map_err(|e| FormatError::parse("template", e))
    }

    /// The stored corridor, if the template has been calibrated.
    pub fn interval_template(&self) -> Result<Option<IntervalTemplate>, FormatError> {
        let Some(sec) = &self.interval else {
            return Ok(None);
        };
        let t = self.template()?;
        if sec.upper.len() != t.compared_len() {
            return Err(FormatError::parse(
                "interval",
                format!(
                    "{} bounds for {} compared samples",
                    sec.upper.len(),
                    t.compared_len()
                ),
            ));
        }
        let out_of_range = sec
            .upper
            .iter()
            .chain(&sec.lower)
            .any(|&v| !self.precision.contains(v as i32));
        if out_of_range {
            return Err(FormatError::parse(
                "interval",
                "bound outside the sample range",
            ));
        }
        IntervalTemplate::new(
            sec.upper.clone(),
            sec.lower.clone(),
            sec.threshold,
            self.stride,
            self.samples.len(),
        )
        .map(Some)
        .map_err(|e| FormatError::parse("interval", e))
    }
}

pub fn save_template(path: &Path, file: &TemplateFile) -> Result<(), FormatError> {
    let mut text =
        serde_json::to_string_pretty(file).map_err(|e| FormatError::parse("template", e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn load_template(path: &Path) -> Result<TemplateFile, FormatError> {
    let file: TemplateFile = serde_json::from_str(&read_text(path)?)
        .map_err(|e| FormatError::parse(path.display().to_string(), e))?;
    file.template()?;
    file.interval_template()?;
    Ok(file)
}
