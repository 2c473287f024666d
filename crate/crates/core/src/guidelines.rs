//! Federal poverty guidelines and the %FPL-to-dollars conversion.

use std::collections::BTreeMap;
use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidelineEntry {
    pub one_person: f64,
    pub per_additional: f64,
}

/// Annual poverty guideline dollars by coverage year. Coverage year Y is
/// keyed directly; the bundled table already applies the convention that
/// marketplace subsidies for year Y use the guidelines published the
/// January before open enrollment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovertyGuidelines {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub years: BTreeMap<u16, GuidelineEntry>,
}

static BUILTIN: Lazy<PovertyGuidelines> = Lazy::new(|| {
    PovertyGuidelines::from_json_str(include_str!("../data/poverty_guidelines.json"))
        .expect("bundled poverty guidelines are valid")
});

impl PovertyGuidelines {
    pub fn builtin() -> PovertyGuidelines {
        BUILTIN.clone()
    }

    pub fn from_json_str(s: &str) -> Result<PovertyGuidelines> {
        let g: PovertyGuidelines = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_path(path: &Path) -> Result<PovertyGuidelines> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!(
                "cannot read guidelines file {}: {e}",
                path.display()
            ))
        })?;
        PovertyGuidelines::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != crate::regimes::SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "poverty guidelines: unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.years.is_empty() {
            return Err(Error::Config("poverty guidelines: no years".into()));
        }
        for (year, e) in &self.years {
            if e.one_person <= 0.0 || e.per_additional <= 0.0 {
                return Err(Error::Config(format!(
                    "poverty guidelines: non-positive dollars for {year}"
                )));
            }
        }
        Ok(())
    }

    pub fn annual_guideline(&self, year: u16, hiu_size: u32) -> Result<f64> {
        if hiu_size == 0 {
            return Err(Error::Data("hiu_size must be at least 1".into()));
        }
        let e = self.years.get(&year).ok_or_else(|| {
            Error::Config(format!("no poverty guideline for coverage year {year}"))
        })?;
        Ok(e.one_person + e.per_additional * f64::from(hiu_size - 1))
    }

    /// Monthly household income in dollars for a person at `fpl` %FPL.
    pub fn monthly_income(&self, fpl: f64, year: u16, hiu_size: u32) -> Result<f64> {
        Ok(fpl / 100.0 * self.annual_guideline(year, hiu_size)? / 12.0)
    }
}
