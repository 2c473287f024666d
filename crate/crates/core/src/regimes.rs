//! Subsidy regime definitions: expected-contribution schedules, age rating
//! curves, and state supplement rules.
//!
//! A regime is pure data. The federal schedules ("aca", "ira") ship as JSON
//! in `data/` and load through [`Regime::builtin`]; alternates load from
//! arbitrary paths. All premium arithmetic lives in [`crate::premium`]; this
//! module only evaluates schedules, so swapping one regime file for another
//! swaps every downstream output without touching code.

use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear schedule of expected contribution percentage by %FPL.
///
/// Breakpoints are `(fpl_pct, contribution_pct)` pairs with strictly
/// increasing incomes and non-decreasing contributions. Evaluation clamps:
/// below the first breakpoint returns the first contribution, above the
/// last returns the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcpSchedule {
    pub breakpoints: Vec<(f64, f64)>,
}

impl EcpSchedule {
    pub fn contribution_pct(&self, fpl: f64) -> f64 {
        let pts = &self.breakpoints;
        if fpl <= pts[0].0 {
            return pts[0].1;
        }
        if fpl >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let hi = pts.partition_point(|p| p.0 <= fpl);
        let (x0, y0) = pts[hi - 1];
        let (x1, y1) = pts[hi];
        y0 + (fpl - x0) / (x1 - x0) * (y1 - y0)
    }

    fn validate(&self) -> Result<()> {
        if self.breakpoints.len() < 2 {
            return Err(Error::Config(
                "ecp schedule needs at least two breakpoints".into(),
            ));
        }
        for w in self.breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config(format!(
                    "ecp breakpoints must have strictly increasing fpl, got {} after {}",
                    w[1].0, w[0].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Config(format!(
                    "ecp contributions must be non-decreasing, got {} after {}",
                    w[1].1, w[0].1
                )));
            }
        }
        for &(fpl, pct) in &self.breakpoints {
            if !(0.0..=100.0).contains(&pct) || fpl < 0.0 {
                return Err(Error::Config(format!(
                    "ecp breakpoint ({fpl}, {pct}) out of range"
                )));
            }
        }
        Ok(())
    }
}

/// Age rating factors, `(age, factor)` pairs with linear interpolation
/// between listed ages. Ages past the last entry take the last factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeCurve {
    pub factors: Vec<(u32, f64)>,
}

impl AgeCurve {
    pub fn factor(&self, age: u32) -> f64 {
        let pts = &self.factors;
        if age <= pts[0].0 {
            return pts[0].1;
        }
        if age >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let hi = pts.partition_point(|p| p.0 <= age);
        let (x0, y0) = pts[hi - 1];
        let (x1, y1) = pts[hi];
        y0 + (age - x0) as f64 / (x1 - x0) as f64 * (y1 - y0)
    }

    fn validate(&self) -> Result<()> {
        if self.factors.len() < 2 {
            return Err(Error::Config("age curve needs at least two points".into()));
        }
        for w in self.factors.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config(
                    "age curve ages must be strictly increasing".into(),
                ));
            }
        }
        if self.factors.iter().any(|&(_, f)| f <= 0.0) {
            return Err(Error::Config("age curve factors must be positive".into()));
        }
        // Adult rating constraints: anchor at 1.0 for age 21, cap at 3.0
        // from 64 up, never decreasing in between.
        let eps = 1e-9;
        if (self.factor(21) - 1.0).abs() > eps {
            return Err(Error::Config(format!(
                "age curve must anchor factor(21) = 1.0, got {}",
                self.factor(21)
            )));
        }
        if (self.factor(64) - 3.0).abs() > eps {
            return Err(Error::Config(format!(
                "age curve must reach factor(64) = 3.0, got {}",
                self.factor(64)
            )));
        }
        let mut prev = self.factor(21);
        for age in 22..=64 {
            let f = self.factor(age);
            if f < prev - eps {
                return Err(Error::Config(format!(
                    "age curve decreases at age {age}: {f} < {prev}"
                )));
            }
            prev = f;
        }
        Ok(())
    }
}

/// State supplement rule. `EcpReduction` lowers the expected contribution
/// percentage by age (full reduction through `full_age_hi`, stepping down
/// by `phaseout_step_pp` per year of age and reaching zero exactly at
/// `phaseout_end_age`). `FixedDollar` pays a flat monthly amount toward the
/// remaining premium for an age range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSupplementRule {
    EcpReduction {
        name: String,
        base_reduction_pp: f64,
        full_age_lo: u32,
        full_age_hi: u32,
        phaseout_step_pp: f64,
        phaseout_end_age: u32,
        applicable_years: Vec<u16>,
    },
    FixedDollar {
        name: String,
        amount_monthly: f64,
        age_lo: u32,
        age_hi: u32,
        applicable_years: Vec<u16>,
    },
}

impl StateSupplementRule {
    pub fn name(&self) -> &str {
        match self {
            StateSupplementRule::EcpReduction { name, .. } => name,
            StateSupplementRule::FixedDollar { name, .. } => name,
        }
    }

    pub fn applies_in(&self, year: u16) -> bool {
        let years = match self {
            StateSupplementRule::EcpReduction {
                applicable_years, ..
            } => applicable_years,
            StateSupplementRule::FixedDollar {
                applicable_years, ..
            } => applicable_years,
        };
        years.contains(&year)
    }

    /// Contribution-percentage reduction for `age` in `year`, in points.
    /// Zero for fixed-dollar rules and outside the rule's years or ages.
    pub fn ecp_reduction_pp(&self, age: u32, year: u16) -> f64 {
        match self {
            StateSupplementRule::EcpReduction {
                base_reduction_pp,
                full_age_lo,
                full_age_hi,
                phaseout_step_pp,
                applicable_years,
                ..
            } => {
                if !applicable_years.contains(&year) || age < *full_age_lo {
                    return 0.0;
                }
                if age <= *full_age_hi {
                    return *base_reduction_pp;
                }
                (base_reduction_pp - phaseout_step_pp * (age - full_age_hi) as f64).max(0.0)
            }
            StateSupplementRule::FixedDollar { .. } => 0.0,
        }
    }

    /// Flat monthly payment for `age` in `year`. Zero for reduction rules.
    pub fn fixed_monthly(&self, age: u32, year: u16) -> f64 {
        match self {
            StateSupplementRule::FixedDollar {
                amount_monthly,
                age_lo,
                age_hi,
                applicable_years,
                ..
            } => {
                if applicable_years.contains(&year) && age >= *age_lo && age <= *age_hi {
                    *amount_monthly
                } else {
                    0.0
                }
            }
            StateSupplementRule::EcpReduction { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            StateSupplementRule::EcpReduction {
                name,
                base_reduction_pp,
                full_age_lo,
                full_age_hi,
                phaseout_step_pp,
                phaseout_end_age,
                applicable_years,
            } => {
                if *base_reduction_pp < 0.0 {
                    return Err(Error::Config(format!("rule {name}: negative reduction")));
                }
                if full_age_lo > full_age_hi {
                    return Err(Error::Config(format!("rule {name}: age range inverted")));
                }
                if *phaseout_end_age <= *full_age_hi || *phaseout_step_pp <= 0.0 {
                    return Err(Error::Config(format!(
                        "rule {name}: phase-out must extend past full_age_hi with positive step"
                    )));
                }
                let at_end = base_reduction_pp
                    - phaseout_step_pp * (phaseout_end_age - full_age_hi) as f64;
                if at_end.abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "rule {name}: reduction must reach zero exactly at phaseout_end_age, \
                         got {at_end} remaining"
                    )));
                }
                if applicable_years.is_empty() {
                    return Err(Error::Config(format!("rule {name}: no applicable years")));
                }
                Ok(())
            }
            StateSupplementRule::FixedDollar {
                name,
                amount_monthly,
                age_lo,
                age_hi,
                applicable_years,
            } => {
                if *amount_monthly < 0.0 {
                    return Err(Error::Config(format!("rule {name}: negative amount")));
                }
                if age_lo > age_hi {
                    return Err(Error::Config(format!("rule {name}: age range inverted")));
                }
                if applicable_years.is_empty() {
                    return Err(Error::Config(format!("rule {name}: no applicable years")));
                }
                Ok(())
            }
        }
    }
}

/// A complete subsidy regime: eligibility window, contribution schedule,
/// age curve, and any state supplement rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub eligibility_floor_fpl: f64,
    #[serde(default)]
    pub eligibility_cap_fpl: Option<f64>,
    pub ecp_schedule: EcpSchedule,
    pub age_curve: AgeCurve,
    #[serde(default)]
    pub state_rules: Vec<StateSupplementRule>,
}

pub const SCHEMA_VERSION: u32 = 1;

static BUILTIN_ACA: Lazy<Regime> = Lazy::new(|| {
    Regime::from_json_str(include_str!("../data/regime_aca.json"))
        .expect("bundled aca regime is valid")
});
static BUILTIN_IRA: Lazy<Regime> = Lazy::new(|| {
    Regime::from_json_str(include_str!("../data/regime_ira.json"))
        .expect("bundled ira regime is valid")
});

impl Regime {
    pub fn from_json_str(s: &str) -> Result<Regime> {
        let regime: Regime = serde_json::from_str(s)?;
        regime.validate()?;
        Ok(regime)
    }

    pub fn from_path(path: &Path) -> Result<Regime> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read regime file {}: {e}", path.display()))
        })?;
        Regime::from_json_str(&text)
    }

    /// One of the bundled regimes: "aca" or "ira".
    pub fn builtin(name: &str) -> Result<Regime> {
        match name {
            "aca" => Ok(BUILTIN_ACA.clone()),
            "ira" => Ok(BUILTIN_IRA.clone()),
            other => Err(Error::Config(format!(
                "unknown builtin regime \"{other}\" (available: aca, ira)"
            ))),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "regime {}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.name, self.schema_version
            )));
        }
        if self.name.is_empty() {
            return Err(Error::Config("regime name must be non-empty".into()));
        }
        if self.eligibility_floor_fpl < 0.0 {
            return Err(Error::Config(format!(
                "regime {}: negative eligibility floor",
                self.name
            )));
        }
        if let Some(cap) = self.eligibility_cap_fpl {
            if cap <= self.eligibility_floor_fpl {
                return Err(Error::Config(format!(
                    "regime {}: eligibility cap {} not above floor {}",
                    self.name, cap, self.eligibility_floor_fpl
                )));
            }
        }
        self.ecp_schedule.validate()?;
        self.age_curve.validate()?;
        for rule in &self.state_rules {
            rule.validate()?;
        }
        Ok(())
    }

    /// Whether a person at `fpl` qualifies for premium tax credits.
    pub fn ptc_eligible(&self, fpl: f64) -> bool {
        fpl >= self.eligibility_floor_fpl
            && self.eligibility_cap_fpl.map_or(true, |cap| fpl <= cap)
    }

    /// Expected contribution percentage at `fpl`, before state reductions.
    pub fn contribution_pct(&self, fpl: f64) -> f64 {
        self.ecp_schedule.contribution_pct(fpl)
    }

    /// Total contribution-percentage reduction from state rules for a
    /// person of `age` in `year`, in points.
    pub fn ecp_reduction_pp(&self, age: u32, year: u16) -> f64 {
        self.state_rules
            .iter()
            .map(|r| r.ecp_reduction_pp(age, year))
            .sum()
    }

    /// Total fixed-dollar state supplement per month for `age` in `year`.
    pub fn fixed_supplement_monthly(&self, age: u32, year: u16) -> f64 {
        self.state_rules
            .iter()
            .map(|r| r.fixed_monthly(age, year))
            .sum()
    }
}
