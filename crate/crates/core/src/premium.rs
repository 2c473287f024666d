//! Subsidy quotes.
//!
//! The quote arithmetic is the heart of the toolkit and follows marketplace
//! mechanics exactly:
//!
//! 1. find the lowest and second-lowest silver plan in the person's rating
//!    area and year, and age-adjust both with the regime's rating curve;
//! 2. convert the person's %FPL to a monthly income using the poverty
//!    guideline for their household size, then take the regime's expected
//!    contribution share of it;
//! 3. the federal credit is the age-adjusted benchmark (second-lowest
//!    silver) minus the expected contribution, floored at zero and paid
//!    only to persons inside the regime's eligibility window;
//! 4. state supplements top the credit up, capped so the total never
//!    exceeds the lowest silver premium, which is also the plan whose
//!    post-subsidy price the quote reports.
//!
//! All arithmetic stays in full f64 precision; dollars are rounded only
//! when artifacts are serialized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidelines::PovertyGuidelines;
use crate::population::{Metal, Person, PlanOffering};
use crate::regimes::Regime;

/// Lowest and second-lowest silver premiums for one rating-area-year cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SilverPair {
    pub lowest: PlanOffering,
    pub benchmark: PlanOffering,
}

/// Silver pairs for every quotable rating-area-year cell.
#[derive(Debug, Clone, Default)]
pub struct PlanIndex {
    cells: BTreeMap<(u32, u16), SilverPair>,
}

impl PlanIndex {
    /// Index every cell that has at least two silver plans. Cells with
    /// fewer are skipped here; quoting against them reports the specific
    /// cell rather than failing the whole build.
    pub fn build(plans: &[PlanOffering]) -> PlanIndex {
        let mut by_cell: BTreeMap<(u32, u16), Vec<&PlanOffering>> = BTreeMap::new();
        for plan in plans.iter().filter(|p| p.metal == Metal::Silver) {
            by_cell
                .entry((plan.rating_area, plan.year))
                .or_default()
                .push(plan);
        }
        let mut cells = BTreeMap::new();
        for (cell, mut silvers) in by_cell {
            silvers.sort_by(|a, b| {
                a.base_premium
                    .total_cmp(&b.base_premium)
                    .then_with(|| a.plan_id.cmp(&b.plan_id))
            });
            if silvers.len() >= 2 {
                cells.insert(
                    cell,
                    SilverPair {
                        lowest: silvers[0].clone(),
                        benchmark: silvers[1].clone(),
                    },
                );
            }
        }
        PlanIndex { cells }
    }

    pub fn pair(&self, rating_area: u32, year: u16) -> Result<&SilverPair> {
        self.cells.get(&(rating_area, year)).ok_or_else(|| {
            Error::Data(format!(
                "rating area {rating_area} year {year} has fewer than two silver plans"
            ))
        })
    }
}

/// Lowest and second-lowest silver for one cell, straight from a plan
/// slice. Ties on premium break by plan id.
pub fn benchmark_plans(
    plans: &[PlanOffering],
    rating_area: u32,
    year: u16,
) -> Result<SilverPair> {
    let mut silvers: Vec<&PlanOffering> = plans
        .iter()
        .filter(|p| p.metal == Metal::Silver && p.rating_area == rating_area && p.year == year)
        .collect();
    silvers.sort_by(|a, b| {
        a.base_premium
            .total_cmp(&b.base_premium)
            .then_with(|| a.plan_id.cmp(&b.plan_id))
    });
    if silvers.len() < 2 {
        return Err(Error::Data(format!(
            "rating area {rating_area} year {year} has fewer than two silver plans"
        )));
    }
    Ok(SilverPair {
        lowest: silvers[0].clone(),
        benchmark: silvers[1].clone(),
    })
}

pub fn age_adjusted(base_premium: f64, age: u32, regime: &Regime) -> f64 {
    base_premium * regime.age_curve.factor(age)
}

/// Everything a person's subsidy determination produces under one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidyQuote {
    pub person_id: String,
    pub regime: String,
    pub eligible: bool,
    /// Age-adjusted second-lowest silver premium, $/mo.
    pub benchmark_premium: f64,
    /// Age-adjusted lowest silver premium, $/mo.
    pub min_silver_premium: f64,
    /// What the household is expected to pay toward the benchmark, $/mo.
    pub expected_contribution: f64,
    pub federal_ptc: f64,
    pub state_supplement: f64,
    /// Lowest silver net of all subsidies, floored at zero.
    pub post_subsidy_premium: f64,
}

pub fn quote(
    person: &Person,
    regime: &Regime,
    index: &PlanIndex,
    guidelines: &PovertyGuidelines,
) -> Result<SubsidyQuote> {
    let pair = index.pair(person.rating_area, person.year)?;
    let benchmark_premium = age_adjusted(pair.benchmark.base_premium, person.age, regime);
    let min_silver_premium = age_adjusted(pair.lowest.base_premium, person.age, regime);
    let monthly_income = guidelines.monthly_income(person.fpl, person.year, person.hiu_size)?;
    let ecp_pct = regime.contribution_pct(person.fpl);
    let expected_contribution = ecp_pct / 100.0 * monthly_income;
    let eligible = regime.ptc_eligible(person.fpl);

    let federal_ptc = if eligible {
        (benchmark_premium - expected_contribution).max(0.0)
    } else {
        0.0
    };

    let state_supplement = if eligible {
        let reduction_pp = regime.ecp_reduction_pp(person.age, person.year).min(ecp_pct);
        let reduction_value = reduction_pp / 100.0 * monthly_income;
        let fixed = regime.fixed_supplement_monthly(person.age, person.year);
        let room = (min_silver_premium - federal_ptc).max(0.0);
        (reduction_value + fixed).min(room)
    } else {
        0.0
    };

    let post_subsidy_premium = (min_silver_premium - federal_ptc - state_supplement).max(0.0);

    Ok(SubsidyQuote {
        person_id: person.person_id.clone(),
        regime: regime.name.clone(),
        eligible,
        benchmark_premium,
        min_silver_premium,
        expected_contribution,
        federal_ptc,
        state_supplement,
        post_subsidy_premium,
    })
}

/// How a person's bottom line moves between two regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteDelta {
    /// Counterfactual minus actual post-subsidy premium, $/mo. Positive
    /// means the counterfactual regime costs the person more.
    pub premium_delta: f64,
    /// Subsidy room a supplemental program could restore without being
    /// more generous than the actual regime: actual federal credit plus
    /// state supplement, minus the counterfactual federal credit, floored
    /// at zero. $/mo.
    pub headroom: f64,
}

pub fn quote_delta(
    person: &Person,
    actual: &Regime,
    counterfactual: &Regime,
    index: &PlanIndex,
    guidelines: &PovertyGuidelines,
) -> Result<QuoteDelta> {
    let qa = quote(person, actual, index, guidelines)?;
    let qc = quote(person, counterfactual, index, guidelines)?;
    Ok(QuoteDelta {
        premium_delta: qc.post_subsidy_premium - qa.post_subsidy_premium,
        headroom: (qa.federal_ptc + qa.state_supplement - qc.federal_ptc).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidelines::PovertyGuidelines as PG;
    use crate::population::Source;
    use crate::regimes::Regime as RegimeT;

    fn plans(base_low: f64, base_bench: f64) -> Vec<PlanOffering> {
        vec![
            PlanOffering {
                plan_id: "S1".into(),
                metal: Metal::Silver,
                rating_area: 1,
                year: 2024,
                base_premium: base_low,
            },
            PlanOffering {
                plan_id: "S2".into(),
                metal: Metal::Silver,
                rating_area: 1,
                year: 2024,
                base_premium: base_bench,
            },
            PlanOffering {
                plan_id: "B1".into(),
                metal: Metal::Bronze,
                rating_area: 1,
                year: 2024,
                base_premium: 1.0,
            },
        ]
    }

    fn person(age: u32, fpl: f64) -> Person {
        Person {
            person_id: "E2024-000001".into(),
            hiu_id: "H1".into(),
            year: 2024,
            rating_area: 1,
            age,
            female: false,
            fpl,
            hiu_size: 1,
            weight: 1.0,
            insured: true,
            source: Source::Enrollee,
        }
    }

    /// Flat schedule and unit guideline so contributions are easy to read:
    /// monthly income at 100% FPL is exactly $100.
    fn flat_regime(pct: f64, cap: Option<f64>) -> Regime {
        let json = format!(
            r#"{{
              "schema_version": 1,
              "name": "flat",
              "eligibility_floor_fpl": 138.0,
              "eligibility_cap_fpl": {},
              "ecp_schedule": {{ "breakpoints": [[138.0, {pct}], [400.0, {pct}]] }},
              "age_curve": {{ "factors": [[18, 1.0], [21, 1.0], [64, 3.0]] }},
              "state_rules": []
            }}"#,
            match cap {
                Some(c) => c.to_string(),
                None => "null".into(),
            },
        );
        RegimeT::from_json_str(&json).unwrap()
    }

    fn unit_guidelines() -> PovertyGuidelines {
        PG::from_json_str(
            r#"{ "schema_version": 1, "years": { "2024": { "one_person": 12000.0, "per_additional": 1.0 } } }"#,
        )
        .unwrap()
    }

    #[test]
    fn worked_example_interior_credit() {
        // Benchmark 700, ecp 8.5% of a $2,500/mo income: credit 487.50.
        let idx = PlanIndex::build(&plans(400.0, 700.0));
        let regime = flat_regime(8.5, None);
        let g = unit_guidelines();
        let q = quote(&person(21, 250.0), &regime, &idx, &g).unwrap();
        assert!((q.expected_contribution - 212.5).abs() < 1e-9);
        assert!((q.federal_ptc - 487.5).abs() < 1e-9);
        // Credit exceeds the $400 lowest silver, so the floor binds.
        assert_eq!(q.post_subsidy_premium, 0.0);
    }

    #[test]
    fn ineligible_above_cap_pays_full_premium() {
        let idx = PlanIndex::build(&plans(400.0, 700.0));
        let regime = flat_regime(8.5, Some(400.0));
        let g = unit_guidelines();
        let mut p = person(21, 250.0);
        p.fpl = 400.0;
        assert!(quote(&p, &regime, &idx, &g).unwrap().eligible);
        // Above the cap: no credit, post-subsidy equals the full premium.
        let regime = flat_regime(8.5, Some(300.0));
        p.fpl = 350.0;
        let q = quote(&p, &regime, &idx, &g).unwrap();
        assert!(!q.eligible);
        assert_eq!(q.federal_ptc, 0.0);
        assert_eq!(q.state_supplement, 0.0);
        assert!((q.post_subsidy_premium - q.min_silver_premium).abs() < 1e-12);
    }

    #[test]
    fn age_rating_scales_both_premiums() {
        let idx = PlanIndex::build(&plans(265.0, 269.0));
        let regime = RegimeT::builtin("ira").unwrap();
        let g = PG::builtin();
        let q21 = quote(&person(21, 300.0), &regime, &idx, &g).unwrap();
        let q64 = quote(&person(64, 300.0), &regime, &idx, &g).unwrap();
        assert!((q21.benchmark_premium - 269.0).abs() < 1e-12);
        assert!((q64.benchmark_premium - 807.0).abs() < 1e-9);
        assert!((q64.min_silver_premium - 795.0).abs() < 1e-9);
    }

    #[test]
    fn benchmark_selection_orders_by_premium_then_id() {
        let mut ps = plans(400.0, 700.0);
        ps.push(PlanOffering {
            plan_id: "S0".into(),
            metal: Metal::Silver,
            rating_area: 1,
            year: 2024,
            base_premium: 400.0,
        });
        let pair = benchmark_plans(&ps, 1, 2024).unwrap();
        assert_eq!(pair.lowest.plan_id, "S0");
        assert_eq!(pair.benchmark.plan_id, "S1");
    }

    #[test]
    fn one_silver_cell_is_unquotable() {
        let ps = vec![PlanOffering {
            plan_id: "S1".into(),
            metal: Metal::Silver,
            rating_area: 1,
            year: 2024,
            base_premium: 300.0,
        }];
        let err = benchmark_plans(&ps, 1, 2024).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("rating area 1 year 2024"));
        let idx = PlanIndex::build(&ps);
        assert!(idx.pair(1, 2024).is_err());
    }

    #[test]
    fn young_adult_reduction_tops_up_but_respects_min_silver() {
        let idx = PlanIndex::build(&plans(265.0, 269.0));
        let ira = RegimeT::builtin("ira").unwrap();
        let g = PG::builtin();
        // Age 25, 175% FPL in 2024: reduction 2.5pp of monthly income, but
        // the supplement cannot push the total past the lowest silver.
        let q = quote(&person(25, 175.0), &ira, &idx, &g).unwrap();
        let income = g.monthly_income(175.0, 2024, 1).unwrap();
        let reduction_value = 2.5 / 100.0 * income;
        let room = q.min_silver_premium - q.federal_ptc;
        assert!((q.state_supplement - reduction_value.min(room)).abs() < 1e-9);
        assert!(q.post_subsidy_premium >= 0.0);
        // At 145% FPL the IRA contribution is 0, so the federal credit
        // already covers the benchmark and the room is only the (small)
        // lowest-to-benchmark gap.
        let q = quote(&person(25, 145.0), &ira, &idx, &g).unwrap();
        assert_eq!(q.post_subsidy_premium, 0.0);
        assert!(q.state_supplement <= (q.min_silver_premium - q.federal_ptc).max(0.0) + 1e-12);
    }

    #[test]
    fn reduction_never_exceeds_the_contribution_itself() {
        let idx = PlanIndex::build(&plans(265.0, 269.0));
        let ira = RegimeT::builtin("ira").unwrap();
        let g = PG::builtin();
        // At 145% FPL the schedule contribution is 0%, so a 2.5pp
        // reduction is worth nothing.
        let q = quote(&person(25, 145.0), &ira, &idx, &g).unwrap();
        let income = g.monthly_income(145.0, 2024, 1).unwrap();
        assert!(q.state_supplement < 2.5 / 100.0 * income);
    }

    #[test]
    fn delta_between_identical_regimes_is_zero() {
        let idx = PlanIndex::build(&plans(265.0, 269.0));
        let ira = RegimeT::builtin("ira").unwrap();
        let g = PG::builtin();
        for (age, fpl) in [(21u32, 150.0), (40, 225.0), (60, 390.0)] {
            let d = quote_delta(&person(age, fpl), &ira, &ira, &idx, &g).unwrap();
            assert_eq!(d.premium_delta, 0.0);
        }
    }

    #[test]
    fn delta_is_positive_and_within_headroom_for_builtin_pair() {
        let idx = PlanIndex::build(&plans(265.0, 269.0));
        let ira = RegimeT::builtin("ira").unwrap();
        let aca = RegimeT::builtin("aca").unwrap();
        let g = PG::builtin();
        for age in [21u32, 25, 34, 45, 64] {
            for fpl in [138.0, 150.0, 175.0, 200.0, 250.0, 320.0, 400.0] {
                let mut p = person(age, fpl);
                p.person_id = format!("E-{age}-{fpl}");
                let d = quote_delta(&p, &ira, &aca, &idx, &g).unwrap();
                assert!(d.premium_delta >= -1e-12, "delta {} at {age}/{fpl}", d.premium_delta);
                assert!(
                    d.premium_delta <= d.headroom + 1e-9,
                    "delta {} exceeds headroom {} at {age}/{fpl}",
                    d.premium_delta,
                    d.headroom
                );
            }
        }
    }

    #[test]
    fn credit_never_negative_and_monotone_in_income() {
        let idx = PlanIndex::build(&plans(265.0, 269.0));
        let g = PG::builtin();
        for regime in [RegimeT::builtin("ira").unwrap(), RegimeT::builtin("aca").unwrap()] {
            let mut last = f64::INFINITY;
            for step in 0..=262 {
                let fpl = 138.0 + step as f64;
                let q = quote(&person(40, fpl), &regime, &idx, &g).unwrap();
                assert!(q.federal_ptc >= 0.0);
                assert!(
                    q.federal_ptc <= last + 1e-9,
                    "credit rose with income at {fpl} under {}",
                    regime.name
                );
                last = q.federal_ptc;
            }
        }
    }
}
