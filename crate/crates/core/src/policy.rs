//! Enrollment-loss projection and supplemental subsidy allocation.
//!
//! Projection multiplies each enrollee's premium change between regimes by
//! a premium sensitivity (from a fitted demand model or a fixed per-band
//! table) and clamps the implied coverage-probability change to [0, 100].
//! Allocation then spends a monthly budget pool on the most
//! premium-sensitive enrollees first, each capped at the subsidy room the
//! regime change opened up. That greedy fill is the exact optimum of the
//! linear program max sum(s_i * me_i) subject to 0 <= s_i <= cap_i and
//! sum(s_i) <= B/12.
//!
//! Reported enrollment gains apply the probability clamp: a person whose
//! projected loss is already fully restored contributes nothing further,
//! so dollars parked on them are spent but buy no reported gain. The
//! budget is still filled strictly in sensitivity order. Because of that
//! accounting, reported marginal gains can rise and then fall across a
//! budget sweep even though the linear-program objective itself has
//! non-increasing marginals.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::demand::DemandFit;
use crate::error::{Error, Result};
use crate::guidelines::PovertyGuidelines;
use crate::population::Person;
use crate::premium::{quote_delta, PlanIndex};
use crate::regimes::Regime;

/// Absolute premium sensitivities (pp of coverage probability per $/mo)
/// by %FPL band. The first band includes its lower endpoint; later bands
/// are half-open (lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeBands {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl MeBands {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<MeBands> {
        if breaks.len() < 2 || values.len() != breaks.len() - 1 {
            return Err(Error::Config(format!(
                "{} breaks need {} band values, got {}",
                breaks.len(),
                breaks.len().saturating_sub(1),
                values.len()
            )));
        }
        if breaks.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("band breaks must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("band sensitivities must be non-negative".into()));
        }
        Ok(MeBands { breaks, values })
    }

    pub fn me_abs(&self, fpl: f64) -> f64 {
        if fpl < self.breaks[0] || fpl > *self.breaks.last().unwrap() {
            return 0.0;
        }
        for (i, pair) in self.breaks.windows(2).enumerate() {
            let inside = if i == 0 { fpl >= pair[0] } else { fpl > pair[0] };
            if inside && fpl <= pair[1] {
                return self.values[i];
            }
        }
        0.0
    }
}

/// Where per-person premium sensitivities come from.
#[derive(Debug, Clone, Copy)]
pub enum MeSource<'a> {
    /// Evaluate a fitted demand model at the person's %FPL.
    Fit(&'a DemandFit),
    /// Fixed per-band values.
    Bands(&'a MeBands),
}

impl MeSource<'_> {
    pub fn me_abs(&self, fpl: f64) -> f64 {
        match self {
            MeSource::Fit(fit) => (-fit.marginal_effect_at_fpl(fpl)).max(0.0),
            MeSource::Bands(bands) => bands.me_abs(fpl),
        }
    }
}

/// One enrollee's projected exposure to the regime change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonImpact {
    pub person_id: String,
    pub fpl: f64,
    pub weight: f64,
    /// Counterfactual minus actual post-subsidy premium, $/mo.
    pub premium_delta: f64,
    /// Restorable subsidy room, $/mo.
    pub headroom: f64,
    /// Premium sensitivity, pp per $/mo.
    pub me_abs: f64,
    /// Projected coverage-probability loss, pp, clamped to [0, 100].
    pub loss_pp: f64,
}

/// Quote both regimes for every enrollee and attach sensitivities and
/// clamped losses. Errors if any enrollee cannot be quoted.
pub fn project_impacts(
    enrollees: &[&Person],
    actual: &Regime,
    counterfactual: &Regime,
    index: &PlanIndex,
    guidelines: &PovertyGuidelines,
    me: MeSource<'_>,
) -> Result<Vec<PersonImpact>> {
    let mut out = Vec::with_capacity(enrollees.len());
    for p in enrollees {
        let delta = quote_delta(p, actual, counterfactual, index, guidelines)?;
        let me_abs = me.me_abs(p.fpl);
        let loss_pp = (delta.premium_delta * me_abs).clamp(0.0, 100.0);
        out.push(PersonImpact {
            person_id: p.person_id.clone(),
            fpl: p.fpl,
            weight: p.weight,
            premium_delta: delta.premium_delta,
            headroom: delta.headroom,
            me_abs,
            loss_pp,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBand {
    pub band: String,
    pub fpl_lo: f64,
    pub fpl_hi: f64,
    /// Expected enrollment lost in this band, persons.
    pub loss: f64,
    /// Fraction of the total loss, 0 when nothing is lost anywhere.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossProjection {
    /// Weighted enrollees at baseline, persons.
    pub baseline: f64,
    /// Expected enrollment after the regime change, persons.
    pub projected: f64,
    pub total_loss: f64,
    pub bands: Vec<LossBand>,
}

/// Aggregate impacts into loss bands. Bands follow the same endpoint
/// convention as [`MeBands`].
pub fn project_losses(impacts: &[PersonImpact], breaks: &[f64]) -> Result<LossProjection> {
    if breaks.len() < 2 || breaks.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config(
            "loss bands need at least two strictly increasing breaks".into(),
        ));
    }
    let mut baseline = 0.0;
    let mut total_loss = 0.0;
    let mut band_loss = vec![0.0f64; breaks.len() - 1];
    for imp in impacts {
        baseline += imp.weight;
        let loss = imp.weight * imp.loss_pp / 100.0;
        total_loss += loss;
        for (i, pair) in breaks.windows(2).enumerate() {
            let inside = if i == 0 {
                imp.fpl >= pair[0]
            } else {
                imp.fpl > pair[0]
            } && imp.fpl <= pair[1];
            if inside {
                band_loss[i] += loss;
                break;
            }
        }
    }
    let bands = breaks
        .windows(2)
        .zip(&band_loss)
        .map(|(pair, &loss)| LossBand {
            band: format!("{}-{}", pair[0], pair[1]),
            fpl_lo: pair[0],
            fpl_hi: pair[1],
            loss,
            share: if total_loss > 0.0 { loss / total_loss } else { 0.0 },
        })
        .collect();
    Ok(LossProjection {
        baseline,
        projected: baseline - total_loss,
        total_loss,
        bands,
    })
}

/// One candidate for supplemental subsidy dollars.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocItem {
    pub id: String,
    pub fpl: f64,
    /// Premium sensitivity, pp per $/mo. Non-positive items are never
    /// funded.
    pub me_abs: f64,
    /// Largest allowed monthly subsidy, $/mo.
    pub cap: f64,
    /// Restorable probability, pp. None means unlimited, which makes the
    /// reported gain coincide with the linear-program objective.
    pub gain_limit_pp: Option<f64>,
}

impl AllocItem {
    pub fn from_impact(imp: &PersonImpact) -> AllocItem {
        AllocItem {
            id: imp.person_id.clone(),
            fpl: imp.fpl,
            me_abs: imp.me_abs,
            cap: imp.headroom,
            gain_limit_pp: Some(imp.loss_pp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub budget_annual: f64,
    /// Dollars actually allocated over the year; at most the budget, less
    /// when the caps run out.
    pub spend_annual: f64,
    /// Monthly subsidy per input item, parallel to the input order.
    pub subsidies: Vec<f64>,
    /// Expected enrollment retained, persons, with per-person probability
    /// gains clamped at their restorable loss.
    pub gain_persons: f64,
    /// Linear-program objective in the same units, without the clamp.
    pub lp_gain_persons: f64,
    /// %FPL of the last funded item, 0 when nothing was funded.
    pub marginal_fpl: f64,
    /// Sensitivity of the last funded item, pp per $/mo.
    pub marginal_me_abs: f64,
    /// spend / (12 * gain), $/mo per retained enrollee.
    pub mean_subsidy_monthly: f64,
    /// Retained enrollees per $10M of budget.
    pub ce_per_10m: f64,
}

/// Greedy fractional fill: most premium-sensitive first, to the cap, ties
/// broken by smaller cap then id. Exact for the linear program because
/// the objective is linear and the constraints form a polymatroid.
pub fn allocate(items: &[AllocItem], budget_annual: f64) -> Result<AllocationResult> {
    if !(budget_annual >= 0.0) || !budget_annual.is_finite() {
        return Err(Error::Config(format!("budget must be non-negative, got {budget_annual}")));
    }
    for item in items {
        if !(item.cap >= 0.0) || !item.cap.is_finite() || !item.me_abs.is_finite() {
            return Err(Error::Data(format!(
                "allocation item {} has invalid cap or sensitivity",
                item.id
            )));
        }
        if let Some(limit) = item.gain_limit_pp {
            if !(limit >= 0.0) {
                return Err(Error::Data(format!(
                    "allocation item {} has negative gain limit",
                    item.id
                )));
            }
        }
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .me_abs
            .total_cmp(&items[a].me_abs)
            .then_with(|| items[a].cap.total_cmp(&items[b].cap))
            .then_with(|| items[a].id.cmp(&items[b].id))
    });

    let pool = budget_annual / 12.0;
    let mut remaining = pool;
    let mut subsidies = vec![0.0f64; items.len()];
    let mut gain_pp = 0.0;
    let mut lp_gain_pp = 0.0;
    let mut marginal: Option<usize> = None;
    for &i in &order {
        if remaining <= 0.0 || items[i].me_abs <= 0.0 {
            break;
        }
        let s = items[i].cap.min(remaining);
        if s <= 0.0 {
            continue;
        }
        subsidies[i] = s;
        remaining -= s;
        let raw = s * items[i].me_abs;
        lp_gain_pp += raw;
        gain_pp += match items[i].gain_limit_pp {
            Some(limit) => raw.min(limit),
            None => raw,
        };
        marginal = Some(i);
    }
    let spend_monthly = pool - remaining.max(0.0);
    let gain = gain_pp / 100.0;
    let spend_annual = 12.0 * spend_monthly;
    Ok(AllocationResult {
        budget_annual,
        spend_annual,
        subsidies,
        gain_persons: gain,
        lp_gain_persons: lp_gain_pp / 100.0,
        marginal_fpl: marginal.map_or(0.0, |i| items[i].fpl),
        marginal_me_abs: marginal.map_or(0.0, |i| items[i].me_abs),
        mean_subsidy_monthly: if gain > 0.0 { spend_annual / (12.0 * gain) } else { 0.0 },
        ce_per_10m: if budget_annual > 0.0 {
            gain / (budget_annual / 1e7)
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget_annual: f64,
    pub spend_annual: f64,
    pub gain_total: f64,
    /// Gain added relative to the previous (smaller) budget.
    pub gain_marginal: f64,
    pub marginal_fpl: f64,
    pub mean_subsidy_monthly: f64,
    /// Total gain per $10M of budget.
    pub ce_total_per_10m: f64,
    /// Marginal gain per $10M of budget step.
    pub ce_marginal_per_10m: f64,
    /// Annual dollars to buy one more pp of coverage probability at the
    /// last funded enrollee. Derived diagnostic, not a published quantity.
    pub derived_marginal_cost_per_pp_annual: f64,
}

/// Re-run the allocation at each budget and difference the results.
/// Budgets must be positive and strictly increasing.
pub fn sweep(items: &[AllocItem], budgets: &[f64]) -> Result<Vec<SweepRow>> {
    if budgets.is_empty() {
        return Err(Error::Config("sweep needs at least one budget".into()));
    }
    if budgets.iter().any(|b| !(*b >= 0.0)) || budgets.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config(
            "sweep budgets must be non-negative and strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(budgets.len());
    let mut prev_budget = 0.0;
    let mut prev_gain = 0.0;
    for &budget in budgets {
        let alloc = allocate(items, budget)?;
        let step = budget - prev_budget;
        rows.push(SweepRow {
            budget_annual: budget,
            spend_annual: alloc.spend_annual,
            gain_total: alloc.gain_persons,
            gain_marginal: alloc.gain_persons - prev_gain,
            marginal_fpl: alloc.marginal_fpl,
            mean_subsidy_monthly: alloc.mean_subsidy_monthly,
            ce_total_per_10m: alloc.ce_per_10m,
            ce_marginal_per_10m: if step > 0.0 {
                (alloc.gain_persons - prev_gain) / (step / 1e7)
            } else {
                0.0
            },
            derived_marginal_cost_per_pp_annual: if alloc.marginal_me_abs > 0.0 {
                12.0 / alloc.marginal_me_abs
            } else {
                0.0
            },
        });
        prev_budget = budget;
        prev_gain = alloc.gain_persons;
    }
    Ok(rows)
}

/// Band-level table values keyed by band label, convenience for tests.
pub fn loss_shares(projection: &LossProjection) -> BTreeMap<String, f64> {
    projection
        .bands
        .iter()
        .map(|b| (b.band.clone(), b.share))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, fpl: f64, me: f64, cap: f64, limit: Option<f64>) -> AllocItem {
        AllocItem {
            id: id.into(),
            fpl,
            me_abs: me,
            cap,
            gain_limit_pp: limit,
        }
    }

    #[test]
    fn band_lookup_respects_endpoint_convention() {
        let bands = MeBands::new(
            vec![138.0, 150.0, 200.0, 400.0],
            vec![0.67, 0.64, 0.25],
        )
        .unwrap();
        assert_eq!(bands.me_abs(138.0), 0.67);
        assert_eq!(bands.me_abs(150.0), 0.67);
        assert_eq!(bands.me_abs(150.0 + 1e-9), 0.64);
        assert_eq!(bands.me_abs(200.0), 0.64);
        assert_eq!(bands.me_abs(400.0), 0.25);
        assert_eq!(bands.me_abs(401.0), 0.0);
        assert_eq!(bands.me_abs(100.0), 0.0);
    }

    #[test]
    fn bad_band_specs_are_rejected() {
        assert!(MeBands::new(vec![138.0], vec![]).is_err());
        assert!(MeBands::new(vec![138.0, 138.0], vec![0.5]).is_err());
        assert!(MeBands::new(vec![138.0, 200.0], vec![-0.5]).is_err());
        assert!(MeBands::new(vec![138.0, 200.0], vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn greedy_fills_by_sensitivity_with_tie_breaks() {
        let items = [
            item("c", 300.0, 0.2, 50.0, None),
            item("a", 150.0, 0.6, 40.0, None),
            item("b", 180.0, 0.6, 30.0, None),
        ];
        // Monthly pool 80: b first (same me as a, smaller cap), then a,
        // then 10 left for c.
        let alloc = allocate(&items, 80.0 * 12.0).unwrap();
        assert_eq!(alloc.subsidies, vec![10.0, 40.0, 30.0]);
        assert_eq!(alloc.marginal_fpl, 300.0);
        let lp = (30.0 * 0.6 + 40.0 * 0.6 + 10.0 * 0.2) / 100.0;
        assert!((alloc.lp_gain_persons - lp).abs() < 1e-12);
        assert!((alloc.gain_persons - lp).abs() < 1e-12);
    }

    #[test]
    fn identical_items_fill_in_id_order() {
        let items = [
            item("b", 150.0, 0.5, 40.0, None),
            item("a", 150.0, 0.5, 40.0, None),
        ];
        let alloc = allocate(&items, 40.0 * 12.0).unwrap();
        assert_eq!(alloc.subsidies, vec![0.0, 40.0]);
    }

    #[test]
    fn gain_limit_caps_reported_but_not_lp_gain() {
        let items = [item("a", 145.0, 0.5, 100.0, Some(10.0))];
        let alloc = allocate(&items, 100.0 * 12.0).unwrap();
        // 100 dollars at 0.5 pp/$ is 50pp raw, clamped to 10pp.
        assert!((alloc.lp_gain_persons - 0.5).abs() < 1e-12);
        assert!((alloc.gain_persons - 0.1).abs() < 1e-12);
        assert!((alloc.mean_subsidy_monthly - 1200.0 / (12.0 * 0.1)).abs() < 1e-9);
    }

    #[test]
    fn spend_identity_holds() {
        let items = [
            item("a", 150.0, 0.67, 60.0, Some(25.0)),
            item("b", 220.0, 0.29, 120.0, Some(40.0)),
            item("c", 350.0, 0.20, 90.0, Some(15.0)),
        ];
        for budget in [500.0, 1500.0, 2400.0, 12.0 * 270.0, 12.0 * 500.0] {
            let alloc = allocate(&items, budget).unwrap();
            if alloc.gain_persons > 0.0 {
                let recon = alloc.gain_persons * alloc.mean_subsidy_monthly * 12.0;
                assert!(
                    (recon - alloc.spend_annual).abs() <= 1e-6 * alloc.spend_annual.max(1.0),
                    "identity off at budget {budget}: {recon} vs {}",
                    alloc.spend_annual
                );
            }
            assert!(alloc.spend_annual <= budget + 1e-9);
        }
    }

    #[test]
    fn zero_sensitivity_items_are_never_funded() {
        let items = [
            item("a", 150.0, 0.0, 100.0, None),
            item("b", 250.0, 0.3, 20.0, None),
        ];
        let alloc = allocate(&items, 1200.0 * 12.0).unwrap();
        assert_eq!(alloc.subsidies[0], 0.0);
        assert_eq!(alloc.subsidies[1], 20.0);
        assert!((alloc.spend_annual - 12.0 * 20.0).abs() < 1e-9);
    }

    #[test]
    fn exhausted_caps_leave_budget_unspent() {
        let items = [item("a", 150.0, 0.5, 30.0, None)];
        let alloc = allocate(&items, 1_000_000.0).unwrap();
        assert!((alloc.spend_annual - 360.0).abs() < 1e-9);
        assert!(alloc.spend_annual < alloc.budget_annual);
    }

    #[test]
    fn sweep_lp_marginals_do_not_increase() {
        let items: Vec<AllocItem> = (0..30)
            .map(|i| {
                item(
                    &format!("p{i:02}"),
                    140.0 + 8.0 * i as f64,
                    0.7 - 0.02 * i as f64,
                    20.0 + (i % 5) as f64 * 15.0,
                    None,
                )
            })
            .collect();
        let budgets: Vec<f64> = (1..=12).map(|k| k as f64 * 1000.0).collect();
        let rows = sweep(&items, &budgets).unwrap();
        let mut prev_total = 0.0;
        let mut prev_marginal = f64::INFINITY;
        for row in &rows {
            assert!(row.gain_total >= prev_total - 1e-12);
            // Without gain limits the reported gain is the LP objective,
            // whose marginals cannot rise.
            assert!(row.gain_marginal <= prev_marginal + 1e-9);
            prev_total = row.gain_total;
            prev_marginal = row.gain_marginal;
        }
    }

    #[test]
    fn sweep_reported_marginals_may_rise_with_clamped_items() {
        // The most sensitive item restores almost nothing, so early budget
        // is diluted and the marginal gain rises once fill moves past it.
        let items = [
            item("a", 140.0, 0.7, 100.0, Some(5.0)),
            item("b", 180.0, 0.6, 100.0, None),
        ];
        let budgets = [100.0 * 12.0, 200.0 * 12.0];
        let rows = sweep(&items, &budgets).unwrap();
        assert!(rows[1].gain_marginal > rows[0].gain_marginal);
    }

    #[test]
    fn sweep_rejects_unordered_budgets() {
        let items = [item("a", 150.0, 0.5, 30.0, None)];
        assert!(sweep(&items, &[1200.0, 1200.0]).is_err());
        assert!(sweep(&items, &[-5.0]).is_err());
        assert!(sweep(&items, &[]).is_err());
    }

    #[test]
    fn losses_aggregate_into_bands_with_unit_shares() {
        let impacts = vec![
            PersonImpact {
                person_id: "a".into(),
                fpl: 145.0,
                weight: 1.0,
                premium_delta: 50.0,
                headroom: 60.0,
                me_abs: 0.6,
                loss_pp: 30.0,
            },
            PersonImpact {
                person_id: "b".into(),
                fpl: 250.0,
                weight: 1.0,
                premium_delta: 100.0,
                headroom: 120.0,
                me_abs: 0.3,
                loss_pp: 30.0,
            },
            PersonImpact {
                person_id: "c".into(),
                fpl: 350.0,
                weight: 2.0,
                premium_delta: 40.0,
                headroom: 50.0,
                me_abs: 0.2,
                loss_pp: 8.0,
            },
        ];
        let proj = project_losses(&impacts, &[138.0, 200.0, 300.0, 400.0]).unwrap();
        assert!((proj.baseline - 4.0).abs() < 1e-12);
        let expected_loss = 0.30 + 0.30 + 2.0 * 0.08;
        assert!((proj.total_loss - expected_loss).abs() < 1e-12);
        assert!((proj.projected - (4.0 - expected_loss)).abs() < 1e-12);
        let share_sum: f64 = proj.bands.iter().map(|b| b.share).sum();
        assert!((share_sum - 1.0).abs() < 1e-9);
        assert!((proj.bands[0].loss - 0.30).abs() < 1e-12);
        assert!((proj.bands[2].loss - 0.16).abs() < 1e-12);
    }

    #[test]
    fn zero_sensitivity_projects_zero_loss() {
        let impacts = vec![PersonImpact {
            person_id: "a".into(),
            fpl: 145.0,
            weight: 1.0,
            premium_delta: 50.0,
            headroom: 60.0,
            me_abs: 0.0,
            loss_pp: 0.0,
        }];
        let proj = project_losses(&impacts, &[138.0, 400.0]).unwrap();
        assert_eq!(proj.total_loss, 0.0);
        assert_eq!(proj.projected, proj.baseline);
        assert!(proj.bands.iter().all(|b| b.share == 0.0));
    }

    #[test]
    fn loss_clamp_tops_out_at_full_probability() {
        // 300 dollars at 0.67 pp/$ would be 201pp; the projection clamps
        // to 100.
        let me = MeBands::new(vec![138.0, 400.0], vec![0.67]).unwrap();
        assert_eq!(me.me_abs(145.0), 0.67);
        let loss = (300.0f64 * 0.67).clamp(0.0, 100.0);
        assert_eq!(loss, 100.0);
        let gain = (-20.0f64 * 0.67).clamp(0.0, 100.0);
        assert_eq!(gain, 0.0);
    }
}
