//! Synthetic person-year pools, plan menus, and CSV ingestion.
//!
//! Generation targets the moments of each pool (income mean/SD, age
//! mean/SD, female share) rather than any particular microdata. Incomes
//! and ages are truncated normals solved from those moments; income is a
//! household-level quantity, so every member of a health insurance unit
//! shares one %FPL draw, while ages are correlated within the unit through
//! a shared latent factor. Given one root seed the output is a pure
//! function of the spec.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::truncnorm::{std_cdf, std_quantile, TruncNorm};

pub const FPL_MIN: f64 = 138.0;
pub const FPL_MAX: f64 = 400.0;
pub const AGE_MIN: u32 = 18;
pub const AGE_MAX: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Enrollee,
    Potential,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Enrollee => "enrollee",
            Source::Potential => "potential",
        }
    }

    pub fn parse(s: &str) -> Option<Source> {
        match s {
            "enrollee" => Some(Source::Enrollee),
            "potential" => Some(Source::Potential),
            _ => None,
        }
    }
}

/// One person-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub person_id: String,
    pub hiu_id: String,
    pub year: u16,
    pub rating_area: u32,
    pub age: u32,
    pub female: bool,
    pub fpl: f64,
    pub hiu_size: u32,
    pub weight: f64,
    pub insured: bool,
    pub source: Source,
}

impl Person {
    /// Field-level checks shared by the generator and the CSV reader.
    /// Returns a human-readable reason on the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(FPL_MIN..=FPL_MAX).contains(&self.fpl) {
            return Err(format!("fpl {} outside [{FPL_MIN}, {FPL_MAX}]", self.fpl));
        }
        if !(AGE_MIN..=AGE_MAX).contains(&self.age) {
            return Err(format!("age {} outside [{AGE_MIN}, {AGE_MAX}]", self.age));
        }
        if !(self.weight >= 0.0) {
            return Err(format!("negative weight {}", self.weight));
        }
        if self.hiu_size == 0 {
            return Err("hiu_size must be at least 1".into());
        }
        match self.source {
            Source::Enrollee => {
                if self.weight != 1.0 {
                    return Err(format!("enrollee weight must be 1, got {}", self.weight));
                }
                if !self.insured {
                    return Err("enrollee rows must be insured".into());
                }
            }
            Source::Potential => {
                if self.insured {
                    return Err("potential rows must be uninsured".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metal {
    Bronze,
    Silver,
    Gold,
    Platinum,
}

impl Metal {
    pub fn as_str(self) -> &'static str {
        match self {
            Metal::Bronze => "bronze",
            Metal::Silver => "silver",
            Metal::Gold => "gold",
            Metal::Platinum => "platinum",
        }
    }

    pub fn parse(s: &str) -> Option<Metal> {
        match s {
            "bronze" => Some(Metal::Bronze),
            "silver" => Some(Metal::Silver),
            "gold" => Some(Metal::Gold),
            "platinum" => Some(Metal::Platinum),
            _ => None,
        }
    }
}

/// One plan in one rating area and year. `base_premium` is the monthly
/// premium at age rating factor 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOffering {
    pub plan_id: String,
    pub metal: Metal,
    pub rating_area: u32,
    pub year: u16,
    pub base_premium: f64,
}

/// Moment targets for one pool (enrollees or potential enrollees of one
/// year). `weight_total` spreads survey-style weights uniformly over the
/// rows; absent, every row weighs 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_total: Option<f64>,
    pub income_mean: f64,
    pub income_sd: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    pub female_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearSpec {
    pub year: u16,
    pub enrollees: PoolSpec,
    pub potential: PoolSpec,
}

/// Deterministic plan menu: one bronze, three silver, one gold per rating
/// area and year. Offsets are dollars at the first year and area; premiums
/// scale multiplicatively across areas and years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanMenuSpec {
    pub silver_base: f64,
    pub benchmark_gap: f64,
    pub third_silver_gap: f64,
    pub bronze_discount: f64,
    pub gold_markup: f64,
    pub area_spread: f64,
    pub annual_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub rating_areas: u32,
    pub rating_area_shares: Vec<f64>,
    /// Probability of each health insurance unit size. JSON keys are
    /// strings to survive serde's tagged-enum content buffering.
    #[serde(with = "u32_key_map")]
    pub hiu_size_probs: BTreeMap<u32, f64>,
    /// Latent-factor correlation of member ages within a unit.
    pub hiu_age_corr: f64,
    pub years: Vec<YearSpec>,
    pub plans: PlanMenuSpec,
}

mod u32_key_map {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, f64>, s: S) -> Result<S::Ok, S::Error> {
        let by_text: BTreeMap<String, f64> =
            map.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        by_text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("hiu size key {k:?} is not an integer")))
            })
            .collect()
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rating_areas == 0 {
            return Err(Error::Config("rating_areas must be at least 1".into()));
        }
        if self.rating_area_shares.len() != self.rating_areas as usize {
            return Err(Error::Config(format!(
                "rating_area_shares has {} entries for {} areas",
                self.rating_area_shares.len(),
                self.rating_areas
            )));
        }
        let share_sum: f64 = self.rating_area_shares.iter().sum();
        if self.rating_area_shares.iter().any(|&s| s < 0.0) || (share_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "rating_area_shares must be non-negative and sum to 1, got sum {share_sum}"
            )));
        }
        if self.hiu_size_probs.is_empty() {
            return Err(Error::Config("hiu_size_probs is empty".into()));
        }
        let prob_sum: f64 = self.hiu_size_probs.values().sum();
        if (prob_sum - 1.0).abs() > 1e-9
            || self.hiu_size_probs.values().any(|&p| p < 0.0)
            || self.hiu_size_probs.keys().any(|&k| k == 0 || k > 8)
        {
            return Err(Error::Config(
                "hiu_size_probs must map sizes 1..=8 to non-negative probabilities summing to 1"
                    .into(),
            ));
        }
        if !(0.0..1.0).contains(&self.hiu_age_corr) {
            return Err(Error::Config(format!(
                "hiu_age_corr must be in [0, 1), got {}",
                self.hiu_age_corr
            )));
        }
        let mut seen_years = BTreeSet::new();
        for ys in &self.years {
            if !seen_years.insert(ys.year) {
                return Err(Error::Config(format!("duplicate year {}", ys.year)));
            }
            for (label, pool) in [("enrollees", &ys.enrollees), ("potential", &ys.potential)] {
                pool_checks(ys.year, label, pool)?;
            }
        }
        let p = &self.plans;
        let lowest = p.silver_base - p.bronze_discount;
        if lowest <= 0.0 || p.silver_base <= 0.0 {
            return Err(Error::Config("plan menu premiums must stay positive".into()));
        }
        if p.benchmark_gap < 0.0 || p.third_silver_gap < 0.0 || p.gold_markup < 0.0 {
            return Err(Error::Config("plan menu gaps must be non-negative".into()));
        }
        if p.area_spread <= -1.0 || p.annual_growth <= -1.0 {
            return Err(Error::Config("plan menu multipliers must stay positive".into()));
        }
        Ok(())
    }
}

fn pool_checks(year: u16, label: &str, pool: &PoolSpec) -> Result<()> {
    if pool.count == 0 {
        return Ok(());
    }
    if !(pool.income_mean > FPL_MIN && pool.income_mean < FPL_MAX) {
        return Err(Error::Config(format!(
            "{year} {label}: income_mean {} outside ({FPL_MIN}, {FPL_MAX})",
            pool.income_mean
        )));
    }
    if !(pool.age_mean > AGE_MIN as f64 && pool.age_mean < AGE_MAX as f64) {
        return Err(Error::Config(format!(
            "{year} {label}: age_mean {} outside ({AGE_MIN}, {AGE_MAX})",
            pool.age_mean
        )));
    }
    if !(pool.income_sd > 0.0) || !(pool.age_sd > 0.0) {
        return Err(Error::Config(format!(
            "{year} {label}: moment SDs must be positive"
        )));
    }
    if !(0.0..=1.0).contains(&pool.female_share) {
        return Err(Error::Config(format!(
            "{year} {label}: female_share {} outside [0, 1]",
            pool.female_share
        )));
    }
    if let Some(total) = pool.weight_total {
        if !(total > 0.0) {
            return Err(Error::Config(format!(
                "{year} {label}: weight_total must be positive"
            )));
        }
    }
    Ok(())
}

/// Draw every pool in the spec. Deterministic in (spec, root_seed): each
/// pool consumes its own labeled random stream, so adding a year or pool
/// leaves the others' draws untouched.
pub fn generate(spec: &PopulationSpec, root_seed: u64) -> Result<(Vec<Person>, Vec<PlanOffering>)> {
    spec.validate()?;
    let mut persons = Vec::new();
    for ys in &spec.years {
        for (source, pool) in [
            (Source::Enrollee, &ys.enrollees),
            (Source::Potential, &ys.potential),
        ] {
            let label = format!("population/{}/{}", ys.year, source.as_str());
            generate_pool(spec, ys.year, source, pool, root_seed, &label, &mut persons)?;
        }
    }
    let plans = build_plans(spec)?;
    Ok((persons, plans))
}

fn generate_pool(
    spec: &PopulationSpec,
    year: u16,
    source: Source,
    pool: &PoolSpec,
    root_seed: u64,
    label: &str,
    out: &mut Vec<Person>,
) -> Result<()> {
    if pool.count == 0 {
        return Ok(());
    }
    let income = TruncNorm::from_moments(pool.income_mean, pool.income_sd, FPL_MIN, FPL_MAX)
        .map_err(|e| Error::Numerics(format!("{year} {} income target: {e}", source.as_str())))?;
    let age_dist = TruncNorm::from_moments(
        pool.age_mean,
        pool.age_sd,
        AGE_MIN as f64,
        AGE_MAX as f64,
    )
    .map_err(|e| Error::Numerics(format!("{year} {} age target: {e}", source.as_str())))?;

    let weight = match pool.weight_total {
        Some(total) => total / f64::from(pool.count),
        None => 1.0,
    };
    let tag = match source {
        Source::Enrollee => 'E',
        Source::Potential => 'U',
    };
    let rho = spec.hiu_age_corr;
    let shared = rho.sqrt();
    let own = (1.0 - rho).sqrt();

    let mut rng = seed::rng_for(root_seed, label);
    let mut made = 0u32;
    let mut hiu_seq = 0u32;
    while made < pool.count {
        hiu_seq += 1;
        let mut size = draw_hiu_size(&mut rng, &spec.hiu_size_probs);
        size = size.min(pool.count - made);
        let rating_area = draw_area(&mut rng, &spec.rating_area_shares);
        let fpl = income.quantile(rng.gen::<f64>());
        let age_latent = std_quantile(rng.gen::<f64>());
        let hiu_id = format!("H{year}-{tag}-{hiu_seq:06}");
        for _ in 0..size {
            made += 1;
            let e = std_quantile(rng.gen::<f64>());
            let u_age = std_cdf(shared * age_latent + own * e);
            let age = age_dist.quantile(u_age).round() as u32;
            let age = age.clamp(AGE_MIN, AGE_MAX);
            let female = rng.gen::<f64>() < pool.female_share;
            out.push(Person {
                person_id: format!("{tag}{year}-{made:06}"),
                hiu_id: hiu_id.clone(),
                year,
                rating_area,
                age,
                female,
                fpl,
                hiu_size: size,
                weight,
                insured: source == Source::Enrollee,
                source,
            });
        }
    }
    Ok(())
}

fn draw_hiu_size(rng: &mut impl Rng, probs: &BTreeMap<u32, f64>) -> u32 {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (&size, &p) in probs {
        acc += p;
        if u < acc {
            return size;
        }
    }
    *probs.keys().next_back().unwrap()
}

fn draw_area(rng: &mut impl Rng, shares: &[f64]) -> u32 {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &s) in shares.iter().enumerate() {
        acc += s;
        if u < acc {
            return i as u32 + 1;
        }
    }
    shares.len() as u32
}

/// Expand the plan menu across every rating area and year in the spec.
pub fn build_plans(spec: &PopulationSpec) -> Result<Vec<PlanOffering>> {
    spec.validate()?;
    let menu = &spec.plans;
    let first_year = spec.years.iter().map(|y| y.year).min().unwrap_or(0);
    let mut plans = Vec::new();
    for ys in &spec.years {
        let growth = (1.0 + menu.annual_growth).powi(i32::from(ys.year - first_year));
        for area in 1..=spec.rating_areas {
            let m = (1.0 + menu.area_spread * f64::from(area - 1)) * growth;
            let silver1 = menu.silver_base;
            let silver2 = silver1 + menu.benchmark_gap;
            let silver3 = silver2 + menu.third_silver_gap;
            let entries = [
                ("B1", Metal::Bronze, silver1 - menu.bronze_discount),
                ("S1", Metal::Silver, silver1),
                ("S2", Metal::Silver, silver2),
                ("S3", Metal::Silver, silver3),
                ("G1", Metal::Gold, silver3 + menu.gold_markup),
            ];
            for (code, metal, base) in entries {
                let base_premium = (base * m * 100.0).round() / 100.0;
                if base_premium <= 0.0 {
                    return Err(Error::Config(format!(
                        "plan menu produces non-positive premium in area {area} year {}",
                        ys.year
                    )));
                }
                plans.push(PlanOffering {
                    plan_id: format!("P{}-A{area}-{code}", ys.year),
                    metal,
                    rating_area: area,
                    year: ys.year,
                    base_premium,
                });
            }
        }
    }
    Ok(plans)
}

/// A row the reader refused, with its 1-based data row number.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PersonIngest {
    pub persons: Vec<Person>,
    pub rejects: Vec<RejectedRow>,
}

#[derive(Debug, Clone, Default)]
pub struct PlanIngest {
    pub plans: Vec<PlanOffering>,
    pub rejects: Vec<RejectedRow>,
}

pub const PERSON_COLUMNS: [&str; 11] = [
    "person_id",
    "hiu_id",
    "year",
    "rating_area",
    "age",
    "female",
    "fpl",
    "hiu_size",
    "weight",
    "insured",
    "source",
];

pub const PLAN_COLUMNS: [&str; 5] = ["plan_id", "metal", "rating_area", "year", "base_premium"];

#[derive(Debug, Deserialize)]
struct PersonRecord {
    person_id: String,
    hiu_id: String,
    year: u16,
    rating_area: u32,
    age: u32,
    female: u8,
    fpl: f64,
    hiu_size: u32,
    weight: f64,
    insured: u8,
    source: String,
}

/// Read persons from CSV. Malformed or out-of-range rows are collected as
/// rejects with their row numbers; structural problems (missing columns,
/// duplicate ids) fail the whole read.
pub fn ingest_persons(path: &Path) -> Result<PersonIngest> {
    let mut reader = open_csv(path, &PERSON_COLUMNS)?;
    let mut ingest = PersonIngest::default();
    let mut seen = BTreeSet::new();
    for (idx, rec) in reader.deserialize::<PersonRecord>().enumerate() {
        let row = idx + 1;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                ingest.rejects.push(RejectedRow {
                    row,
                    reason: format!("unparseable: {e}"),
                });
                continue;
            }
        };
        if !seen.insert(rec.person_id.clone()) {
            return Err(Error::Data(format!(
                "duplicate person_id {} at row {row}",
                rec.person_id
            )));
        }
        let source = match Source::parse(&rec.source) {
            Some(s) => s,
            None => {
                ingest.rejects.push(RejectedRow {
                    row,
                    reason: format!("unknown source {:?}", rec.source),
                });
                continue;
            }
        };
        let person = Person {
            person_id: rec.person_id,
            hiu_id: rec.hiu_id,
            year: rec.year,
            rating_area: rec.rating_area,
            age: rec.age,
            female: rec.female != 0,
            fpl: rec.fpl,
            hiu_size: rec.hiu_size,
            weight: rec.weight,
            insured: rec.insured != 0,
            source,
        };
        match person.check() {
            Ok(()) => ingest.persons.push(person),
            Err(reason) => ingest.rejects.push(RejectedRow { row, reason }),
        }
    }
    Ok(ingest)
}

#[derive(Debug, Deserialize)]
struct PlanRecord {
    plan_id: String,
    metal: String,
    rating_area: u32,
    year: u16,
    base_premium: f64,
}

pub fn ingest_plans(path: &Path) -> Result<PlanIngest> {
    let mut reader = open_csv(path, &PLAN_COLUMNS)?;
    let mut ingest = PlanIngest::default();
    let mut seen = BTreeSet::new();
    for (idx, rec) in reader.deserialize::<PlanRecord>().enumerate() {
        let row = idx + 1;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                ingest.rejects.push(RejectedRow {
                    row,
                    reason: format!("unparseable: {e}"),
                });
                continue;
            }
        };
        if !seen.insert(rec.plan_id.clone()) {
            return Err(Error::Data(format!(
                "duplicate plan_id {} at row {row}",
                rec.plan_id
            )));
        }
        let metal = match Metal::parse(&rec.metal) {
            Some(m) => m,
            None => {
                ingest.rejects.push(RejectedRow {
                    row,
                    reason: format!("unknown metal {:?}", rec.metal),
                });
                continue;
            }
        };
        if !(rec.base_premium > 0.0) {
            ingest.rejects.push(RejectedRow {
                row,
                reason: format!("non-positive base_premium {}", rec.base_premium),
            });
            continue;
        }
        ingest.plans.push(PlanOffering {
            plan_id: rec.plan_id,
            metal,
            rating_area: rec.rating_area,
            year: rec.year,
            base_premium: rec.base_premium,
        });
    }
    Ok(ingest)
}

fn open_csv(path: &Path, required: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header of {}: {e}", path.display())))?;
    let have: BTreeSet<&str> = headers.iter().collect();
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|c| !have.contains(c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{} is missing columns: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(reader)
}
