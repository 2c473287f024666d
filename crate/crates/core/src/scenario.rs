//! Config-driven pipeline: population, quotes, demand fit, projection,
//! allocation, sweep, and the artifacts each stage writes.
//!
//! Every run is a pure function of the scenario config. Each subcommand
//! recomputes its inputs in memory from the config and root seed rather
//! than reading earlier artifacts, so running stages separately writes
//! byte-identical files to running `all` once. Artifacts embed the
//! SHA-256 hash of the effective config and the seed: CSV files as a
//! leading `#` comment line (the readers skip those), JSON files as a
//! `provenance` object.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::demand::{self, DemandFit, DesignMatrix};
use crate::error::{Error, Result};
use crate::guidelines::PovertyGuidelines;
use crate::policy::{self, AllocItem, AllocationResult, LossProjection, MeSource, PersonImpact, SweepRow};
use crate::population::{self, Person, PlanOffering, PopulationSpec, Source, PERSON_COLUMNS, PLAN_COLUMNS};
use crate::premium::{quote, PlanIndex, SubsidyQuote};
use crate::regimes::Regime;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<OutputFormat> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

/// Where the person and plan tables come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum PopulationInput {
    /// Draw a synthetic population from moment targets.
    Generate { spec: PopulationSpec },
    /// Load person and plan CSV files.
    Ingest { persons_path: String, plans_path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Root seed; every random stream is derived from it by label.
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Regime in force, e.g. "builtin:ira" or a path to a regime file.
    #[serde(default = "default_actual_regime")]
    pub actual_regime: String,
    /// Comparison regime used for instruments and deltas.
    #[serde(default = "default_counterfactual_regime")]
    pub counterfactual_regime: String,
    /// Path to a poverty guideline table; bundled table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poverty_guidelines: Option<String>,
    /// Enrollee cohort the projection and allocation stages run on.
    #[serde(default = "default_projection_year")]
    pub projection_year: u16,
    #[serde(default = "default_budgets")]
    pub budgets_annual: Vec<f64>,
    #[serde(default = "default_effects_breaks")]
    pub effects_breaks: Vec<f64>,
    #[serde(default = "default_loss_breaks")]
    pub loss_breaks: Vec<f64>,
    /// Serialization of the report artifacts; data tables are always CSV.
    #[serde(default)]
    pub format: OutputFormat,
    pub population: PopulationInput,
    /// Directory relative paths inside the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_actual_regime() -> String {
    "builtin:ira".into()
}

fn default_counterfactual_regime() -> String {
    "builtin:aca".into()
}

fn default_projection_year() -> u16 {
    2024
}

fn default_budgets() -> Vec<f64> {
    (1..=15).map(|k| f64::from(k) * 10_000_000.0).collect()
}

fn default_effects_breaks() -> Vec<f64> {
    vec![138.0, 150.0, 200.0, 250.0, 300.0, 400.0]
}

fn default_loss_breaks() -> Vec<f64> {
    vec![138.0, 200.0, 300.0, 400.0]
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ScenarioConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ScenarioConfig::from_json_str(&text)?;
        cfg.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.budgets_annual.is_empty() {
            return Err(Error::Config("budgets_annual must not be empty".into()));
        }
        if self.budgets_annual.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::Config("budgets_annual must be non-negative".into()));
        }
        if self.budgets_annual.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("budgets_annual must be strictly increasing".into()));
        }
        for (name, breaks) in [
            ("effects_breaks", &self.effects_breaks),
            ("loss_breaks", &self.loss_breaks),
        ] {
            if breaks.len() < 2 || breaks.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::Config(format!(
                    "{name} needs at least two strictly increasing values"
                )));
            }
        }
        if let PopulationInput::Generate { spec } = &self.population {
            spec.validate()?;
            if !spec.years.iter().any(|y| y.year == self.projection_year) {
                return Err(Error::Config(format!(
                    "projection_year {} is not among the population years",
                    self.projection_year
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective config serialization; stamped into every
    /// artifact.
    pub fn config_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        Ok(format!("{:x}", hasher.finalize()))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Generate,
    Quote,
    Fit,
    Effects,
    Project,
    Allocate,
    Sweep,
    All,
}

impl Subcommand {
    pub fn parse(s: &str) -> Option<Subcommand> {
        Some(match s {
            "generate" => Subcommand::Generate,
            "quote" => Subcommand::Quote,
            "fit" => Subcommand::Fit,
            "effects" => Subcommand::Effects,
            "project" => Subcommand::Project,
            "allocate" => Subcommand::Allocate,
            "sweep" => Subcommand::Sweep,
            "all" => Subcommand::All,
            _ => return None,
        })
    }
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Run one subcommand against a validated config, writing its artifacts
/// under the config's output directory.
pub fn run(config: &ScenarioConfig, sub: Subcommand) -> Result<RunReport> {
    config.validate()?;
    let mut stage = Stage::new(config)?;
    let mut report = RunReport::default();
    stage.drain_notes(&mut report);
    match sub {
        Subcommand::Generate => stage.write_population(&mut report)?,
        Subcommand::Quote => stage.write_quotes(&mut report)?,
        Subcommand::Fit => stage.write_fits(&mut report)?,
        Subcommand::Effects => stage.write_effects(&mut report)?,
        Subcommand::Project => stage.write_projection(&mut report)?,
        Subcommand::Allocate => stage.write_allocation(&mut report)?,
        Subcommand::Sweep => stage.write_sweep(&mut report)?,
        Subcommand::All => {
            stage.write_population(&mut report)?;
            stage.write_quotes(&mut report)?;
            stage.write_fits(&mut report)?;
            stage.write_effects(&mut report)?;
            stage.write_projection(&mut report)?;
            stage.write_allocation(&mut report)?;
            stage.write_sweep(&mut report)?;
        }
    }
    stage.drain_notes(&mut report);
    Ok(report)
}

/// Lazily computed pipeline state shared by the subcommand writers.
struct Stage<'c> {
    cfg: &'c ScenarioConfig,
    hash: String,
    actual: Regime,
    counterfactual: Regime,
    guidelines: PovertyGuidelines,
    persons: Vec<Person>,
    plans: Vec<PlanOffering>,
    index: PlanIndex,
    quotes: Option<(BTreeMap<String, SubsidyQuote>, BTreeMap<String, SubsidyQuote>)>,
    design: Option<DesignMatrix>,
    fit_iv: Option<DemandFit>,
    fit_ols: Option<DemandFit>,
    impacts: Option<Vec<PersonImpact>>,
    notes: Vec<String>,
}

fn resolve_regime(cfg: &ScenarioConfig, reference: &str) -> Result<Regime> {
    match reference.strip_prefix("builtin:") {
        Some(name) => Regime::builtin(name),
        None => Regime::from_path(&cfg.resolve(reference)),
    }
}

impl<'c> Stage<'c> {
    fn new(cfg: &'c ScenarioConfig) -> Result<Stage<'c>> {
        let hash = cfg.config_hash()?;
        let actual = resolve_regime(cfg, &cfg.actual_regime)?;
        let counterfactual = resolve_regime(cfg, &cfg.counterfactual_regime)?;
        let guidelines = match &cfg.poverty_guidelines {
            Some(p) => PovertyGuidelines::from_path(&cfg.resolve(p))?,
            None => PovertyGuidelines::builtin(),
        };
        let mut notes = Vec::new();
        let (persons, plans) = match &cfg.population {
            PopulationInput::Generate { spec } => population::generate(spec, cfg.seed)?,
            PopulationInput::Ingest { persons_path, plans_path } => {
                let pi = population::ingest_persons(&cfg.resolve(persons_path))?;
                let li = population::ingest_plans(&cfg.resolve(plans_path))?;
                if !pi.rejects.is_empty() {
                    notes.push(format!("rejected {} person rows on ingest", pi.rejects.len()));
                }
                if !li.rejects.is_empty() {
                    notes.push(format!("rejected {} plan rows on ingest", li.rejects.len()));
                }
                (pi.persons, li.plans)
            }
        };
        if persons.is_empty() {
            return Err(Error::Data("population is empty".into()));
        }
        let index = PlanIndex::build(&plans);
        Ok(Stage {
            cfg,
            hash,
            actual,
            counterfactual,
            guidelines,
            persons,
            plans,
            index,
            quotes: None,
            design: None,
            fit_iv: None,
            fit_ols: None,
            impacts: None,
            notes,
        })
    }

    fn drain_notes(&mut self, report: &mut RunReport) {
        report.notes.append(&mut self.notes);
    }

    fn ensure_quotes(
        &mut self,
    ) -> Result<(&BTreeMap<String, SubsidyQuote>, &BTreeMap<String, SubsidyQuote>)> {
        if self.quotes.is_none() {
            let mut actual = BTreeMap::new();
            let mut counterfactual = BTreeMap::new();
            let mut skipped = 0usize;
            for p in &self.persons {
                if self.index.pair(p.rating_area, p.year).is_err() {
                    skipped += 1;
                    continue;
                }
                let qa = quote(p, &self.actual, &self.index, &self.guidelines)?;
                let qc = quote(p, &self.counterfactual, &self.index, &self.guidelines)?;
                actual.insert(p.person_id.clone(), qa);
                counterfactual.insert(p.person_id.clone(), qc);
            }
            if skipped > 0 {
                self.notes
                    .push(format!("skipped {skipped} persons without a quotable plan menu"));
            }
            if actual.is_empty() {
                return Err(Error::Data("no person could be quoted".into()));
            }
            self.quotes = Some((actual, counterfactual));
        }
        let (a, c) = self.quotes.as_ref().unwrap();
        Ok((a, c))
    }

    fn ensure_design(&mut self) -> Result<&DesignMatrix> {
        if self.design.is_none() {
            self.ensure_quotes()?;
            let (a, c) = self.quotes.as_ref().unwrap();
            let design = demand::build_design(&self.persons, a, c)?;
            if design.excluded > 0 {
                self.notes
                    .push(format!("excluded {} persons from the design (missing quotes)", design.excluded));
            }
            self.design = Some(design);
        }
        Ok(self.design.as_ref().unwrap())
    }

    fn ensure_fits(&mut self) -> Result<(&DemandFit, &DemandFit)> {
        if self.fit_iv.is_none() {
            self.ensure_design()?;
            let design = self.design.as_ref().unwrap();
            self.fit_iv = Some(demand::fit_2sls(design)?);
            self.fit_ols = Some(demand::fit_ols(design)?);
        }
        Ok((self.fit_iv.as_ref().unwrap(), self.fit_ols.as_ref().unwrap()))
    }

    fn ensure_impacts(&mut self) -> Result<&Vec<PersonImpact>> {
        if self.impacts.is_none() {
            self.ensure_fits()?;
            let fit = self.fit_iv.as_ref().unwrap();
            let enrollees: Vec<&Person> = self
                .persons
                .iter()
                .filter(|p| p.source == Source::Enrollee && p.year == self.cfg.projection_year)
                .collect();
            if enrollees.is_empty() {
                return Err(Error::Data(format!(
                    "no enrollees in projection year {}",
                    self.cfg.projection_year
                )));
            }
            let impacts = policy::project_impacts(
                &enrollees,
                &self.actual,
                &self.counterfactual,
                &self.index,
                &self.guidelines,
                MeSource::Fit(fit),
            )?;
            self.impacts = Some(impacts);
        }
        Ok(self.impacts.as_ref().unwrap())
    }

    fn alloc_items(&mut self) -> Result<Vec<AllocItem>> {
        let impacts = self.ensure_impacts()?;
        Ok(impacts.iter().map(AllocItem::from_impact).collect())
    }

    fn provenance_line(&self, artifact: &str) -> String {
        format!(
            "# artifact={artifact} config_hash={} seed={}\n",
            self.hash, self.cfg.seed
        )
    }

    fn provenance(&self, artifact: &'c str) -> Provenance<'_> {
        Provenance {
            artifact,
            config_hash: &self.hash,
            seed: self.cfg.seed,
        }
    }

    fn write_file(&self, name: &str, content: &str, report: &mut RunReport) -> Result<()> {
        let dir = Path::new(&self.cfg.out_dir);
        fs::create_dir_all(dir)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        fs::write(&path, content)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        report.artifacts.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T, report: &mut RunReport) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_file(name, &text, report)
    }

    fn write_population(&mut self, report: &mut RunReport) -> Result<()> {
        let mut out = self.provenance_line("persons");
        out.push_str(&PERSON_COLUMNS.join(","));
        out.push('\n');
        for p in &self.persons {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                p.person_id,
                p.hiu_id,
                p.year,
                p.rating_area,
                p.age,
                u8::from(p.female),
                stat(p.fpl),
                p.hiu_size,
                stat(p.weight),
                u8::from(p.insured),
                p.source.as_str()
            );
        }
        self.write_file("persons.csv", &out, report)?;

        let mut out = self.provenance_line("plans");
        out.push_str(&PLAN_COLUMNS.join(","));
        out.push('\n');
        for plan in &self.plans {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                plan.plan_id,
                plan.metal.as_str(),
                plan.rating_area,
                plan.year,
                money(plan.base_premium)
            );
        }
        self.write_file("plans.csv", &out, report)
    }

    fn write_quotes(&mut self, report: &mut RunReport) -> Result<()> {
        self.ensure_quotes()?;
        let (actual, counterfactual) = self.quotes.as_ref().unwrap();
        for (name, quotes) in [
            ("quotes_actual", actual),
            ("quotes_counterfactual", counterfactual),
        ] {
            let mut out = self.provenance_line(name);
            out.push_str(
                "person_id,regime,eligible,benchmark_premium,min_silver_premium,\
                 expected_contribution,federal_ptc,state_supplement,post_subsidy_premium\n",
            );
            for q in quotes.values() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    q.person_id,
                    q.regime,
                    u8::from(q.eligible),
                    money(q.benchmark_premium),
                    money(q.min_silver_premium),
                    money(q.expected_contribution),
                    money(q.federal_ptc),
                    money(q.state_supplement),
                    money(q.post_subsidy_premium)
                );
            }
            self.write_file(&format!("{name}.csv"), &out, report)?;
        }
        Ok(())
    }

    fn write_fits(&mut self, report: &mut RunReport) -> Result<()> {
        self.ensure_fits()?;
        let iv = FitArtifact {
            provenance: self.provenance("fit_iv"),
            fit: self.fit_iv.as_ref().unwrap(),
        };
        self.write_json("fit_iv.json", &iv, report)?;
        let ols = FitArtifact {
            provenance: self.provenance("fit_ols"),
            fit: self.fit_ols.as_ref().unwrap(),
        };
        self.write_json("fit_ols.json", &ols, report)
    }

    fn write_effects(&mut self, report: &mut RunReport) -> Result<()> {
        self.ensure_fits()?;
        let fit = self.fit_iv.as_ref().unwrap();
        let design = self.design.as_ref().unwrap();
        let rows = demand::effects_table(fit, design, &self.cfg.effects_breaks)?;
        match self.cfg.format {
            OutputFormat::Csv => {
                let mut out = self.provenance_line("effects");
                out.push_str(
                    "band,fpl_lo,fpl_hi,enrolled_per_year,mean_premium,coverage_rate,\
                     marginal_effect,marginal_effect_se,semi_elasticity,semi_elasticity_se,\
                     elasticity,elasticity_se,fplz_mean,gt200_share\n",
                );
                for r in &rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        r.band,
                        r.fpl_lo,
                        r.fpl_hi,
                        stat(r.enrolled_per_year),
                        money(r.mean_premium),
                        stat(r.coverage_rate),
                        stat(r.marginal_effect),
                        stat(r.marginal_effect_se),
                        stat(r.semi_elasticity),
                        stat(r.semi_elasticity_se),
                        stat(r.elasticity),
                        stat(r.elasticity_se),
                        stat(r.fplz_mean),
                        stat(r.gt200_share)
                    );
                }
                self.write_file("effects.csv", &out, report)
            }
            OutputFormat::Json => {
                let artifact = RowsArtifact {
                    provenance: self.provenance("effects"),
                    rows: &rows,
                };
                self.write_json("effects.json", &artifact, report)
            }
        }
    }

    fn write_projection(&mut self, report: &mut RunReport) -> Result<()> {
        let loss_breaks = self.cfg.loss_breaks.clone();
        let impacts = self.ensure_impacts()?;
        let projection = policy::project_losses(impacts, &loss_breaks)?;
        match self.cfg.format {
            OutputFormat::Csv => {
                let mut out = self.provenance_line("loss_projection");
                out.push_str("band,fpl_lo,fpl_hi,loss_persons,loss_share\n");
                for b in &projection.bands {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        b.band,
                        b.fpl_lo,
                        b.fpl_hi,
                        stat(b.loss),
                        stat(b.share)
                    );
                }
                let share_total: f64 = projection.bands.iter().map(|b| b.share).sum();
                let _ = writeln!(
                    out,
                    "total,{},{},{},{}",
                    loss_breaks.first().unwrap(),
                    loss_breaks.last().unwrap(),
                    stat(projection.total_loss),
                    stat(share_total)
                );
                let _ = writeln!(out, "baseline,,,{},", stat(projection.baseline));
                let _ = writeln!(out, "projected,,,{},", stat(projection.projected));
                self.write_file("loss_projection.csv", &out, report)
            }
            OutputFormat::Json => {
                let artifact = ProjectionArtifact {
                    provenance: self.provenance("loss_projection"),
                    projection: &projection,
                };
                self.write_json("loss_projection.json", &artifact, report)
            }
        }
    }

    fn write_allocation(&mut self, report: &mut RunReport) -> Result<()> {
        let budget = self.cfg.budgets_annual[0];
        let items = self.alloc_items()?;
        let alloc = policy::allocate(&items, budget)?;
        match self.cfg.format {
            OutputFormat::Csv => {
                let mut out = self.provenance_line("allocation");
                out.push_str(
                    "person_id,fpl,me_abs,cap_monthly,restorable_loss_pp,subsidy_monthly\n",
                );
                for (item, s) in items.iter().zip(&alloc.subsidies) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        item.id,
                        stat(item.fpl),
                        stat(item.me_abs),
                        money(item.cap),
                        stat(item.gain_limit_pp.unwrap_or(0.0)),
                        money(*s)
                    );
                }
                self.write_file("allocation.csv", &out, report)?;
            }
            OutputFormat::Json => {
                let rows: Vec<AllocationRow<'_>> = items
                    .iter()
                    .zip(&alloc.subsidies)
                    .map(|(item, s)| AllocationRow {
                        person_id: &item.id,
                        fpl: item.fpl,
                        me_abs: item.me_abs,
                        cap_monthly: item.cap,
                        restorable_loss_pp: item.gain_limit_pp.unwrap_or(0.0),
                        subsidy_monthly: *s,
                    })
                    .collect();
                let artifact = RowsArtifact {
                    provenance: self.provenance("allocation"),
                    rows: &rows,
                };
                self.write_json("allocation.json", &artifact, report)?;
            }
        }
        let summary = AllocationSummaryArtifact {
            provenance: self.provenance("allocation_summary"),
            summary: AllocationSummary::from_result(&alloc),
        };
        self.write_json("allocation_summary.json", &summary, report)
    }

    fn write_sweep(&mut self, report: &mut RunReport) -> Result<()> {
        let budgets = self.cfg.budgets_annual.clone();
        let items = self.alloc_items()?;
        let rows = policy::sweep(&items, &budgets)?;
        match self.cfg.format {
            OutputFormat::Csv => {
                let mut out = self.provenance_line("sweep");
                out.push_str(SWEEP_UNITS_LINE);
                out.push_str(
                    "budget_annual,spend_annual,gain_total,gain_marginal,marginal_fpl,\
                     mean_subsidy_monthly,ce_total_per_10m,ce_marginal_per_10m,\
                     derived_marginal_cost_per_pp_annual\n",
                );
                for r in &rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        money(r.budget_annual),
                        money(r.spend_annual),
                        stat(r.gain_total),
                        stat(r.gain_marginal),
                        stat(r.marginal_fpl),
                        money(r.mean_subsidy_monthly),
                        stat(r.ce_total_per_10m),
                        stat(r.ce_marginal_per_10m),
                        money(r.derived_marginal_cost_per_pp_annual)
                    );
                }
                self.write_file("sweep.csv", &out, report)?;
            }
            OutputFormat::Json => {
                let artifact = RowsArtifact {
                    provenance: self.provenance("sweep"),
                    rows: &rows,
                };
                self.write_json("sweep.json", &artifact, report)?;
            }
        }

        let mut out = self.provenance_line("plot_data");
        out.push_str("series,x,y\n");
        for (series, value) in [
            ("gain_total", &|r: &SweepRow| r.gain_total),
            ("gain_marginal", &|r: &SweepRow| r.gain_marginal),
            ("marginal_fpl", &|r: &SweepRow| r.marginal_fpl),
            ("mean_subsidy_monthly", &|r: &SweepRow| r.mean_subsidy_monthly),
            ("ce_total_per_10m", &|r: &SweepRow| r.ce_total_per_10m),
            ("ce_marginal_per_10m", &|r: &SweepRow| r.ce_marginal_per_10m),
        ] as [(&str, &dyn Fn(&SweepRow) -> f64); 6]
        {
            for r in &rows {
                let _ = writeln!(out, "{series},{},{}", money(r.budget_annual), stat(value(r)));
            }
        }
        self.write_file("plot_data.csv", &out, report)
    }
}

const SWEEP_UNITS_LINE: &str = "# units: budget_annual=$/yr spend_annual=$/yr gain_total=persons \
gain_marginal=persons marginal_fpl=%FPL mean_subsidy_monthly=$/mo \
ce_total_per_10m=persons/$10M ce_marginal_per_10m=persons/$10M \
derived_marginal_cost_per_pp_annual=$/yr/pp\n";

#[derive(Serialize)]
struct Provenance<'a> {
    artifact: &'a str,
    config_hash: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    provenance: Provenance<'a>,
    fit: &'a DemandFit,
}

#[derive(Serialize)]
struct RowsArtifact<'a, T: Serialize> {
    provenance: Provenance<'a>,
    rows: &'a [T],
}

#[derive(Serialize)]
struct ProjectionArtifact<'a> {
    provenance: Provenance<'a>,
    projection: &'a LossProjection,
}

#[derive(Serialize)]
struct AllocationRow<'a> {
    person_id: &'a str,
    fpl: f64,
    me_abs: f64,
    cap_monthly: f64,
    restorable_loss_pp: f64,
    subsidy_monthly: f64,
}

#[derive(Serialize)]
struct AllocationSummaryArtifact<'a> {
    provenance: Provenance<'a>,
    summary: AllocationSummary,
}

#[derive(Serialize)]
struct AllocationSummary {
    budget_annual: f64,
    spend_annual: f64,
    funded_enrollees: usize,
    gain_persons: f64,
    lp_gain_persons: f64,
    marginal_fpl: f64,
    marginal_me_abs: f64,
    mean_subsidy_monthly: f64,
    ce_per_10m: f64,
}

impl AllocationSummary {
    fn from_result(alloc: &AllocationResult) -> AllocationSummary {
        AllocationSummary {
            budget_annual: alloc.budget_annual,
            spend_annual: alloc.spend_annual,
            funded_enrollees: alloc.subsidies.iter().filter(|s| **s > 0.0).count(),
            gain_persons: alloc.gain_persons,
            lp_gain_persons: alloc.lp_gain_persons,
            marginal_fpl: alloc.marginal_fpl,
            marginal_me_abs: alloc.marginal_me_abs,
            mean_subsidy_monthly: alloc.mean_subsidy_monthly,
            ce_per_10m: alloc.ce_per_10m,
        }
    }
}

/// Fixed-point dollars for artifacts, with negative zero normalized.
fn money(v: f64) -> String {
    canon(format!("{v:.2}"))
}

/// Six-decimal statistics for artifacts, with negative zero normalized.
fn stat(v: f64) -> String {
    canon(format!("{v:.6}"))
}

fn canon(s: String) -> String {
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}
