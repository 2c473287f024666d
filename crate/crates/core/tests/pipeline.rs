//! End-to-end runs of the shipped configs: the calibrated projection has to
//! stay inside its target windows, and the default scenario has to complete
//! every stage.

use std::path::Path;

use ptcsim_core::guidelines::PovertyGuidelines;
use ptcsim_core::policy::{project_impacts, project_losses, MeBands, MeSource};
use ptcsim_core::population::{generate, Person, Source};
use ptcsim_core::premium::PlanIndex;
use ptcsim_core::regimes::Regime;
use ptcsim_core::scenario::{run, PopulationInput, ScenarioConfig, Subcommand};

fn repo_config(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ScenarioConfig::from_path(&path).unwrap()
}

/// Projection targets for the default scenario, percent: total enrollment
/// loss and its split across the three loss bands.
const TOTAL_LOSS_PCT: f64 = 41.3;
const TOTAL_LOSS_TOL_PP: f64 = 3.0;
const BAND_SHARE_PCT: [f64; 3] = [58.3, 35.0, 6.8];
const BAND_SHARE_TOL_PP: f64 = 5.0;
const BAND_SENSITIVITIES: [f64; 5] = [0.67, 0.64, 0.29, 0.25, 0.20];

#[test]
fn calibrated_projection_stays_in_its_windows() {
    let cfg = repo_config("default.json");
    let PopulationInput::Generate { spec } = &cfg.population else {
        panic!("default config must generate its population");
    };
    let mut spec = spec.clone();
    spec.years.retain(|y| y.year == cfg.projection_year);
    let (persons, plans) = generate(&spec, cfg.seed).unwrap();
    let index = PlanIndex::build(&plans);
    let guidelines = PovertyGuidelines::builtin();
    let actual = Regime::builtin("ira").unwrap();
    let counterfactual = Regime::builtin("aca").unwrap();
    let enrollees: Vec<&Person> = persons
        .iter()
        .filter(|p| p.source == Source::Enrollee && p.year == cfg.projection_year)
        .collect();
    let bands = MeBands::new(cfg.effects_breaks.clone(), BAND_SENSITIVITIES.to_vec()).unwrap();
    let impacts = project_impacts(
        &enrollees,
        &actual,
        &counterfactual,
        &index,
        &guidelines,
        MeSource::Bands(&bands),
    )
    .unwrap();
    let proj = project_losses(&impacts, &cfg.loss_breaks).unwrap();

    let total_pct = 100.0 * proj.total_loss / proj.baseline;
    assert!(
        (total_pct - TOTAL_LOSS_PCT).abs() <= TOTAL_LOSS_TOL_PP,
        "total loss {total_pct:.1}% outside {TOTAL_LOSS_PCT} +-{TOTAL_LOSS_TOL_PP}pp"
    );
    assert_eq!(proj.bands.len(), BAND_SHARE_PCT.len());
    for (band, target) in proj.bands.iter().zip(BAND_SHARE_PCT) {
        let share_pct = 100.0 * band.share;
        assert!(
            (share_pct - target).abs() <= BAND_SHARE_TOL_PP,
            "band {} share {share_pct:.1}% outside {target} +-{BAND_SHARE_TOL_PP}pp",
            band.band
        );
    }
    assert!(
        (proj.projected - (proj.baseline - proj.total_loss)).abs() < 1e-9,
        "projection identity violated"
    );
}

#[test]
fn default_scenario_runs_end_to_end() {
    let mut cfg = repo_config("default.json");
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = dir.path().join("out").to_string_lossy().into_owned();

    let report = run(&cfg, Subcommand::All).unwrap();
    let names: Vec<String> = report
        .artifacts
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for expected in [
        "persons.csv",
        "plans.csv",
        "quotes_actual.csv",
        "quotes_counterfactual.csv",
        "fit_iv.json",
        "fit_ols.json",
        "effects.csv",
        "loss_projection.csv",
        "allocation.csv",
        "allocation_summary.json",
        "sweep.csv",
        "plot_data.csv",
    ] {
        assert!(names.contains(&expected.to_string()), "missing {expected}");
    }

    let fit_path = report
        .artifacts
        .iter()
        .find(|p| p.file_name().unwrap() == "fit_iv.json")
        .unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit_path).unwrap()).unwrap();
    assert_eq!(doc["fit"]["method"], "2sls");
    assert_eq!(doc["fit"]["first_stage"].as_array().unwrap().len(), 3);
    assert!(doc["fit"]["n"].as_u64().unwrap() > 300_000);
    assert_eq!(doc["provenance"]["seed"].as_u64().unwrap(), cfg.seed);
}
