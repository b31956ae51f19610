//! `monogp cv`: cross-validation reports, optionally comparing both model
//! variants on identical folds and seeds.

use std::path::Path;

use monogp::data::{ingest, standardize};
use monogp::evaluation::{compare, run_cv, EvalReport, ModelVariant};

use crate::config::{self, Overrides, SchemeChoice, VariantChoice};
use crate::manifest::{ensure_dir, write_atomic, write_json, ManifestBuilder};
use crate::CliError;

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes `report{suffix}.json`, `folds{suffix}.csv`, `records{suffix}.csv`.
fn write_report(dir: &Path, suffix: &str, report: &EvalReport) -> Result<(), CliError> {
    write_json(&dir.join(format!("report{suffix}.json")), report)?;

    let mut folds = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut folds);
        w.write_record(["fold", "label", "n_held_out", "elpd", "mse"])?;
        for f in &report.folds {
            w.write_record([
                f.fold.to_string(),
                f.label.clone(),
                f.n_held_out.to_string(),
                num(f.elpd),
                num(f.mse),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&dir.join(format!("folds{suffix}.csv")), &folds)?;

    let mut records = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut records);
        w.write_record([
            "fold",
            "location_id",
            "time_index",
            "time",
            "y",
            "mean",
            "sd",
            "log_pred",
            "pit",
        ])?;
        for r in &report.records {
            w.write_record([
                r.fold.to_string(),
                r.location_id.to_string(),
                r.time_index.to_string(),
                num(r.time),
                num(r.y),
                num(r.mean),
                num(r.sd),
                num(r.log_pred),
                num(r.pit),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&dir.join(format!("records{suffix}.csv")), &records)?;
    Ok(())
}

fn print_line(report: &EvalReport) {
    println!(
        "{:<22} {:<22} elpd {:>10.3} (se {:.3})  mse {:>8.4}",
        report.scheme, report.variant, report.elpd, report.elpd_se, report.mse
    );
}

pub fn run(
    config_path: &Path,
    out: &Path,
    overrides: Overrides,
    scheme_flag: Option<SchemeChoice>,
    variant_flag: Option<VariantChoice>,
) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("cv");
    let (cfg, text) = config::load(config_path)?;
    mb.config_text(&text).input(config_path)?;

    let data_path = config::require_dataset(&cfg)?;
    mb.input(&data_path)?;

    let scheme = cfg.cv.scheme(scheme_flag)?;
    let choice = cfg.model.variant(variant_flag)?;
    let mcmc = cfg.inference.mcmc(&overrides)?;
    let seed = mcmc.seed;
    mb.seed(seed);
    let prior = cfg.model.prior()?;
    let cvcfg = cfg.cv.cv_config(mcmc, prior);
    let constraints = cfg.model.constraints();

    let raw = ingest(&data_path)?;
    let ds = standardize(&raw)?;
    ensure_dir(out)?;

    match choice {
        VariantChoice::Deriv | VariantChoice::Noderiv => {
            let variant = choice.single("cv")?;
            let report = run_cv(&ds, &constraints, &scheme, variant, &cvcfg, seed)?;
            write_report(out, "", &report)?;
            print_line(&report);
        }
        VariantChoice::Both => {
            let with = run_cv(
                &ds,
                &constraints,
                &scheme,
                ModelVariant::WithDerivatives,
                &cvcfg,
                seed,
            )?;
            let without = run_cv(
                &ds,
                &constraints,
                &scheme,
                ModelVariant::WithoutDerivatives,
                &cvcfg,
                seed,
            )?;
            write_report(out, "-deriv", &with)?;
            write_report(out, "-noderiv", &without)?;
            let cmp = compare(&with, &without)?;
            write_json(&out.join("comparison.json"), &cmp)?;
            print_line(&with);
            print_line(&without);
            println!(
                "{:<22} {:<22} elpd {:>+10.3} (se {:.3})  mse {:>+8.4}",
                cmp.scheme,
                "difference",
                cmp.elpd_diff,
                cmp.elpd_diff_se,
                cmp.mse_with - cmp.mse_without
            );
        }
    }

    write_atomic(&out.join("config.toml"), text.as_bytes())?;
    mb.write(out)?;
    println!("reports written to {}", out.display());
    Ok(())
}
