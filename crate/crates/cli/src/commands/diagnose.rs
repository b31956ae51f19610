//! `monogp diagnose`: convergence and calibration tables for a fitted
//! model, combining the archive's chains with leave-one-observation
//! cross-validation results.

use std::path::Path;

use serde::Serialize;

use monogp::evaluation::EvalReport;

use crate::archive::load_model;
use crate::manifest::{ensure_dir, read_json, write_atomic, write_json, ManifestBuilder};
use crate::CliError;

/// Bins of the LOO-PIT histogram.
const PIT_BINS: usize = 20;

#[derive(Debug, Serialize)]
struct PitDiagnostics {
    n: usize,
    ks_distance: f64,
    /// Asymptotic 5% critical value 1.358 / sqrt(n).
    ks_critical_5pct: f64,
    uniform_ok: bool,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    n_chains: usize,
    draws_per_chain: usize,
    max_rhat: f64,
    min_ess: f64,
    rhat_ok: bool,
    pit: PitDiagnostics,
}

/// Kolmogorov–Smirnov distance of a sample to Uniform(0, 1).
fn ks_to_uniform(values: &[f64]) -> f64 {
    let mut xs: Vec<f64> = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = (x - i as f64 / n).abs();
            let hi = ((i + 1) as f64 / n - x).abs();
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn run(model_dir: &Path, cv_dir: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("diagnose");
    let lm = load_model(model_dir)?;
    mb.seed(lm.meta.seed).input(&model_dir.join("draws.csv"))?;
    let summaries = lm.samples.summaries().map_err(CliError::from)?;

    let default_cv = model_dir.join("cv1");
    let cv_dir = cv_dir.unwrap_or(&default_cv);
    let report_path = cv_dir.join("report.json");
    if !report_path.exists() {
        return Err(CliError::Config(format!(
            "no leave-one-observation results at `{}`; run \
             `monogp cv --scheme cv1 --out {}` with the same dataset first",
            report_path.display(),
            cv_dir.display()
        )));
    }
    let report: EvalReport = read_json(&report_path)?;
    if report.scheme != "leave-one-observation" {
        return Err(CliError::Config(format!(
            "results at `{}` use scheme `{}`; LOO-PIT diagnostics need cv1 \
             (leave-one-observation)",
            report_path.display(),
            report.scheme
        )));
    }
    mb.input(&report_path)?;

    ensure_dir(out)?;

    let mut rhat_ess = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut rhat_ess);
        w.write_record(["param", "mean", "sd", "mode", "rhat", "ess"])?;
        for s in &summaries {
            w.write_record([
                s.name.clone(),
                num(s.mean),
                num(s.sd),
                num(s.mode),
                num(s.rhat),
                num(s.ess),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&out.join("rhat_ess.csv"), &rhat_ess)?;

    let mut loo_pit = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut loo_pit);
        w.write_record(["fold", "location_id", "time_index", "time", "y", "pit", "log_pred"])?;
        for r in &report.records {
            w.write_record([
                r.fold.to_string(),
                r.location_id.to_string(),
                r.time_index.to_string(),
                num(r.time),
                num(r.y),
                num(r.pit),
                num(r.log_pred),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&out.join("loo_pit.csv"), &loo_pit)?;

    let pits = report.pit_values();
    let mut counts = [0usize; PIT_BINS];
    for &p in &pits {
        let b = ((p * PIT_BINS as f64) as usize).min(PIT_BINS - 1);
        counts[b] += 1;
    }
    let mut hist = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut hist);
        w.write_record(["bin", "lower", "upper", "count"])?;
        for (b, &c) in counts.iter().enumerate() {
            w.write_record([
                b.to_string(),
                num(b as f64 / PIT_BINS as f64),
                num((b + 1) as f64 / PIT_BINS as f64),
                c.to_string(),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&out.join("pit_hist.csv"), &hist)?;

    let max_rhat = summaries
        .iter()
        .filter(|s| !s.zero_variance && s.rhat.is_finite())
        .map(|s| s.rhat)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_ess = summaries
        .iter()
        .filter(|s| !s.zero_variance && s.ess.is_finite())
        .map(|s| s.ess)
        .fold(f64::INFINITY, f64::min);
    let ks = ks_to_uniform(&pits);
    let crit = 1.358 / (pits.len() as f64).sqrt();
    let diags = Diagnostics {
        n_chains: lm.samples.n_chains(),
        draws_per_chain: lm.samples.draws_per_chain(),
        max_rhat,
        min_ess,
        rhat_ok: max_rhat <= crate::commands::fit::RHAT_LIMIT,
        pit: PitDiagnostics {
            n: pits.len(),
            ks_distance: ks,
            ks_critical_5pct: crit,
            uniform_ok: ks <= crit,
        },
    };
    write_json(&out.join("diagnostics.json"), &diags)?;
    mb.write(out)?;

    println!(
        "max split-Rhat {:.3} (threshold {}), min ESS {:.0}",
        max_rhat,
        crate::commands::fit::RHAT_LIMIT,
        min_ess
    );
    println!(
        "LOO-PIT: n = {}, KS distance {:.4} vs 5% critical {:.4} -> {}",
        pits.len(),
        ks,
        crit,
        if diags.pit.uniform_ok {
            "consistent with uniform"
        } else {
            "NOT uniform"
        }
    );
    println!("diagnostics written to {}", out.display());
    Ok(())
}
