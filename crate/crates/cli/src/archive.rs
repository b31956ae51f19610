//! On-disk model archive written by `fit` and consumed by `predict` and
//! `diagnose`.
//!
//! An archive directory holds everything needed to rebuild the posterior:
//!
//! * `model.json` — seed, variant, constraints, prior, chain metadata,
//! * `dataset.csv` — the training data in the canonical schema,
//! * `standardization.json` — feature scale divisors,
//! * `draws.csv` — one row per retained draw: hyperparameters and log joint,
//! * `latents.csv` — thinned latent reconstructions for constrained prediction,
//! * `summary.csv` — per-parameter mean, sd, mode, split-Rhat, ESS,
//! * `config.toml` — snapshot of the run configuration,
//! * `manifest.json` — seed, input hashes, version, runtime.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use monogp::data::{
    build_virtual_sets, feature_lengthscale_map, ingest, standardize, ConstraintConfig,
    RawDataset, ScalingFactors,
};
use monogp::evaluation::{variant_constraints, ModelVariant};
use monogp::inference::diagnostics::ParameterSummary;
use monogp::inference::{ChainSamples, LatentDraw, PosteriorSamples};
use monogp::kernel::Hyperparameters;
use monogp::model::{ObservationSet, PriorSpec};

use crate::manifest::{read_json, write_atomic, write_json};
use crate::CliError;

/// Model-defining metadata stored in `model.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub warmup: usize,
    pub variant: ModelVariant,
    pub constraints: ConstraintConfig,
    pub prior: PriorSpec,
    /// Post-warmup Metropolis acceptance rate per chain.
    pub accept_rates: Vec<f64>,
}

fn csv_into(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(buf)
}

/// Shortest decimal representation that round-trips through `f64` parsing,
/// so reloading an archive is lossless and reruns are byte-identical.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_fit_archive(
    dir: &Path,
    raw: &RawDataset,
    factors: &ScalingFactors,
    meta: &ModelMeta,
    samples: &PosteriorSamples,
    summaries: &[ParameterSummary],
) -> Result<(), CliError> {
    write_json(&dir.join("model.json"), meta)?;
    write_json(&dir.join("standardization.json"), factors)?;
    write_atomic(&dir.join("dataset.csv"), raw.to_csv_string()?.as_bytes())?;

    let g = samples.map.n_groups();
    let mut draws = Vec::new();
    {
        let mut w = csv_into(&mut draws);
        let mut header = vec!["chain".to_string(), "draw".to_string(), "alpha".to_string()];
        for i in 1..=g {
            header.push(format!("rho_{i}"));
        }
        header.push("sigma".to_string());
        header.push("log_post".to_string());
        w.write_record(&header)?;
        for (c, chain) in samples.chains.iter().enumerate() {
            for (d, hp) in chain.hp.iter().enumerate() {
                let mut rec = vec![c.to_string(), d.to_string(), num(hp.alpha())];
                rec.extend(hp.lengthscales().iter().map(|&r| num(r)));
                rec.push(num(hp.sigma()));
                rec.push(num(chain.log_post[d]));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
    }
    write_atomic(&dir.join("draws.csv"), &draws)?;

    let mut latents = Vec::new();
    {
        let mut w = csv_into(&mut latents);
        w.write_record(["chain", "draw", "block", "index", "value"])?;
        for (c, chain) in samples.chains.iter().enumerate() {
            for ld in &chain.latents {
                for (i, v) in ld.f.iter().enumerate() {
                    w.write_record([
                        c.to_string(),
                        ld.draw_index.to_string(),
                        "f".to_string(),
                        i.to_string(),
                        num(*v),
                    ])?;
                }
                for (i, v) in ld.fprime.iter().enumerate() {
                    w.write_record([
                        c.to_string(),
                        ld.draw_index.to_string(),
                        "fprime".to_string(),
                        i.to_string(),
                        num(*v),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    write_atomic(&dir.join("latents.csv"), &latents)?;

    let mut summary = Vec::new();
    {
        let mut w = csv_into(&mut summary);
        w.write_record(["param", "mean", "sd", "mode", "rhat", "ess", "zero_variance"])?;
        for s in summaries {
            w.write_record([
                s.name.clone(),
                num(s.mean),
                num(s.sd),
                num(s.mode),
                num(s.rhat),
                num(s.ess),
                s.zero_variance.to_string(),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&dir.join("summary.csv"), &summary)?;
    Ok(())
}

/// A fully reloaded archive: data, observation set, and posterior draws.
pub struct LoadedModel {
    pub meta: ModelMeta,
    pub factors: ScalingFactors,
    pub obs: ObservationSet,
    pub samples: PosteriorSamples,
}

fn parse_cell<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    file: &str,
    line: u64,
) -> Result<T, CliError> {
    rec.get(idx)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::Data(format!("malformed `{file}` near line {line}")))
}

pub fn load_model(dir: &Path) -> Result<LoadedModel, CliError> {
    let meta: ModelMeta = read_json(&dir.join("model.json"))?;
    let factors: ScalingFactors = read_json(&dir.join("standardization.json"))?;
    let raw = ingest(&dir.join("dataset.csv"))?;
    let ds = standardize(&raw)?;
    if ds.factors != factors {
        return Err(CliError::Data(format!(
            "archive `{}` is inconsistent: standardization.json does not match dataset.csv",
            dir.display()
        )));
    }
    let vcfg = variant_constraints(&meta.constraints, meta.variant);
    let obs = build_virtual_sets(&ds, &vcfg)?;

    let map = feature_lengthscale_map();
    let g = map.n_groups();
    let draws_path = dir.join("draws.csv");
    let file = draws_path.display().to_string();
    let mut rdr = csv::Reader::from_path(&draws_path)
        .map_err(|e| CliError::Data(format!("cannot read `{file}`: {e}")))?;
    let expected_cols = 4 + g;
    let mut chains: Vec<ChainSamples> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected_cols {
            return Err(CliError::Data(format!(
                "`{file}` has {} columns, expected {expected_cols}",
                rec.len()
            )));
        }
        let chain: usize = parse_cell(&rec, 0, &file, line)?;
        let alpha: f64 = parse_cell(&rec, 2, &file, line)?;
        let mut rhos = Vec::with_capacity(g);
        for i in 0..g {
            rhos.push(parse_cell(&rec, 3 + i, &file, line)?);
        }
        let sigma: f64 = parse_cell(&rec, 3 + g, &file, line)?;
        let log_post: f64 = parse_cell(&rec, 4 + g, &file, line)?;
        while chains.len() <= chain {
            chains.push(ChainSamples {
                hp: Vec::new(),
                log_post: Vec::new(),
                accept_rate: 0.0,
                latents: Vec::new(),
            });
        }
        let hp = Hyperparameters::new(alpha, rhos, sigma, map.clone())?;
        chains[chain].hp.push(hp);
        chains[chain].log_post.push(log_post);
    }
    if chains.is_empty() || chains.iter().any(|c| c.hp.is_empty()) {
        return Err(CliError::Data(format!("`{file}` contains no posterior draws")));
    }

    let latents_path = dir.join("latents.csv");
    if latents_path.exists() {
        let lfile = latents_path.display().to_string();
        let mut rdr = csv::Reader::from_path(&latents_path)
            .map_err(|e| CliError::Data(format!("cannot read `{lfile}`: {e}")))?;
        // Sorted input: rows arrive grouped by (chain, draw) with block `f`
        // before `fprime` and indices ascending, exactly as written.
        let mut cur: Option<(usize, usize, Vec<f64>, Vec<f64>)> = None;
        let flush =
            |cur: &mut Option<(usize, usize, Vec<f64>, Vec<f64>)>,
             chains: &mut Vec<ChainSamples>| {
                if let Some((c, d, f, fp)) = cur.take() {
                    chains[c].latents.push(LatentDraw {
                        draw_index: d,
                        f: DVector::from_vec(f),
                        fprime: DVector::from_vec(fp),
                    });
                }
            };
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let c: usize = parse_cell(&rec, 0, &lfile, line)?;
            let d: usize = parse_cell(&rec, 1, &lfile, line)?;
            let block = rec.get(2).unwrap_or("");
            let value: f64 = parse_cell(&rec, 4, &lfile, line)?;
            if c >= chains.len() {
                return Err(CliError::Data(format!(
                    "`{lfile}` references chain {c}, but draws.csv has {}",
                    chains.len()
                )));
            }
            match &mut cur {
                Some((cc, cd, f, fp)) if *cc == c && *cd == d => match block {
                    "f" => f.push(value),
                    "fprime" => fp.push(value),
                    other => {
                        return Err(CliError::Data(format!(
                            "`{lfile}` has unknown block `{other}` on line {line}"
                        )))
                    }
                },
                _ => {
                    flush(&mut cur, &mut chains);
                    let (mut f, mut fp) = (Vec::new(), Vec::new());
                    match block {
                        "f" => f.push(value),
                        "fprime" => fp.push(value),
                        other => {
                            return Err(CliError::Data(format!(
                                "`{lfile}` has unknown block `{other}` on line {line}"
                            )))
                        }
                    }
                    cur = Some((c, d, f, fp));
                }
            }
        }
        flush(&mut cur, &mut chains);
    }

    for (c, rate) in meta.accept_rates.iter().enumerate() {
        if let Some(chain) = chains.get_mut(c) {
            chain.accept_rate = *rate;
        }
    }

    let samples = PosteriorSamples {
        chains,
        map,
        warmup: meta.warmup,
        seed: meta.seed,
    };
    Ok(LoadedModel {
        meta,
        factors,
        obs,
        samples,
    })
}
