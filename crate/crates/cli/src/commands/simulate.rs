//! `monogp simulate`: write a synthetic dataset in the canonical schema.

use std::path::Path;

use monogp::data::simulate;

use crate::config::{self, SimulateSection};
use crate::manifest::{ensure_dir, write_atomic, ManifestBuilder};
use crate::CliError;

pub fn run(config_path: Option<&Path>, out: &Path, seed_flag: Option<u64>) -> Result<(), CliError> {
    let mut mb = ManifestBuilder::new("simulate");
    let section = match config_path {
        Some(p) => {
            let (cfg, text) = config::load(p)?;
            mb.config_text(&text).input(p)?;
            cfg.simulate
        }
        None => SimulateSection::default(),
    };
    let seed = seed_flag.unwrap_or(section.seed);
    mb.seed(seed);

    let raw = simulate(&section.simulate_config(), seed)?;
    ensure_dir(out)?;
    write_atomic(&out.join("dataset.csv"), raw.to_csv_string()?.as_bytes())?;
    mb.write(out)?;
    println!(
        "wrote {} locations x {} time points to {}",
        raw.n_locations(),
        raw.n_times(),
        out.join("dataset.csv").display()
    );
    Ok(())
}
