//! `monogp predict`: evaluate the predictive distribution at query points.

use std::path::Path;

use monogp::data::{ScalingFactors, TIME_DIM};
use monogp::inference::{predict, NoisePolicy};
use monogp::kernel::{DerivativeSpec, Row};

use crate::archive::load_model;
use crate::manifest::write_atomic;
use crate::CliError;

/// Expected query header without and with the derivative flag.
const QUERY_HEADER: [&str; 6] = ["sx", "sy", "h", "s", "i", "t"];

struct QueryRow {
    raw: [f64; 6],
    deriv: bool,
}

fn parse_query(path: &Path) -> Result<Vec<QueryRow>, CliError> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read `{file}`: {e}")))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read `{file}`: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_deriv = match headers.len() {
        6 if headers == QUERY_HEADER => false,
        7 if headers[..6] == QUERY_HEADER && headers[6] == "deriv" => true,
        _ => {
            return Err(CliError::Data(format!(
                "`{file}` must have header `sx,sy,h,s,i,t` (optionally with a trailing \
                 `deriv` column), got `{}`",
                headers.join(",")
            )))
        }
    };

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("cannot read `{file}`: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut raw = [0.0; 6];
        for (k, v) in raw.iter_mut().enumerate() {
            *v = rec
                .get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "non-numeric value in column `{}` on line {line} of `{file}`",
                        QUERY_HEADER[k]
                    ))
                })?;
        }
        let deriv = if has_deriv {
            match rec.get(6).map(str::trim) {
                Some("1") | Some("true") => true,
                Some("0") | Some("false") | Some("") => false,
                other => {
                    return Err(CliError::Data(format!(
                        "column `deriv` on line {line} of `{file}` must be 0/1 or \
                         true/false, got `{}`",
                        other.unwrap_or("")
                    )))
                }
            }
        } else {
            false
        };
        rows.push(QueryRow { raw, deriv });
    }
    Ok(rows)
}

fn to_target(q: &QueryRow, factors: &ScalingFactors) -> Result<Row, CliError> {
    let [sx, sy, h, s, i, t] = q.raw;
    let point = factors.input_point(h, s, i, sx, sy, t);
    Ok(if q.deriv {
        Row::Deriv(DerivativeSpec::new(point, TIME_DIM)?)
    } else {
        Row::Value(point)
    })
}

pub fn run(model_dir: &Path, query_path: &Path, out_path: &Path) -> Result<(), CliError> {
    let lm = load_model(model_dir)?;
    let queries = parse_query(query_path)?;
    let targets: Vec<Row> = queries
        .iter()
        .map(|q| to_target(q, &lm.factors))
        .collect::<Result<_, _>>()?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "sx", "sy", "h", "s", "i", "t", "deriv", "mean", "sd", "lower95", "upper95",
        ])?;
        if !targets.is_empty() {
            // Predictive of a new measurement: observation noise is included
            // for value targets; derivative targets are always latent.
            let pred = predict(&lm.samples, &lm.obs, &targets, NoisePolicy::ObservationNoise)
                .map_err(CliError::from)?;
            for (k, q) in queries.iter().enumerate() {
                let mut rec: Vec<String> = q.raw.iter().map(|v| format!("{v}")).collect();
                rec.push(u8::from(q.deriv).to_string());
                rec.push(format!("{}", pred.mean[k]));
                rec.push(format!("{}", pred.std[k]));
                rec.push(format!("{}", pred.lower95[k]));
                rec.push(format!("{}", pred.upper95[k]));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
    }
    write_atomic(out_path, &buf)?;
    println!(
        "wrote {} prediction{} to {}",
        queries.len(),
        if queries.len() == 1 { "" } else { "s" },
        out_path.display()
    );
    Ok(())
}
