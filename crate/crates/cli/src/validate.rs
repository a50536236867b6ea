//! The `validate-bounds` subcommand: compare a finished run's empirical
//! error statistics against the bound columns it recorded.

use std::path::Path;

use serde::{Deserialize, Serialize};

use eqtrack::subweibull::SubWeibullParams;

use crate::CliError;

#[derive(Serialize, Debug)]
pub struct QuantileCheck {
    pub delta: f64,
    pub violations: usize,
    pub total: usize,
    /// Fraction of steps allowed to violate: the estimation slack on an
    /// empirical quantile of a bound that holds with probability 1 - delta.
    pub allowed_fraction: f64,
    /// Most negative margin `bound - empirical` observed.
    pub worst_margin: f64,
    pub pass: bool,
}

#[derive(Serialize, Debug)]
pub struct ValidationReport {
    pub run_dir: String,
    pub horizon: usize,
    pub expectation_violations: usize,
    pub expectation_worst_margin: f64,
    pub expectation_pass: bool,
    pub quantiles: Vec<QuantileCheck>,
    pub subweibull_fit: Option<SubWeibullParams>,
    pub pass: bool,
}

#[derive(Deserialize)]
struct ManifestSlice {
    deltas: Vec<f64>,
    subweibull_fit: Option<SubWeibullParams>,
}

fn parse_cell(value: &str, what: &str) -> Result<f64, CliError> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::Io(format!("corrupt aggregated.csv: bad {what} cell {value:?}")))
}

pub fn validate(run_dir: &Path) -> Result<ValidationReport, CliError> {
    let manifest_path = run_dir.join("manifest.json");
    let manifest_text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: ManifestSlice = serde_json::from_str(&manifest_text)
        .map_err(|e| CliError::Io(format!("corrupt manifest.json: {e}")))?;

    let agg_path = run_dir.join("aggregated.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&agg_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", agg_path.display())))?;
    let expected_cols = 4 + 2 * manifest.deltas.len();

    let mut horizon = 0usize;
    let mut expectation_violations = 0usize;
    let mut expectation_worst = f64::INFINITY;
    let mut quantile_violations = vec![0usize; manifest.deltas.len()];
    let mut quantile_worst = vec![f64::INFINITY; manifest.deltas.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Io(format!("corrupt aggregated.csv: {e}")))?;
        if record.len() != expected_cols {
            return Err(CliError::Io(format!(
                "corrupt aggregated.csv: row has {} columns, expected {expected_cols}",
                record.len()
            )));
        }
        let mean_err = parse_cell(&record[1], "mean_err")?;
        let bound_exp = parse_cell(&record[3], "bound_exp")?;
        let margin = bound_exp - mean_err;
        expectation_worst = expectation_worst.min(margin);
        if margin < 0.0 {
            expectation_violations += 1;
        }
        for i in 0..manifest.deltas.len() {
            let q = parse_cell(&record[4 + 2 * i], "quantile")?;
            let hp = parse_cell(&record[5 + 2 * i], "hp bound")?;
            let margin = hp - q;
            quantile_worst[i] = quantile_worst[i].min(margin);
            if margin < 0.0 {
                quantile_violations[i] += 1;
            }
        }
        horizon += 1;
    }
    if horizon == 0 {
        return Err(CliError::Io("aggregated.csv has no data rows".into()));
    }

    let quantiles: Vec<QuantileCheck> = manifest
        .deltas
        .iter()
        .enumerate()
        .map(|(i, delta)| {
            let allowed = (delta * horizon as f64).ceil() as usize;
            QuantileCheck {
                delta: *delta,
                violations: quantile_violations[i],
                total: horizon,
                allowed_fraction: *delta,
                worst_margin: quantile_worst[i],
                pass: quantile_violations[i] <= allowed,
            }
        })
        .collect();
    let expectation_pass = expectation_violations == 0;
    let pass = expectation_pass && quantiles.iter().all(|q| q.pass);
    Ok(ValidationReport {
        run_dir: run_dir.display().to_string(),
        horizon,
        expectation_violations,
        expectation_worst_margin: expectation_worst,
        expectation_pass,
        quantiles,
        subweibull_fit: manifest.subweibull_fit,
        pass,
    })
}
