//! Market data ingestion (strict CSV) and TOML configuration.
//!
//! CSV rules: comma separator, dot decimal, mandatory header, no quoting.
//! Every parse error carries file, line, and column (1-based field index).

use crate::charfn::{EquityLegParams, ModelParams};
use crate::error::{Error, Result};
use crate::rates::RateLegParams;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketCurve {
    pub pillars: Vec<f64>,
    pub discounts: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapQuote {
    pub maturity_years: f64,
    pub atm_lognormal_vol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionQuote {
    pub maturity_years: f64,
    pub strike: f64,
    pub implied_vol: f64,
}

fn parse_err(file: &Path, line: usize, column: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        column,
        reason: reason.into(),
    }
}

/// Split one data row into exactly `n` f64 fields.
fn parse_row(file: &Path, line_no: usize, line: &str, n: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(parse_err(
            file,
            line_no,
            fields.len().min(n),
            format!("expected {n} comma-separated fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.trim().parse::<f64>().map_err(|_| {
                parse_err(file, line_no, i + 1, format!("not a number: {:?}", f.trim()))
            })
        })
        .collect()
}

fn read_rows(path: &Path, header: &str, n_fields: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, 1, "empty file"))?;
    if first.trim() != header {
        return Err(parse_err(
            path,
            1,
            1,
            format!("expected header {header:?}, found {:?}", first.trim()),
        ));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push((idx + 1, parse_row(path, idx + 1, line, n_fields)?));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, 1, "no data rows"));
    }
    Ok(rows)
}

/// Discount curve CSV: `maturity_years,discount_factor`. Rows may arrive in
/// any order; the output is sorted. Duplicate pillars are rejected, discounts
/// must lie in (0, 1.5] (mild super-unity allowed for negative rates).
pub fn load_curve(path: &Path) -> Result<MarketCurve> {
    let mut rows = read_rows(path, "maturity_years,discount_factor", 2)?;
    rows.sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap());
    let mut pillars = Vec::with_capacity(rows.len());
    let mut discounts = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let (t, p) = (row[0], row[1]);
        if t <= 0.0 {
            return Err(parse_err(path, line, 1, "maturity must be positive"));
        }
        if let Some(last) = pillars.last() {
            if (t - last as &f64).abs() < 1e-12 {
                return Err(parse_err(path, line, 1, format!("duplicate pillar {t}")));
            }
        }
        if !(p > 0.0 && p <= 1.5) {
            return Err(parse_err(
                path,
                line,
                2,
                format!("discount factor {p} outside (0, 1.5]"),
            ));
        }
        pillars.push(t);
        discounts.push(p);
    }
    Ok(MarketCurve { pillars, discounts })
}

/// ATM cap vol CSV: `maturity_years,atm_lognormal_vol`, vols in (0, 5).
pub fn load_cap_quotes(path: &Path) -> Result<Vec<CapQuote>> {
    let rows = read_rows(path, "maturity_years,atm_lognormal_vol", 2)?;
    let mut quotes = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row[0] <= 0.0 {
            return Err(parse_err(path, line, 1, "maturity must be positive"));
        }
        if !(row[1] > 0.0 && row[1] < 5.0) {
            return Err(parse_err(
                path,
                line,
                2,
                format!("vol {} outside (0, 5)", row[1]),
            ));
        }
        quotes.push(CapQuote {
            maturity_years: row[0],
            atm_lognormal_vol: row[1],
        });
    }
    Ok(quotes)
}

/// Equity option vol CSV: `maturity_years,strike,implied_vol`.
pub fn load_option_quotes(path: &Path) -> Result<Vec<OptionQuote>> {
    let rows = read_rows(path, "maturity_years,strike,implied_vol", 3)?;
    let mut quotes = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row[0] <= 0.0 {
            return Err(parse_err(path, line, 1, "maturity must be positive"));
        }
        if row[1] <= 0.0 {
            return Err(parse_err(path, line, 2, "strike must be positive"));
        }
        if !(row[2] > 0.0 && row[2] < 5.0) {
            return Err(parse_err(
                path,
                line,
                3,
                format!("vol {} outside (0, 5)", row[2]),
            ));
        }
        quotes.push(OptionQuote {
            maturity_years: row[0],
            strike: row[1],
            implied_vol: row[2],
        });
    }
    Ok(quotes)
}

pub fn save_curve(path: &Path, curve: &MarketCurve) -> Result<()> {
    let mut out = String::from("maturity_years,discount_factor\n");
    for (t, p) in curve.pillars.iter().zip(&curve.discounts) {
        out.push_str(&format!("{t},{p}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Engine/quadrature overrides.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EngineSettings {
    pub grid_n: usize,
    pub quad_l: Option<usize>,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            grid_n: 40,
            quad_l: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            paths: 50_000,
            steps: 300,
            seed: 1,
            antithetic: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilePaths {
    pub curve: Option<String>,
    pub cap_quotes: Option<String>,
    pub option_quotes: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub rate: RateSection,
    pub equity: EquitySection,
    /// Spot index level used when converting to forwards.
    pub spot: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub kappa_r: f64,
    pub eta_r: f64,
    pub kernel: crate::kernels::KernelSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EquitySection {
    pub nu0: f64,
    pub theta_nu: f64,
    pub kappa_nu: f64,
    pub eta_nu: f64,
    pub kernel: crate::kernels::KernelSpec,
    pub rho_i_nu: f64,
    pub rho_i_r: f64,
    pub rho_nu_r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    #[serde(default)]
    pub engine: EngineSettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub files: FilePaths,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> Result<ConfigFile> {
        let text = fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let model = ModelParams {
            rate: RateLegParams {
                kappa_r: self.model.rate.kappa_r,
                eta_r: self.model.rate.eta_r,
                kernel: self.model.rate.kernel.clone(),
            },
            equity: EquityLegParams {
                nu0: self.model.equity.nu0,
                theta_nu: self.model.equity.theta_nu,
                kappa_nu: self.model.equity.kappa_nu,
                eta_nu: self.model.equity.eta_nu,
                kernel: self.model.equity.kernel.clone(),
                rho_i_nu: self.model.equity.rho_i_nu,
                rho_i_r: self.model.equity.rho_i_r,
                rho_nu_r: self.model.equity.rho_nu_r,
            },
        };
        model.validate()?;
        Ok(model)
    }
}
