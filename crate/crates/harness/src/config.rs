//! Experiment configuration: a plain `key = value` text format with
//! `[section]` headers, echoed verbatim into every report.
//!
//! Coefficient and data fields take either numeric constants or closed-form
//! expressions in `t`, `x` (`x1..x9`), `pi`, `sin`, `cos` with `+ - * / ^`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use spde_core::coeffs::{ContinuousCoefficients, ScalarField};
use spde_core::expr::Expr;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    BadLine(usize),
    #[error("line {0}: unknown section `{1}`")]
    UnknownSection(usize, String),
    #[error("[{section}] {key}: {message}")]
    BadValue {
        section: &'static str,
        key: String,
        message: String,
    },
    #[error("[{section}] missing required key `{key}`")]
    MissingKey {
        section: &'static str,
        key: &'static str,
    },
    #[error("resolutions must be a strictly increasing dyadic chain, got {0:?}")]
    NonDyadicResolutions(Vec<usize>),
    #[error("extrapolation order {order} needs at least {want} resolutions, got {got}")]
    NotEnoughLevels {
        order: usize,
        want: usize,
        got: usize,
    },
    #[error("path count must be at least 1")]
    NoPaths,
    #[error("coefficient index out of range in key `{0}`")]
    IndexOutOfRange(String),
    #[error("expression error in `{key}`: {message}")]
    Expression { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub side_length: f64,
    pub noise_dim: usize,
    pub kappa: f64,
    /// `a^{αβ}` entries as expression strings, keyed `(α, β)`; symmetric
    /// counterparts are implied.
    pub a: Vec<(usize, usize, String)>,
    /// `b^{αρ}` entries keyed `(α, ρ)` with `ρ` 1-based in the file.
    pub b: Vec<(usize, usize, String)>,
    pub f: String,
    pub g: Vec<(usize, String)>,
    pub u0: String,
    pub resolutions: Vec<usize>,
    pub time_steps: usize,
    pub horizon: f64,
    /// extrapolation / expansion order k
    pub order: usize,
    pub solver: SolverChoice,
    pub tolerance: f64,
    pub paths: usize,
    pub seed: u64,
    pub zero_noise: bool,
    pub out_dir: String,
    pub format: OutputFormat,
    /// when set, every sampled noise path is written to this directory in
    /// the binary path format, for cross-run reuse
    #[serde(default)]
    pub dump_paths: Option<String>,
    /// verbatim text of the config file, for provenance
    pub source_text: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
        let mut current = String::from("");
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(cut) => &raw[..cut],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or(ConfigError::BadLine(line_no))?
                    .trim()
                    .to_string();
                match name.as_str() {
                    "problem" | "numerics" | "statistics" | "output" => current = name,
                    other => return Err(ConfigError::UnknownSection(line_no, other.to_string())),
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(line_no))?;
            sections.entry(current.clone()).or_default().push((
                line_no,
                key.trim().to_string(),
                value.trim().to_string(),
            ));
        }

        let mut cfg = ExperimentConfig {
            dimension: 1,
            side_length: 1.0,
            noise_dim: 1,
            kappa: 1e-6,
            a: Vec::new(),
            b: Vec::new(),
            f: "0".to_string(),
            g: Vec::new(),
            u0: "0".to_string(),
            resolutions: Vec::new(),
            time_steps: 64,
            horizon: 1.0,
            order: 0,
            solver: SolverChoice::Direct,
            tolerance: 1e-12,
            paths: 64,
            seed: 0,
            zero_noise: false,
            out_dir: "out".to_string(),
            format: OutputFormat::Csv,
            dump_paths: None,
            source_text: text.to_string(),
        };
        let mut solver_explicit = false;

        for (line_no, key, value) in sections.get("problem").map(Vec::as_slice).unwrap_or(&[]) {
            let _ = line_no;
            let bad = |message: String| ConfigError::BadValue {
                section: "problem",
                key: key.clone(),
                message,
            };
            match key.as_str() {
                "dimension" => cfg.dimension = parse_num(value).map_err(bad)?,
                "side_length" => cfg.side_length = parse_f64(value).map_err(bad)?,
                "noise_dim" => cfg.noise_dim = parse_num(value).map_err(bad)?,
                "kappa" => cfg.kappa = parse_f64(value).map_err(bad)?,
                "f" => cfg.f = value.clone(),
                "u0" => cfg.u0 = value.clone(),
                k if k.starts_with("a_") => {
                    let (alpha, beta) = parse_pair(k, "a_")?;
                    cfg.a.push((alpha, beta, value.clone()));
                }
                k if k.starts_with("b_") => {
                    let (alpha, rho) = parse_pair(k, "b_")?;
                    cfg.b.push((alpha, rho, value.clone()));
                }
                k if k.starts_with("g_") => {
                    let rho: usize = k[2..]
                        .parse()
                        .map_err(|_| ConfigError::IndexOutOfRange(k.to_string()))?;
                    cfg.g.push((rho, value.clone()));
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }

        for (_line, key, value) in sections.get("numerics").map(Vec::as_slice).unwrap_or(&[]) {
            let bad = |message: String| ConfigError::BadValue {
                section: "numerics",
                key: key.clone(),
                message,
            };
            match key.as_str() {
                "resolutions" => {
                    cfg.resolutions = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(e.to_string()))?;
                }
                "time_steps" => cfg.time_steps = parse_num(value).map_err(bad)?,
                "horizon" => cfg.horizon = parse_f64(value).map_err(bad)?,
                "order" => cfg.order = parse_num(value).map_err(bad)?,
                "solver" => {
                    solver_explicit = true;
                    cfg.solver = match value.as_str() {
                        "direct" | "direct-banded-1d" => SolverChoice::Direct,
                        "iterative" | "iterative-nonsymmetric" => SolverChoice::Iterative,
                        other => return Err(bad(format!("unknown solver `{other}`"))),
                    };
                }
                "tolerance" => cfg.tolerance = parse_f64(value).map_err(bad)?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }

        for (_line, key, value) in sections.get("statistics").map(Vec::as_slice).unwrap_or(&[]) {
            let bad = |message: String| ConfigError::BadValue {
                section: "statistics",
                key: key.clone(),
                message,
            };
            match key.as_str() {
                "paths" => cfg.paths = parse_num(value).map_err(bad)?,
                "seed" => cfg.seed = parse_num(value).map_err(bad)?,
                "zero_noise" => {
                    cfg.zero_noise = value.parse::<bool>().map_err(|e| bad(e.to_string()))?
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }

        for (_line, key, value) in sections.get("output").map(Vec::as_slice).unwrap_or(&[]) {
            let bad = |message: String| ConfigError::BadValue {
                section: "output",
                key: key.clone(),
                message,
            };
            match key.as_str() {
                "directory" => cfg.out_dir = value.clone(),
                "dump_paths" => cfg.dump_paths = Some(value.clone()),
                "format" => {
                    cfg.format = match value.as_str() {
                        "csv" => OutputFormat::Csv,
                        "json" => OutputFormat::Json,
                        other => return Err(bad(format!("unknown format `{other}`"))),
                    }
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }

        if !solver_explicit && cfg.dimension != 1 {
            cfg.solver = SolverChoice::Iterative;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.resolutions.is_empty() {
            return Err(ConfigError::MissingKey {
                section: "numerics",
                key: "resolutions",
            });
        }
        for w in self.resolutions.windows(2) {
            let ratio = w[1] as f64 / w[0] as f64;
            let ok =
                w[1] > w[0] && w[1] % w[0] == 0 && (w[1] / w[0]).is_power_of_two() && ratio >= 2.0;
            if !ok {
                return Err(ConfigError::NonDyadicResolutions(self.resolutions.clone()));
            }
        }
        if self.paths == 0 {
            return Err(ConfigError::NoPaths);
        }
        if self.order + 1 > self.resolutions.len() {
            return Err(ConfigError::NotEnoughLevels {
                order: self.order,
                want: self.order + 1,
                got: self.resolutions.len(),
            });
        }
        for (alpha, beta, _) in &self.a {
            if *alpha > self.dimension || *beta > self.dimension {
                return Err(ConfigError::IndexOutOfRange(format!("a_{alpha}_{beta}")));
            }
        }
        for (alpha, rho, _) in &self.b {
            if *alpha > self.dimension || *rho == 0 || *rho > self.noise_dim {
                return Err(ConfigError::IndexOutOfRange(format!("b_{alpha}_{rho}")));
            }
        }
        for (rho, _) in &self.g {
            if *rho == 0 || *rho > self.noise_dim {
                return Err(ConfigError::IndexOutOfRange(format!("g_{rho}")));
            }
        }
        Ok(())
    }

    /// Builds the continuous coefficient fields from the expression strings.
    pub fn to_continuous(&self) -> Result<ContinuousCoefficients<f64>, ConfigError> {
        let mut c = ContinuousCoefficients::new(self.dimension, self.noise_dim);
        let field = |key: &str, src: &str| -> Result<ScalarField<f64>, ConfigError> {
            if let Ok(v) = src.parse::<f64>() {
                return Ok(ScalarField::Constant(v));
            }
            Expr::parse(src, self.dimension)
                .map(ScalarField::Expr)
                .map_err(|e| ConfigError::Expression {
                    key: key.to_string(),
                    message: e.to_string(),
                })
        };
        for (alpha, beta, src) in &self.a {
            c.set_a(*alpha, *beta, field(&format!("a_{alpha}_{beta}"), src)?);
        }
        for (alpha, rho, src) in &self.b {
            c.set_b(*alpha, rho - 1, field(&format!("b_{alpha}_{rho}"), src)?);
        }
        c.set_f(field("f", &self.f)?);
        for (rho, src) in &self.g {
            c.set_g(rho - 1, field(&format!("g_{rho}"), src)?);
        }
        c.set_u0(field("u0", &self.u0)?);
        Ok(c)
    }
}

fn parse_num<N: std::str::FromStr>(s: &str) -> Result<N, String>
where
    N::Err: std::fmt::Display,
{
    s.parse::<N>().map_err(|e| e.to_string())
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| e.to_string())
}

fn parse_pair(key: &str, prefix: &str) -> Result<(usize, usize), ConfigError> {
    let rest = &key[prefix.len()..];
    let (a, b) = rest
        .split_once('_')
        .ok_or_else(|| ConfigError::IndexOutOfRange(key.to_string()))?;
    let a = a
        .parse()
        .map_err(|_| ConfigError::IndexOutOfRange(key.to_string()))?;
    let b = b
        .parse()
        .map_err(|_| ConfigError::IndexOutOfRange(key.to_string()))?;
    Ok((a, b))
}
