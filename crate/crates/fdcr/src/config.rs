//! Experiment configuration files.
//!
//! A file is TOML with four optional sections: `[scenario]`, `[algo]`,
//! `[experiment]` and `[sweep]` (plus `[outage]`). Every key is flat or
//! dotted (`solver.tol_gap = 1e-12` under `[algo]`). Power-like keys carry
//! their unit in the name (`p_max_dl_dbm`, `eta_db`) and are converted to
//! linear scale when the file is read.

use std::path::{Path, PathBuf};

use fdcr_core::algo::AlgoConfig;
use fdcr_core::baselines::Scheme;
use fdcr_core::model::ScenarioConfig;
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), msg: msg.into() }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    /// A scenario or algorithm key as accepted in the config file.
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageConfig {
    pub targets_dbm: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub algo: AlgoConfig,
    pub sweep: Option<Sweep>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Error samples per PU for the leakage check of each run.
    pub verify_samples: usize,
    pub outage: OutageConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            algo: AlgoConfig::default(),
            sweep: None,
            schemes: Scheme::ALL.to_vec(),
            seeds: (0..20).collect(),
            output_dir: PathBuf::from("out"),
            verify_samples: 10_000,
            outage: OutageConfig { targets_dbm: vec![-95.0, -92.5, -90.0, -87.5, -85.0], samples: 10_000 },
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(x) => Ok(*x),
        _ => Err(bad(key, "expected a number")),
    }
}

fn as_count(key: &str, x: f64) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
        Ok(x as usize)
    } else {
        Err(bad(key, "expected a nonnegative integer"))
    }
}

/// Sets one scenario key. Keys ending in `_dbm` or `_db` are converted.
pub fn set_scenario_key(cfg: &mut ScenarioConfig, key: &str, x: f64) -> Result<()> {
    let count = |x| as_count(key, x);
    match key {
        "n_t" => cfg.n_t = count(x)?,
        "m" => cfg.m = count(x)?,
        "k_dl" => cfg.k_dl = count(x)?,
        "j_ul" => cfg.j_ul = count(x)?,
        "i_pu" => cfg.i_pu = count(x)?,
        "p_max_dl_dbm" | "p_max_dl" => cfg.p_max_dl = dbm_to_watts(x),
        "p_max_ul_dbm" => cfg.p_max_ul = dbm_to_watts(x),
        "p_tol_dbm" => cfg.p_tol = dbm_to_watts(x),
        "sigma2_ul_dbm" => cfg.sigma2_ul = dbm_to_watts(x),
        "sigma2_dl_dbm" => cfg.sigma2_dl = dbm_to_watts(x),
        "eta_db" => cfg.eta = db_to_linear(x),
        "c_d_db" => cfg.c_d = db_to_linear(x),
        "c_r_db" => cfg.c_r = db_to_linear(x),
        "rician_k_db" => cfg.rician_k = db_to_linear(x),
        "weight_ul" => cfg.weight_ul = x,
        "weight_dl" => cfg.weight_dl = x,
        "upsilon2" => cfg.upsilon2 = x,
        "d_bs_irs" => cfg.d_bs_irs = x,
        "cell_radius" => cfg.cell_radius = x,
        "min_distance" => cfg.min_distance = x,
        "sector_half_angle_deg" => cfg.sector_half_angle = x.to_radians(),
        "alpha_bu" => cfg.alpha_bu = x,
        "alpha_br" => cfg.alpha_br = x,
        "alpha_ru" => cfg.alpha_ru = x,
        _ => return Err(ConfigError::UnknownKey(format!("scenario.{key}"))),
    }
    Ok(())
}

pub fn set_algo_key(cfg: &mut AlgoConfig, key: &str, x: f64) -> Result<()> {
    let count = |x| as_count(key, x);
    match key {
        "eps_sca" => cfg.eps_sca = x,
        "eps_bcd" => cfg.eps_bcd = x,
        "chi" => cfg.chi = x,
        "max_inner_iters" => cfg.max_inner_iters = count(x)?,
        "max_outer_iters" => cfg.max_outer_iters = count(x)?,
        "rank_tol" => cfg.rank_tol = x,
        "max_chi_escalations" => cfg.max_chi_escalations = count(x)?,
        "starts" => cfg.starts = count(x)?,
        "solver.tol_gap" => cfg.solver.tol_gap = x,
        "solver.tol_feas" => cfg.solver.tol_feas = x,
        "solver.max_iters" => cfg.solver.max_iters = count(x)? as u32,
        _ => return Err(ConfigError::UnknownKey(format!("algo.{key}"))),
    }
    Ok(())
}

/// Resolves a sweep parameter: `scenario.<key>`, `algo.<key>` or a bare
/// scenario key.
pub fn set_param(cfg: &mut ExperimentConfig, param: &str, x: f64) -> Result<()> {
    if let Some(k) = param.strip_prefix("algo.") {
        set_algo_key(&mut cfg.algo, k, x)
    } else {
        set_scenario_key(&mut cfg.scenario, param.strip_prefix("scenario.").unwrap_or(param), x)
    }
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn numbers(key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_f64(key, x)).collect(),
        _ => Err(bad(key, "expected an array of numbers")),
    }
}

fn seeds(key: &str, v: &Value) -> Result<Vec<u64>> {
    match v {
        Value::Array(_) => numbers(key, v)?.into_iter().map(|x| as_count(key, x).map(|s| s as u64)).collect(),
        Value::Table(t) => {
            let start = t.get("start").map(|x| as_f64(key, x)).transpose()?.unwrap_or(0.0);
            let count = t.get("count").ok_or_else(|| bad(key, "seed range needs `count`"))?;
            let (start, count) = (as_count(key, start)? as u64, as_count(key, as_f64(key, count)?)? as u64);
            Ok((start..start + count).collect())
        }
        _ => Err(bad(key, "expected a list or {start, count}")),
    }
}

/// Parses a list such as `20,25,30`.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad("values", format!("`{t}` is not a number"))))
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let table: Table =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_path_buf(), source })?;
        let mut cfg = ExperimentConfig::default();
        for (section, body) in &table {
            let Value::Table(body) = body else {
                return Err(ConfigError::UnknownKey(section.clone()));
            };
            match section.as_str() {
                "scenario" | "algo" => {
                    let mut entries = Vec::new();
                    flatten("", body, &mut entries);
                    for (k, v) in entries {
                        let x = as_f64(&format!("{section}.{k}"), &v)?;
                        if section == "scenario" {
                            set_scenario_key(&mut cfg.scenario, &k, x)?;
                        } else {
                            set_algo_key(&mut cfg.algo, &k, x)?;
                        }
                    }
                }
                "experiment" => {
                    for (k, v) in body {
                        match k.as_str() {
                            "schemes" => {
                                let Value::Array(items) = v else {
                                    return Err(bad("experiment.schemes", "expected an array of names"));
                                };
                                cfg.schemes = items
                                    .iter()
                                    .map(|x| {
                                        x.as_str()
                                            .and_then(Scheme::from_name)
                                            .ok_or_else(|| bad("experiment.schemes", format!("unknown scheme {x}")))
                                    })
                                    .collect::<Result<_>>()?;
                            }
                            "seeds" => cfg.seeds = seeds("experiment.seeds", v)?,
                            "output_dir" => {
                                let path = v.as_str().ok_or_else(|| bad("experiment.output_dir", "expected a path"))?;
                                cfg.output_dir = PathBuf::from(path);
                            }
                            "verify_samples" => {
                                cfg.verify_samples =
                                    as_count("experiment.verify_samples", as_f64("experiment.verify_samples", v)?)?
                            }
                            _ => return Err(ConfigError::UnknownKey(format!("experiment.{k}"))),
                        }
                    }
                }
                "sweep" => {
                    let param = body
                        .get("param")
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad("sweep.param", "expected a key name"))?
                        .to_string();
                    let values = numbers("sweep.values", body.get("values").unwrap_or(&Value::Array(Vec::new())))?;
                    if let Some(k) = body.keys().find(|k| *k != "param" && *k != "values") {
                        return Err(ConfigError::UnknownKey(format!("sweep.{k}")));
                    }
                    cfg.sweep = Some(Sweep { param, values });
                }
                "outage" => {
                    for (k, v) in body {
                        match k.as_str() {
                            "targets_dbm" => cfg.outage.targets_dbm = numbers("outage.targets_dbm", v)?,
                            "samples" => cfg.outage.samples = as_count("outage.samples", as_f64("outage.samples", v)?)?,
                            _ => return Err(ConfigError::UnknownKey(format!("outage.{k}"))),
                        }
                    }
                }
                _ => return Err(ConfigError::UnknownKey(section.clone())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.algo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(ConfigError::Invalid("schemes must not be empty".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(bad("sweep.values", "must not be empty"));
            }
            let mut probe = self.clone();
            for &x in &sw.values {
                set_param(&mut probe, &sw.param, x)?;
            }
            probe.scenario.validate().map_err(|e| bad(&sw.param, e.to_string()))?;
        }
        Ok(())
    }

    /// The configuration at one sweep value.
    pub fn at(&self, value: Option<f64>) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        if let (Some(sw), Some(x)) = (&self.sweep, value) {
            set_param(&mut cfg, &sw.param, x)?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("", Path::new("x.toml")).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn dbm_round_trip() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((watts_to_dbm(dbm_to_watts(-90.0)) + 90.0).abs() < 1e-12);
    }

    #[test]
    fn dotted_keys_and_units() {
        let text = r#"
            [scenario]
            m = 6
            p_max_dl_dbm = 20
            eta_db = -80.0
            [algo]
            solver.tol_gap = 1e-9
            [experiment]
            seeds = { start = 5, count = 3 }
            schemes = ["proposed", "baseline2"]
            [sweep]
            param = "m"
            values = [2, 4]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.scenario.m, 6);
        assert!((cfg.scenario.p_max_dl - 0.1).abs() < 1e-15);
        assert!((cfg.scenario.eta - 1e-8).abs() < 1e-20);
        assert_eq!(cfg.algo.solver.tol_gap, 1e-9);
        assert_eq!(cfg.seeds, vec![5, 6, 7]);
        assert_eq!(cfg.schemes, vec![Scheme::Proposed, Scheme::Baseline2]);
        assert_eq!(cfg.at(Some(2.0)).unwrap().scenario.m, 2);
    }

    #[test]
    fn unknown_keys_are_errors() {
        for text in ["[scenario]\nfoo = 1", "[bogus]\nx = 1", "[algo]\nsolver.nope = 1"] {
            assert!(matches!(
                ExperimentConfig::from_toml_str(text, Path::new("x.toml")),
                Err(ConfigError::UnknownKey(_))
            ));
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[scenario]\nm = 1.5", Path::new("x")).is_err());
        assert!(ExperimentConfig::from_toml_str("[experiment]\nseeds = []", Path::new("x")).is_err());
        assert!(ExperimentConfig::from_toml_str("[sweep]\nparam = \"zzz\"\nvalues = [1]", Path::new("x")).is_err());
    }
}
