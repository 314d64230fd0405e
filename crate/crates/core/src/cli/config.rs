//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::dataset::GridSpec;
use crate::error::{Error, Result};
use crate::evalkit::SweepProtocol;
use crate::models::{Family, RegressorSpec};
use crate::plant::{PlantParams, PlantPreset};

pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;
pub const DEFAULT_REPLICATES: u32 = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: PlantPreset,
    plant_overrides: BTreeMap<&'static str, f64>,
    pub noise_sigma: f64,
    pub grid: GridSpec,
    pub replicates: u32,
    pub train_fraction: f64,
    pub models: Vec<Family>,
    model_overrides: BTreeMap<(Family, String), f64>,
    pub out: PathBuf,
    pub degree: u32,
    pub sweep: SweepProtocol,
    pub tune: bool,
    /// Suppresses progress output on stdout; not part of the snapshot.
    pub quiet: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            preset: PlantPreset::Default,
            plant_overrides: BTreeMap::new(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            grid: GridSpec::paper_sweep(),
            replicates: DEFAULT_REPLICATES,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            models: Family::ALL.to_vec(),
            model_overrides: BTreeMap::new(),
            out: PathBuf::from("run"),
            degree: 2,
            sweep: SweepProtocol::Alternating,
            tune: false,
            quiet: false,
        }
    }
}

const PLANT_KEYS: [&str; 4] = ["segments", "kappa_sat", "kappa_x", "g_sag"];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("`{}`: cannot parse `{}`", key, value)))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidParameter(format!(
            "`{}`: expected true/false, got `{}`",
            key, value
        ))),
    }
}

fn unknown(key: &str) -> Error {
    Error::InvalidParameter(format!("unknown config key `{}`", key))
}

/// `key = value` pairs from config text; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut seen = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("line {}: expected `key = value`, got `{}`", n + 1, line))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::InvalidParameter(format!("line {}: empty key", n + 1)));
        }
        if let Some(prev) = seen.insert(k.to_string(), n + 1) {
            return Err(Error::InvalidParameter(format!(
                "line {}: key `{}` already set on line {}",
                n + 1,
                k,
                prev
            )));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "plant" => self.preset = PlantPreset::parse(value)?,
            "noise_sigma" => self.noise_sigma = parse_num(key, value)?,
            "replicates" => self.replicates = parse_num(key, value)?,
            "grid.min" => self.grid.min_deg = parse_num(key, value)?,
            "grid.max" => self.grid.max_deg = parse_num(key, value)?,
            "grid.step" => self.grid.step = parse_num(key, value)?,
            "split.train_fraction" => self.train_fraction = parse_num(key, value)?,
            "models" => {
                self.models = value
                    .split(',')
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(Family::parse)
                    .collect::<Result<_>>()?;
            }
            "out" => self.out = PathBuf::from(value),
            "distill.degree" => self.degree = parse_num(key, value)?,
            "validate.sweep_protocol" => self.sweep = SweepProtocol::parse(value)?,
            "tune" => self.tune = parse_bool(key, value)?,
            _ => {
                if let Some(field) = key.strip_prefix("plant.") {
                    let field = PLANT_KEYS.iter().find(|k| **k == field).ok_or_else(|| unknown(key))?;
                    self.plant_overrides.insert(field, parse_num(key, value)?);
                } else if let Some(rest) = key.strip_prefix("model.") {
                    let (fam, hp) = rest.split_once('.').ok_or_else(|| unknown(key))?;
                    let in_key = |e: Error| Error::InvalidParameter(format!("`{}`: {}", key, e));
                    let family = Family::parse(fam).map_err(in_key)?;
                    let v: f64 = parse_num(key, value)?;
                    // rejects keys the family does not have
                    RegressorSpec::new(family, 0).with(hp, v).map_err(in_key)?;
                    self.model_overrides.insert((family, hp.to_string()), v);
                } else {
                    return Err(unknown(key));
                }
            }
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.axis_len()?;
        self.plant()?.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split.train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("model list is empty".into()));
        }
        crate::distill::PolyBasis::from_degree(self.degree)?;
        self.specs()?;
        Ok(())
    }

    /// Preset gains with overrides applied and the configured noise level.
    pub fn plant(&self) -> Result<PlantParams> {
        let mut p = self.preset.params();
        for (k, v) in &self.plant_overrides {
            match *k {
                "segments" => {
                    if *v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "plant.segments = {} must be a positive integer",
                            v
                        )));
                    }
                    p.segments = *v as u32;
                }
                "kappa_sat" => p.kappa_sat = *v,
                "kappa_x" => p.kappa_x = *v,
                "g_sag" => p.g_sag = *v,
                _ => unreachable!(),
            }
        }
        p.noise_sigma = self.noise_sigma;
        p.validate()?;
        Ok(p)
    }

    pub fn specs(&self) -> Result<Vec<RegressorSpec>> {
        self.models
            .iter()
            .map(|&f| {
                let mut spec = RegressorSpec::new(f, self.seed);
                spec.tune = self.tune;
                for ((fam, k), v) in &self.model_overrides {
                    if *fam == f {
                        spec.set(k, *v)?;
                    }
                }
                Ok(spec)
            })
            .collect()
    }

    /// Every effective setting except the output directory, as strings.
    pub fn snapshot(&self) -> Result<BTreeMap<String, String>> {
        let mut m = BTreeMap::new();
        let p = self.plant()?;
        m.insert("seed".into(), self.seed.to_string());
        m.insert("plant".into(), self.preset.name().into());
        m.insert("plant.segments".into(), p.segments.to_string());
        m.insert("plant.kappa_sat".into(), p.kappa_sat.to_string());
        m.insert("plant.kappa_x".into(), p.kappa_x.to_string());
        m.insert("plant.g_sag".into(), p.g_sag.to_string());
        m.insert("noise_sigma".into(), self.noise_sigma.to_string());
        m.insert("grid.min".into(), self.grid.min_deg.to_string());
        m.insert("grid.max".into(), self.grid.max_deg.to_string());
        m.insert("grid.step".into(), self.grid.step.to_string());
        m.insert("replicates".into(), self.replicates.to_string());
        m.insert("split.train_fraction".into(), self.train_fraction.to_string());
        m.insert(
            "models".into(),
            self.models.iter().map(|f| f.name()).collect::<Vec<_>>().join(","),
        );
        m.insert("distill.degree".into(), self.degree.to_string());
        m.insert(
            "validate.sweep_protocol".into(),
            match self.sweep {
                SweepProtocol::Alternating => "alternating",
                SweepProtocol::Grid => "grid",
            }
            .into(),
        );
        m.insert("tune".into(), self.tune.to_string());
        for spec in self.specs()? {
            for (k, v) in spec.hyperparams().iter() {
                m.insert(format!("model.{}.{}", spec.family.name(), k), v.to_string());
            }
        }
        Ok(m)
    }
}
