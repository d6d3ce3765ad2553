//! Run configuration in a line-oriented `key = value` format.
//!
//! `#` starts a comment, blank lines are ignored, and unknown or repeated
//! keys are errors. [`TrainConfig::to_text`] writes every key, and parsing
//! that text yields the same configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{Counts, FamilySpec};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::objective::{LossWeights, Reduction};
use crate::optim::SgdConfig;
use crate::train::TrainSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn name(&self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            _ => Err(format!("expected `single` or `double`, found `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub image_size: usize,
    pub latent_dim: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub rec_reduction: Reduction,
    pub lr_cae: f64,
    pub lr_cls: f64,
    pub step_size: usize,
    pub decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Model initialization and batch order.
    pub seed: u64,
    /// Synthetic dataset generation.
    pub data_seed: u64,
    /// Accepted for compatibility; arithmetic is always double precision.
    pub precision: Precision,
    pub foreign_ratio: f64,
    pub families: Vec<String>,
    pub train_family: String,
    /// Training images per family (half real, half fake).
    pub n_train: usize,
    pub n_test: usize,
    /// Seeds used by the ablation studies.
    pub ablation_seeds: Vec<u64>,
    pub ablation_ratios: Vec<f64>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        let w = LossWeights::default();
        TrainConfig {
            image_size: 64,
            latent_dim: 128,
            beta1: w.beta1,
            beta2: w.beta2,
            rec_reduction: w.reduction,
            lr_cae: sgd.lr_cae,
            lr_cls: sgd.lr_cls,
            step_size: sgd.step_size,
            decay: sgd.decay,
            momentum: sgd.momentum,
            batch_size: 4,
            epochs: 10,
            seed: 0,
            data_seed: 2024,
            precision: Precision::Double,
            foreign_ratio: 0.0,
            families: vec!["U".into(), "F".into(), "C".into()],
            train_family: "U".into(),
            n_train: 2000,
            n_test: 400,
            ablation_seeds: vec![0, 1, 2, 3, 4],
            ablation_ratios: vec![0.0, 0.05, 0.10, 0.15],
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Config { line, message: format!("`{key}`: {e}") })
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(line, key, s)).collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config { line, message: format!("expected `key = value`, found `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config { line, message: format!("duplicate key `{key}`") });
            }
            cfg.set(line, key, value)?;
            seen.push(key.to_string());
        }
        cfg.validate().map_err(|e| Error::Config { line: 0, message: e.to_string() })?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "image_size" => self.image_size = parse_value(line, key, v)?,
            "latent_dim" => self.latent_dim = parse_value(line, key, v)?,
            "beta1" => self.beta1 = parse_value(line, key, v)?,
            "beta2" => self.beta2 = parse_value(line, key, v)?,
            "rec_reduction" => self.rec_reduction = parse_value(line, key, v)?,
            "lr_cae" => self.lr_cae = parse_value(line, key, v)?,
            "lr_cls" => self.lr_cls = parse_value(line, key, v)?,
            "step_size" => self.step_size = parse_value(line, key, v)?,
            "decay" => self.decay = parse_value(line, key, v)?,
            "momentum" => self.momentum = parse_value(line, key, v)?,
            "batch_size" => self.batch_size = parse_value(line, key, v)?,
            "epochs" => self.epochs = parse_value(line, key, v)?,
            "seed" => self.seed = parse_value(line, key, v)?,
            "data_seed" => self.data_seed = parse_value(line, key, v)?,
            "precision" => self.precision = parse_value(line, key, v)?,
            "foreign_ratio" => self.foreign_ratio = parse_value(line, key, v)?,
            "families" => self.families = parse_list(line, key, v)?,
            "train_family" => self.train_family = v.to_string(),
            "n_train" => self.n_train = parse_value(line, key, v)?,
            "n_test" => self.n_test = parse_value(line, key, v)?,
            "ablation_seeds" => self.ablation_seeds = parse_list(line, key, v)?,
            "ablation_ratios" => self.ablation_ratios = parse_list(line, key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::Config { line, message: format!("unknown key `{key}`") }),
        }
        Ok(())
    }

    /// Check cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        self.settings()?;
        self.family_specs()?;
        if !self.families.contains(&self.train_family) {
            return Err(Error::invalid(format!("train_family `{}` is not among the families", self.train_family)));
        }
        if self.n_train < 2 || self.n_test < 2 {
            return Err(Error::invalid("n_train and n_test must be at least 2"));
        }
        if self.ablation_seeds.is_empty() {
            return Err(Error::invalid("ablation_seeds is empty"));
        }
        if self.ablation_ratios.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("ablation ratios must be non-negative"));
        }
        Ok(())
    }

    /// Every key with its current value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
        kv("image_size", self.image_size.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("rec_reduction", self.rec_reduction.name().to_string());
        kv("lr_cae", self.lr_cae.to_string());
        kv("lr_cls", self.lr_cls.to_string());
        kv("step_size", self.step_size.to_string());
        kv("decay", self.decay.to_string());
        kv("momentum", self.momentum.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("seed", self.seed.to_string());
        kv("data_seed", self.data_seed.to_string());
        kv("precision", self.precision.name().to_string());
        kv("foreign_ratio", self.foreign_ratio.to_string());
        kv("families", join(&self.families));
        kv("train_family", self.train_family.clone());
        kv("n_train", self.n_train.to_string());
        kv("n_test", self.n_test.to_string());
        kv("ablation_seeds", join(&self.ablation_seeds));
        kv("ablation_ratios", join(&self.ablation_ratios));
        kv("data_dir", self.data_dir.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        s
    }

    pub fn arch(&self) -> Result<Architecture> {
        Architecture::new(self.image_size, self.image_size, self.latent_dim)
    }

    pub fn settings(&self) -> Result<TrainSettings> {
        let sgd = SgdConfig {
            lr_cae: self.lr_cae,
            lr_cls: self.lr_cls,
            step_size: self.step_size,
            decay: self.decay,
            momentum: self.momentum,
        };
        sgd.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.foreign_ratio >= 0.0) {
            return Err(Error::invalid("foreign_ratio must be non-negative"));
        }
        Ok(TrainSettings {
            arch: self.arch()?,
            weights: LossWeights { reduction: self.rec_reduction, ..LossWeights::new(self.beta1, self.beta2)? },
            sgd,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            baseline: false,
            foreign_ratio: self.foreign_ratio,
        })
    }

    pub fn counts(&self) -> Counts {
        Counts::balanced(self.n_train, self.n_test)
    }

    /// Specs of the configured families, resolved against the built-ins.
    pub fn family_specs(&self) -> Result<Vec<FamilySpec>> {
        if self.families.is_empty() {
            return Err(Error::invalid("no families configured"));
        }
        self.families
            .iter()
            .map(|n| FamilySpec::by_name(n).ok_or_else(|| Error::invalid(format!("unknown family `{n}`"))))
            .collect()
    }
}
