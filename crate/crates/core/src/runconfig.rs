//! Run configuration: a `key = value` text file covering the model,
//! augmentation plan, training hyperparameters, paths and seed. Unknown
//! keys are rejected; every key has a default (see [`RunConfig::default`]
//! and the template printed by `to_text`).

use std::path::{Path, PathBuf};

use crate::augment::AugmentPlan;
use crate::error::{Error, Result};
use crate::inflate::InflationMode;
use crate::model::{Heads, ModelConfig};
use crate::train::Hyper;

/// Which task the run targets; fixes the class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    /// Four severity grades.
    Severity,
    /// Binary infection detection.
    Detection,
}

impl TaskMode {
    pub fn num_classes(self) -> usize {
        match self {
            TaskMode::Severity => 4,
            TaskMode::Detection => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::Severity => "severity",
            TaskMode::Detection => "detection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: TaskMode,
    pub seed: u64,
    pub inflation: InflationMode,
    pub data_dir: PathBuf,
    pub labels: PathBuf,
    pub folds: PathBuf,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub plan: AugmentPlan,
    pub hyper: Hyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: TaskMode::Severity,
            seed: 0,
            inflation: InflationMode::Full,
            data_dir: "data".into(),
            labels: "labels.tsv".into(),
            folds: "folds.tsv".into(),
            out_dir: "out".into(),
            model: ModelConfig::default(),
            plan: AugmentPlan::default(),
            hyper: Hyper::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_num(key, p)).collect()
}

fn parse_range(key: &str, v: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("key `{key}`: expected `lo,hi`, got `{v}`")));
    }
    Ok((parse_num(key, parts[0])?, parse_num(key, parts[1])?))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "mode" => {
                    cfg.mode = match v {
                        "severity" => TaskMode::Severity,
                        "detection" => TaskMode::Detection,
                        other => {
                            return Err(Error::Config(format!(
                                "mode must be severity|detection, got `{other}`"
                            )))
                        }
                    }
                }
                "seed" => cfg.seed = parse_num(key, v)?,
                "inflation" => cfg.inflation = v.parse()?,
                "data_dir" => cfg.data_dir = v.into(),
                "labels" => cfg.labels = v.into(),
                "folds" => cfg.folds = v.into(),
                "out_dir" => cfg.out_dir = v.into(),
                "model.in_channels" => cfg.model.in_channels = parse_num(key, v)?,
                "model.stage_depths" => cfg.model.stage_depths = parse_list(key, v)?,
                "model.stage_channels" => cfg.model.stage_channels = parse_list(key, v)?,
                "model.depthwise_kernel" => cfg.model.depthwise_kernel = parse_num(key, v)?,
                "model.stem_patch" => cfg.model.stem_patch = parse_num(key, v)?,
                "model.seg_channels" => cfg.model.seg_channels = parse_num(key, v)?,
                "model.heads" => {
                    let mut heads = Heads { classification: false, segmentation: false };
                    for part in v.split(',') {
                        match part.trim() {
                            "classification" => heads.classification = true,
                            "segmentation" => heads.segmentation = true,
                            other => {
                                return Err(Error::Config(format!("unknown head `{other}`")))
                            }
                        }
                    }
                    cfg.model.heads = heads;
                }
                "augment.flip_prob" => cfg.plan.flip_prob = parse_num(key, v)?,
                "augment.noise_sigma" => cfg.plan.noise_sigma_range = parse_range(key, v)?,
                "augment.blur_prob" => cfg.plan.blur_prob = parse_num(key, v)?,
                "augment.blur_sigma" => cfg.plan.blur_sigma_range = parse_range(key, v)?,
                "augment.rotate_degrees" => cfg.plan.rotate_degrees = parse_num(key, v)?,
                "augment.elastic_prob" => cfg.plan.elastic_prob = parse_num(key, v)?,
                "augment.elastic_alpha" => cfg.plan.elastic_alpha_range = parse_range(key, v)?,
                "augment.elastic_sigma" => cfg.plan.elastic_sigma = parse_num(key, v)?,
                "augment.orientation_prob" => cfg.plan.orientation_prob = parse_num(key, v)?,
                "augment.crop_prob" => cfg.plan.crop_prob = parse_num(key, v)?,
                "augment.pre_size" => cfg.plan.pre_size = parse_num(key, v)?,
                "augment.crop_size" => cfg.plan.crop_size = parse_num(key, v)?,
                "train.lr" => cfg.hyper.lr = parse_num(key, v)?,
                "train.momentum" => cfg.hyper.momentum = parse_num(key, v)?,
                "train.steps" => cfg.hyper.steps = parse_num(key, v)?,
                "train.batch" => cfg.hyper.batch = parse_num(key, v)?,
                "train.lambda" => cfg.hyper.lambda = parse_num(key, v)?,
                "train.ema_decay" => cfg.hyper.ema_decay = parse_num(key, v)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.finish()
    }

    /// Propagate the task mode and seed into the dependent sections, then
    /// validate.
    fn finish(mut self) -> Result<Self> {
        self.model.num_classes = self.mode.num_classes();
        self.plan.seed = self.seed;
        self.hyper.seed = self.seed;
        self.model.validate()?;
        self.plan.validate()?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Render every key with its current value; parsing this text yields the
    /// same config.
    pub fn to_text(&self) -> String {
        let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let range = |r: (f64, f64)| format!("{},{}", r.0, r.1);
        let mut heads = Vec::new();
        if self.model.heads.classification {
            heads.push("classification");
        }
        if self.model.heads.segmentation {
            heads.push("segmentation");
        }
        format!(
            "mode = {}\nseed = {}\ninflation = {}\ndata_dir = {}\nlabels = {}\nfolds = {}\nout_dir = {}\n\
             model.in_channels = {}\nmodel.stage_depths = {}\nmodel.stage_channels = {}\n\
             model.depthwise_kernel = {}\nmodel.stem_patch = {}\nmodel.seg_channels = {}\nmodel.heads = {}\n\
             augment.flip_prob = {}\naugment.noise_sigma = {}\naugment.blur_prob = {}\naugment.blur_sigma = {}\n\
             augment.rotate_degrees = {}\naugment.elastic_prob = {}\naugment.elastic_alpha = {}\n\
             augment.elastic_sigma = {}\naugment.orientation_prob = {}\naugment.crop_prob = {}\n\
             augment.pre_size = {}\naugment.crop_size = {}\n\
             train.lr = {}\ntrain.momentum = {}\ntrain.steps = {}\ntrain.batch = {}\ntrain.lambda = {}\ntrain.ema_decay = {}\n",
            self.mode.as_str(),
            self.seed,
            self.inflation,
            self.data_dir.display(),
            self.labels.display(),
            self.folds.display(),
            self.out_dir.display(),
            self.model.in_channels,
            join(&self.model.stage_depths),
            join(&self.model.stage_channels),
            self.model.depthwise_kernel,
            self.model.stem_patch,
            self.model.seg_channels,
            heads.join(","),
            self.plan.flip_prob,
            range(self.plan.noise_sigma_range),
            self.plan.blur_prob,
            range(self.plan.blur_sigma_range),
            self.plan.rotate_degrees,
            self.plan.elastic_prob,
            range(self.plan.elastic_alpha_range),
            self.plan.elastic_sigma,
            self.plan.orientation_prob,
            self.plan.crop_prob,
            self.plan.pre_size,
            self.plan.crop_size,
            self.hyper.lr,
            self.hyper.momentum,
            self.hyper.steps,
            self.hyper.batch,
            self.hyper.lambda,
            self.hyper.ema_decay,
        )
    }
}
