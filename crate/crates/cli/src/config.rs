//! Run configuration: a TOML file of (optionally dotted) keys, overridden by
//! `--set key=value` pairs, checked against a fixed schema.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `schedule.beta0`, `schedule.beta1` | 0.05, 20 | linear noise schedule |
//! | `task.classes` | 4 | token classes K |
//! | `task.dims` | 80 | channels per frame D |
//! | `task.std` | 0.05 | per-class emission std |
//! | `task.mean_scale` | 0.4 | norm of every class mean |
//! | `task.mean_seed` | 0 | seed of the random-sign class means |
//! | `corpus.file` | "" | corpus to read instead of generating one |
//! | `corpus.examples` | 500 | generated examples |
//! | `corpus.min_tokens`, `corpus.max_tokens` | 4, 8 | tokens per example |
//! | `corpus.duration_law` | "shifted_poisson" | or "constant" |
//! | `corpus.poisson_rate` | 2 | durations are 1 + Poisson(rate) |
//! | `corpus.constant_frames` | 3 | frames per token for "constant" |
//! | `score.source` | "oracle" | "oracle", "train" or a checkpoint path |
//! | `classifier.source` | "train" | "oracle", "train" or a checkpoint path |
//! | `classifier.data_fraction` | 1 | share of the classifier corpus used |
//! | `classifier.same_corpus` | false | train on the score model's corpus |
//! | `classifier.corpus_file` | "" | separate labeled corpus to read |
//! | `duration.source` | "fixed" | "fixed", "train" or a checkpoint path |
//! | `duration.fixed_frames` | 3 | frames per token for "fixed" |
//! | `{score,classifier,duration}.hidden` | [64], [64], [16] | hidden layer widths |
//! | `{score,classifier,duration}.context` | 0, 0, 1 | neighbours on each side |
//! | `{..}.epochs`, `learning_rate`, `batch_size`, `optimizer` | score 10/1e-3/32, classifier 10/3e-3/16, duration 30/1e-2/16, all "adam" | training |
//! | `guidance.mode` | "norm_based" | "none", "fixed_scale", "norm_based" |
//! | `guidance.steps` | 50 | reverse steps N |
//! | `guidance.tau` | 1.5 | noise temperature |
//! | `guidance.scale` | 0.3 | fixed scale, or final scale of the ramp |
//! | `guidance.ramp_hold` | 0.2 | share of early steps without guidance |
//! | `guidance.grad_norm_floor` | 1e-12 | gradient norm treated as zero |
//! | `guidance.norm_scope` | "global" | or "per_frame" |
//! | `eval.sentences` | 200 | generated test transcripts |
//! | `eval.samples` | 5 | syntheses per transcript |
//! | `eval.min_tokens`, `eval.max_tokens` | 4, 8 | tokens per transcript |
//! | `eval.sentences_file` | "" | transcripts to read instead |
//! | `sample.count`, `sample.frames` | 4, 24 | unconditional draws |
//! | `sweep.fixed_scales` | 0.5, 1.0, ..., 5.0 | fixed-scale grid |
//! | `sweep.norm_scales` | 0.1, 0.2, ..., 1.0 | norm-based grid |
//! | `inpaint.steps`, `inpaint.tau` | 1000, 1.5 | sampler |
//! | `inpaint.frames`, `inpaint.class` | 24, 0 | single-class source sequence |
//! | `inpaint.mask` | "bernoulli" | "bernoulli", "cross", "rectangle" or a mask file |
//! | `inpaint.mask_p` | 0.3 | Bernoulli probability |
//! | `inpaint.cross_width` | 4 | cross band width |
//! | `inpaint.rect_frames`, `inpaint.rect_dims` | [8, 16], [0, 40] | rectangle ranges |
//! | `diag.eval_examples` | 500 | profile evaluation set size |
//! | `diag.grid_points` | 1000 | midpoint grid on (0, 1) |

use std::path::Path;

use anyhow::{bail, Context};
use normguide::nn::OptimizerKind;
use normguide::pipeline::corpus::DurationLaw;
use normguide::sampler::{GuidanceConfig, GuidanceMode, NormScope};
use normguide::NoiseSchedule;
use serde::{Deserialize, Serialize};

/// Invalid configuration; reported with exit status 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleSection,
    pub task: TaskSection,
    pub corpus: CorpusSection,
    pub score: ScoreSection,
    pub classifier: ClassifierSection,
    pub duration: DurationSection,
    pub guidance: GuidanceSection,
    pub eval: EvalSection,
    pub sample: SampleSection,
    pub sweep: SweepSection,
    pub inpaint: InpaintSection,
    pub diag: DiagSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schedule: ScheduleSection::default(),
            task: TaskSection::default(),
            corpus: CorpusSection::default(),
            score: ScoreSection::default(),
            classifier: ClassifierSection::default(),
            duration: DurationSection::default(),
            guidance: GuidanceSection::default(),
            eval: EvalSection::default(),
            sample: SampleSection::default(),
            sweep: SweepSection::default(),
            inpaint: InpaintSection::default(),
            diag: DiagSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub beta0: f64,
    pub beta1: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { beta0: 0.05, beta1: 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub classes: usize,
    pub dims: usize,
    pub std: f64,
    pub mean_scale: f64,
    pub mean_seed: u64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            classes: 4,
            dims: 80,
            std: 0.05,
            mean_scale: 0.4,
            mean_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub file: String,
    pub examples: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub duration_law: String,
    pub poisson_rate: f64,
    pub constant_frames: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            file: String::new(),
            examples: 500,
            min_tokens: 4,
            max_tokens: 8,
            duration_law: "shifted_poisson".into(),
            poisson_rate: 2.0,
            constant_frames: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub source: String,
    pub hidden: Vec<usize>,
    pub context: usize,
    pub t_min: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: String,
}

impl Default for ScoreSection {
    fn default() -> Self {
        Self {
            source: "oracle".into(),
            hidden: vec![64],
            context: 0,
            t_min: 1e-5,
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: "adam".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub source: String,
    pub hidden: Vec<usize>,
    pub context: usize,
    pub t_min: f64,
    pub data_fraction: f64,
    pub same_corpus: bool,
    pub corpus_file: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: String,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            source: "train".into(),
            hidden: vec![64],
            context: 0,
            t_min: 1e-5,
            data_fraction: 1.0,
            same_corpus: false,
            corpus_file: String::new(),
            epochs: 10,
            learning_rate: 3e-3,
            batch_size: 16,
            optimizer: "adam".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DurationSection {
    pub source: String,
    pub fixed_frames: usize,
    pub hidden: Vec<usize>,
    pub context: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: String,
}

impl Default for DurationSection {
    fn default() -> Self {
        Self {
            source: "fixed".into(),
            fixed_frames: 3,
            hidden: vec![16],
            context: 1,
            epochs: 30,
            learning_rate: 1e-2,
            batch_size: 16,
            optimizer: "adam".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSection {
    pub mode: String,
    pub steps: usize,
    pub tau: f64,
    pub scale: f64,
    pub ramp_hold: f64,
    pub grad_norm_floor: f64,
    pub norm_scope: String,
}

impl Default for GuidanceSection {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        Self {
            mode: g.mode.as_str().into(),
            steps: g.steps,
            tau: g.tau,
            scale: g.scale,
            ramp_hold: g.ramp_hold,
            grad_norm_floor: g.grad_norm_floor,
            norm_scope: g.norm_scope.as_str().into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub sentences: usize,
    pub samples: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub sentences_file: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            sentences: 200,
            samples: 5,
            min_tokens: 4,
            max_tokens: 8,
            sentences_file: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
    pub frames: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { count: 4, frames: 24 }
    }
}

/// `1/per_unit, 2/per_unit, ..., count/per_unit`, each correctly rounded.
pub fn grid(count: usize, per_unit: f64) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / per_unit).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub fixed_scales: Vec<f64>,
    pub norm_scales: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            fixed_scales: grid(10, 2.0),
            norm_scales: grid(10, 10.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintSection {
    pub steps: usize,
    pub tau: f64,
    pub frames: usize,
    pub class: usize,
    pub mask: String,
    pub mask_p: f64,
    pub cross_width: usize,
    pub rect_frames: [usize; 2],
    pub rect_dims: [usize; 2],
}

impl Default for InpaintSection {
    fn default() -> Self {
        Self {
            steps: 1000,
            tau: 1.5,
            frames: 24,
            class: 0,
            mask: "bernoulli".into(),
            mask_p: 0.3,
            cross_width: 4,
            rect_frames: [8, 16],
            rect_dims: [0, 40],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagSection {
    pub eval_examples: usize,
    pub grid_points: usize,
}

impl Default for DiagSection {
    fn default() -> Self {
        Self {
            eval_examples: 500,
            grid_points: 1000,
        }
    }
}

/// Where a model comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Oracle,
    Train,
    Fixed,
    Checkpoint(String),
}

impl Source {
    fn parse(field: &str, value: &str, allowed: &[&str]) -> anyhow::Result<Self> {
        let keyword = match value {
            "oracle" => Some(Source::Oracle),
            "train" => Some(Source::Train),
            "fixed" => Some(Source::Fixed),
            _ => None,
        };
        match keyword {
            Some(s) if allowed.contains(&value) => Ok(s),
            Some(_) => Err(invalid(format!("{field}: {value:?} is not one of {allowed:?} or a checkpoint path"))),
            None if value.is_empty() => Err(invalid(format!("{field}: must not be empty"))),
            None => Ok(Source::Checkpoint(value.into())),
        }
    }
}

fn check(cond: bool, field: &str, msg: &str) -> anyhow::Result<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(format!("{field}: {msg}")))
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn train_config(
    field: &str,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    optimizer: &str,
    t_min: f64,
) -> anyhow::Result<normguide::nn::TrainConfig> {
    let optimizer: OptimizerKind = optimizer
        .parse()
        .map_err(|e| invalid(format!("{field}.optimizer: {e}")))?;
    check(batch_size > 0, &format!("{field}.batch_size"), "must be >= 1")?;
    check(
        learning_rate.is_finite() && learning_rate >= 0.0,
        &format!("{field}.learning_rate"),
        "must be finite and >= 0",
    )?;
    check(t_min > 0.0 && t_min < 1.0, &format!("{field}.t_min"), "must lie in (0, 1)")?;
    Ok(normguide::nn::TrainConfig {
        epochs,
        learning_rate,
        batch_size,
        optimizer,
        t_min,
    })
}

impl Config {
    /// Parses TOML text, applies `key=value` overrides, and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| invalid(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = Config::deserialize(toml::Value::Table(table)).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    /// Fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> anyhow::Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule.beta0, self.schedule.beta1)
            .map_err(|e| invalid(format!("schedule.beta0/beta1: {e}")))
    }

    pub fn guidance(&self) -> anyhow::Result<GuidanceConfig> {
        let g = &self.guidance;
        let mode: GuidanceMode = g.mode.parse().map_err(|e| invalid(format!("guidance.mode: {e}")))?;
        let norm_scope: NormScope = g
            .norm_scope
            .parse()
            .map_err(|e| invalid(format!("guidance.norm_scope: {e}")))?;
        check(g.steps >= 1, "guidance.steps", "must be >= 1")?;
        check(positive(g.tau), "guidance.tau", "must be > 0")?;
        check(g.scale.is_finite() && g.scale >= 0.0, "guidance.scale", "must be >= 0")?;
        check((0.0..1.0).contains(&g.ramp_hold), "guidance.ramp_hold", "must lie in [0, 1)")?;
        check(positive(g.grad_norm_floor), "guidance.grad_norm_floor", "must be > 0")?;
        let cfg = GuidanceConfig {
            steps: g.steps,
            tau: g.tau,
            scale: g.scale,
            ramp_hold: g.ramp_hold,
            mode,
            grad_norm_floor: g.grad_norm_floor,
            norm_scope,
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn duration_law(&self) -> anyhow::Result<DurationLaw> {
        let c = &self.corpus;
        match c.duration_law.as_str() {
            "shifted_poisson" => {
                check(positive(c.poisson_rate), "corpus.poisson_rate", "must be > 0")?;
                Ok(DurationLaw::ShiftedPoisson { rate: c.poisson_rate })
            }
            "constant" => {
                check(c.constant_frames >= 1, "corpus.constant_frames", "must be >= 1")?;
                Ok(DurationLaw::Constant {
                    frames: c.constant_frames,
                })
            }
            other => Err(invalid(format!(
                "corpus.duration_law: {other:?} is not \"shifted_poisson\" or \"constant\""
            ))),
        }
    }

    pub fn score_source(&self) -> anyhow::Result<Source> {
        Source::parse("score.source", &self.score.source, &["oracle", "train"])
    }

    pub fn classifier_source(&self) -> anyhow::Result<Source> {
        Source::parse("classifier.source", &self.classifier.source, &["oracle", "train"])
    }

    pub fn duration_source(&self) -> anyhow::Result<Source> {
        Source::parse("duration.source", &self.duration.source, &["fixed", "train"])
    }

    pub fn score_train(&self) -> anyhow::Result<normguide::nn::TrainConfig> {
        let s = &self.score;
        train_config("score", s.epochs, s.learning_rate, s.batch_size, &s.optimizer, self.score.t_min)
    }

    pub fn classifier_train(&self) -> anyhow::Result<normguide::nn::TrainConfig> {
        let s = &self.classifier;
        train_config("classifier", s.epochs, s.learning_rate, s.batch_size, &s.optimizer, self.classifier.t_min)
    }

    pub fn duration_train(&self) -> anyhow::Result<normguide::nn::TrainConfig> {
        let s = &self.duration;
        train_config("duration", s.epochs, s.learning_rate, s.batch_size, &s.optimizer, normguide::nn::DEFAULT_T_MIN)
    }

    /// Checks every invariant, naming the offending key.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.schedule()?;
        let t = &self.task;
        check(t.classes >= 1, "task.classes", "must be >= 1")?;
        check(t.dims >= 1, "task.dims", "must be >= 1")?;
        check(positive(t.std), "task.std", "must be > 0")?;
        check(t.mean_scale.is_finite() && t.mean_scale >= 0.0, "task.mean_scale", "must be >= 0")?;

        let c = &self.corpus;
        check(c.examples >= 1, "corpus.examples", "must be >= 1")?;
        check(
            c.min_tokens >= 1 && c.min_tokens <= c.max_tokens,
            "corpus.min_tokens",
            "must satisfy 1 <= min_tokens <= max_tokens",
        )?;
        self.duration_law()?;

        self.score_source()?;
        self.classifier_source()?;
        self.duration_source()?;
        for (field, hidden) in [
            ("score.hidden", &self.score.hidden),
            ("classifier.hidden", &self.classifier.hidden),
            ("duration.hidden", &self.duration.hidden),
        ] {
            check(hidden.iter().all(|&h| h >= 1), field, "layer widths must be >= 1")?;
        }
        self.score_train()?;
        self.classifier_train()?;
        self.duration_train()?;
        let f = self.classifier.data_fraction;
        check(f > 0.0 && f <= 1.0, "classifier.data_fraction", "must lie in (0, 1]")?;
        check(self.duration.fixed_frames >= 1, "duration.fixed_frames", "must be >= 1")?;

        self.guidance()?;

        let e = &self.eval;
        check(e.sentences >= 1, "eval.sentences", "must be >= 1")?;
        check(e.samples >= 1, "eval.samples", "must be >= 1")?;
        check(
            e.min_tokens >= 1 && e.min_tokens <= e.max_tokens,
            "eval.min_tokens",
            "must satisfy 1 <= min_tokens <= max_tokens",
        )?;
        check(
            t.classes >= 2 || e.max_tokens == 1,
            "eval.max_tokens",
            "a single class only admits one-token transcripts",
        )?;

        check(self.sample.frames >= 1, "sample.frames", "must be >= 1")?;
        for (field, grid) in [
            ("sweep.fixed_scales", &self.sweep.fixed_scales),
            ("sweep.norm_scales", &self.sweep.norm_scales),
        ] {
            check(!grid.is_empty(), field, "must not be empty")?;
            check(grid.iter().all(|s| s.is_finite() && *s >= 0.0), field, "scales must be >= 0")?;
        }

        let p = &self.inpaint;
        check(p.steps >= 1, "inpaint.steps", "must be >= 1")?;
        check(positive(p.tau), "inpaint.tau", "must be > 0")?;
        check(p.frames >= 1, "inpaint.frames", "must be >= 1")?;
        check(p.class < t.classes, "inpaint.class", "must be < task.classes")?;
        check((0.0..=1.0).contains(&p.mask_p), "inpaint.mask_p", "must lie in [0, 1]")?;
        check(!p.mask.is_empty(), "inpaint.mask", "must not be empty")?;

        check(self.diag.eval_examples >= 1, "diag.eval_examples", "must be >= 1")?;
        check(self.diag.grid_points >= 1, "diag.grid_points", "must be >= 1")?;
        Ok(())
    }
}

/// Sets `a.b.c = value` in `table`. Values parse as TOML; anything that does
/// not (a bare path, say) is taken as a string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!(UsageError(format!("--set expects key=value, got {spec:?}")));
    };
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.into()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(UsageError(format!("--set: malformed key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut node = table;
    for p in path {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("{key}: {p} is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Malformed command line; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("", &[]).unwrap();
        assert_eq!(cfg, Config::default());
        let g = cfg.guidance().unwrap();
        assert_eq!((g.steps, g.tau, g.scale), (50, 1.5, 0.3));
        assert_eq!(cfg.inpaint.steps, 1000);
        assert_eq!(cfg.sweep.fixed_scales, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]);
        assert_eq!(cfg.sweep.norm_scales, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    }

    fn err(text: &str) -> String {
        let e = Config::from_toml(text, &[]).unwrap_err();
        assert!(e.downcast_ref::<ConfigError>().is_some());
        e.to_string()
    }

    #[test]
    fn invariant_violations_name_the_field() {
        assert!(err("guidance.tau = 0").contains("guidance.tau"));
        assert!(err("[guidance]\nramp_hold = 1.0").contains("guidance.ramp_hold"));
        assert!(err("schedule.beta1 = 0.01").contains("schedule"));
        assert!(err("task.std = -1").contains("task.std"));
        assert!(err("guidance.mode = \"loud\"").contains("guidance.mode"));
        assert!(err("classifier.source = \"fixed\"").contains("classifier.source"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(err("guidance.temperature = 2").contains("temperature"));
        assert!(err("nonsense = 1").contains("nonsense"));
        assert!(err("score.epochz = 1").contains("epochz"));
    }

    #[test]
    fn dotted_and_nested_forms_agree() {
        let a = Config::from_toml("guidance.scale = 0.5\nscore.epochs = 3", &[]).unwrap();
        let b = Config::from_toml("[guidance]\nscale = 0.5\n[score]\nepochs = 3", &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.score.epochs, 3);
    }

    #[test]
    fn overrides_win_and_round_trip() {
        let sets = [
            "guidance.scale=0.7".to_string(),
            "guidance.mode=fixed_scale".to_string(),
            "score.source=/tmp/score.json".to_string(),
            "sweep.norm_scales=[0.2, 0.4]".to_string(),
        ];
        let cfg = Config::from_toml("guidance.scale = 0.5", &sets).unwrap();
        assert_eq!(cfg.guidance.scale, 0.7);
        assert_eq!(cfg.guidance.mode, "fixed_scale");
        assert_eq!(cfg.score_source().unwrap(), Source::Checkpoint("/tmp/score.json".into()));
        assert_eq!(cfg.sweep.norm_scales, vec![0.2, 0.4]);
        assert_eq!(Config::from_toml(&cfg.to_toml(), &[]).unwrap(), cfg);

        let bad = Config::from_toml("", &["guidance.scale".into()]).unwrap_err();
        assert!(bad.downcast_ref::<UsageError>().is_some());
    }
}
