//! Versioned JSON checkpoints for the trainable models.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierNetwork;
use crate::error::{Error, Result};
use crate::nn::{FrameNet, TIME_EMBED_DIM};
use crate::pipeline::duration::DurationModel;
use crate::schedule::NoiseSchedule;
use crate::score_model::ScoreNetwork;

pub const CHECKPOINT_FORMAT: &str = "normguide-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Score(ScoreNetwork),
    Classifier(ClassifierNetwork),
    Duration(DurationModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Score(_) => "score",
            Model::Classifier(_) => "classifier",
            Model::Duration(_) => "duration",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Seed of the run that produced the parameters.
    pub seed: u64,
    pub schedule: NoiseSchedule,
    pub model: Model,
}

fn check_frame_net(net: &FrameNet, out_dim: usize) -> Result<()> {
    let c = &net.config;
    let input = (2 * c.context + 1) * c.dims + TIME_EMBED_DIM + c.cond_dim;
    let mut sizes = vec![input];
    sizes.extend(&c.hidden);
    sizes.push(out_dim);
    if net.mlp.sizes() != sizes.as_slice() {
        return Err(Error::Format(format!(
            "layer sizes {:?} do not match the network config (expected {sizes:?})",
            net.mlp.sizes()
        )));
    }
    if net.cond.len() != c.cond_dim {
        return Err(Error::Format("conditioning vector length does not match cond_dim".into()));
    }
    if !(net.data_std.is_finite() && net.data_std > 0.0) {
        return Err(Error::Format("data_std must be positive".into()));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(seed: u64, schedule: NoiseSchedule, model: Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            schedule,
            model,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        NoiseSchedule::new(self.schedule.beta0(), self.schedule.beta1())?;
        match &self.model {
            Model::Score(s) => {
                check_frame_net(&s.net, s.net.config.dims)?;
                if s.sched != self.schedule {
                    return Err(Error::Format("score model schedule differs from checkpoint schedule".into()));
                }
            }
            Model::Classifier(c) => {
                check_frame_net(&c.net, c.net.out_dim())?;
                if c.net.out_dim() == 0 {
                    return Err(Error::Format("classifier needs at least one class".into()));
                }
            }
            Model::Duration(d) => {
                let input = (2 * d.context + 1) * (d.classes + 1);
                if d.mlp.input_size() != input || d.mlp.output_size() != 1 {
                    return Err(Error::Format("duration model layer sizes do not match its config".into()));
                }
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(r)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn into_score(self) -> Result<ScoreNetwork> {
        match self.model {
            Model::Score(s) => Ok(s),
            other => Err(Error::Format(format!("expected a score checkpoint, found {}", other.kind()))),
        }
    }

    pub fn into_classifier(self) -> Result<ClassifierNetwork> {
        match self.model {
            Model::Classifier(c) => Ok(c),
            other => Err(Error::Format(format!("expected a classifier checkpoint, found {}", other.kind()))),
        }
    }

    pub fn into_duration(self) -> Result<DurationModel> {
        match self.model {
            Model::Duration(d) => Ok(d),
            other => Err(Error::Format(format!("expected a duration checkpoint, found {}", other.kind()))),
        }
    }
}
