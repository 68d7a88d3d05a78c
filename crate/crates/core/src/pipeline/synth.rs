//! Guided synthesis from transcripts, decoding back to tokens, and token
//! error rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::labels::{expand_durations, FrameLabels, TokenSequence};
use crate::model::{argmax, ClassifierGrad, FramePosterior, ScoreFn};
use crate::sampler::{sample, GuidanceConfig, GuidanceMode, Guide, StepRecord};
use crate::schedule::NoiseSchedule;

use super::duration::DurationPredictor;

/// Score model, guidance classifier, duration predictor and the decoder used
/// to read samples back as tokens.
#[derive(Clone, Copy)]
pub struct ModelStack<'a> {
    pub score: &'a dyn ScoreFn,
    pub classifier: Option<&'a dyn ClassifierGrad>,
    pub durations: &'a dyn DurationPredictor,
    pub decoder: &'a dyn FramePosterior,
    pub sched: NoiseSchedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub frames: FrameMatrix,
    /// Frame labels the sampler was guided towards.
    pub labels: FrameLabels,
    pub trajectory: Vec<StepRecord>,
}

/// Expands `tokens` by predicted durations, then runs the (guided) sampler on
/// a matrix of matching length.
pub fn synthesize<R: rand::Rng + ?Sized>(
    tokens: &TokenSequence,
    stack: &ModelStack<'_>,
    config: &GuidanceConfig,
    rng: &mut R,
) -> Result<Synthesis> {
    let durations = stack.durations.durations(tokens)?;
    let labels = expand_durations(tokens, &durations)?;
    let guide = match (config.mode, stack.classifier) {
        (GuidanceMode::None, _) => None,
        (_, None) => return Err(Error::Config("guided synthesis needs a classifier".into())),
        (_, Some(c)) => {
            if c.classes() != stack.decoder.classes() {
                return Err(Error::Config(format!(
                    "classifier has {} classes, decoder {}",
                    c.classes(),
                    stack.decoder.classes()
                )));
            }
            Some(Guide {
                classifier: c,
                labels: &labels,
            })
        }
    };
    let out = sample(
        stack.score,
        guide,
        &stack.sched,
        config,
        labels.len(),
        stack.score.dims(),
        rng,
    )?;
    Ok(Synthesis {
        frames: out.x0,
        labels,
        trajectory: out.trajectory,
    })
}

/// Per-frame argmax of the posterior at `t = 0`, then run-length collapse.
pub fn decode_frames<P: FramePosterior + ?Sized>(x0: &FrameMatrix, decoder: &P) -> Result<TokenSequence> {
    let post = decoder.frame_posteriors(x0, 0.0)?;
    let ids = post.iter().map(|row| argmax(row)).collect();
    Ok(FrameLabels::new(ids, decoder.classes())?.collapse())
}

/// Unit-cost edit distance.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the reference length.
pub fn cer(reference: &[usize], hypothesis: &[usize]) -> Result<f64> {
    if reference.is_empty() {
        return Err(domain("reference must be non-empty"));
    }
    Ok(levenshtein(reference, hypothesis) as f64 / reference.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceCer {
    pub reference: String,
    pub hypotheses: Vec<String>,
    pub cers: Vec<f64>,
    pub mean: f64,
}

/// Worst deviation of `|guidance| / |score|` from the scheduled scale over
/// all guided steps where the gradient floor was not hit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormAudit {
    pub steps_checked: usize,
    pub floor_hits: usize,
    pub max_rel_error: f64,
}

impl NormAudit {
    pub fn record(&mut self, trajectory: &[StepRecord]) {
        for r in trajectory {
            if r.floor_hit {
                self.floor_hits += 1;
            } else if r.s > 0.0 && r.score_norm > 0.0 {
                let rel = (r.guidance_norm / r.score_norm - r.s).abs() / r.s;
                self.max_rel_error = self.max_rel_error.max(rel);
                self.steps_checked += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CerReport {
    pub mean: f64,
    pub samples_per_sentence: usize,
    pub per_sentence: Vec<SentenceCer>,
    /// Present for norm-based runs.
    pub norm_audit: Option<NormAudit>,
}

/// Random stream for sentence `index`; independent of how many sentences
/// precede it.
pub fn sentence_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean CER over `samples` syntheses of every sentence.
pub fn eval_cer(
    sentences: &[TokenSequence],
    stack: &ModelStack<'_>,
    config: &GuidanceConfig,
    samples: usize,
    seed: u64,
) -> Result<CerReport> {
    if sentences.is_empty() {
        return Err(domain("evaluation needs at least one sentence"));
    }
    if samples == 0 {
        return Err(domain("samples per sentence must be >= 1"));
    }
    let mut audit = (config.mode == GuidanceMode::NormBased).then(NormAudit::default);
    let mut per_sentence = Vec::with_capacity(sentences.len());
    let mut total = 0.0;
    for (i, y) in sentences.iter().enumerate() {
        let mut rng = sentence_rng(seed, i);
        let mut hypotheses = Vec::with_capacity(samples);
        let mut cers = Vec::with_capacity(samples);
        for _ in 0..samples {
            let syn = synthesize(y, stack, config, &mut rng)?;
            if let Some(a) = audit.as_mut() {
                a.record(&syn.trajectory);
            }
            let hyp = decode_frames(&syn.frames, stack.decoder)?;
            cers.push(cer(y.ids(), hyp.ids())?);
            hypotheses.push(hyp.to_string());
        }
        let mean = cers.iter().sum::<f64>() / samples as f64;
        total += mean;
        per_sentence.push(SentenceCer {
            reference: y.to_string(),
            hypotheses,
            cers,
            mean,
        });
    }
    Ok(CerReport {
        mean: total / sentences.len() as f64,
        samples_per_sentence: samples,
        per_sentence,
        norm_audit: audit,
    })
}
