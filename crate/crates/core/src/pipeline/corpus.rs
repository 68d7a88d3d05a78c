//! Synthetic aligned corpus: Markov token chains, integer durations, and
//! frames drawn from the class emission Gaussians.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::classifier::LabeledFrames;
use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::labels::{expand_durations, FrameLabels, TokenSequence};
use crate::mixture::{sample_categorical, MixtureSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DurationLaw {
    /// `1 + Poisson(rate)`.
    ShiftedPoisson { rate: f64 },
    Constant { frames: usize },
}

impl Default for DurationLaw {
    fn default() -> Self {
        DurationLaw::ShiftedPoisson { rate: 2.0 }
    }
}

impl DurationLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DurationLaw::ShiftedPoisson { rate } if !(rate.is_finite() && rate > 0.0) => {
                Err(domain(format!("poisson rate must be > 0, got {rate}")))
            }
            DurationLaw::Constant { frames: 0 } => Err(domain("constant duration must be >= 1")),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            DurationLaw::ShiftedPoisson { rate } => {
                let p = Poisson::new(rate).expect("validated rate");
                1 + p.sample(rng) as usize
            }
            DurationLaw::Constant { frames } => frames,
        }
    }
}

/// Uniform moves to any other class; the single-class chain stays put.
pub fn uniform_transitions(classes: usize) -> Vec<Vec<f64>> {
    if classes == 1 {
        return vec![vec![1.0]];
    }
    let p = 1.0 / (classes - 1) as f64;
    (0..classes)
        .map(|i| (0..classes).map(|j| if i == j { 0.0 } else { p }).collect())
        .collect()
}

pub fn validate_transitions(transitions: &[Vec<f64>], classes: usize) -> Result<()> {
    if transitions.len() != classes {
        return Err(domain(format!(
            "transition matrix has {} rows for {classes} classes",
            transitions.len()
        )));
    }
    for (i, row) in transitions.iter().enumerate() {
        if row.len() != classes {
            return Err(domain(format!("transition row {i} has {} entries", row.len())));
        }
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(domain(format!("transition row {i} is not on the simplex")));
        }
    }
    Ok(())
}

/// Everything needed to regenerate a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub spec: MixtureSpec,
    pub transitions: Vec<Vec<f64>>,
    pub durations: DurationLaw,
    pub examples: usize,
    /// Inclusive token-count range per example.
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl CorpusParams {
    pub fn new(spec: MixtureSpec, examples: usize) -> Self {
        let transitions = uniform_transitions(spec.classes());
        Self {
            spec,
            transitions,
            durations: DurationLaw::default(),
            examples,
            min_tokens: 4,
            max_tokens: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_transitions(&self.transitions, self.spec.classes())?;
        self.durations.validate()?;
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(domain(format!(
                "token range [{}, {}] is empty or contains zero",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusExample {
    pub tokens: TokenSequence,
    pub durations: Vec<usize>,
    pub labels: FrameLabels,
    pub frames: FrameMatrix,
}

impl CorpusExample {
    pub fn labeled(&self) -> LabeledFrames {
        LabeledFrames {
            frames: self.frames.clone(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyCorpus {
    pub params: CorpusParams,
    pub seed: u64,
    pub examples: Vec<CorpusExample>,
}

fn markov_chain<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    transitions: &[Vec<f64>],
    len: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut ids = Vec::with_capacity(len);
    let mut cur = spec.sample_class(rng);
    ids.push(cur);
    for _ in 1..len {
        cur = sample_categorical(&transitions[cur], rng);
        ids.push(cur);
    }
    ids
}

/// Draws `params.examples` aligned examples. `seed` is recorded, not used:
/// the caller owns `rng`.
pub fn generate_corpus<R: Rng + ?Sized>(params: &CorpusParams, seed: u64, rng: &mut R) -> Result<ToyCorpus> {
    params.validate()?;
    let k = params.spec.classes();
    let mut examples = Vec::with_capacity(params.examples);
    for _ in 0..params.examples {
        let len = rng.random_range(params.min_tokens..=params.max_tokens);
        let tokens = TokenSequence::new(markov_chain(&params.spec, &params.transitions, len, rng), k)?;
        let durations: Vec<usize> = (0..len).map(|_| params.durations.sample(rng)).collect();
        let labels = expand_durations(&tokens, &durations)?;
        let frames = params.spec.sample_frames(&labels, rng)?;
        examples.push(CorpusExample {
            tokens,
            durations,
            labels,
            frames,
        });
    }
    Ok(ToyCorpus {
        params: params.clone(),
        seed,
        examples,
    })
}

/// Test transcripts without adjacent repeats: a first token from the priors,
/// then uniform moves to a different class.
pub fn generate_sentences<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    count: usize,
    min_tokens: usize,
    max_tokens: usize,
    rng: &mut R,
) -> Result<Vec<TokenSequence>> {
    if min_tokens == 0 || min_tokens > max_tokens {
        return Err(domain("sentence length range is empty or contains zero"));
    }
    let k = spec.classes();
    if k == 1 && max_tokens > 1 {
        return Err(domain("a single class admits only one-token sentences"));
    }
    let transitions = uniform_transitions(k);
    (0..count)
        .map(|_| {
            let len = rng.random_range(min_tokens..=max_tokens);
            TokenSequence::new(markov_chain(spec, &transitions, len, rng), k)
        })
        .collect()
}

pub fn write_sentences<W: Write>(mut w: W, sentences: &[TokenSequence]) -> Result<()> {
    for s in sentences {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

/// One transcript per non-blank line; adjacent repeats are rejected because
/// decoding could never recover them.
pub fn read_sentences<B: BufRead>(r: B, classes: usize) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = TokenSequence::parse(&line, classes).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        if seq.has_adjacent_repeats() {
            return Err(Error::Format(format!("line {}: adjacent repeated tokens", n + 1)));
        }
        out.push(seq);
    }
    if out.is_empty() {
        return Err(Error::Format("no sentences".into()));
    }
    Ok(out)
}

pub const CORPUS_FORMAT: &str = "normguide-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    version: u32,
    classes: usize,
    dims: usize,
    seed: u64,
    params: CorpusParams,
}

/// JSON lines: a header record, then one record per example.
pub fn write_corpus<W: Write>(mut w: W, corpus: &ToyCorpus) -> Result<()> {
    let header = CorpusHeader {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        classes: corpus.params.spec.classes(),
        dims: corpus.params.spec.dims(),
        seed: corpus.seed,
        params: corpus.params.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for ex in &corpus.examples {
        serde_json::to_writer(&mut w, ex)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_corpus<B: BufRead>(r: B) -> Result<ToyCorpus> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty corpus file".into()))??;
    let header: CorpusHeader = serde_json::from_str(&first)?;
    if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
        return Err(Error::Format(format!(
            "unsupported corpus format {} v{}",
            header.format, header.version
        )));
    }
    header.params.validate()?;
    let (k, d) = (header.classes, header.dims);
    if header.params.spec.classes() != k || header.params.spec.dims() != d {
        return Err(Error::Format("corpus header disagrees with its mixture spec".into()));
    }
    let mut examples = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: CorpusExample = serde_json::from_str(&line)?;
        let bad = |msg: &str| Error::Format(format!("corpus record {}: {msg}", n + 1));
        ex.tokens.ids().iter().all(|&i| i < k).then_some(()).ok_or_else(|| bad("token out of range"))?;
        if expand_durations(&ex.tokens, &ex.durations).map_err(|e| bad(&e.to_string()))? != ex.labels {
            return Err(bad("labels are not the expansion of tokens by durations"));
        }
        if ex.frames.shape() != (ex.labels.len(), d) {
            return Err(bad("frame matrix shape does not match labels"));
        }
        examples.push(ex);
    }
    if examples.len() != header.params.examples {
        return Err(Error::Format(format!(
            "header promises {} examples, file holds {}",
            header.params.examples,
            examples.len()
        )));
    }
    Ok(ToyCorpus {
        params: header.params,
        seed: header.seed,
        examples,
    })
}
