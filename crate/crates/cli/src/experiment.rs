//! Everything a subcommand needs, derived from `(config, seed)`: the toy
//! task, corpora, test transcripts and the model stack.

use std::fs::File;
use std::io::BufReader;

use anyhow::Context;
use normguide::checkpoint::Checkpoint;
use normguide::classifier::{train_classifier, ClassifierReport};
use normguide::nn::{FrameNetConfig, TrainingReport};
use normguide::pipeline::corpus::{read_corpus, read_sentences, CorpusParams, ToyCorpus};
use normguide::pipeline::duration::{train_duration, DurationModel, DurationPredictor, FixedDuration};
use normguide::pipeline::synth::ModelStack;
use normguide::pipeline::{generate_corpus, generate_sentences};
use normguide::score_model::{corpus_rms, train_score};
use normguide::{
    ClassifierGrad, ClassifierNetwork, FrameMatrix, LabeledFrames, MixtureOracle, MixtureSpec, NoiseSchedule,
    ScoreFn, ScoreNetwork, TokenSequence,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ConfigError, Source};

/// Independent random streams, one per purpose, so that e.g. changing the
/// corpus size does not shift the evaluation noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    ScoreCorpus = 1,
    ClassifierCorpus,
    Sentences,
    ScoreTrain,
    ClassifierTrain,
    DurationTrain,
    Eval,
    Sample,
    Inpaint,
    DiagCorpus,
    Diag,
}

/// `K` class means of norm `scale` with independent random signs per channel.
pub fn random_sign_means(classes: usize, dims: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = scale / (dims as f64).sqrt();
    (0..classes)
        .map(|_| {
            (0..dims)
                .map(|_| if rng.random::<bool>() { unit } else { -unit })
                .collect()
        })
        .collect()
}

pub struct Experiment {
    pub config: Config,
    pub seed: u64,
    pub sched: NoiseSchedule,
    pub oracle: MixtureOracle,
}

/// Models selected by the `*.source` keys. `None` means the oracle (score,
/// classifier) or the fixed duration.
pub struct Models {
    pub score: Option<ScoreNetwork>,
    pub classifier: Option<ClassifierNetwork>,
    pub duration: Option<DurationModel>,
    pub fixed: FixedDuration,
}

fn config_error(msg: String) -> anyhow::Error {
    ConfigError(msg).into()
}

fn read_checkpoint(path: &str) -> anyhow::Result<Checkpoint> {
    let f = File::open(path).with_context(|| format!("opening checkpoint {path}"))?;
    Checkpoint::read(BufReader::new(f)).with_context(|| format!("reading checkpoint {path}"))
}

impl Experiment {
    pub fn new(config: Config, seed: u64) -> anyhow::Result<Self> {
        config.validate()?;
        let sched = config.schedule()?;
        let t = &config.task;
        let means = random_sign_means(t.classes, t.dims, t.mean_scale, t.mean_seed);
        let spec = MixtureSpec::isotropic(means, t.std).map_err(|e| config_error(format!("task: {e}")))?;
        Ok(Self {
            oracle: MixtureOracle::new(spec, sched),
            config,
            seed,
            sched,
        })
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.oracle.spec
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng
    }

    /// Seed of the per-sentence evaluation streams.
    pub fn eval_seed(&self) -> u64 {
        self.rng(Stream::Eval).next_u64()
    }

    pub fn corpus_params(&self, examples: usize) -> anyhow::Result<CorpusParams> {
        let c = &self.config.corpus;
        let mut p = CorpusParams::new(self.spec().clone(), examples);
        p.durations = self.config.duration_law()?;
        p.min_tokens = c.min_tokens;
        p.max_tokens = c.max_tokens;
        Ok(p)
    }

    fn check_corpus(&self, corpus: &ToyCorpus, path: &str) -> anyhow::Result<()> {
        let s = &corpus.params.spec;
        if s.classes() != self.spec().classes() || s.dims() != self.spec().dims() {
            return Err(config_error(format!(
                "{path}: corpus has K={} D={}, task has K={} D={}",
                s.classes(),
                s.dims(),
                self.spec().classes(),
                self.spec().dims()
            )));
        }
        Ok(())
    }

    fn load_or_generate(&self, path: &str, stream: Stream) -> anyhow::Result<ToyCorpus> {
        if path.is_empty() {
            let params = self.corpus_params(self.config.corpus.examples)?;
            return Ok(generate_corpus(&params, self.seed, &mut self.rng(stream))?);
        }
        let f = File::open(path).with_context(|| format!("opening corpus {path}"))?;
        let corpus = read_corpus(BufReader::new(f)).with_context(|| format!("reading corpus {path}"))?;
        self.check_corpus(&corpus, path)?;
        Ok(corpus)
    }

    /// Data of the unconditional model.
    pub fn score_corpus(&self) -> anyhow::Result<ToyCorpus> {
        self.load_or_generate(&self.config.corpus.file, Stream::ScoreCorpus)
    }

    /// Labeled data of the classifier and duration model; a separate draw
    /// unless `classifier.same_corpus` is set.
    pub fn classifier_corpus(&self) -> anyhow::Result<ToyCorpus> {
        if self.config.classifier.same_corpus {
            self.score_corpus()
        } else {
            self.load_or_generate(&self.config.classifier.corpus_file, Stream::ClassifierCorpus)
        }
    }

    /// The leading `classifier.data_fraction` of the classifier corpus, at
    /// least one example.
    pub fn classifier_examples(&self) -> anyhow::Result<Vec<LabeledFrames>> {
        let corpus = self.classifier_corpus()?;
        let n = ((corpus.examples.len() as f64 * self.config.classifier.data_fraction).round() as usize).max(1);
        Ok(corpus.examples[..n].iter().map(|e| e.labeled()).collect())
    }

    /// Held-out labeled examples for the diagnostics.
    pub fn diag_examples(&self) -> anyhow::Result<Vec<LabeledFrames>> {
        let params = self.corpus_params(self.config.diag.eval_examples)?;
        let corpus = generate_corpus(&params, self.seed, &mut self.rng(Stream::DiagCorpus))?;
        Ok(corpus.examples.iter().map(|e| e.labeled()).collect())
    }

    pub fn sentences(&self) -> anyhow::Result<Vec<TokenSequence>> {
        let e = &self.config.eval;
        if e.sentences_file.is_empty() {
            let mut rng = self.rng(Stream::Sentences);
            return Ok(generate_sentences(self.spec(), e.sentences, e.min_tokens, e.max_tokens, &mut rng)?);
        }
        let f = File::open(&e.sentences_file).with_context(|| format!("opening {}", e.sentences_file))?;
        Ok(read_sentences(BufReader::new(f), self.spec().classes())
            .with_context(|| format!("reading {}", e.sentences_file))?)
    }

    pub fn train_score(&self) -> anyhow::Result<(ScoreNetwork, TrainingReport)> {
        let s = &self.config.score;
        let corpus = self.score_corpus()?;
        let frames: Vec<FrameMatrix> = corpus.examples.into_iter().map(|e| e.frames).collect();
        let cfg = FrameNetConfig {
            dims: self.spec().dims(),
            context: s.context,
            hidden: s.hidden.clone(),
            cond_dim: 0,
        };
        let mut rng = self.rng(Stream::ScoreTrain);
        let mut net = ScoreNetwork::new(cfg, self.sched, corpus_rms(&frames), &mut rng);
        let report = train_score(&mut net, &frames, &self.config.score_train()?, &mut rng)?;
        Ok((net, report))
    }

    pub fn train_classifier(&self) -> anyhow::Result<(ClassifierNetwork, ClassifierReport)> {
        let c = &self.config.classifier;
        let data = self.classifier_examples()?;
        let frames: Vec<FrameMatrix> = data.iter().map(|e| e.frames.clone()).collect();
        let cfg = FrameNetConfig {
            dims: self.spec().dims(),
            context: c.context,
            hidden: c.hidden.clone(),
            cond_dim: 0,
        };
        let mut rng = self.rng(Stream::ClassifierTrain);
        let mut clf = ClassifierNetwork::new(cfg, self.spec().classes(), self.sched, corpus_rms(&frames), &mut rng);
        let report = train_classifier(&mut clf, &data, &self.config.classifier_train()?, &mut rng)?;
        Ok((clf, report))
    }

    pub fn train_duration(&self) -> anyhow::Result<(DurationModel, TrainingReport)> {
        let d = &self.config.duration;
        let corpus = self.classifier_corpus()?;
        let mut rng = self.rng(Stream::DurationTrain);
        let mut model = DurationModel::new(self.spec().classes(), d.context, &d.hidden, &mut rng);
        let report = train_duration(&mut model, &corpus.examples, &self.config.duration_train()?, &mut rng)?;
        Ok((model, report))
    }

    fn check_schedule(&self, ck: &Checkpoint, path: &str) -> anyhow::Result<()> {
        if ck.schedule != self.sched {
            return Err(config_error(format!("{path}: checkpoint schedule differs from schedule.*")));
        }
        Ok(())
    }

    /// Resolves every `*.source` key, training in-process where asked.
    pub fn models(&self) -> anyhow::Result<Models> {
        let (k, d) = (self.spec().classes(), self.spec().dims());
        let score = match self.config.score_source()? {
            Source::Oracle => None,
            Source::Train => Some(self.train_score()?.0),
            Source::Checkpoint(path) => {
                let ck = read_checkpoint(&path)?;
                self.check_schedule(&ck, &path)?;
                let net = ck.into_score()?;
                if net.dims() != d {
                    return Err(config_error(format!("{path}: score model has D={}, task has D={d}", net.dims())));
                }
                Some(net)
            }
            Source::Fixed => unreachable!("rejected by validation"),
        };
        let classifier = match self.config.classifier_source()? {
            Source::Oracle => None,
            Source::Train => Some(self.train_classifier()?.0),
            Source::Checkpoint(path) => {
                let ck = read_checkpoint(&path)?;
                self.check_schedule(&ck, &path)?;
                let clf = ck.into_classifier()?;
                if clf.num_classes() != k || clf.net.config.dims != d {
                    return Err(config_error(format!(
                        "{path}: classifier has K={} D={}, task has K={k} D={d}",
                        clf.num_classes(),
                        clf.net.config.dims
                    )));
                }
                Some(clf)
            }
            Source::Fixed => unreachable!("rejected by validation"),
        };
        let duration = match self.config.duration_source()? {
            Source::Fixed => None,
            Source::Train => Some(self.train_duration()?.0),
            Source::Checkpoint(path) => {
                let m = read_checkpoint(&path)?.into_duration()?;
                if m.classes != k {
                    return Err(config_error(format!("{path}: duration model has K={}, task has K={k}", m.classes)));
                }
                Some(m)
            }
            Source::Oracle => unreachable!("rejected by validation"),
        };
        Ok(Models {
            score,
            classifier,
            duration,
            fixed: FixedDuration(self.config.duration.fixed_frames),
        })
    }

    pub fn score_fn<'a>(&'a self, models: &'a Models) -> &'a dyn ScoreFn {
        match &models.score {
            Some(net) => net,
            None => &self.oracle,
        }
    }

    /// Decoding always uses the Bayes posterior of the task.
    pub fn stack<'a>(&'a self, models: &'a Models) -> ModelStack<'a> {
        let classifier: &dyn ClassifierGrad = match &models.classifier {
            Some(c) => c,
            None => &self.oracle,
        };
        let durations: &dyn DurationPredictor = match &models.duration {
            Some(m) => m,
            None => &models.fixed,
        };
        ModelStack {
            score: self.score_fn(models),
            classifier: Some(classifier),
            durations,
            decoder: &self.oracle,
            sched: self.sched,
        }
    }
}
