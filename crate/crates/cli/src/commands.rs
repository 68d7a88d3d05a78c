//! One function per subcommand. Each writes its result files into a
//! [`RunDir`]; none of them contain timing, so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use normguide::checkpoint::{Checkpoint, Model};
use normguide::diagnostics::{accuracy_csv, accuracy_profile, norm_csv, norm_profile, TimeGrid};
use normguide::inpaint::{inpaint, InpaintConfig, Mask};
use normguide::pipeline::corpus::{write_corpus, write_sentences};
use normguide::pipeline::synth::{cer, decode_frames, eval_cer, sentence_rng, synthesize, NormAudit};
use normguide::sampler::{sample, trajectory_csv, GuidanceConfig, GuidanceMode};
use normguide::{ClassifierGrad, FrameLabels, FrameMatrix};
use serde::Serialize;
use serde_json::json;

use crate::config::ConfigError;
use crate::experiment::{Experiment, Models, Stream};

/// Output directory of one run.
pub struct RunDir {
    dir: PathBuf,
}

impl RunDir {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn create_file(&self, name: &str) -> anyhow::Result<std::io::BufWriter<fs::File>> {
        let p = self.path(name);
        let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(std::io::BufWriter::new(f))
    }
}

pub fn gen_corpus(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let corpus = exp.score_corpus()?;
    write_corpus(out.create_file("corpus.jsonl")?, &corpus)?;
    if !exp.config.classifier.same_corpus {
        write_corpus(out.create_file("classifier_corpus.jsonl")?, &exp.classifier_corpus()?)?;
    }
    write_sentences(out.create_file("sentences.txt")?, &exp.sentences()?)?;
    Ok(())
}

fn checkpoint(exp: &Experiment, out: &RunDir, name: &str, model: Model) -> anyhow::Result<()> {
    Checkpoint::new(exp.seed, exp.sched, model).write(out.create_file(name)?)?;
    Ok(())
}

pub fn train_score(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let (net, report) = exp.train_score()?;
    checkpoint(exp, out, "score.json", Model::Score(net))?;
    out.write_json("score_report.json", &report)
}

pub fn train_classifier(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let (clf, report) = exp.train_classifier()?;
    checkpoint(exp, out, "classifier.json", Model::Classifier(clf))?;
    out.write("classifier_accuracy.csv", accuracy_csv(&report.accuracy_profile))?;
    out.write_json("classifier_report.json", &report)
}

pub fn train_duration(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let (model, report) = exp.train_duration()?;
    checkpoint(exp, out, "duration.json", Model::Duration(model))?;
    out.write_json("duration_report.json", &report)
}

/// Unconditional draws from the configured score model.
pub fn sample_cmd(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let models = exp.models()?;
    let score = exp.score_fn(&models);
    let g = exp.config.guidance()?;
    let cfg = GuidanceConfig::unconditional(g.steps, g.tau);
    let mut rng = exp.rng(Stream::Sample);
    let mut draws = Vec::new();
    let mut traj = String::new();
    for i in 0..exp.config.sample.count {
        let s = sample(score, None, &exp.sched, &cfg, exp.config.sample.frames, score.dims(), &mut rng)?;
        append_trajectory(&mut traj, i, &trajectory_csv(&s.trajectory));
        draws.push(s.x0);
    }
    out.write_json("samples.json", &draws)?;
    out.write("trajectories.csv", traj)
}

/// Prefixes every row of a trajectory table with an index column.
fn append_trajectory(out: &mut String, index: usize, csv: &str) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    if out.is_empty() {
        let _ = writeln!(out, "sentence,{header}");
    }
    for l in lines {
        let _ = writeln!(out, "{index},{l}");
    }
}

/// One guided synthesis per transcript, with decoding and the norm audit.
pub fn synth(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let models = exp.models()?;
    let stack = exp.stack(&models);
    let cfg = exp.config.guidance()?;
    let sentences = exp.sentences()?;
    let eval_seed = exp.eval_seed();
    let mut audit = NormAudit::default();
    let mut lines = String::new();
    let mut traj = String::new();
    let mut total = 0.0;
    for (i, y) in sentences.iter().enumerate() {
        let syn = synthesize(y, &stack, &cfg, &mut sentence_rng(eval_seed, i))?;
        audit.record(&syn.trajectory);
        append_trajectory(&mut traj, i, &trajectory_csv(&syn.trajectory));
        let hyp = decode_frames(&syn.frames, stack.decoder)?;
        let c = cer(y.ids(), hyp.ids())?;
        total += c;
        let rec = json!({
            "index": i,
            "reference": y.to_string(),
            "labels": syn.labels.to_string(),
            "hypothesis": hyp.to_string(),
            "cer": c,
            "frames": syn.frames,
        });
        writeln!(lines, "{}", serde_json::to_string(&rec)?)?;
    }
    out.write("synth.jsonl", lines)?;
    out.write("trajectories.csv", traj)?;
    out.write_json(
        "synth_summary.json",
        &json!({
            "sentences": sentences.len(),
            "mean_cer": total / sentences.len() as f64,
            "guidance_mode": cfg.mode.as_str(),
            "norm_audit": (cfg.mode == GuidanceMode::NormBased).then_some(audit),
        }),
    )
}

pub fn eval_cer_cmd(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let models = exp.models()?;
    let report = eval_cer(
        &exp.sentences()?,
        &exp.stack(&models),
        &exp.config.guidance()?,
        exp.config.eval.samples,
        exp.eval_seed(),
    )?;
    out.write_json("cer.json", &report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub mode: String,
    pub scale: f64,
    pub mean_cer: f64,
}

/// Mean CER over both scale grids, sharing one trained model stack.
pub fn sweep_points(exp: &Experiment) -> anyhow::Result<Vec<SweepPoint>> {
    let models = exp.models()?;
    let stack = exp.stack(&models);
    let sentences = exp.sentences()?;
    let base = exp.config.guidance()?;
    let grids = [
        (GuidanceMode::FixedScale, &exp.config.sweep.fixed_scales),
        (GuidanceMode::NormBased, &exp.config.sweep.norm_scales),
    ];
    let mut points = Vec::new();
    for (mode, grid) in grids {
        for &scale in grid {
            let cfg = GuidanceConfig {
                mode,
                scale,
                ..base.clone()
            };
            let r = eval_cer(&sentences, &stack, &cfg, exp.config.eval.samples, exp.eval_seed())?;
            points.push(SweepPoint {
                mode: mode.as_str().into(),
                scale,
                mean_cer: r.mean,
            });
        }
    }
    Ok(points)
}

pub fn sweep_scale(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let points = sweep_points(exp)?;
    let mut csv = String::from("mode,scale,mean_cer\n");
    for p in &points {
        writeln!(csv, "{},{},{}", p.mode, p.scale, p.mean_cer)?;
    }
    out.write("sweep.csv", csv)?;
    out.write_json("sweep.json", &points)
}

pub fn mask_for(exp: &Experiment, rng: &mut impl rand::Rng) -> anyhow::Result<Mask> {
    let p = &exp.config.inpaint;
    let (f, d) = (p.frames, exp.spec().dims());
    let bad = |e: normguide::Error| anyhow::Error::from(ConfigError(format!("inpaint.mask: {e}")));
    match p.mask.as_str() {
        "bernoulli" => Mask::bernoulli(f, d, p.mask_p, rng).map_err(bad),
        "cross" => Mask::cross(f, d, p.cross_width).map_err(bad),
        "rectangle" => {
            let [f0, f1] = p.rect_frames;
            let [d0, d1] = p.rect_dims;
            Mask::rectangle(f, d, f0..f1, d0..d1).map_err(bad)
        }
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading mask {path}"))?;
            let m: Mask = text.parse().with_context(|| format!("parsing mask {path}"))?;
            if (m.frames(), m.dims()) != (f, d) {
                return Err(ConfigError(format!(
                    "inpaint.mask: {path} is {}x{}, expected inpaint.frames x task.dims = {f}x{d}",
                    m.frames(),
                    m.dims()
                ))
                .into());
            }
            Ok(m)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InpaintResult {
    pub class: usize,
    pub original: FrameMatrix,
    pub output: FrameMatrix,
    pub masked_entries: usize,
    pub touched_frames: Vec<usize>,
    /// Touched frames whose decoded class is `class`.
    pub consistent_frames: usize,
    pub consistency: f64,
}

/// Regenerates the masked part of a single-class sequence and reports how
/// many regenerated frames still decode to that class.
pub fn run_inpaint(exp: &Experiment, rng: &mut impl rand::Rng) -> anyhow::Result<(Mask, InpaintResult)> {
    let models = exp.models()?;
    let p = &exp.config.inpaint;
    let labels = FrameLabels::new(vec![p.class; p.frames], exp.spec().classes())?;
    let original = exp.spec().sample_frames(&labels, rng)?;
    let mask = mask_for(exp, rng)?;
    let cfg = InpaintConfig {
        steps: p.steps,
        tau: p.tau,
    };
    let output = inpaint(exp.score_fn(&models), &exp.sched, &original, &mask, &cfg, rng)?;
    let posts = normguide::FramePosterior::frame_posteriors(&exp.oracle, &output, 0.0)?;
    let touched = mask.touched_frames();
    let consistent = touched
        .iter()
        .filter(|&&f| normguide::model::argmax(&posts[f]) == p.class)
        .count();
    let consistency = if touched.is_empty() {
        1.0
    } else {
        consistent as f64 / touched.len() as f64
    };
    let result = InpaintResult {
        class: p.class,
        original,
        output,
        masked_entries: mask.count_ones(),
        touched_frames: touched,
        consistent_frames: consistent,
        consistency,
    };
    Ok((mask, result))
}

pub fn inpaint_cmd(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let (mask, result) = run_inpaint(exp, &mut exp.rng(Stream::Inpaint))?;
    out.write("mask.txt", mask.to_string())?;
    out.write_json("inpaint.json", &result)
}

fn diag_classifier<'a>(exp: &'a Experiment, models: &'a Models) -> &'a dyn ClassifierGrad {
    match &models.classifier {
        Some(c) => c,
        None => &exp.oracle,
    }
}

pub fn diag_norms(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let models = exp.models()?;
    let rows = norm_profile(
        exp.score_fn(&models),
        diag_classifier(exp, &models),
        &exp.sched,
        &exp.diag_examples()?,
        &TimeGrid::Midpoints(exp.config.diag.grid_points),
        &mut exp.rng(Stream::Diag),
    )?;
    out.write("norms.csv", norm_csv(&rows))
}

pub fn diag_accuracy(exp: &Experiment, out: &RunDir) -> anyhow::Result<()> {
    let models = exp.models()?;
    let grid = TimeGrid::Midpoints(exp.config.diag.grid_points);
    let eval = exp.diag_examples()?;
    let rows = match &models.classifier {
        Some(c) => accuracy_profile(c, &exp.sched, &eval, &grid, &mut exp.rng(Stream::Diag))?,
        None => accuracy_profile(&exp.oracle, &exp.sched, &eval, &grid, &mut exp.rng(Stream::Diag))?,
    };
    out.write("accuracy.csv", accuracy_csv(&rows))
}
