//! Verb implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use gsr_core::analysis::{self, DegradationAxis};
use gsr_core::config::Config;
use gsr_core::eval::{evaluate_corpus, Enhancer, Identity};
use gsr_core::train::{run_training, RunOptions, TrainData, Trainer};
use gsr_core::{checkpoint, Generator};
use gsr_dsp::corpus::{read_path_list, simulate_corpus, CorpusManifest};
use gsr_dsp::{read_wav, write_wav, Waveform};

use crate::{plot, AnalyzeCommand, Axis, CorpusArgs, EvalArgs, SimulateArgs, TrainArgs};

/// Global flags shared by every verb.
pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub ckpt: Option<PathBuf>,
}

impl Context {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        Ok(cfg)
    }

    /// The checkpoint directory named by `--ckpt`, descending into the latest
    /// `ckpt_*` when it points at a run directory.
    fn ckpt_dir(&self) -> Result<Option<PathBuf>> {
        let Some(p) = &self.ckpt else { return Ok(None) };
        if p.join(checkpoint::CONFIG_FILE).is_file() {
            return Ok(Some(p.clone()));
        }
        match checkpoint::latest(p)? {
            Some(d) => Ok(Some(d)),
            None => bail!("{} is neither a checkpoint nor a run directory with checkpoints", p.display()),
        }
    }

    fn require_generator(&self) -> Result<Generator> {
        let dir = self.ckpt_dir()?.context("--ckpt is required")?;
        log::info!("loading generator from {}", dir.display());
        Ok(checkpoint::load_generator(&dir)?)
    }

    /// The checkpointed generator, or a freshly initialized one from the
    /// configuration when no checkpoint is given.
    fn generator(&self) -> Result<Generator> {
        if self.ckpt.is_some() {
            return self.require_generator();
        }
        let cfg = self.config()?;
        log::warn!("no --ckpt given, using an untrained generator (seed {})", cfg.train.seed);
        Ok(Generator::new(cfg.generator(), cfg.train.seed)?)
    }
}

fn manifest(c: &CorpusArgs, split: &str) -> Result<CorpusManifest> {
    let clean = c.clean.as_deref().context("--clean list is required")?;
    Ok(CorpusManifest::from_lists(clean, c.noise.as_deref(), c.rir.as_deref(), split)?)
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let cfg = ctx.config()?;
    let m = manifest(&a.corpus, &a.split)?;
    let count = a.count.unwrap_or(m.clean.len());
    let records = simulate_corpus(&m, &cfg.degradation, cfg.train.seed, count, &a.out)?;
    log::info!("wrote {} pairs to {}", records.len(), a.out.display());
    Ok(())
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let mut trainer = if a.resume || ctx.ckpt.is_some() {
        let dir = match ctx.ckpt_dir()? {
            Some(d) => d,
            None => checkpoint::latest(&a.out)?.with_context(|| format!("no checkpoint to resume in {}", a.out.display()))?,
        };
        if ctx.config.is_some() {
            log::warn!("resuming: the checkpoint's configuration replaces --config");
        }
        log::info!("resuming from {}", dir.display());
        Trainer::resume(&dir)?
    } else {
        Trainer::new(ctx.config()?)?
    };
    let data = match &a.pairs {
        Some(p) => TrainData::from_pair_list(p)?,
        None => TrainData::from_manifest(&manifest(&a.corpus, "train")?, &trainer.cfg.degradation)?,
    };
    let opts = RunOptions { out_dir: a.out.clone(), max_steps: a.max_steps };
    let records = run_training(&mut trainer, &data, &opts)?;
    trainer.save(&checkpoint::ckpt_dir(&a.out, trainer.state.step))?;
    if let Some(last) = records.last() {
        log::info!("finished at step {}, total loss {:.4}", last.step, last.report.total);
    }
    Ok(())
}

/// WAV files under `root`, sorted, as paths relative to it.
fn wav_tree(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                out.push(p.strip_prefix(root)?.to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn enhance(ctx: &Context, input: &Path, out: &Path) -> Result<()> {
    let gen = ctx.require_generator()?;
    if input.is_file() {
        let target = if out.extension().is_some() { out.to_path_buf() } else { out.join(input.file_name().unwrap()) };
        if let Some(parent) = target.parent() {
            create_dir(parent)?;
        }
        return Ok(write_wav(&target, &gen.restore(&read_wav(input)?)?)?);
    }
    let files = wav_tree(input)?;
    if files.is_empty() {
        bail!("no WAV files under {}", input.display());
    }
    for rel in &files {
        let target = out.join(rel);
        create_dir(target.parent().unwrap())?;
        let w = read_wav(input.join(rel))?;
        write_wav(&target, &gen.restore(&w).with_context(|| format!("restoring {}", rel.display()))?)?;
    }
    log::info!("restored {} files into {}", files.len(), out.display());
    Ok(())
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let enhancer: Box<dyn Enhancer> = if a.identity { Box::new(Identity) } else { Box::new(ctx.require_generator()?) };
    let report = evaluate_corpus(enhancer.as_ref(), &a.pairs)?;
    let tsv = report.to_tsv();
    match &a.out {
        Some(p) => write_text(p, &tsv)?,
        None => print!("{tsv}"),
    }
    log::info!("LSD {:.4} ± {:.4}, SI-SNR {:.2} ± {:.2} dB", report.lsd.mean, report.lsd.std, report.si_snr.mean, report.si_snr.std);
    Ok(())
}

pub fn analyze(ctx: &Context, cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Gradients { input, out } => gradients(ctx, &input, &out),
        AnalyzeCommand::Iou { inputs, against, out } => iou(ctx, &inputs, against.as_deref(), &out),
        AnalyzeCommand::GlpRatio { clean, noise, axis, levels, out } => glp_ratio(ctx, &clean, noise.as_deref(), axis, levels, &out),
        AnalyzeCommand::Betas { out } => betas(ctx, &out),
    }
}

fn resolutions(gen: &Generator) -> usize {
    gen.cfg.bottleneck.resolutions
}

fn gradients(ctx: &Context, input: &Path, out: &Path) -> Result<()> {
    let gen = ctx.generator()?;
    let w = read_wav(input)?;
    create_dir(out)?;
    let mut table = String::from("resolution\tframes\tbins\tretained_fraction\n");
    let mut masks = Vec::new();
    for r in 0..resolutions(&gen) {
        let a = analysis::influential_gradients(&gen, &w, r)?;
        let (t, f) = (a.mask.t, a.mask.f);
        table += &format!("{r}\t{t}\t{f}\t{:.6}\n", a.retained_fraction);
        plot::heatmap(&plot::log_normalize(&a.weighted, 80.0), t, f, 2, &out.join(format!("weighted_r{r}.png")))?;
        plot::heatmap(&a.normalized, t, f, 2, &out.join(format!("gradient_r{r}.png")))?;
        masks.push(a.mask);
    }
    let report = analysis::resolution_iou(&masks)?;
    table += &format!("# mean_iou\t{:.6}\n", report.mean);
    write_text(&out.join("attribution.tsv"), &table)?;
    log::info!("attribution for {} resolutions written to {}, mean IoU {:.4}", masks.len(), out.display(), report.mean);
    Ok(())
}

fn mean_iou(gen: &Generator, w: &Waveform) -> Result<f64> {
    let masks = (0..resolutions(gen)).map(|r| Ok(analysis::influential_gradients(gen, w, r)?.mask)).collect::<Result<Vec<_>>>()?;
    Ok(analysis::resolution_iou(&masks)?.mean)
}

fn iou(ctx: &Context, inputs: &Path, against: Option<&Path>, out: &Path) -> Result<()> {
    let gen = ctx.generator()?;
    let other = against.map(checkpoint::load_generator).transpose()?;
    let files = read_path_list(inputs)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut table = String::from(if other.is_some() { "path\tmean_iou\tmean_iou_against\n" } else { "path\tmean_iou\n" });
    for p in &files {
        let w = read_wav(p)?;
        a.push(mean_iou(&gen, &w)?);
        table += &format!("{}\t{:.6}", p.display(), a.last().unwrap());
        if let Some(g) = &other {
            b.push(mean_iou(g, &w)?);
            table += &format!("\t{:.6}", b.last().unwrap());
        }
        table += "\n";
    }
    if other.is_some() {
        match analysis::wilcoxon_signed_rank(&a, &b) {
            Ok(t) => table += &format!("# wilcoxon\tstatistic={}\tp={:.6e}\tn={}\tmethod={:?}\n", t.statistic, t.p_value, t.n, t.method),
            Err(e) => log::warn!("Wilcoxon test skipped: {e}"),
        }
    }
    write_text(out, &table)?;
    Ok(())
}

fn glp_ratio(ctx: &Context, clean: &Path, noise: Option<&Path>, axis: Axis, levels: Option<Vec<f64>>, out: &Path) -> Result<()> {
    let gen = ctx.generator()?;
    let seed = ctx.config()?.train.seed;
    let axis = match axis {
        Axis::Snr => DegradationAxis::Snr,
        Axis::Cutoff => DegradationAxis::Cutoff,
    };
    let clean: Vec<Waveform> = read_path_list(clean)?.iter().map(read_wav).collect::<Result<_, _>>()?;
    let noise: Vec<Waveform> = match noise {
        Some(n) => read_path_list(n)?.iter().map(read_wav).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    if matches!(axis, DegradationAxis::Snr) && noise.is_empty() {
        bail!("the SNR axis needs a --noise list");
    }
    let levels = levels.unwrap_or_else(|| axis.default_levels());
    let report = analysis::glp_gradient_ratio(&gen, &clean, &noise, axis, &levels, seed)?;
    create_dir(out)?;
    let mut table = String::from("level\tg_gp\tg_l\tratio\n");
    for r in &report.rows {
        table += &format!("{}\t{:.6e}\t{:.6e}\t{:.6}\n", r.level, r.g_gp, r.g_l, r.r);
    }
    write_text(&out.join("glp_ratio.tsv"), &table)?;
    plot::line_plot(&[report.rows.iter().map(|r| (r.level, r.r)).collect()], &out.join("glp_ratio.png"))?;
    Ok(())
}

fn betas_csv(gen: &Generator) -> Result<(String, Vec<(f64, f64)>)> {
    let rows = analysis::export_betas(gen)?;
    let mut csv = String::from("frequency_hz,beta\n");
    for (f, b) in &rows {
        csv += &format!("{f},{b}\n");
    }
    Ok((csv, rows))
}

fn betas(ctx: &Context, out: &Path) -> Result<()> {
    let (csv, rows) = betas_csv(&ctx.generator()?)?;
    create_dir(out)?;
    write_text(&out.join("betas.csv"), &csv)?;
    plot::line_plot(&[rows], &out.join("betas.png"))?;
    Ok(())
}

pub fn export_betas(ctx: &Context, out: &Path) -> Result<()> {
    let (csv, _) = betas_csv(&ctx.generator()?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    f.write_all(csv.as_bytes())?;
    Ok(())
}
