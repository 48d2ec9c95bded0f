//! Adversarial training loop: segmenting, the deterministic data pipeline,
//! discriminator-then-generator updates, metrics log, checkpoints and resume.

use std::io::Write;
use std::path::{Path, PathBuf};

use gsr_autograd::{ParamStore, Tensor};
use gsr_dsp::corpus::{read_pair_list, CorpusManifest};
use gsr_dsp::degrade::{apply_recipe, item_seed, sample_recipe, DegradationPolicy};
use gsr_dsp::{read_wav, Waveform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{self, Snapshot, TrainState};
use crate::config::{Config, TrainConfig};
use crate::disc::Discriminators;
use crate::error::io_err;
use crate::loss::{self, GeneratorTerms, LossReport, MelLoss};
use crate::optim::{lr_at_epoch, AdamW};
use crate::{Error, GenOutput, Generator, Result, Trace};

const DISC_SEED_SALT: u64 = 0xd15c;

/// Aligned crops of a clean/degraded pair. Both get the same offset, drawn
/// from `seed`; items shorter than `segment_len` are zero-padded at the end.
pub fn make_segments(clean: &[f64], degraded: &[f64], segment_len: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if clean.len() != degraded.len() {
        return Err(Error::Contract(format!("clean has {} samples, degraded {}", clean.len(), degraded.len())));
    }
    let n = clean.len();
    let offset = if n > segment_len { ChaCha8Rng::seed_from_u64(seed).gen_range(0..=n - segment_len) } else { 0 };
    let crop = |x: &[f64]| {
        let mut s = x[offset..(offset + segment_len).min(n)].to_vec();
        s.resize(segment_len, 0.0);
        s
    };
    Ok((crop(clean), crop(degraded)))
}

enum Audio {
    File(PathBuf),
    Memory(Waveform),
}

impl Audio {
    fn load(&self) -> Result<Waveform> {
        match self {
            Audio::File(p) => Ok(read_wav(p)?),
            Audio::Memory(w) => Ok(w.clone()),
        }
    }
}

enum Source {
    /// Clean speech degraded on the fly.
    Simulated { clean: Vec<Audio>, noise: Vec<Waveform>, rirs: Vec<Waveform>, policy: DegradationPolicy },
    /// Fixed `(degraded, clean)` pairs.
    Pairs(Vec<(Audio, Audio)>),
}

/// Training items. The content of batch `b` of epoch `e` depends only on
/// the seed, `e` and `b`.
pub struct TrainData {
    source: Source,
}

/// One batch of `(B, segment)` waveforms.
pub struct Batch {
    pub degraded: Tensor,
    pub clean: Tensor,
    /// Source item index of each row.
    pub items: Vec<usize>,
}

impl TrainData {
    /// On-the-fly degradation of a clean manifest. Kernels whose pool is
    /// empty are dropped from the policy.
    pub fn from_manifest(m: &CorpusManifest, policy: &DegradationPolicy) -> Result<Self> {
        m.validate()?;
        let noise = m.load_noise()?;
        let rirs = m.load_rirs()?;
        let clean = m.clean.iter().cloned().map(Audio::File).collect();
        Self::simulated(clean, noise, rirs, policy)
    }

    pub fn from_waveforms(clean: Vec<Waveform>, noise: Vec<Waveform>, rirs: Vec<Waveform>, policy: &DegradationPolicy) -> Result<Self> {
        Self::simulated(clean.into_iter().map(Audio::Memory).collect(), noise, rirs, policy)
    }

    fn simulated(clean: Vec<Audio>, noise: Vec<Waveform>, rirs: Vec<Waveform>, policy: &DegradationPolicy) -> Result<Self> {
        if clean.is_empty() {
            return Err(Error::Config("no clean training items".into()));
        }
        let mut policy = policy.clone();
        if noise.is_empty() {
            policy.noise = None;
        }
        if rirs.is_empty() {
            policy.reverb = None;
        }
        if policy.is_empty() {
            return Err(Error::Config("degradation policy is empty once kernels without a pool are removed".into()));
        }
        Ok(Self { source: Source::Simulated { clean, noise, rirs, policy } })
    }

    /// Pre-simulated pairs from a `degraded<TAB>clean` list.
    pub fn from_pair_list(path: &Path) -> Result<Self> {
        let pairs = read_pair_list(path)?;
        if pairs.is_empty() {
            return Err(Error::Config(format!("{} lists no pairs", path.display())));
        }
        for p in pairs.iter().flat_map(|(d, c)| [d, c]) {
            if !p.is_file() {
                return Err(Error::Io { path: p.clone(), source: std::io::ErrorKind::NotFound.into() });
            }
        }
        Ok(Self { source: Source::Pairs(pairs.into_iter().map(|(d, c)| (Audio::File(d), Audio::File(c))).collect()) })
    }

    /// In-memory `(degraded, clean)` pairs.
    pub fn from_pairs(pairs: Vec<(Waveform, Waveform)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("no training pairs".into()));
        }
        Ok(Self { source: Source::Pairs(pairs.into_iter().map(|(d, c)| (Audio::Memory(d), Audio::Memory(c))).collect()) })
    }

    pub fn len(&self) -> usize {
        match &self.source {
            Source::Simulated { clean, .. } => clean.len(),
            Source::Pairs(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn items_per_epoch(&self, cfg: &TrainConfig) -> usize {
        cfg.items_per_epoch.unwrap_or(self.len()).max(1)
    }

    pub fn batches_per_epoch(&self, cfg: &TrainConfig) -> u64 {
        (self.items_per_epoch(cfg) / cfg.batch).max(1) as u64
    }

    /// Source index of every slot of an epoch.
    pub fn epoch_order(&self, cfg: &TrainConfig, epoch: u64) -> Vec<usize> {
        let n = self.items_per_epoch(cfg);
        let mut order: Vec<usize> = (0..n).map(|i| i % self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(item_seed(cfg.seed, epoch)));
        order
    }

    /// Segmented `(clean, degraded)` for one slot.
    fn slot(&self, cfg: &TrainConfig, epoch: u64, slot: usize, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let seed = item_seed(item_seed(cfg.seed, epoch), slot as u64);
        let (degraded, clean) = match &self.source {
            Source::Simulated { clean, noise, rirs, policy } => {
                let c = clean[index].load()?;
                let recipe = sample_recipe(seed, policy)?;
                (apply_recipe(&c, &recipe, noise, rirs)?.0, c)
            }
            Source::Pairs(p) => (p[index].0.load()?, p[index].1.load()?),
        };
        make_segments(&clean.samples, &degraded.samples, cfg.segment, seed.rotate_left(17))
    }

    pub fn batch(&self, cfg: &TrainConfig, epoch: u64, b: u64) -> Result<Batch> {
        let order = self.epoch_order(cfg, epoch);
        let start = b as usize * cfg.batch;
        let end = (start + cfg.batch).min(order.len());
        if start >= end {
            return Err(Error::Contract(format!("batch {b} past the end of epoch {epoch}")));
        }
        let (mut clean, mut degraded) = (Vec::new(), Vec::new());
        for (slot, &index) in order.iter().enumerate().take(end).skip(start) {
            let (c, d) = self.slot(cfg, epoch, slot, index)?;
            clean.extend(c);
            degraded.extend(d);
        }
        let shape = [end - start, cfg.segment];
        Ok(Batch { degraded: Tensor::new(degraded, &shape), clean: Tensor::new(clean, &shape), items: order[start..end].to_vec() })
    }
}

/// Generator, discriminators, their optimizers and the loop position.
pub struct Trainer {
    pub cfg: Config,
    pub gen: Generator,
    pub disc: Discriminators,
    pub opt_g: AdamW,
    pub opt_d: AdamW,
    pub state: TrainState,
    mel: MelLoss,
}

fn checksum(store: &ParamStore) -> f64 {
    store.params().iter().flat_map(|p| p.to_vec()).map(|v| v.abs()).sum()
}

impl Trainer {
    pub fn new(cfg: Config) -> Result<Self> {
        cfg.validate()?;
        let gen = Generator::new(cfg.generator(), cfg.train.seed)?;
        let disc = Discriminators::new(&cfg.discriminator, cfg.train.seed ^ DISC_SEED_SALT)?;
        if cfg.train.segment < disc.min_len() {
            return Err(Error::Config(format!(
                "segment {} shorter than the discriminators' minimum input {}",
                cfg.train.segment,
                disc.min_len()
            )));
        }
        let opt_g = AdamW::new(gen.params(), cfg.optimizer);
        let opt_d = AdamW::new(disc.params(), cfg.optimizer);
        Ok(Self { cfg, gen, disc, opt_g, opt_d, state: TrainState::default(), mel: MelLoss::standard()? })
    }

    /// Rebuilds a trainer from a checkpoint directory.
    pub fn resume(dir: &Path) -> Result<Self> {
        let mut t = Self::new(checkpoint::load_config(dir)?)?;
        checkpoint::load_store(&dir.join(checkpoint::GENERATOR_FILE), t.gen.params())?;
        checkpoint::load_store(&dir.join(checkpoint::DISCRIMINATOR_FILE), t.disc.params())?;
        checkpoint::load_optimizers(dir, &mut t.opt_g, &mut t.opt_d)?;
        t.state = checkpoint::load_state(dir)?;
        Ok(t)
    }

    pub fn lr(&self) -> f64 {
        lr_at_epoch(self.cfg.train.lr, self.cfg.train.lr_decay, self.state.epoch)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save(
            dir,
            &Snapshot {
                config: &self.cfg,
                state: self.state,
                gen: self.gen.params(),
                disc: self.disc.params(),
                opt_g: &self.opt_g,
                opt_d: &self.opt_d,
            },
        )
    }

    fn non_finite(&self, detail: String) -> Error {
        Error::NonFinite { step: self.state.step, detail }
    }

    /// One discriminator update on detached generator output, then one
    /// generator update with the discriminators frozen.
    pub fn train_step(&mut self, degraded: &Tensor, clean: &Tensor, lr: f64) -> Result<LossReport> {
        if degraded.shape() != clean.shape() {
            return Err(Error::Shape(format!("degraded {:?} vs clean {:?}", degraded.shape(), clean.shape())));
        }
        let (out, y_hat) = self.gen.restore_batch(degraded, &Trace::default())?;
        let l_d = self.discriminator_step(&y_hat, clean, lr)?;
        let mut report = self.generator_step(&out, &y_hat, clean, lr)?;
        report.disc = l_d;
        Ok(report)
    }

    /// Updates the discriminators on `L_D`; `y_hat` is detached first.
    pub fn discriminator_step(&mut self, y_hat: &Tensor, clean: &Tensor, lr: f64) -> Result<f64> {
        let real = self.disc.forward(clean)?;
        let fake = self.disc.forward(&y_hat.detach())?;
        let l_d = loss::adv_loss_discriminator(&real.scores(), &fake.scores())?;
        if !l_d.item().is_finite() {
            return Err(self.non_finite(format!("discriminator loss {}", l_d.item())));
        }
        self.disc.params().zero_grad();
        l_d.backward();
        self.opt_d.step(lr);
        self.disc.params().zero_grad();
        Ok(l_d.item())
    }

    /// Updates the generator on the weighted objective with the
    /// discriminators frozen.
    pub fn generator_step(&mut self, out: &GenOutput, y_hat: &Tensor, clean: &Tensor, lr: f64) -> Result<LossReport> {
        let disc_store = self.disc.params().clone();
        disc_store.set_trainable(false);
        let report = self.generator_update(out, y_hat, clean, lr);
        disc_store.set_trainable(true);
        report
    }

    fn generator_update(&mut self, out: &GenOutput, y_hat: &Tensor, clean: &Tensor, lr: f64) -> Result<LossReport> {
        let target = self.gen.analyze(clean)?;
        let exponent = self.gen.cfg.compress_exponent;
        let real = self.disc.forward(clean)?;
        let fake = self.disc.forward(y_hat)?;
        let terms = GeneratorTerms {
            adv: loss::adv_loss_generator(&fake.scores())?,
            mag: loss::mag_loss(&out.cmag, &target.cmag)?,
            awp: loss::anti_wrap_phase_loss(&out.phase, &target.phase)?,
            con: loss::consistency_loss(&out.cmag, &out.phase, self.gen.stft_engine(), target.len, exponent)?,
            ri: loss::complex_loss(
                &loss::compressed_complex(&out.cmag, &out.phase),
                &loss::compressed_complex(&target.cmag, &target.phase),
            )?,
            mel: self.mel.forward(y_hat, clean)?,
            fm: loss::feature_matching_loss(&real.features(), &fake.features())?,
        };
        let (total, report) = loss::generator_objective(&terms, &self.cfg.loss);
        if !report.is_finite() {
            return Err(self.non_finite(format!("generator terms {report:?}")));
        }
        self.gen.params().zero_grad();
        total.backward();
        self.opt_g.step(lr);
        self.gen.params().zero_grad();
        Ok(report)
    }

    /// Runs the next batch of the current epoch and advances the position.
    pub fn step_on(&mut self, data: &TrainData) -> Result<StepRecord> {
        let t = self.cfg.train.clone();
        let batch = data.batch(&t, self.state.epoch, self.state.batch)?;
        let lr = self.lr();
        let report = self.train_step(&batch.degraded, &batch.clean, lr)?;
        let rec = StepRecord { step: self.state.step, epoch: self.state.epoch, batch: self.state.batch, lr, report };
        self.state.step += 1;
        self.state.batch += 1;
        if self.state.batch >= data.batches_per_epoch(&t) {
            self.state.batch = 0;
            self.state.epoch += 1;
        }
        Ok(rec)
    }

    pub fn generator_checksum(&self) -> f64 {
        checksum(self.gen.params())
    }

    pub fn discriminator_checksum(&self) -> f64 {
        checksum(self.disc.params())
    }
}

/// One metrics-log row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub batch: u64,
    pub lr: f64,
    pub report: LossReport,
}

pub const METRICS_HEADER: &str = "step,epoch,batch,lr,adv,mag,awp,con,ri,mel,fm,recon,total,disc";

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        let vals = [r.adv, r.mag, r.awp, r.con, r.ri, r.mel, r.fm, r.recon, r.total, r.disc];
        let tail: Vec<String> = vals.iter().map(|v| format!("{v:.9e}")).collect();
        format!("{},{},{},{:.9e},{}", self.step, self.epoch, self.batch, self.lr, tail.join(","))
    }
}

/// Where a run writes and how far it goes.
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Stop after this many optimizer steps in total.
    pub max_steps: Option<u64>,
}

/// Trains until the configured epoch count (or `max_steps`), appending to
/// `metrics.csv` and writing `ckpt_{step}/` directories. A trainer restored
/// with [`Trainer::resume`] continues from its saved position.
pub fn run_training(trainer: &mut Trainer, data: &TrainData, opts: &RunOptions) -> Result<Vec<StepRecord>> {
    let out = &opts.out_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let metrics_path = out.join("metrics.csv");
    let fresh = !metrics_path.exists();
    let mut metrics = std::fs::OpenOptions::new().create(true).append(true).open(&metrics_path).map_err(io_err(&metrics_path))?;
    if fresh {
        writeln!(metrics, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    }
    let every = trainer.cfg.train.checkpoint_every;
    let mut records = Vec::new();
    while trainer.state.epoch < trainer.cfg.train.epochs && opts.max_steps.is_none_or(|m| trainer.state.step < m) {
        let epoch = trainer.state.epoch;
        let rec = match trainer.step_on(data) {
            Ok(r) => r,
            Err(e @ Error::NonFinite { .. }) => {
                write_nan_snapshot(out, trainer, &e)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        writeln!(metrics, "{}", rec.csv_row()).map_err(io_err(&metrics_path))?;
        log::info!("step {} epoch {} total {:.4} recon {:.4} disc {:.4}", rec.step, rec.epoch, rec.report.total, rec.report.recon, rec.report.disc);
        records.push(rec);
        let s = trainer.state.step;
        if trainer.state.epoch != epoch || every.is_some_and(|k| k > 0 && s % k == 0) {
            trainer.save(&checkpoint::ckpt_dir(out, s))?;
        }
    }
    metrics.flush().map_err(io_err(&metrics_path))?;
    Ok(records)
}

fn write_nan_snapshot(out: &Path, trainer: &Trainer, e: &Error) -> Result<()> {
    #[derive(Serialize)]
    struct NanSnapshot<'a> {
        error: String,
        state: &'a TrainState,
        lr: f64,
    }
    let path = out.join("nan_snapshot.json");
    let body = NanSnapshot { error: e.to_string(), state: &trainer.state, lr: trainer.lr() };
    std::fs::write(&path, serde_json::to_string_pretty(&body).expect("snapshot serializes")).map_err(io_err(&path))?;
    log::error!("non-finite loss, snapshot written to {}", path.display());
    Ok(())
}
