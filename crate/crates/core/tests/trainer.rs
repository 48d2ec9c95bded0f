use std::path::Path;

use gsr_core::checkpoint::{self, ckpt_dir, latest, read_tensors};
use gsr_core::config::Config;
use gsr_core::optim::lr_at_epoch;
use gsr_core::train::{run_training, RunOptions, TrainData, Trainer, METRICS_HEADER};
use gsr_core::{Error, Trace};
use gsr_dsp::degrade::DegradationPolicy;
use gsr_dsp::Waveform;

mod common;

fn pairs(n: usize, len: usize) -> TrainData {
    let items = (0..n)
        .map(|i| {
            let clean = common::coloured_noise(len, 10 + i as u64);
            let noise = common::uniform(len, 20 + i as u64, 0.02);
            let degraded = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
            (Waveform::new(degraded).unwrap(), Waveform::new(clean).unwrap())
        })
        .collect();
    TrainData::from_pairs(items).unwrap()
}

fn config(items: usize) -> Config {
    let mut c = common::tiny_config();
    c.train.items_per_epoch = Some(items);
    c.train.epochs = 2;
    c
}

fn file_bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn lr_schedule() {
    assert_eq!(lr_at_epoch(2e-4, 0.99, 0), 2e-4);
    assert!((lr_at_epoch(2e-4, 0.99, 1) - 1.98e-4).abs() < 1e-18);
    assert!((lr_at_epoch(2e-4, 0.99, 10) - 2e-4 * 0.99f64.powi(10)).abs() < 1e-18);
}

#[test]
fn position_and_lr_advance_per_epoch() {
    let data = pairs(2, 4000);
    let mut t = Trainer::new(config(2)).unwrap();
    assert_eq!(data.batches_per_epoch(&t.cfg.train), 2);
    let r0 = t.step_on(&data).unwrap();
    let r1 = t.step_on(&data).unwrap();
    assert_eq!((r0.step, r0.epoch, r0.batch, r1.batch), (0, 0, 0, 1));
    assert_eq!((t.state.step, t.state.epoch, t.state.batch), (2, 1, 0));
    assert_eq!((t.opt_g.steps(), t.opt_d.steps()), (2, 2));
    assert_eq!(r0.lr, 2e-4);
    assert!((t.lr() - 1.98e-4).abs() < 1e-18);
    for r in [r0, r1] {
        assert!(r.report.is_finite());
        assert!(r.report.disc > 0.0 && r.report.recon > 0.0);
    }
}

#[test]
fn updates_are_isolated() {
    let data = pairs(1, 4000);
    let mut t = Trainer::new(config(1)).unwrap();
    let b = data.batch(&t.cfg.train, 0, 0).unwrap();
    let (out, y_hat) = t.gen.restore_batch(&b.degraded, &Trace::default()).unwrap();
    let (g0, d0) = (t.generator_checksum(), t.discriminator_checksum());
    t.discriminator_step(&y_hat, &b.clean, 1e-3).unwrap();
    let (g1, d1) = (t.generator_checksum(), t.discriminator_checksum());
    assert_eq!(g0, g1, "discriminator step moved the generator");
    assert_ne!(d0, d1);
    assert!(t.gen.params().params().iter().all(|p| p.grad().is_none_or(|g| g.iter().all(|v| *v == 0.0))));
    t.generator_step(&out, &y_hat, &b.clean, 1e-3).unwrap();
    assert_eq!(d1, t.discriminator_checksum(), "generator step moved the discriminators");
    assert_ne!(g1, t.generator_checksum());
    assert!(t.disc.params().params().iter().all(|p| p.trainable()));
}

#[test]
fn identical_runs_write_identical_checkpoints() {
    let data = pairs(3, 4000);
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let mut t = Trainer::new(config(3)).unwrap();
        for _ in 0..2 {
            t.step_on(&data).unwrap();
        }
        t.save(d.path()).unwrap();
    }
    for f in [checkpoint::GENERATOR_FILE, checkpoint::DISCRIMINATOR_FILE, checkpoint::OPTIM_G_FILE, checkpoint::OPTIM_D_FILE, checkpoint::STATE_FILE] {
        assert_eq!(file_bytes(dirs[0].path(), f), file_bytes(dirs[1].path(), f), "{f}");
    }
}

#[test]
fn resume_continues_bit_exactly() {
    let data = pairs(3, 4000);
    let dir = tempfile::tempdir().unwrap();
    let mut a = Trainer::new(config(3)).unwrap();
    a.step_on(&data).unwrap();
    a.save(dir.path()).unwrap();
    let ra = a.step_on(&data).unwrap();

    let mut b = Trainer::resume(dir.path()).unwrap();
    assert_eq!(b.state, checkpoint::load_state(dir.path()).unwrap());
    let rb = b.step_on(&data).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.generator_checksum(), b.generator_checksum());
    assert_eq!(a.discriminator_checksum(), b.discriminator_checksum());
    assert_eq!(a.gen.params().named_tensors(), b.gen.params().named_tensors());
}

#[test]
fn checkpoint_round_trip() {
    let t = Trainer::new(config(1)).unwrap();
    let root = tempfile::tempdir().unwrap();
    for step in [3, 12, 7] {
        t.save(&ckpt_dir(root.path(), step)).unwrap();
    }
    assert_eq!(latest(root.path()).unwrap().unwrap(), ckpt_dir(root.path(), 12));
    let dir = ckpt_dir(root.path(), 3);
    let (named, _) = read_tensors(&dir.join(checkpoint::GENERATOR_FILE)).unwrap();
    let mut want = t.gen.params().named_tensors();
    want.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(named, want);
    assert_eq!(checkpoint::load_config(&dir).unwrap(), t.cfg);
    let gen = checkpoint::load_generator(&dir).unwrap();
    assert_eq!(gen.params().named_tensors(), t.gen.params().named_tensors());
    assert!(read_tensors(&dir.join("missing.safetensors")).is_err());
}

#[test]
fn run_writes_metrics_and_epoch_checkpoints() {
    let data = pairs(2, 4000);
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(2);
    cfg.train.epochs = 1;
    let mut t = Trainer::new(cfg).unwrap();
    let recs = run_training(&mut t, &data, &RunOptions { out_dir: out.path().to_path_buf(), max_steps: None }).unwrap();
    assert_eq!(recs.len(), 2);
    let text = std::fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 3);
    let cols = METRICS_HEADER.split(',').count();
    for (i, l) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), cols);
        assert_eq!(f[0], i.to_string());
        assert!(f[3..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
    assert!(ckpt_dir(out.path(), 2).join(checkpoint::STATE_FILE).is_file());
    assert!(!ckpt_dir(out.path(), 1).exists());
    // A finished run does nothing more.
    assert!(run_training(&mut t, &data, &RunOptions { out_dir: out.path().to_path_buf(), max_steps: None }).unwrap().is_empty());
}

#[test]
fn non_finite_loss_aborts_with_snapshot() {
    let data = pairs(1, 4000);
    let out = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(config(1)).unwrap();
    let p = t.gen.params().get("mag_decoder.out.weight").unwrap();
    p.set_data(vec![f64::NAN; p.numel()]);
    let err = run_training(&mut t, &data, &RunOptions { out_dir: out.path().to_path_buf(), max_steps: Some(1) }).unwrap_err();
    assert!(matches!(err, Error::NonFinite { step: 0, .. }), "{err}");
    let snap: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("nan_snapshot.json")).unwrap()).unwrap();
    assert_eq!(snap["state"]["step"], 0);
    assert!(snap["error"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn bad_data_sources_fail_early() {
    let dir = tempfile::tempdir().unwrap();
    assert!(TrainData::from_pair_list(&dir.path().join("absent.tsv")).is_err());
    let list = dir.path().join("pairs.tsv");
    std::fs::write(&list, "nope_d.wav\tnope_c.wav\n").unwrap();
    assert!(matches!(TrainData::from_pair_list(&list), Err(Error::Io { .. })));
    std::fs::write(&list, "").unwrap();
    assert!(TrainData::from_pair_list(&list).is_err());
    assert!(TrainData::from_pairs(Vec::new()).is_err());
    let clean = vec![Waveform::new(common::voiced(8000, 150.0)).unwrap()];
    let only_noise = DegradationPolicy { reverb: None, bandwidth: None, clip: None, ..DegradationPolicy::default() };
    assert!(TrainData::from_waveforms(clean.clone(), Vec::new(), Vec::new(), &only_noise).is_err());
    assert!(TrainData::from_waveforms(clean, Vec::new(), Vec::new(), &DegradationPolicy::default()).is_ok());
}

#[test]
fn batches_are_reproducible() {
    let clean: Vec<_> = (0..4).map(|i| Waveform::new(common::coloured_noise(9000, i)).unwrap()).collect();
    let noise = vec![Waveform::new(common::uniform(5000, 99, 0.3)).unwrap()];
    let data = TrainData::from_waveforms(clean, noise, Vec::new(), &DegradationPolicy::default()).unwrap();
    let mut cfg = config(4).train;
    cfg.batch = 2;
    let a = data.batch(&cfg, 0, 1).unwrap();
    let b = data.batch(&cfg, 0, 1).unwrap();
    assert_eq!(a.degraded.data(), b.degraded.data());
    assert_eq!(a.clean.shape(), &[2, 4000]);
    let mut orders: Vec<Vec<usize>> = (0..6).map(|e| data.epoch_order(&cfg, e)).collect();
    for o in &mut orders {
        let mut s = o.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3]);
    }
    orders.dedup();
    assert!(orders.len() > 1, "epochs should reshuffle");
    assert!(data.batch(&cfg, 0, 2).is_err());
}

#[test]
fn segment_must_fit_discriminators() {
    let mut cfg = config(1);
    cfg.train.segment = 800;
    assert!(matches!(Trainer::new(cfg), Err(Error::Config(_))));
}
