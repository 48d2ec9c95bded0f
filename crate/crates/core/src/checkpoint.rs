//! Checkpoint directories: `ckpt_{step}/` with generator, discriminator and
//! optimizer tensors (safetensors, f64), the config snapshot and a state file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use gsr_autograd::ParamStore;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::io_err;
use crate::optim::AdamW;
use crate::{Error, Generator, Result};

pub type Named = Vec<(String, Vec<usize>, Vec<f64>)>;

pub const GENERATOR_FILE: &str = "generator.safetensors";
pub const DISCRIMINATOR_FILE: &str = "discriminators.safetensors";
pub const OPTIM_G_FILE: &str = "optimizer_generator.safetensors";
pub const OPTIM_D_FILE: &str = "optimizer_discriminators.safetensors";
pub const CONFIG_FILE: &str = "config.toml";
pub const STATE_FILE: &str = "state.json";

/// Position of the training loop when the checkpoint was written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    /// Epoch to continue from.
    pub epoch: u64,
    /// First batch of `epoch` not yet consumed.
    pub batch: u64,
}

pub fn ckpt_dir(root: &Path, step: u64) -> PathBuf {
    root.join(format!("ckpt_{step}"))
}

fn ckpt_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), msg: e.to_string() }
}

pub fn write_tensors(path: &Path, named: &Named, meta: Option<HashMap<String, String>>) -> Result<()> {
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = named
        .iter()
        .map(|(n, s, d)| (n.clone(), s.clone(), d.iter().flat_map(|v| v.to_le_bytes()).collect()))
        .collect();
    let views = bytes
        .iter()
        .map(|(n, s, b)| TensorView::new(Dtype::F64, s.clone(), b).map(|v| (n.as_str(), v)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| ckpt_err(path, e))?;
    let buf = safetensors::serialize(views, meta).map_err(|e| ckpt_err(path, e))?;
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_tensors(path: &Path) -> Result<(Named, HashMap<String, String>)> {
    let buf = std::fs::read(path).map_err(io_err(path))?;
    let (_, meta) = SafeTensors::read_metadata(&buf).map_err(|e| ckpt_err(path, e))?;
    let meta = meta.metadata().clone().unwrap_or_default();
    let st = SafeTensors::deserialize(&buf).map_err(|e| ckpt_err(path, e))?;
    let mut named = Vec::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 {
            return Err(ckpt_err(path, format!("tensor {name} is {:?}, expected F64", view.dtype())));
        }
        let data = view.data().chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        named.push((name, view.shape().to_vec(), data));
    }
    named.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((named, meta))
}

pub fn save_store(path: &Path, store: &ParamStore) -> Result<()> {
    write_tensors(path, &store.named_tensors(), None)
}

pub fn load_store(path: &Path, store: &ParamStore) -> Result<()> {
    let (named, _) = read_tensors(path)?;
    store.load(&named).map_err(|e| ckpt_err(path, e))
}

fn save_optim(path: &Path, opt: &AdamW) -> Result<()> {
    let mut named = Vec::new();
    for (name, m, v) in opt.state() {
        let n = m.len();
        named.push((format!("m.{name}"), vec![n], m));
        named.push((format!("v.{name}"), vec![n], v));
    }
    let meta = HashMap::from([("steps".to_string(), opt.steps().to_string())]);
    write_tensors(path, &named, Some(meta))
}

fn load_optim(path: &Path, opt: &mut AdamW) -> Result<()> {
    let (named, meta) = read_tensors(path)?;
    let steps: u64 = meta.get("steps").and_then(|s| s.parse().ok()).ok_or_else(|| ckpt_err(path, "missing step count"))?;
    let find = |key: &str| named.iter().find(|(n, _, _)| n == key).map(|(_, _, d)| d.clone());
    let state: Vec<_> = opt
        .state()
        .into_iter()
        .map(|(name, _, _)| {
            let m = find(&format!("m.{name}")).unwrap_or_default();
            let v = find(&format!("v.{name}")).unwrap_or_default();
            (name, m, v)
        })
        .collect();
    opt.load_state(steps, &state).map_err(|e| ckpt_err(path, e))
}

/// Everything a checkpoint holds besides the model weights.
pub struct Snapshot<'a> {
    pub config: &'a Config,
    pub state: TrainState,
    pub gen: &'a ParamStore,
    pub disc: &'a ParamStore,
    pub opt_g: &'a AdamW,
    pub opt_d: &'a AdamW,
}

pub fn save(dir: &Path, s: &Snapshot) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_store(&dir.join(GENERATOR_FILE), s.gen)?;
    save_store(&dir.join(DISCRIMINATOR_FILE), s.disc)?;
    save_optim(&dir.join(OPTIM_G_FILE), s.opt_g)?;
    save_optim(&dir.join(OPTIM_D_FILE), s.opt_d)?;
    let cfg_path = dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, s.config.to_toml()).map_err(io_err(&cfg_path))?;
    let state_path = dir.join(STATE_FILE);
    let json = serde_json::to_string_pretty(&s.state).expect("state serializes");
    std::fs::write(&state_path, json).map_err(io_err(&state_path))
}

pub fn load_config(dir: &Path) -> Result<Config> {
    Config::load(&dir.join(CONFIG_FILE))
}

pub fn load_state(dir: &Path) -> Result<TrainState> {
    let p = dir.join(STATE_FILE);
    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| ckpt_err(&p, e))
}

pub fn load_optimizers(dir: &Path, opt_g: &mut AdamW, opt_d: &mut AdamW) -> Result<()> {
    load_optim(&dir.join(OPTIM_G_FILE), opt_g)?;
    load_optim(&dir.join(OPTIM_D_FILE), opt_d)
}

/// The generator stored in a checkpoint directory, built from its config.
pub fn load_generator(dir: &Path) -> Result<Generator> {
    let cfg = load_config(dir)?;
    let gen = Generator::new(cfg.generator(), cfg.train.seed)?;
    load_store(&dir.join(GENERATOR_FILE), gen.params())?;
    Ok(gen)
}

/// Latest `ckpt_{step}` directory under `root`.
pub fn latest(root: &Path) -> Result<Option<PathBuf>> {
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in std::fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        if let Some(step) = name.to_str().and_then(|n| n.strip_prefix("ckpt_")).and_then(|s| s.parse::<u64>().ok()) {
            if best.as_ref().is_none_or(|(b, _)| step > *b) {
                best = Some((step, entry.path()));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}
