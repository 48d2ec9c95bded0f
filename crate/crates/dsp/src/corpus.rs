//! Manifest files and corpus simulation.
//!
//! A path list has one entry per line; extra tab-separated columns (such as
//! a duration) are ignored, as are blank lines and lines starting with `#`.
//! Relative paths resolve against the manifest's directory. A pair list has
//! `degraded<TAB>clean` rows.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::{apply_recipe, item_seed, sample_recipe, DegradationPolicy, DegradationRecipe};
use crate::error::{Error, Result};
use crate::wav::{read_wav, write_wav, Waveform};

fn read_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(|c| c.trim().to_string()).collect()))
        .collect())
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Reads a path list.
pub fn read_path_list(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(read_lines(path)?.into_iter().map(|(_, cols)| resolve(base, &cols[0])).collect())
}

/// Reads `degraded<TAB>clean` rows.
pub fn read_pair_list(path: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    read_lines(path)?
        .into_iter()
        .map(|(line, cols)| {
            if cols.len() < 2 {
                return Err(Error::Manifest { path: path.to_path_buf(), line, msg: "expected degraded<TAB>clean".into() });
            }
            Ok((resolve(base, &cols[0]), resolve(base, &cols[1])))
        })
        .collect()
}

/// Clean, noise and impulse-response file lists for one split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub clean: Vec<PathBuf>,
    #[serde(default)]
    pub noise: Vec<PathBuf>,
    #[serde(default)]
    pub rir: Vec<PathBuf>,
    #[serde(default)]
    pub split: String,
}

impl CorpusManifest {
    /// Builds a manifest from list files; noise and RIR lists are optional.
    pub fn from_lists(clean: &Path, noise: Option<&Path>, rir: Option<&Path>, split: &str) -> Result<Self> {
        let m = Self {
            clean: read_path_list(clean)?,
            noise: noise.map(read_path_list).transpose()?.unwrap_or_default(),
            rir: rir.map(read_path_list).transpose()?.unwrap_or_default(),
            split: split.to_string(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks the clean list is nonempty and every listed file exists.
    pub fn validate(&self) -> Result<()> {
        if self.clean.is_empty() {
            return Err(Error::Config("manifest lists no clean files".into()));
        }
        for p in self.clean.iter().chain(&self.noise).chain(&self.rir) {
            if !p.is_file() {
                return Err(Error::Io {
                    path: p.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "listed file not found"),
                });
            }
        }
        Ok(())
    }

    pub fn load_noise(&self) -> Result<Vec<Waveform>> {
        self.noise.iter().map(read_wav).collect()
    }

    pub fn load_rirs(&self) -> Result<Vec<Waveform>> {
        self.rir.iter().map(read_wav).collect()
    }
}

/// One line of the recipe log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeRecord {
    pub index: usize,
    pub clean: PathBuf,
    pub degraded: PathBuf,
    pub source: PathBuf,
    pub recipe: DegradationRecipe,
}

/// Writes `count` degraded/clean pairs under `out_dir/{clean,degraded}`, a
/// `pairs.tsv` pair list and a `recipes.jsonl` log with one record per item.
pub fn simulate_corpus(
    manifest: &CorpusManifest,
    policy: &DegradationPolicy,
    seed: u64,
    count: usize,
    out_dir: &Path,
) -> Result<Vec<RecipeRecord>> {
    manifest.validate()?;
    let noise = manifest.load_noise()?;
    let rirs = manifest.load_rirs()?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path: path.clone(), source }
    };
    for sub in ["clean", "degraded"] {
        fs::create_dir_all(out_dir.join(sub)).map_err(io(&out_dir.join(sub)))?;
    }
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let source = manifest.clean[index % manifest.clean.len()].clone();
        let clean = read_wav(&source)?;
        let recipe = sample_recipe(item_seed(seed, index as u64), policy)?;
        let (degraded, used) = apply_recipe(&clean, &recipe, &noise, &rirs)?;
        let name = format!("{index:06}.wav");
        let (cp, dp) = (out_dir.join("clean").join(&name), out_dir.join("degraded").join(&name));
        write_wav(&cp, &clean)?;
        write_wav(&dp, &degraded)?;
        records.push(RecipeRecord { index, clean: cp, degraded: dp, source, recipe: used });
    }
    let log_path = out_dir.join("recipes.jsonl");
    let mut log = fs::File::create(&log_path).map_err(io(&log_path))?;
    let pairs_path = out_dir.join("pairs.tsv");
    let mut pairs = fs::File::create(&pairs_path).map_err(io(&pairs_path))?;
    for r in &records {
        let line = serde_json::to_string(r).expect("recipe records serialize");
        writeln!(log, "{line}").map_err(io(&log_path))?;
        writeln!(pairs, "{}\t{}", r.degraded.display(), r.clean.display()).map_err(io(&pairs_path))?;
    }
    Ok(records)
}
