//! Shared plumbing: path resolution, input loading and the soft-failing
//! per-sample runner.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ttta_core::par::{self, Execution};
use ttta_core::preproc::{align_features, ransac_background, RansacConfig};
use ttta_core::tensor::{read_feature_map, read_manifest, read_point_map, read_score_map, SampleRecord};
use ttta_core::{FeatureMap, MaskImage, ScoreMap};

/// Error that maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Effective settings printed before a command runs.
pub struct Header {
    command: String,
    rows: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.rows.push((key.to_string(), value.to_string()));
        self
    }

    pub fn print(&self) {
        println!("# ttta {}", self.command);
        for (k, v) in &self.rows {
            println!("# {k}\t{v}");
        }
    }
}

/// A manifest with the directory its relative paths are resolved against.
pub struct Dataset {
    pub dir: PathBuf,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn open(path: &Path) -> Result<Self> {
        let records = read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))?;
        if records.is_empty() {
            bail!("manifest {} lists no samples", path.display());
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, records })
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        self.dir.join(p)
    }

    pub fn scores(&self, r: &SampleRecord) -> Result<ScoreMap> {
        let p = r.score_path.as_deref().ok_or_else(|| anyhow!("no score map listed"))?;
        read_score_map(self.resolve(p)).with_context(|| format!("reading {p}"))
    }

    /// Feature maps of `r` upsampled to `size` (or the first map's size) and
    /// concatenated in manifest order.
    pub fn features(&self, r: &SampleRecord, size: Option<(usize, usize)>) -> Result<FeatureMap> {
        if r.feature_paths.is_empty() {
            bail!("no feature maps listed");
        }
        let maps = r
            .feature_paths
            .iter()
            .map(|p| read_feature_map(self.resolve(p)).with_context(|| format!("reading {p}")))
            .collect::<Result<Vec<_>>>()?;
        let (h, w) = size.unwrap_or_else(|| maps[0].size());
        Ok(align_features(&maps, h, w)?)
    }

    /// Background mask from the point map, if one is listed.
    pub fn exclusion(
        &self,
        r: &SampleRecord,
        ransac: &RansacConfig,
        size: (usize, usize),
    ) -> Result<Option<MaskImage>> {
        let Some(p) = r.point_map_path.as_deref() else {
            return Ok(None);
        };
        let points = read_point_map(self.resolve(p)).with_context(|| format!("reading {p}"))?;
        if points.size() != size {
            bail!(
                "point map is {}x{} but the score map is {}x{}",
                points.height(),
                points.width(),
                size.0,
                size.1
            );
        }
        Ok(Some(ransac_background(&points, ransac)?))
    }
}

/// Output path for a sample: `<dir>/<sample_id><suffix>`, creating parents.
pub fn sample_path(dir: &Path, id: &str, suffix: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{id}{suffix}"));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(path)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Results of a per-sample pass, in manifest order.
pub struct Outcome<T> {
    pub done: Vec<(usize, T)>,
    pub failed: usize,
}

/// Runs `work` on every record; failures are logged and counted instead of
/// aborting the batch.
pub fn for_each_sample<T: Send>(
    records: &[SampleRecord],
    work: impl Fn(&SampleRecord) -> Result<T> + Sync,
) -> Outcome<T> {
    let results = par::map(Execution::Parallel, records, |r| work(r));
    let mut done = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (i, (r, result)) in records.iter().zip(results).enumerate() {
        match result {
            Ok(v) => done.push((i, v)),
            Err(e) => {
                failed += 1;
                log::error!("{}: {}", r.sample_id, crate::chain(&e));
            }
        }
    }
    Outcome { done, failed }
}

/// Prints the end-of-run line and returns the number of failed samples.
pub fn summarize(total: usize, failed: usize) -> usize {
    eprintln!("{} of {total} samples processed, {failed} failed", total - failed);
    failed
}

pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(h), parse(w)) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(format!("expected positive HxW, got {s:?}")),
    }
}

pub fn show_size(size: Option<(usize, usize)>) -> String {
    size.map(|(h, w)| format!("{h}x{w}")).unwrap_or_else(|| "native".into())
}
