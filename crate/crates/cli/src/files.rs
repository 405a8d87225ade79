//! File conventions: `<stem>.pool.json`, `<stem>.gt.json` and
//! `<stem>.oracle.json` share a stem; predictions are `<stem>.iface.json`,
//! `<stem>.pred.json` or `<stem>.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use layout_handoff::codec::{parse_ground_truth, parse_interface, parse_pool};
use layout_handoff::synth::{parse_oracle, Oracle};
use layout_handoff::{GroundTruthPage, HypothesisPool, ParserInterface};

use crate::CliError;

pub const POOL_SUFFIX: &str = ".pool.json";
pub const GT_SUFFIX: &str = ".gt.json";
pub const ORACLE_SUFFIX: &str = ".oracle.json";
const PRED_SUFFIXES: [&str; 3] = [".iface.json", ".pred.json", ".json"];

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes `bytes` plus a trailing newline to `path`, or to stdout.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            let mut buf = bytes.to_vec();
            buf.push(b'\n');
            fs::write(p, buf).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.write_all(b"\n")).context("writing to stdout")
        }
    }
}

pub fn load_pool(path: &Path) -> Result<HypothesisPool> {
    parse_pool(&read_bytes(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_gt(path: &Path) -> Result<GroundTruthPage> {
    parse_ground_truth(&read_bytes(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_interface(path: &Path) -> Result<ParserInterface> {
    parse_interface(&read_bytes(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_oracle(path: &Path) -> Result<Oracle> {
    parse_oracle(&read_bytes(path)?).with_context(|| format!("in {}", path.display()))
}

/// External order scores: an oracle file, or a plain `{"<id>": score}` map.
pub fn load_order(path: &Path) -> Result<HashMap<u64, f64>> {
    let raw = read_bytes(path)?;
    if let Ok(oracle) = parse_oracle(&raw) {
        return Ok(oracle.external_order());
    }
    let map: BTreeMap<String, f64> =
        serde_json::from_slice(&raw).with_context(|| format!("{} is neither an oracle nor an order map", path.display()))?;
    map.into_iter()
        .map(|(k, v)| {
            let id = k.parse::<u64>().map_err(|_| anyhow::anyhow!("order key `{k}` is not a hypothesis id"))?;
            Ok((id, v))
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PagePaths {
    pub stem: String,
    pub pool: PathBuf,
    pub gt: PathBuf,
    pub oracle: Option<PathBuf>,
}

/// Every `<stem>.pool.json` in `dir` with its ground truth, sorted by stem.
pub fn discover_pages(dir: &Path) -> Result<Vec<PagePaths>> {
    let mut pages = Vec::new();
    for path in sorted_entries(dir)? {
        let name = file_name(&path);
        let Some(stem) = name.strip_suffix(POOL_SUFFIX) else { continue };
        let gt = dir.join(format!("{stem}{GT_SUFFIX}"));
        if !gt.is_file() {
            return Err(CliError::MissingPair(stem.to_string()).into());
        }
        let oracle = Some(dir.join(format!("{stem}{ORACLE_SUFFIX}"))).filter(|p| p.is_file());
        pages.push(PagePaths { stem: stem.to_string(), pool: path, gt, oracle });
    }
    if pages.is_empty() {
        anyhow::bail!(layout_handoff::HandoffError::EmptyInput(format!("no *{POOL_SUFFIX} files in {}", dir.display())));
    }
    Ok(pages)
}

/// Stem of a prediction file, or `None` for files that are not predictions.
pub fn prediction_stem(name: &str) -> Option<&str> {
    if [POOL_SUFFIX, GT_SUFFIX, ORACLE_SUFFIX].iter().any(|s| name.ends_with(s)) {
        return None;
    }
    PRED_SUFFIXES.iter().find_map(|s| name.strip_suffix(s))
}

/// `(stem, prediction, ground truth)` triples. Files pair directly; for
/// directories every prediction needs a `<stem>.gt.json` partner.
pub fn pair_predictions(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    match (pred.is_dir(), gt.is_dir()) {
        (false, false) => {
            let name = file_name(pred);
            let stem = prediction_stem(&name).unwrap_or(&name).to_string();
            Ok(vec![(stem, pred.to_path_buf(), gt.to_path_buf())])
        }
        (true, true) => {
            let mut out = Vec::new();
            for path in sorted_entries(pred)? {
                let name = file_name(&path);
                let Some(stem) = prediction_stem(&name) else { continue };
                let g = gt.join(format!("{stem}{GT_SUFFIX}"));
                if !g.is_file() {
                    return Err(CliError::MissingPair(stem.to_string()).into());
                }
                out.push((stem.to_string(), path, g));
            }
            if out.is_empty() {
                anyhow::bail!(layout_handoff::HandoffError::EmptyInput(format!("no predictions in {}", pred.display())));
            }
            Ok(out)
        }
        _ => Err(CliError::Usage("--pred and --gt must both be files or both be directories".into()).into()),
    }
}
