use std::path::Path;

use anyhow::{Context, Result};
use layout_handoff::HandoffConfig;

use crate::files::read_bytes;

/// Loads a config file (JSON when the extension is `.json`, TOML otherwise)
/// or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<HandoffConfig> {
    let cfg = match path {
        None => HandoffConfig::default(),
        Some(p) => {
            let raw = read_bytes(p)?;
            let text = String::from_utf8(raw).with_context(|| format!("{} is not UTF-8", p.display()))?;
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            } else {
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
