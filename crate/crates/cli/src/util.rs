//! Shared helpers: config-file merging and artifact metadata echoes.

use serde::Serialize;
use std::path::{Path, PathBuf};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// Loads a JSON config file into the command's parameter type.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    Ok(serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))?)
}

/// Metadata embedded in every artifact so a result can be regenerated.
#[derive(Serialize)]
pub struct Meta<'a, C: Serialize> {
    pub format_version: u32,
    pub tool: &'a str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
}

impl<'a, C: Serialize> Meta<'a, C> {
    pub fn new(command: &'a str, seed: u64, config: &'a C) -> Self {
        Meta {
            format_version: ARTIFACT_FORMAT_VERSION,
            tool: "viewalign",
            command,
            seed,
            config,
        }
    }

    /// One `# ...` comment line placed before CSV headers.
    pub fn csv_comment(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("meta serializes"))
    }

    /// XML comment for embedding into SVG output.
    pub fn xml_comment(&self) -> String {
        format!(
            "<!-- meta: {} -->",
            serde_json::to_string(self)
                .expect("meta serializes")
                .replace("--", "- -")
        )
    }
}

pub fn write_text(path: &PathBuf, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

/// Parses a views specification: "4", "1..12" (inclusive) or "1,3,5".
pub fn parse_views(spec: &str, max: usize) -> anyhow::Result<Vec<usize>> {
    let views: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let lo: usize = a.trim().parse()?;
        let hi: usize = b.trim().trim_start_matches('=').parse()?;
        if lo == 0 || hi < lo {
            anyhow::bail!("invalid views range '{spec}'");
        }
        (lo..=hi).collect()
    } else if spec.contains(',') {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()?
    } else {
        vec![spec.trim().parse()?]
    };
    if views.is_empty() || views.iter().any(|&v| v == 0 || v > max) {
        anyhow::bail!("views '{spec}' out of range 1..={max}");
    }
    Ok(views)
}
