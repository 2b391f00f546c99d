use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct Meta<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    config: &'a C,
}

/// `<out>.meta.json` for a file output, `<out>/meta.json` for a directory.
pub fn sidecar_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("meta.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        out.with_file_name(name)
    }
}

/// Records tool version, a hash of the command configuration and the seed
/// next to an output.
pub fn write_sidecar<C: Serialize>(
    out: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
) -> Result<()> {
    let canonical = serde_json::to_vec(config)?;
    let meta = Meta {
        tool: "depthprior",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: hex::encode(Sha256::digest(&canonical)),
        seed,
        config,
    };
    let path = sidecar_path(out);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
