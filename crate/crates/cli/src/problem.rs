use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vvrkhs::{DiscreteSpace, KernelSpec, MatrixKernel, SpaceSpec};

use crate::RunOptions;

/// Reads the config file, or the type's defaults when none was given.
pub fn load_config<T: DeserializeOwned + Default>(opts: &RunOptions) -> anyhow::Result<T> {
    let Some(path) = &opts.config else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::Error::new(vvrkhs::Error::Json(e)).context(format!("parsing config {}", path.display())))
}

/// Resolves `p` against the config file's directory.
pub fn relative_to_config(opts: &RunOptions, p: &Path) -> PathBuf {
    match opts.config.as_ref().and_then(|c| c.parent()) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

pub fn out_path(opts: &RunOptions, name: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&opts.out).with_context(|| format!("creating output directory {}", opts.out.display()))?;
    Ok(opts.out.join(name))
}

pub fn write_json<T: Serialize>(opts: &RunOptions, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let path = out_path(opts, name)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Kernel and space shared by the single-problem subcommands.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub space: SpaceSpec,
    pub kernel: KernelSpec,
    /// Task count for kernels that do not fix it.
    pub m: Option<usize>,
}

impl ProblemSpec {
    pub fn build(&self, fallback_m: usize) -> anyhow::Result<(DiscreteSpace, MatrixKernel)> {
        let space = self.space.build()?;
        let m = match self.kernel.fixed_m()? {
            Some(_) => self.m,
            None => Some(self.m.unwrap_or(fallback_m)),
        };
        let kernel = self.kernel.build(&space, m)?;
        Ok((space, kernel))
    }
}
