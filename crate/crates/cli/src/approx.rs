use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use vvrkhs::io::fmt_f64;
use vvrkhs::synth::CoefficientSource;
use vvrkhs::{build_source_target, eigendecompose, KernelSpec, SpaceSpec};

use crate::problem::{load_config, out_path, ProblemSpec};
use crate::{Outcome, RunOptions};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub space: SpaceSpec,
    pub kernel: KernelSpec,
    pub m: Option<usize>,
    pub r: Vec<f64>,
    /// Defaults to 13 log-spaced values from 1e-4 to 1.
    pub lambdas: Option<Vec<f64>>,
    pub targets: usize,
    pub modes: usize,
    pub seed: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            space: SpaceSpec::default(),
            kernel: KernelSpec::default(),
            m: None,
            r: vec![0.6, 0.75, 1.0],
            lambdas: None,
            targets: 20,
            modes: 4,
            seed: 1,
        }
    }
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

pub fn run(opts: &RunOptions) -> Outcome {
    let mut cfg: ApproxConfig = load_config(opts)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let problem = ProblemSpec { space: cfg.space.clone(), kernel: cfg.kernel.clone(), m: cfg.m };
    let (space, kernel) = problem.build(2)?;
    let dec = eigendecompose(&kernel, &space)?;
    let lambdas = cfg.lambdas.clone().unwrap_or_else(|| log_grid(1e-4, 1.0, 13));
    let modes = cfg.modes.min(dec.rank());

    let path = out_path(opts, "approx.csv")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "r,lambda,target,err_K,bound,holds")?;
    let mut violations = 0usize;
    let mut rows = 0usize;
    for &r in &cfg.r {
        for t in 0..cfg.targets {
            let source = CoefficientSource::Seeded { seed: cfg.seed.wrapping_add(t as u64), modes };
            let target = build_source_target(&dec, r, &source, None)?;
            for &lambda in &lambdas {
                let e = dec.approximation_error(target.f_rho(), lambda, r, target.source_norm())?;
                violations += usize::from(!e.holds());
                rows += 1;
                writeln!(w, "{},{},{t},{},{},{}", fmt_f64(r), fmt_f64(lambda), fmt_f64(e.err_k), fmt_f64(e.bound), u8::from(e.holds()))?;
            }
        }
    }
    w.flush()?;
    opts.say(format!("{rows} (r, λ, target) rows, {violations} violations; wrote {}", path.display()));
    Ok(violations == 0)
}
