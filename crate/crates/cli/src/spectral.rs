use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::Context;
use vvrkhs::eigendecompose;
use vvrkhs::io::fmt_f64;
use vvrkhs::kernels::{check_universal_on_discrete, kappa_estimate};

use crate::problem::{load_config, out_path, ProblemSpec};
use crate::{Outcome, RunOptions};

pub fn run(opts: &RunOptions) -> Outcome {
    let problem: ProblemSpec = load_config(opts)?;
    let (space, kernel) = problem.build(1)?;
    let dec = eigendecompose(&kernel, &space)?;
    let path = out_path(opts, "spectral.csv")?;
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "mode,eigenvalue")?;
    for (j, l) in dec.eigenvalues().iter().enumerate() {
        writeln!(w, "{},{}", j + 1, fmt_f64(*l))?;
    }
    w.flush()?;
    let u = check_universal_on_discrete(&kernel, &space)?;
    opts.say(format!(
        "{} modes, numerical rank {}, κ = {:.6}, universal: {}",
        dec.eigenvalues().len(),
        dec.rank(),
        kappa_estimate(&kernel, space.nodes())?,
        u.universal
    ));
    opts.say(format!("wrote {}", path.display()));
    Ok(true)
}
