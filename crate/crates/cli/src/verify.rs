use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use vvrkhs::kernels::{block_gram, kappa_estimate, PSD_TOL, SYM_TOL};
use vvrkhs::rkhs::verify_representer_identity;
use vvrkhs::rng::{seeded, TrialRng};
use vvrkhs::spectral::{apply_integral_operator, rkhs_norm_via_space};
use vvrkhs::synth::{excess_risk_check, sample_dataset, CoefficientSource};
use vvrkhs::{
    build_source_target, eigendecompose, DiscreteSpace, KernelSpec, NoiseSpec, RhoFunction, RidgeModel,
    SpaceSpec,
};

use crate::problem::{load_config, write_json};
use crate::{Outcome, RunOptions};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub space: SpaceSpec,
    pub kernel: KernelSpec,
    pub m: Option<usize>,
    pub lambda: f64,
    /// Sample size for the representer check.
    pub samples: usize,
    /// Random functions per randomized check.
    pub functions: usize,
    pub r: f64,
    pub sigma: f64,
    pub bound: f64,
    pub seed: u64,
    /// Discrepancy tolerance for the identity checks.
    pub tolerance: f64,
    /// Testing hook: adds `delta` to one entry of the block Gram before the kernel checks.
    pub inject_fault: Option<GramFault>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GramFault {
    pub row: usize,
    pub col: usize,
    #[serde(default = "unit")]
    pub delta: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            space: SpaceSpec::default(),
            kernel: KernelSpec::default(),
            m: None,
            lambda: 0.1,
            samples: 8,
            functions: 20,
            r: 1.0,
            sigma: 0.1,
            bound: 1.0,
            seed: 1,
            tolerance: 1e-9,
            inject_fault: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub discrepancy: f64,
    pub tolerance: f64,
}

fn check(name: &'static str, discrepancy: f64, tolerance: f64) -> Check {
    Check { name, passed: discrepancy <= tolerance, discrepancy, tolerance }
}

/// `max ‖K(x,x)‖₂` against the two candidate bounds `mκ` and `mκ²`; reported, not asserted.
#[derive(Debug, Serialize)]
pub struct KernelNormReport {
    pub max_operator_norm: f64,
    pub m_kappa: f64,
    pub m_kappa_squared: f64,
    pub m_kappa_holds: bool,
    pub m_kappa_squared_holds: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub nodes: usize,
    pub m: usize,
    pub kappa: f64,
    pub rank: usize,
    pub checks: Vec<Check>,
    pub kernel_norm: KernelNormReport,
    pub passed: bool,
}

fn random_function(rng: &mut TrialRng, space: &DiscreteSpace, m: usize) -> anyhow::Result<RhoFunction> {
    Ok(RhoFunction::new(DVector::from_fn(space.len() * m, |_, _| rng.gen_range(-1.0..1.0)), m)?)
}

pub fn run_suite(cfg: &VerifyConfig) -> anyhow::Result<VerifyReport> {
    let problem = crate::problem::ProblemSpec { space: cfg.space.clone(), kernel: cfg.kernel.clone(), m: cfg.m };
    let (space, kernel) = problem.build(4)?;
    let kernel = Arc::new(kernel);
    let m = kernel.m();
    let mut rng = seeded(cfg.seed);
    let tol = cfg.tolerance;
    let mut checks = Vec::new();

    let mut gram = block_gram(&kernel, space.nodes())?;
    if let Some(f) = &cfg.inject_fault {
        if f.row >= gram.nrows() || f.col >= gram.ncols() {
            anyhow::bail!(vvrkhs::Error::Argument(format!("fault entry ({}, {}) outside the {}-dim Gram", f.row, f.col, gram.nrows())));
        }
        gram[(f.row, f.col)] += f.delta;
    }
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    checks.push(check("gram_symmetry", (&gram - gram.transpose()).amax(), SYM_TOL));
    let sym = (&gram + gram.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    checks.push(check("gram_psd", (-min_eig).max(0.0) / scale, PSD_TOL));

    let dec = eigendecompose(&kernel, &space)?;
    let anchors = 3.min(space.len());
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.functions {
        let pts = (0..anchors).map(|_| space.node(rng.gen_range(0..space.len())).to_vec()).collect();
        let c = DVector::from_fn(anchors * m, |_, _| rng.gen_range(-1.0..1.0));
        let f = RidgeModel::new(kernel.clone(), pts, c, cfg.lambda)?;
        let x = space.node(rng.gen_range(0..space.len())).to_vec();
        let xi = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let section = RidgeModel::section(kernel.clone(), x.clone(), xi.clone())?;
        worst = worst.max((f.k_inner(&section)? - xi.dot(&f.evaluate(&x)?)).abs());
    }
    checks.push(check("reproducing_identity", worst, tol));

    let noise = NoiseSpec::new(cfg.sigma, cfg.bound)?;
    let modes = 4.min(dec.rank());
    let target = build_source_target(&dec, cfg.r, &CoefficientSource::Seeded { seed: cfg.seed, modes }, Some(noise.default_budget()))?;
    let sample = sample_dataset(&space, &target, &noise, cfg.samples, cfg.seed)?;
    checks.push(check("representer_identity", verify_representer_identity(&kernel, &sample, cfg.lambda, &space)?, tol));

    let clean = block_gram(&kernel, space.nodes())?;
    let kscale = clean.amax().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..space.len() {
        for j in 0..space.len() {
            let rec = dec.mercer_reconstruct(i, j)?;
            worst = worst.max((rec - clean.view((i * m, j * m), (m, m))).amax() / kscale);
        }
    }
    checks.push(check("mercer_reconstruction", worst, tol));

    let mut worst: f64 = 0.0;
    for _ in 0..cfg.functions {
        let f = random_function(&mut rng, &space, m)?;
        let lhs = rkhs_norm_via_space(&kernel, &space, &dec.apply_fractional_power(0.5, &f)?)?;
        let rhs = dec.project(&f)?.norm(&space)?;
        worst = worst.max((lhs - rhs).abs() / lhs.max(rhs).max(f64::MIN_POSITIVE));
    }
    checks.push(check("norm_identity", worst, tol));

    let gw = &clean * DMatrix::from_diagonal(&space.expanded_weights(m));
    let dim = gw.nrows();
    let direct = (&gw + DMatrix::identity(dim, dim) * cfg.lambda)
        .lu()
        .solve(&(&gw * target.f_rho().values()))
        .ok_or_else(|| vvrkhs::Error::Numerical("direct f_λ system is singular".into()))?;
    let spectral = dec.compute_f_lambda(target.f_rho(), cfg.lambda)?;
    checks.push(check("f_lambda_equivalence", (spectral.values() - direct).amax(), tol));

    let mut worst: f64 = 0.0;
    for _ in 0..cfg.functions {
        let f = random_function(&mut rng, &space, m)?;
        let e = excess_risk_check(&space, &target, &noise, &f)?;
        worst = worst.max(e.gap / e.scale);
    }
    checks.push(check("excess_risk_identity", worst, 1e-12));

    // Sanity check on the operator itself, independent of the decomposition.
    let f = random_function(&mut rng, &space, m)?;
    let lf = apply_integral_operator(&kernel, &space, &f)?;
    checks.push(check("operator_positivity", (-lf.inner(&f, &space)?).max(0.0), 1e-12));

    let kappa = kappa_estimate(&kernel, space.nodes())?;
    let max_operator_norm = (0..space.len())
        .map(|z| clean.view((z * m, z * m), (m, m)).into_owned().symmetric_eigenvalues().amax())
        .fold(0.0, f64::max);
    let mf = m as f64;
    let kernel_norm = KernelNormReport {
        max_operator_norm,
        m_kappa: mf * kappa,
        m_kappa_squared: mf * kappa * kappa,
        m_kappa_holds: max_operator_norm <= mf * kappa + 1e-12,
        m_kappa_squared_holds: max_operator_norm <= mf * kappa * kappa + 1e-12,
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { nodes: space.len(), m, kappa, rank: dec.rank(), checks, kernel_norm, passed })
}

pub fn run(opts: &RunOptions) -> Outcome {
    let mut cfg: VerifyConfig = load_config(opts)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let report = run_suite(&cfg)?;
    for c in &report.checks {
        opts.say(format!(
            "{:<24} {} discrepancy {:.3e} (tolerance {:.0e})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.discrepancy,
            c.tolerance
        ));
    }
    let kn = &report.kernel_norm;
    opts.say(format!(
        "max ‖K(x,x)‖₂ = {:.6} vs mκ = {:.6} ({}) and mκ² = {:.6} ({})",
        kn.max_operator_norm,
        kn.m_kappa,
        if kn.m_kappa_holds { "holds" } else { "exceeded" },
        kn.m_kappa_squared,
        if kn.m_kappa_squared_holds { "holds" } else { "exceeded" },
    ));
    let path = write_json(opts, "verify.json", &report)?;
    opts.say(format!("wrote {}", path.display()));
    Ok(report.passed)
}
