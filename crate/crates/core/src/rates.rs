//! Learning-rate bounds for multi-task regularization networks and the Monte
//! Carlo experiment that checks them.
//!
//! With `L = log(2/δ)` and `ν = ‖L_K^{-r} f_ρ‖_ρ`:
//!
//! * approximation: `‖f_λ - f_ρ‖_K ≤ λ^{r-1/2} ν`
//! * sampling (κ ≥ 1): `‖f_{z,λ} - f_λ‖_K ≤ 6 m κ M L / (√n λ)`
//! * with `λ = (3κM/ν)^{2/(2r+1)} n^{-1/(2r+1)} m^{2/(2r+1)}`:
//!   `‖f_{z,λ} - f_ρ‖_ρ ≤ 4κL (3κM)^{(2r-1)/(2r+1)} ν^{2/(2r+1)} m^{(6r-1)/(4r+2)} n^{-(2r-1)/(4r+2)}`

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{KernelSpec, SpaceSpec};
use crate::error::{arg_err, Error, Result};
use crate::io::fmt_f64;
use crate::kernels::{check_universal_on_discrete, kappa_estimate, MatrixKernel};
use crate::rkhs::{solve_on_space, SampleSet};
use crate::rng::trial_rng;
use crate::spectral::{check_smoothness, eigendecompose, RhoFunction, SpectralDecomposition};
use crate::synth::{build_source_target, expected_risk, sample_dataset_with, CoefficientSource, NoiseSpec, SourceTarget};

/// Absolute slack for inequalities that hold exactly in real arithmetic.
pub const EXACT_SLACK: f64 = 1e-10;

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(arg_err!("{name} must be positive and finite, got {v}"));
    }
    Ok(())
}

/// `log(2/δ)`, requiring `0 < δ < 1` and `log(2/δ) ≥ 1`.
pub fn log_confidence(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(arg_err!("confidence δ = {delta} outside (0, 1)"));
    }
    let l = (2.0 / delta).ln();
    // δ = 2/e sits on the boundary; allow its rounding.
    if l < 1.0 - 1e-12 {
        return Err(Error::Hypothesis(format!("log(2/δ) = {l} < 1; need δ ≤ 2/e")));
    }
    Ok(l)
}

/// `λ = (3κM/ν)^{2/(2r+1)} · n^{-1/(2r+1)} · m^{2/(2r+1)}`.
pub fn lambda_rule(n: usize, m: usize, r: f64, kappa: f64, bound: f64, source_norm: f64) -> Result<f64> {
    check_smoothness(r)?;
    positive("n", n as f64)?;
    positive("m", m as f64)?;
    positive("κ", kappa)?;
    positive("M", bound)?;
    positive("ν", source_norm)?;
    let e = 2.0 * r + 1.0;
    Ok((3.0 * kappa * bound / source_norm).powf(2.0 / e) * (n as f64).powf(-1.0 / e) * (m as f64).powf(2.0 / e))
}

/// Final ρ-norm rate bound at the rule's λ.
pub fn theoretical_rate_bound(n: usize, m: usize, r: f64, kappa: f64, bound: f64, source_norm: f64, delta: f64) -> Result<f64> {
    check_smoothness(r)?;
    let l = log_confidence(delta)?;
    positive("n", n as f64)?;
    positive("m", m as f64)?;
    positive("κ", kappa)?;
    positive("M", bound)?;
    positive("ν", source_norm)?;
    let e = 2.0 * r + 1.0;
    Ok(4.0
        * kappa
        * l
        * (3.0 * kappa * bound).powf((2.0 * r - 1.0) / e)
        * source_norm.powf(2.0 / e)
        * (m as f64).powf((6.0 * r - 1.0) / (4.0 * r + 2.0))
        * (n as f64).powf(-(2.0 * r - 1.0) / (4.0 * r + 2.0)))
}

/// `6 m κ M log(2/δ) / (√n λ)`; requires `κ ≥ 1`.
pub fn sampling_error_bound(n: usize, m: usize, lambda: f64, kappa: f64, bound: f64, delta: f64) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(Error::Hypothesis(format!("sampling bound needs κ ≥ 1, got {kappa}")));
    }
    let l = log_confidence(delta)?;
    positive("n", n as f64)?;
    positive("m", m as f64)?;
    positive("λ", lambda)?;
    positive("M", bound)?;
    Ok(6.0 * m as f64 * kappa * bound * l / ((n as f64).sqrt() * lambda))
}

/// Least-squares slope of `log(value)` against `log(n)`.
pub fn fit_log_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(arg_err!("slope fit needs at least two points"));
    }
    if pairs.iter().any(|&(n, v)| !(n > 0.0 && v > 0.0 && n.is_finite() && v.is_finite())) {
        return Err(arg_err!("slope fit needs positive finite entries"));
    }
    let k = pairs.len() as f64;
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |(a, b), &(n, v)| (a + n.ln(), b + v.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(n, v) in pairs {
        let dx = n.ln() - mx;
        sxy += dx * (v.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(arg_err!("slope fit needs at least two distinct n"));
    }
    Ok(sxy / sxx)
}

/// Checks on the data-free minimizer `f_λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FLambdaDiagnostics {
    pub k_norm: f64,
    pub k_norm_bound: f64,
    pub risk: f64,
    pub risk_bound: f64,
    pub sup_norm: f64,
    pub sup_bound: f64,
}

impl FLambdaDiagnostics {
    pub fn k_norm_ok(&self) -> bool {
        self.k_norm <= self.k_norm_bound + EXACT_SLACK
    }

    pub fn risk_ok(&self) -> bool {
        self.risk <= self.risk_bound + EXACT_SLACK
    }

    pub fn sup_ok(&self) -> bool {
        self.sup_norm <= self.sup_bound + EXACT_SLACK
    }

    pub fn all_ok(&self) -> bool {
        self.k_norm_ok() && self.risk_ok() && self.sup_ok()
    }
}

/// `‖f_λ‖_K ≤ √m M/√λ`, `E(f_λ) ≤ 2mM²`, `‖f_λ‖_∞ ≤ κ√m M/√λ`.
pub fn flambda_diagnostics(
    dec: &SpectralDecomposition,
    target: &SourceTarget,
    noise: &NoiseSpec,
    lambda: f64,
    kappa: f64,
) -> Result<FLambdaDiagnostics> {
    positive("λ", lambda)?;
    let f_lambda = dec.compute_f_lambda(target.f_rho(), lambda)?;
    let m = dec.m() as f64;
    let bound = noise.bound();
    Ok(FLambdaDiagnostics {
        k_norm: dec.k_norm(&f_lambda)?,
        k_norm_bound: m.sqrt() * bound / lambda.sqrt(),
        risk: expected_risk(dec.space(), target, noise, &f_lambda)?,
        risk_bound: 2.0 * m * bound * bound,
        sup_norm: f_lambda.sup_norm(),
        sup_bound: kappa * m.sqrt() * bound / lambda.sqrt(),
    })
}

/// Sampling-error diagnostics for one sample, in node-value coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplingDiagnostics {
    /// `‖(1/n) Σ ζᵢ - L_K(f_ρ - f_λ)‖_K` with `ζᵢ = K(xᵢ, ·)(yᵢ - f_λ(xᵢ))`.
    pub alpha: f64,
    /// `‖f_{z,λ} - f_λ‖_K`.
    pub sampling_err_k: f64,
    pub lambda: f64,
    pub max_zeta_norm: f64,
    /// `m κ (M + ‖f_λ‖_∞)`.
    pub zeta_bound_linear: f64,
    /// `m κ² (M + ‖f_λ‖_∞)`.
    pub zeta_bound_squared: f64,
}

impl SamplingDiagnostics {
    /// `‖f_{z,λ} - f_λ‖_K ≤ α/λ`.
    pub fn scaling_ok(&self) -> bool {
        self.sampling_err_k <= self.alpha / self.lambda + EXACT_SLACK
    }

    pub fn zeta_linear_ok(&self) -> bool {
        self.max_zeta_norm <= self.zeta_bound_linear + EXACT_SLACK
    }

    pub fn zeta_squared_ok(&self) -> bool {
        self.max_zeta_norm <= self.zeta_bound_squared + EXACT_SLACK
    }
}

/// Node values of `(1/n) Σᵢ K(xᵢ, ·)(yᵢ - f(xᵢ))`.
pub fn empirical_zeta_mean(dec: &SpectralDecomposition, nodes: &[usize], outputs: &DVector<f64>, f: &RhoFunction) -> Result<RhoFunction> {
    let m = dec.m();
    let mut residual = DVector::zeros(dec.space().len() * m);
    for (i, &z) in nodes.iter().enumerate() {
        let mut block = residual.rows_mut(z * m, m);
        block += outputs.rows(i * m, m) - f.values().rows(z * m, m);
    }
    RhoFunction::new(dec.gram() * residual / nodes.len() as f64, m)
}

pub fn sampling_deviation_diagnostics(
    dec: &SpectralDecomposition,
    sample: &SampleSet,
    f_z: &RhoFunction,
    f_lambda: &RhoFunction,
    f_rho: &RhoFunction,
    lambda: f64,
    kappa: f64,
    bound: f64,
) -> Result<SamplingDiagnostics> {
    let nodes = sample.node_indices(dec.space())?;
    let zeta_mean = empirical_zeta_mean(dec, &nodes, sample.outputs(), f_lambda)?;
    let expectation = dec.apply_integral_operator(&f_rho.sub(f_lambda))?;
    let alpha = dec.k_norm(&zeta_mean.sub(&expectation))?;
    let sampling_err_k = dec.k_norm(&f_z.sub(f_lambda))?;

    let m = dec.m();
    let mut max_zeta_norm = 0.0_f64;
    for (i, &z) in nodes.iter().enumerate() {
        let u = sample.output(i) - f_lambda.at(z);
        let kzz = dec.gram().view((z * m, z * m), (m, m));
        max_zeta_norm = max_zeta_norm.max(u.dot(&(kzz * &u)).max(0.0).sqrt());
    }
    let base = m as f64 * (bound + f_lambda.sup_norm());
    Ok(SamplingDiagnostics {
        alpha,
        sampling_err_k,
        lambda,
        max_zeta_norm,
        zeta_bound_linear: base * kappa,
        zeta_bound_squared: base * kappa * kappa,
    })
}

/// How λ is chosen per grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    /// The `n`- and `m`-dependent closed form.
    Theoretical,
    Fixed { value: f64 },
    /// Every listed λ at every grid point.
    Grid { values: Vec<f64> },
}

/// Source-target construction for the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub modes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateExperimentConfig {
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    pub r: f64,
    /// Almost-sure output bound `M`.
    pub bound: f64,
    pub sigma: f64,
    pub kernel: KernelSpec,
    pub space: SpaceSpec,
    pub target: TargetSpec,
    pub master_seed: u64,
    pub lambda_rule: LambdaRule,
    /// `n` at which growth in `m` is summarized.
    pub growth_n: usize,
    pub parallel: bool,
}

impl Default for RateExperimentConfig {
    fn default() -> Self {
        RateExperimentConfig {
            n_grid: vec![50, 100, 200, 400, 800, 1600],
            m_grid: vec![1, 2, 4, 8],
            trials: 200,
            delta: 0.05,
            r: 1.0,
            bound: 1.0,
            sigma: 0.1,
            kernel: KernelSpec::default(),
            space: SpaceSpec::default(),
            target: TargetSpec { modes: 4, seed: 1 },
            master_seed: 20240611,
            lambda_rule: LambdaRule::Theoretical,
            growth_n: 400,
            parallel: true,
        }
    }
}

impl RateExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.m_grid.is_empty() {
            return Err(arg_err!("n and m grids must be nonempty"));
        }
        if self.n_grid.contains(&0) || self.m_grid.contains(&0) {
            return Err(arg_err!("grid entries must be positive"));
        }
        if self.trials == 0 {
            return Err(arg_err!("need at least one trial"));
        }
        log_confidence(self.delta)?;
        check_smoothness(self.r)?;
        NoiseSpec::new(self.sigma, self.bound)?;
        if self.target.modes == 0 {
            return Err(arg_err!("target needs at least one mode"));
        }
        match &self.lambda_rule {
            LambdaRule::Theoretical => {}
            LambdaRule::Fixed { value } => positive("λ", *value)?,
            LambdaRule::Grid { values } => {
                if values.is_empty() {
                    return Err(arg_err!("λ grid must be nonempty"));
                }
                values.iter().try_for_each(|&v| positive("λ", v))?;
            }
        }
        Ok(())
    }
}

/// One Monte Carlo trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub trial: usize,
    pub err_rho: f64,
    pub err_k: f64,
    pub sampling_err_k: f64,
    pub approx_err_k: f64,
    pub bound_rho: f64,
    pub bound_sampling_k: f64,
    pub violated_rho: bool,
    pub violated_sampling: bool,
    pub approx_bound: f64,
    pub alpha: f64,
    pub f_z_k_norm: f64,
    pub f_z_k_norm_bound: f64,
}

impl TrialRow {
    pub fn approx_ok(&self) -> bool {
        self.approx_err_k <= self.approx_bound + 1e-12
    }

    pub fn triangle_ok(&self) -> bool {
        self.err_k <= self.sampling_err_k + self.approx_err_k + EXACT_SLACK
    }

    pub fn scaling_ok(&self) -> bool {
        self.sampling_err_k <= self.alpha / self.lambda + EXACT_SLACK
    }

    pub fn f_z_norm_ok(&self) -> bool {
        self.f_z_k_norm <= self.f_z_k_norm_bound + EXACT_SLACK
    }
}

/// Per-grid-point aggregates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub kappa: f64,
    pub source_norm: f64,
    pub trials: usize,
    pub median_err_rho: f64,
    pub quantile_err_rho: f64,
    pub median_err_k: f64,
    pub quantile_sampling_err_k: f64,
    pub approx_err_k: f64,
    pub approx_bound: f64,
    pub bound_rho: f64,
    pub bound_sampling_k: f64,
    pub violation_fraction_rho: f64,
    pub violation_fraction_sampling: f64,
    pub approx_violations: usize,
    pub triangle_violations: usize,
    pub rho_vs_k_violations: usize,
    pub scaling_violations: usize,
    pub f_z_norm_violations: usize,
    pub f_lambda_ok: bool,
    pub kernel_norm_max: f64,
}

/// Fitted log-log slope of error quantiles against `n` for one `(m, λ-rule)` curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub m: usize,
    /// Present for fixed/grid λ rules.
    pub lambda: Option<f64>,
    pub quantile_slope: f64,
    pub median_slope: f64,
    pub bound_slope: f64,
}

/// Error quantiles across `m` at a fixed `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthInM {
    pub n: usize,
    pub m: Vec<usize>,
    pub quantile_err_rho: Vec<f64>,
    pub bound_rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub delta: f64,
    pub r: f64,
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<GridSummary>,
    pub slopes: Vec<SlopeFit>,
    pub growth: Vec<GrowthInM>,
}

pub const RATE_CSV_HEADER: &str =
    "n,m,lambda,trial,err_rho,err_K,sampling_err_K,approx_err_K,bound_rho,bound_sampling_K,violated_rho,violated_sampling";

impl RateReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{RATE_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.m,
                fmt_f64(r.lambda),
                r.trial,
                fmt_f64(r.err_rho),
                fmt_f64(r.err_k),
                fmt_f64(r.sampling_err_k),
                fmt_f64(r.approx_err_k),
                fmt_f64(r.bound_rho),
                fmt_f64(r.bound_sampling_k),
                u8::from(r.violated_rho),
                u8::from(r.violated_sampling),
            )?;
        }
        Ok(())
    }

    /// Every bound-violation fraction is at most δ.
    pub fn bounds_hold(&self) -> bool {
        self.summaries.iter().all(|s| {
            s.violation_fraction_rho <= self.delta
                && s.violation_fraction_sampling <= self.delta
                && s.approx_violations as f64 <= self.delta * s.trials as f64
        })
    }

    /// Invariants that hold exactly on every trial.
    pub fn exact_invariants_hold(&self) -> bool {
        self.summaries.iter().all(|s| {
            s.approx_violations == 0
                && s.triangle_violations == 0
                && s.rho_vs_k_violations == 0
                && s.scaling_violations == 0
                && s.f_z_norm_violations == 0
                && s.f_lambda_ok
        })
    }

    pub fn summary(&self, n: usize, m: usize) -> Option<&GridSummary> {
        self.summaries.iter().find(|s| s.n == n && s.m == m)
    }
}

/// Median of sorted values (lower middle for even counts).
fn median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Smallest sample value with at least a fraction `p` of samples at or below it.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

struct TaskContext {
    m: usize,
    kappa: f64,
    dec: SpectralDecomposition,
    target: SourceTarget,
    noise: NoiseSpec,
}

struct Cell {
    ctx: usize,
    n: usize,
    lambda: f64,
    f_lambda: RhoFunction,
    approx_err_k: f64,
    approx_bound: f64,
    bound_rho: f64,
    bound_sampling_k: f64,
    f_lambda_ok: bool,
}

/// Runs the full `(n, m, trial)` grid.
///
/// Each trial draws from `trial_rng(master_seed, n, m, trial)`; rows come back
/// sorted by grid point then trial, so parallel and serial runs are identical.
pub fn run_rate_experiment(config: &RateExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    let space = config.space.build()?;
    let noise = NoiseSpec::new(config.sigma, config.bound)?;

    let mut contexts = Vec::new();
    for &m in &config.m_grid {
        let kernel: MatrixKernel = config.kernel.build(&space, Some(m))?;
        let universal = check_universal_on_discrete(&kernel, &space)?;
        if !universal.universal {
            return Err(Error::Hypothesis(format!(
                "kernel is not universal on the space for m = {m} (min Gram eigenvalue {:e})",
                universal.min_eigenvalue
            )));
        }
        let kappa = kappa_estimate(&kernel, space.nodes())?;
        if kappa < 1.0 {
            return Err(Error::Hypothesis(format!("κ = {kappa} < 1 for m = {m}")));
        }
        let dec = eigendecompose(&kernel, &space)?;
        let source = CoefficientSource::Seeded { seed: config.target.seed, modes: config.target.modes };
        let target = build_source_target(&dec, config.r, &source, Some(noise.default_budget()))?;
        noise.check_target(&target)?;
        contexts.push(TaskContext { m, kappa, dec, target, noise });
    }

    let mut cells = Vec::new();
    for (ci, ctx) in contexts.iter().enumerate() {
        let nu = ctx.target.source_norm();
        for &n in &config.n_grid {
            let lambdas = match &config.lambda_rule {
                LambdaRule::Theoretical => vec![lambda_rule(n, ctx.m, config.r, ctx.kappa, config.bound, nu)?],
                LambdaRule::Fixed { value } => vec![*value],
                LambdaRule::Grid { values } => values.clone(),
            };
            for lambda in lambdas {
                let f_lambda = ctx.dec.compute_f_lambda(ctx.target.f_rho(), lambda)?;
                let approx = ctx.dec.approximation_error(ctx.target.f_rho(), lambda, config.r, nu)?;
                let bound_sampling_k = sampling_error_bound(n, ctx.m, lambda, ctx.kappa, config.bound, config.delta)?;
                let bound_rho = match config.lambda_rule {
                    LambdaRule::Theoretical => theoretical_rate_bound(n, ctx.m, config.r, ctx.kappa, config.bound, nu, config.delta)?,
                    // Away from the rule's λ, combine the two K-norm bounds and pass to ρ-norm.
                    _ => ctx.kappa * (ctx.m as f64).sqrt() * (bound_sampling_k + approx.bound),
                };
                let f_lambda_ok = flambda_diagnostics(&ctx.dec, &ctx.target, &ctx.noise, lambda, ctx.kappa)?.all_ok();
                cells.push(Cell {
                    ctx: ci,
                    n,
                    lambda,
                    f_lambda,
                    approx_err_k: approx.err_k,
                    approx_bound: approx.bound,
                    bound_rho,
                    bound_sampling_k,
                    f_lambda_ok,
                });
            }
        }
    }

    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..config.trials).map(move |t| (c, t))).collect();
    let run = |&(c, t): &(usize, usize)| run_trial(config, &contexts[cells[c].ctx], &cells[c], t);
    let rows: Vec<TrialRow> = if config.parallel {
        tasks.par_iter().map(run).collect::<Result<_>>()?
    } else {
        tasks.iter().map(run).collect::<Result<_>>()?
    };

    let mut summaries = Vec::with_capacity(cells.len());
    for (c, chunk) in cells.iter().zip(rows.chunks(config.trials)) {
        let ctx = &contexts[c.ctx];
        let t = chunk.len() as f64;
        let err_rho = sorted(chunk.iter().map(|r| r.err_rho).collect());
        let err_k = sorted(chunk.iter().map(|r| r.err_k).collect());
        let samp = sorted(chunk.iter().map(|r| r.sampling_err_k).collect());
        let kappa_sqrt_m = ctx.kappa * (ctx.m as f64).sqrt();
        let kernel_norm_max = (0..space.len())
            .map(|z| {
                let blk = ctx.dec.gram().view((z * ctx.m, z * ctx.m), (ctx.m, ctx.m)).into_owned();
                blk.symmetric_eigenvalues().amax()
            })
            .fold(0.0, f64::max);
        summaries.push(GridSummary {
            n: c.n,
            m: ctx.m,
            lambda: c.lambda,
            kappa: ctx.kappa,
            source_norm: ctx.target.source_norm(),
            trials: chunk.len(),
            median_err_rho: median(&err_rho),
            quantile_err_rho: empirical_quantile(&err_rho, 1.0 - config.delta),
            median_err_k: median(&err_k),
            quantile_sampling_err_k: empirical_quantile(&samp, 1.0 - config.delta),
            approx_err_k: c.approx_err_k,
            approx_bound: c.approx_bound,
            bound_rho: c.bound_rho,
            bound_sampling_k: c.bound_sampling_k,
            violation_fraction_rho: chunk.iter().filter(|r| r.violated_rho).count() as f64 / t,
            violation_fraction_sampling: chunk.iter().filter(|r| r.violated_sampling).count() as f64 / t,
            approx_violations: chunk.iter().filter(|r| !r.approx_ok()).count(),
            triangle_violations: chunk.iter().filter(|r| !r.triangle_ok()).count(),
            rho_vs_k_violations: chunk.iter().filter(|r| r.err_rho > kappa_sqrt_m * r.err_k + EXACT_SLACK).count(),
            scaling_violations: chunk.iter().filter(|r| !r.scaling_ok()).count(),
            f_z_norm_violations: chunk.iter().filter(|r| !r.f_z_norm_ok()).count(),
            f_lambda_ok: c.f_lambda_ok,
            kernel_norm_max,
        });
    }

    let slopes = fit_slopes(config, &summaries)?;
    let growth = growth_in_m(config, &summaries);
    Ok(RateReport { delta: config.delta, r: config.r, rows, summaries, slopes, growth })
}

fn run_trial(config: &RateExperimentConfig, ctx: &TaskContext, cell: &Cell, trial: usize) -> Result<TrialRow> {
    let mut rng = trial_rng(config.master_seed, cell.n, ctx.m, trial);
    let space = ctx.dec.space();
    let sample = sample_dataset_with(space, &ctx.target, &ctx.noise, cell.n, &mut rng)?;
    let nodes = sample.nodes().expect("sampled datasets carry node indices");
    let fit = solve_on_space(ctx.dec.gram(), ctx.m, nodes, sample.outputs(), cell.lambda)?;
    let f_z = &fit.values;
    let f_rho = ctx.target.f_rho();

    let diff = f_z.sub(f_rho);
    let err_rho = diff.norm(space)?;
    let err_k = ctx.dec.k_norm(&diff)?;
    let diag = sampling_deviation_diagnostics(&ctx.dec, &sample, f_z, &cell.f_lambda, f_rho, cell.lambda, ctx.kappa, config.bound)?;
    let c = &fit.node_coefficients;
    let f_z_k_norm = c.dot(&(ctx.dec.gram() * c)).max(0.0).sqrt();

    Ok(TrialRow {
        n: cell.n,
        m: ctx.m,
        lambda: cell.lambda,
        trial,
        err_rho,
        err_k,
        sampling_err_k: diag.sampling_err_k,
        approx_err_k: cell.approx_err_k,
        bound_rho: cell.bound_rho,
        bound_sampling_k: cell.bound_sampling_k,
        violated_rho: err_rho > cell.bound_rho,
        violated_sampling: diag.sampling_err_k > cell.bound_sampling_k,
        approx_bound: cell.approx_bound,
        alpha: diag.alpha,
        f_z_k_norm,
        f_z_k_norm_bound: (ctx.m as f64).sqrt() * config.bound / cell.lambda.sqrt(),
    })
}

fn fit_slopes(config: &RateExperimentConfig, summaries: &[GridSummary]) -> Result<Vec<SlopeFit>> {
    let mut out = Vec::new();
    if config.n_grid.len() < 2 {
        return Ok(out);
    }
    let lambda_keys: Vec<Option<f64>> = match &config.lambda_rule {
        LambdaRule::Theoretical => vec![None],
        LambdaRule::Fixed { value } => vec![Some(*value)],
        LambdaRule::Grid { values } => values.iter().copied().map(Some).collect(),
    };
    for &m in &config.m_grid {
        for key in &lambda_keys {
            let curve: Vec<&GridSummary> = summaries
                .iter()
                .filter(|s| s.m == m && key.is_none_or(|l| s.lambda == l))
                .collect();
            let pts = |f: fn(&GridSummary) -> f64| curve.iter().map(|s| (s.n as f64, f(s))).collect::<Vec<_>>();
            let (Ok(quantile_slope), Ok(median_slope)) =
                (fit_log_slope(&pts(|s| s.quantile_err_rho)), fit_log_slope(&pts(|s| s.median_err_rho)))
            else {
                // Zero errors (e.g. noiseless interpolation) have no log-log slope.
                continue;
            };
            out.push(SlopeFit {
                m,
                lambda: *key,
                quantile_slope,
                median_slope,
                bound_slope: fit_log_slope(&pts(|s| s.bound_rho))?,
            });
        }
    }
    Ok(out)
}

fn growth_in_m(config: &RateExperimentConfig, summaries: &[GridSummary]) -> Vec<GrowthInM> {
    if !config.n_grid.contains(&config.growth_n) || !matches!(config.lambda_rule, LambdaRule::Theoretical) {
        return Vec::new();
    }
    let at_n: Vec<&GridSummary> = summaries.iter().filter(|s| s.n == config.growth_n).collect();
    vec![GrowthInM {
        n: config.growth_n,
        m: at_n.iter().map(|s| s.m).collect(),
        quantile_err_rho: at_n.iter().map(|s| s.quantile_err_rho).collect(),
        bound_rho: at_n.iter().map(|s| s.bound_rho).collect(),
    }]
}
