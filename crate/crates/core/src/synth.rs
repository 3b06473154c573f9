//! Synthetic regression problems with a known source condition.
//!
//! Targets are `f_ρ = Σⱼ dⱼ λⱼ^r φⱼ`, so `‖L_K^{-r} f_ρ‖_ρ = ‖d‖₂` exactly.
//! Outputs are `y = f_ρ(x) + ε` with `ε` uniform on `[-σ, σ]^m`, which keeps
//! the conditional mean at `f_ρ` and `‖y‖_∞ ≤ M` almost surely.

use nalgebra::DVector;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{arg_err, Error, Result};
use crate::rkhs::SampleSet;
use crate::rng::{seeded, TrialRng};
use crate::spectral::{check_smoothness, DiscreteSpace, RhoFunction, SpectralDecomposition};

/// How to pick source coefficients `dⱼ`.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientSource {
    /// `modes` coefficients uniform on `[-1, 1]`.
    Seeded { seed: u64, modes: usize },
    Explicit(Vec<f64>),
}

/// A regression function satisfying the source condition with smoothness `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTarget {
    r: f64,
    coefficients: DVector<f64>,
    mode_eigenvalues: DVector<f64>,
    values: RhoFunction,
    source_norm: f64,
    sup_norm: f64,
}

impl SourceTarget {
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Source coefficients `dⱼ` for the leading modes.
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    /// `f_ρ` node values.
    pub fn f_rho(&self) -> &RhoFunction {
        &self.values
    }

    /// `ν = ‖L_K^{-r} f_ρ‖_ρ = ‖d‖₂`.
    pub fn source_norm(&self) -> f64 {
        self.source_norm
    }

    /// `max_z ‖f_ρ(z)‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// `‖f_ρ‖_K = √(Σ dⱼ² λⱼ^{2r-1})`.
    pub fn k_norm(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(self.mode_eigenvalues.iter())
            .map(|(d, l)| d * d * l.powf(2.0 * self.r - 1.0))
            .sum::<f64>()
            .sqrt()
    }

    /// Recomputes `Σ dⱼ λⱼ^r φⱼ` from the stored coefficients.
    pub fn rebuild(&self, dec: &SpectralDecomposition) -> RhoFunction {
        synthesize(dec, &self.coefficients, self.r)
    }
}

fn synthesize(dec: &SpectralDecomposition, d: &DVector<f64>, r: f64) -> RhoFunction {
    let c = DVector::from_fn(d.len(), |j, _| d[j] * dec.eigenvalues()[j].powf(r));
    dec.synthesize(&c)
}

/// Builds `f_ρ = Σ dⱼ λⱼ^r φⱼ`; with a `budget`, rescales `d` so `sup_norm = budget`.
pub fn build_source_target(
    dec: &SpectralDecomposition,
    r: f64,
    source: &CoefficientSource,
    budget: Option<f64>,
) -> Result<SourceTarget> {
    check_smoothness(r)?;
    let mut d = match source {
        CoefficientSource::Seeded { seed, modes } => {
            let mut rng = seeded(*seed);
            DVector::from_fn(*modes, |_, _| rng.gen_range(-1.0..=1.0))
        }
        CoefficientSource::Explicit(v) => DVector::from_column_slice(v),
    };
    if d.is_empty() {
        return Err(arg_err!("target needs at least one mode"));
    }
    if d.len() > dec.rank() {
        return Err(arg_err!("requested {} modes but the numerical rank is {}", d.len(), dec.rank()));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(arg_err!("source coefficients must be finite"));
    }
    let mut values = synthesize(dec, &d, r);
    if let Some(b) = budget {
        let sup = values.sup_norm();
        if !(b > 0.0) || sup == 0.0 {
            return Err(arg_err!("cannot rescale target with sup norm {sup} to budget {b}"));
        }
        d *= b / sup;
        values = synthesize(dec, &d, r);
    }
    let mode_eigenvalues = dec.eigenvalues().rows(0, d.len()).into_owned();
    Ok(SourceTarget {
        r,
        source_norm: d.norm(),
        sup_norm: values.sup_norm(),
        coefficients: d,
        mode_eigenvalues,
        values,
    })
}

/// Componentwise uniform noise on `[-σ, σ]` with almost-sure output bound `M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
    bound: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, bound: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) || !(bound > 0.0 && bound.is_finite()) {
            return Err(arg_err!("need σ ≥ 0 and M > 0, got σ = {sigma}, M = {bound}"));
        }
        Ok(NoiseSpec { sigma, bound })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `E‖ε‖²₂ = m σ²/3`.
    pub fn variance_sum(&self, m: usize) -> f64 {
        m as f64 * self.sigma * self.sigma / 3.0
    }

    /// The target budget that makes `sup_norm + σ = 0.9 M`.
    pub fn default_budget(&self) -> f64 {
        0.9 * self.bound - self.sigma
    }

    pub fn check_target(&self, target: &SourceTarget) -> Result<()> {
        if target.sup_norm() + self.sigma > self.bound * (1.0 + 1e-12) {
            return Err(Error::Hypothesis(format!(
                "outputs not bounded: sup ‖f_ρ‖_∞ + σ = {} > M = {}",
                target.sup_norm() + self.sigma,
                self.bound
            )));
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. pairs: `x ~ ρ_X` over the nodes, `y = f_ρ(x) + ε`.
pub fn sample_dataset_with(
    space: &DiscreteSpace,
    target: &SourceTarget,
    noise: &NoiseSpec,
    n: usize,
    rng: &mut TrialRng,
) -> Result<SampleSet> {
    noise.check_target(target)?;
    target.f_rho().check_space(space)?;
    if n == 0 {
        return Err(arg_err!("need at least one sample"));
    }
    let nodes_dist = WeightedIndex::new(space.weights()).map_err(|e| arg_err!("bad space weights: {e}"))?;
    let sigma = noise.sigma();
    let mut nodes = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z = nodes_dist.sample(rng);
        let f = target.f_rho().at(z);
        let y = f
            .iter()
            .map(|&v| if sigma > 0.0 { v + rng.gen_range(-sigma..=sigma) } else { v })
            .collect();
        nodes.push(z);
        ys.push(y);
    }
    Ok(SampleSet::on_space(space, nodes, ys)?.with_bound(noise.bound()))
}

pub fn sample_dataset(space: &DiscreteSpace, target: &SourceTarget, noise: &NoiseSpec, n: usize, seed: u64) -> Result<SampleSet> {
    sample_dataset_with(space, target, noise, n, &mut seeded(seed))
}

/// Both sides of `E(f) - E(f_ρ) = ‖f - f_ρ‖²_ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcessRisk {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// `max(1, E(f))`, the magnitude the gap is compared against.
    pub scale: f64,
}

impl ExcessRisk {
    pub fn holds(&self) -> bool {
        self.gap < 1e-12 * self.scale
    }
}

/// Expected risk `E(f) = Σᵢ wᵢ E‖f(zᵢ) - y‖²` expanded through the moments of `y`.
pub fn expected_risk(space: &DiscreteSpace, target: &SourceTarget, noise: &NoiseSpec, f: &RhoFunction) -> Result<f64> {
    f.check_space(space)?;
    let m = target.f_rho().m();
    let mut risk = 0.0;
    for (i, w) in space.weights().iter().enumerate() {
        let fz = f.at(i);
        let mean = target.f_rho().at(i);
        let second_moment = mean.norm_squared() + noise.variance_sum(m);
        risk += w * (fz.norm_squared() - 2.0 * fz.dot(&mean) + second_moment);
    }
    Ok(risk)
}

pub fn excess_risk_check(space: &DiscreteSpace, target: &SourceTarget, noise: &NoiseSpec, f: &RhoFunction) -> Result<ExcessRisk> {
    let e_f = expected_risk(space, target, noise, f)?;
    let e_rho = expected_risk(space, target, noise, target.f_rho())?;
    let lhs = e_f - e_rho;
    let rhs = f.sub(target.f_rho()).norm(space)?.powi(2);
    Ok(ExcessRisk { lhs, rhs, gap: (lhs - rhs).abs(), scale: e_f.max(1.0) })
}
