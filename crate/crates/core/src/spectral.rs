//! The integral operator `L_K` on a finite input space, its eigendecomposition,
//! Mercer reconstruction, fractional powers, and the data-free minimizer `f_λ`.
//!
//! Functions on the space are stored as node-value vectors of length `N·m`
//! (block `i` holds `f(zᵢ) ∈ R^m`). With `W = diag(wᵢ) ⊗ I_m` and `G` the
//! full block Gram:
//!
//! * `L_K f = G W f`
//! * `⟨f, g⟩_ρ = fᵀ W g`
//! * `S = W^{1/2} G W^{1/2} = V Λ Vᵀ`, eigenfunctions `φⱼ = W^{-1/2} vⱼ`
//!
//! so every identity about `L_K` becomes a finite-dimensional one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{arg_err, Error, Result};
use crate::kernels::{block_gram, MatrixKernel, PSD_TOL};

/// Modes with `λⱼ > RANK_TOL · λ₁` are retained.
pub const RANK_TOL: f64 = 1e-12;
/// Relative residual above which a function is considered outside the retained span.
pub const RANGE_TOL: f64 = 1e-8;

/// A finite input space with strictly positive node weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSpace {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteSpace {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(arg_err!("space needs at least one node"));
        }
        if nodes.len() != weights.len() {
            return Err(arg_err!("{} nodes but {} weights", nodes.len(), weights.len()));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(arg_err!("node coordinates must be finite"));
        }
        for i in 0..nodes.len() {
            if nodes[..i].contains(&nodes[i]) {
                return Err(arg_err!("duplicate node {:?}", nodes[i]));
            }
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(arg_err!("weight {i} is {w}; every node needs positive mass"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(arg_err!("weights sum to {total}, expected 1"));
        }
        Ok(DiscreteSpace { nodes, weights })
    }

    pub fn uniform(nodes: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / nodes.len().max(1) as f64;
        let weights = vec![w; nodes.len()];
        Self::new(nodes, weights)
    }

    /// `count` equispaced points on `[a, b]` with uniform weights; the
    /// discretization used when the input space is an interval.
    pub fn uniform_grid(count: usize, a: f64, b: f64) -> Result<Self> {
        if count == 0 {
            return Err(arg_err!("grid needs at least one node"));
        }
        let nodes = (0..count)
            .map(|i| {
                if count == 1 {
                    vec![a]
                } else {
                    vec![a + (b - a) * i as f64 / (count - 1) as f64]
                }
            })
            .collect();
        Self::uniform(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.nodes.iter().position(|n| n.as_slice() == x)
    }

    /// Diagonal of `W = diag(wᵢ) ⊗ I_m`.
    pub fn expanded_weights(&self, m: usize) -> DVector<f64> {
        DVector::from_iterator(self.len() * m, self.weights.iter().flat_map(|&w| std::iter::repeat(w).take(m)))
    }
}

/// An element of `L²_ρ(X, R^m)` given by its node values.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoFunction {
    values: DVector<f64>,
    m: usize,
}

impl RhoFunction {
    pub fn new(values: DVector<f64>, m: usize) -> Result<Self> {
        if m == 0 || values.len() % m != 0 {
            return Err(arg_err!("{} node values do not split into blocks of {m}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(arg_err!("function has non-finite node values"));
        }
        Ok(RhoFunction { values, m })
    }

    pub fn zeros(space: &DiscreteSpace, m: usize) -> Self {
        RhoFunction { values: DVector::zeros(space.len() * m), m }
    }

    /// Node values produced by `f(node_index) -> R^m`.
    pub fn from_fn(space: &DiscreteSpace, m: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(space.len() * m);
        for i in 0..space.len() {
            let v = f(i);
            if v.len() != m {
                return Err(arg_err!("node {i}: expected {m} outputs, got {}", v.len()));
            }
            values.extend(v);
        }
        Self::new(DVector::from_vec(values), m)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> DVector<f64> {
        self.values.rows(node * self.m, self.m).into_owned()
    }

    pub fn check_space(&self, space: &DiscreteSpace) -> Result<()> {
        if self.node_count() != space.len() {
            return Err(arg_err!(
                "function lives on {} nodes but the space has {}",
                self.node_count(),
                space.len()
            ));
        }
        Ok(())
    }

    pub fn inner(&self, other: &RhoFunction, space: &DiscreteSpace) -> Result<f64> {
        self.check_space(space)?;
        other.check_space(space)?;
        if self.m != other.m {
            return Err(arg_err!("output dimensions differ ({} vs {})", self.m, other.m));
        }
        let w = space.expanded_weights(self.m);
        Ok(self.values.component_mul(&w).dot(&other.values))
    }

    pub fn norm(&self, space: &DiscreteSpace) -> Result<f64> {
        Ok(self.inner(self, space)?.max(0.0).sqrt())
    }

    /// `max_z ‖f(z)‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    pub fn sub(&self, other: &RhoFunction) -> RhoFunction {
        RhoFunction { values: &self.values - &other.values, m: self.m }
    }

    pub fn add(&self, other: &RhoFunction) -> RhoFunction {
        RhoFunction { values: &self.values + &other.values, m: self.m }
    }

    pub fn scale(&self, s: f64) -> RhoFunction {
        RhoFunction { values: &self.values * s, m: self.m }
    }
}

/// `(L_K f)(zᵢ) = Σⱼ wⱼ K(zᵢ, zⱼ) f(zⱼ)`, computed directly from the kernel.
pub fn apply_integral_operator(kernel: &MatrixKernel, space: &DiscreteSpace, f: &RhoFunction) -> Result<RhoFunction> {
    f.check_space(space)?;
    if f.m() != kernel.m() {
        return Err(arg_err!("function has {} outputs but the kernel has {}", f.m(), kernel.m()));
    }
    let g = block_gram(kernel, space.nodes())?;
    let w = space.expanded_weights(kernel.m());
    RhoFunction::new(g * f.values().component_mul(&w), kernel.m())
}

/// Eigenpairs of `L_K` on a discrete space, sorted by decreasing eigenvalue.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    space: DiscreteSpace,
    m: usize,
    gram: DMatrix<f64>,
    sqrt_w: DVector<f64>,
    eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors of `W^{1/2} G W^{1/2}`, one per column.
    vectors: DMatrix<f64>,
    rank: usize,
}

/// Eigendecomposition of `L_K` through the symmetrized operator `W^{1/2} G W^{1/2}`.
pub fn eigendecompose(kernel: &MatrixKernel, space: &DiscreteSpace) -> Result<SpectralDecomposition> {
    let gram = block_gram(kernel, space.nodes())?;
    SpectralDecomposition::from_gram(space.clone(), kernel.m(), gram)
}

impl SpectralDecomposition {
    /// Decomposes a precomputed full block Gram over `space`.
    pub fn from_gram(space: DiscreteSpace, m: usize, gram: DMatrix<f64>) -> Result<Self> {
        let nm = space.len() * m;
        if gram.nrows() != nm || gram.ncols() != nm {
            return Err(arg_err!("Gram must be {nm}x{nm}"));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("Gram has non-finite entries".into()));
        }
        let sqrt_w = space.expanded_weights(m).map(f64::sqrt);
        let mut s = DMatrix::from_fn(nm, nm, |i, j| sqrt_w[i] * gram[(i, j)] * sqrt_w[j]);
        s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);

        let mut order: Vec<usize> = (0..nm).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut eigenvalues = DVector::zeros(nm);
        let mut vectors = DMatrix::zeros(nm, nm);
        for (dst, &src) in order.iter().enumerate() {
            let mut lam = eig.eigenvalues[src];
            if lam < 0.0 {
                if lam < -PSD_TOL * top {
                    return Err(Error::Numerical(format!("L_K has eigenvalue {lam:e}; kernel is not PSD")));
                }
                lam = 0.0;
            }
            eigenvalues[dst] = lam;
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        let rank = eigenvalues.iter().filter(|&&l| l > RANK_TOL * top).count();
        Ok(SpectralDecomposition { space, m, gram, sqrt_w, eigenvalues, vectors, rank })
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The full block Gram `G` over the space's nodes.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// All `N·m` eigenvalues, nonincreasing, clamped at zero.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Number of retained modes (`λⱼ > RANK_TOL · λ₁`).
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn retained_eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().copied().take(self.rank)
    }

    /// `φⱼ` as a function; `⟨φⱼ, φₖ⟩_ρ = δⱼₖ`.
    pub fn eigenfunction(&self, j: usize) -> RhoFunction {
        RhoFunction { values: self.vectors.column(j).component_div(&self.sqrt_w), m: self.m }
    }

    fn check(&self, f: &RhoFunction) -> Result<()> {
        f.check_space(&self.space)?;
        if f.m() != self.m {
            return Err(arg_err!("function has {} outputs but the decomposition has {}", f.m(), self.m));
        }
        Ok(())
    }

    /// `⟨f, φⱼ⟩_ρ` for every mode `j`.
    pub fn coefficients(&self, f: &RhoFunction) -> Result<DVector<f64>> {
        self.check(f)?;
        Ok(self.vectors.tr_mul(&f.values().component_mul(&self.sqrt_w)))
    }

    /// `Σⱼ aⱼ φⱼ` over the given coefficient prefix.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> RhoFunction {
        let k = coeffs.len();
        let v = self.vectors.columns(0, k) * coeffs;
        RhoFunction { values: v.component_div(&self.sqrt_w), m: self.m }
    }

    /// Applies `h(λⱼ)` to the retained-mode coefficients of `f`.
    fn filter(&self, f: &RhoFunction, h: impl Fn(f64) -> f64) -> Result<RhoFunction> {
        let mut c = self.coefficients(f)?.rows(0, self.rank).into_owned();
        for (j, cj) in c.iter_mut().enumerate() {
            *cj *= h(self.eigenvalues[j]);
        }
        Ok(self.synthesize(&c))
    }

    /// `‖f - P_Φ f‖_ρ`.
    pub fn range_residual(&self, f: &RhoFunction) -> Result<f64> {
        let c = self.coefficients(f)?;
        let tail: f64 = c.iter().skip(self.rank).map(|v| v * v).sum();
        Ok(tail.sqrt())
    }

    fn check_in_range(&self, f: &RhoFunction) -> Result<()> {
        let residual = self.range_residual(f)?;
        let norm = f.norm(&self.space)?;
        if residual > RANGE_TOL * norm {
            return Err(Error::Range(format!(
                "component of ρ-norm {residual:e} outside the retained span (‖f‖_ρ = {norm:e})"
            )));
        }
        Ok(())
    }

    /// `P_Φ f`, the projection onto the retained eigenfunctions.
    pub fn project(&self, f: &RhoFunction) -> Result<RhoFunction> {
        self.filter(f, |_| 1.0)
    }

    /// `L_K f = G W f`.
    pub fn apply_integral_operator(&self, f: &RhoFunction) -> Result<RhoFunction> {
        self.check(f)?;
        let w = self.sqrt_w.component_mul(&self.sqrt_w);
        RhoFunction::new(&self.gram * f.values().component_mul(&w), self.m)
    }

    /// `Σⱼ λⱼ^r ⟨f, φⱼ⟩_ρ φⱼ` for `r ∈ [-1, 1]`; `r = 0` is `P_Φ`.
    pub fn apply_fractional_power(&self, r: f64, f: &RhoFunction) -> Result<RhoFunction> {
        if !(-1.0..=1.0).contains(&r) {
            return Err(arg_err!("power {r} outside [-1, 1]"));
        }
        if r < 0.0 {
            self.check_in_range(f)?;
        }
        self.filter(f, |lam| lam.powf(r))
    }

    /// `Σⱼ λⱼ φⱼ(zᵢ) φⱼ(zₖ)ᵀ` over all retained modes.
    pub fn mercer_reconstruct(&self, i: usize, k: usize) -> Result<DMatrix<f64>> {
        self.mercer_reconstruct_truncated(i, k, self.rank)
    }

    /// Mercer sum over the leading `modes` retained modes.
    pub fn mercer_reconstruct_truncated(&self, i: usize, k: usize, modes: usize) -> Result<DMatrix<f64>> {
        let n = self.space.len();
        if i >= n || k >= n {
            return Err(arg_err!("node index out of range (space has {n} nodes)"));
        }
        let m = self.m;
        let mut out = DMatrix::zeros(m, m);
        for j in 0..modes.min(self.rank) {
            let col = self.vectors.column(j);
            let a = col.rows(i * m, m).component_div(&self.sqrt_w.rows(i * m, m));
            let b = col.rows(k * m, m).component_div(&self.sqrt_w.rows(k * m, m));
            out += (a * b.transpose()) * self.eigenvalues[j];
        }
        Ok(out)
    }

    /// `‖g‖_K` for `g` in the retained span: `√(Σⱼ ⟨g, φⱼ⟩²_ρ / λⱼ)`.
    ///
    /// Equal to `√(gᵀ G⁻¹ g)` whenever the full Gram is invertible.
    pub fn k_norm(&self, g: &RhoFunction) -> Result<f64> {
        self.check_in_range(g)?;
        let c = self.coefficients(g)?;
        let sq: f64 = c.iter().take(self.rank).zip(self.eigenvalues.iter()).map(|(c, l)| c * c / l).sum();
        Ok(sq.sqrt())
    }

    /// `⟨f, g⟩_K` for `f, g` in the retained span.
    pub fn k_inner(&self, f: &RhoFunction, g: &RhoFunction) -> Result<f64> {
        self.check_in_range(f)?;
        self.check_in_range(g)?;
        let a = self.coefficients(f)?;
        let b = self.coefficients(g)?;
        Ok((0..self.rank).map(|j| a[j] * b[j] / self.eigenvalues[j]).sum())
    }

    /// `f_λ = (L_K + λI)^{-1} L_K f_ρ = Σⱼ λⱼ/(λⱼ+λ) ⟨f_ρ, φⱼ⟩_ρ φⱼ`.
    pub fn compute_f_lambda(&self, f_rho: &RhoFunction, lambda: f64) -> Result<RhoFunction> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(arg_err!("regularization parameter must be ≥ 0, got {lambda}"));
        }
        self.filter(f_rho, |l| l / (l + lambda))
    }

    /// Source coefficients `dⱼ = ⟨f_ρ, φⱼ⟩_ρ / λⱼ^r` over the retained modes.
    pub fn source_coefficients(&self, f_rho: &RhoFunction, r: f64) -> Result<DVector<f64>> {
        self.check_in_range(f_rho)?;
        let c = self.coefficients(f_rho)?;
        Ok(DVector::from_fn(self.rank, |j, _| c[j] / self.eigenvalues[j].powf(r)))
    }

    /// `‖f_λ - f_ρ‖_K` in closed form and the bound `λ^{r-1/2} ν`.
    pub fn approximation_error(&self, f_rho: &RhoFunction, lambda: f64, r: f64, source_norm: f64) -> Result<ApproximationError> {
        check_smoothness(r)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(arg_err!("regularization parameter must be ≥ 0, got {lambda}"));
        }
        let d = self.source_coefficients(f_rho, r)?;
        let sq: f64 = d
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(dj, &lj)| {
                let shrink = lambda / (lj + lambda);
                shrink * shrink * dj * dj * lj.powf(2.0 * r - 1.0)
            })
            .sum();
        Ok(ApproximationError { err_k: sq.sqrt(), bound: lambda.powf(r - 0.5) * source_norm })
    }
}

/// `‖f_λ - f_ρ‖_K` together with its closed-form bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproximationError {
    pub err_k: f64,
    pub bound: f64,
}

impl ApproximationError {
    pub fn holds(&self) -> bool {
        self.err_k <= self.bound + 1e-12
    }
}

/// `√(g_vecᵀ G⁺ g_vec)` computed from scratch for the given kernel and space.
pub fn rkhs_norm_via_space(kernel: &MatrixKernel, space: &DiscreteSpace, g: &RhoFunction) -> Result<f64> {
    eigendecompose(kernel, space)?.k_norm(g)
}

pub(crate) fn check_smoothness(r: f64) -> Result<()> {
    if !(r > 0.5 && r <= 1.0) {
        return Err(arg_err!("smoothness r = {r} outside (1/2, 1]"));
    }
    Ok(())
}
