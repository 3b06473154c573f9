//! Multi-task regularization networks in the vector-valued RKHS `H_K`.
//!
//! The minimizer of `(1/n) Σ ‖f(xᵢ) - yᵢ‖² + λ‖f‖²_K` is
//! `f_{z,λ} = Σ K(xᵢ, ·) cᵢ` with `(A/n + λI) c = y/n`, where `A` is the
//! `nm × nm` block Gram of the sample points.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::kernels::{block_gram, max_asymmetry, min_eigenvalue, MatrixKernel};
use crate::spectral::{DiscreteSpace, RhoFunction, SpectralDecomposition};

/// Sample `z = {(xᵢ, yᵢ)}` with outputs in `R^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    /// Stacked outputs, block `i` holds `yᵢ`.
    outputs: DVector<f64>,
    m: usize,
    /// Node indices when the points were drawn from a [`DiscreteSpace`].
    nodes: Option<Vec<usize>>,
    /// Almost-sure bound `‖y‖_∞ ≤ M`, when known.
    bound: Option<f64>,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(arg_err!("sample needs at least one point"));
        }
        if points.len() != outputs.len() {
            return Err(arg_err!("{} points but {} outputs", points.len(), outputs.len()));
        }
        let m = outputs[0].len();
        if m == 0 || outputs.iter().any(|y| y.len() != m) {
            return Err(arg_err!("every output must have the same positive dimension"));
        }
        if points.iter().flatten().chain(outputs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(arg_err!("sample contains non-finite values"));
        }
        let outputs = DVector::from_iterator(points.len() * m, outputs.into_iter().flatten());
        Ok(SampleSet { points, outputs, m, nodes: None, bound: None })
    }

    /// Sample whose points are nodes of `space`.
    pub fn on_space(space: &DiscreteSpace, nodes: Vec<usize>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&i| i >= space.len()) {
            return Err(arg_err!("node index {bad} outside space of {} nodes", space.len()));
        }
        let points = nodes.iter().map(|&i| space.node(i).to_vec()).collect();
        let mut s = Self::new(points, outputs)?;
        s.nodes = Some(nodes);
        Ok(s)
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn output(&self, i: usize) -> DVector<f64> {
        self.outputs.rows(i * self.m, self.m).into_owned()
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn nodes(&self) -> Option<&[usize]> {
        self.nodes.as_deref()
    }

    /// Node indices in `space`, locating coordinates when they were not recorded.
    pub fn node_indices(&self, space: &DiscreteSpace) -> Result<Vec<usize>> {
        match &self.nodes {
            Some(n) => Ok(n.clone()),
            None => self
                .points
                .iter()
                .map(|p| space.index_of(p).ok_or_else(|| arg_err!("sample point {p:?} is not a node of the space")))
                .collect(),
        }
    }

    /// Copy with every output multiplied by `s`.
    pub fn scaled(&self, s: f64) -> SampleSet {
        SampleSet { outputs: &self.outputs * s, ..self.clone() }
    }
}

/// Block Gram `A` with block `(i, j) = K(xᵢ, xⱼ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGram {
    matrix: DMatrix<f64>,
    m: usize,
}

impl BlockGram {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.matrix.view((i * self.m, j * self.m), (self.m, self.m)).into_owned()
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(&self.matrix)
    }
}

pub fn assemble_gram<P: AsRef<[f64]>>(kernel: &MatrixKernel, points: &[P]) -> Result<BlockGram> {
    if points.is_empty() {
        return Err(arg_err!("Gram needs at least one point"));
    }
    Ok(BlockGram { matrix: block_gram(kernel, points)?, m: kernel.m() })
}

/// `f_{z,λ} = Σ K(xᵢ, ·) cᵢ`.
#[derive(Clone, Debug)]
pub struct RidgeModel {
    kernel: Arc<MatrixKernel>,
    anchors: Vec<Vec<f64>>,
    coefficients: DVector<f64>,
    lambda: f64,
}

impl RidgeModel {
    pub fn new(kernel: Arc<MatrixKernel>, anchors: Vec<Vec<f64>>, coefficients: DVector<f64>, lambda: f64) -> Result<Self> {
        if coefficients.len() != anchors.len() * kernel.m() {
            return Err(arg_err!(
                "{} coefficients for {} anchors with m = {}",
                coefficients.len(),
                anchors.len(),
                kernel.m()
            ));
        }
        Ok(RidgeModel { kernel, anchors, coefficients, lambda })
    }

    /// The section `K(x, ·)ξ` as a one-anchor model.
    pub fn section(kernel: Arc<MatrixKernel>, x: Vec<f64>, xi: DVector<f64>) -> Result<Self> {
        Self::new(kernel, vec![x], xi, 0.0)
    }

    pub fn kernel(&self) -> &Arc<MatrixKernel> {
        &self.kernel
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn coefficient(&self, i: usize) -> DVector<f64> {
        let m = self.kernel.m();
        self.coefficients.rows(i * m, m).into_owned()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `f(x) = Σᵢ K(x, xᵢ) cᵢ`.
    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        let m = self.kernel.m();
        let mut out = DVector::zeros(m);
        for (i, a) in self.anchors.iter().enumerate() {
            out += self.kernel.eval(x, a)? * self.coefficients.rows(i * m, m);
        }
        Ok(out)
    }

    /// Node values at every node of `space`.
    pub fn node_values(&self, space: &DiscreteSpace) -> Result<RhoFunction> {
        let mut values = Vec::with_capacity(space.len() * self.kernel.m());
        for z in space.nodes() {
            values.extend(self.evaluate(z)?.iter());
        }
        RhoFunction::new(DVector::from_vec(values), self.kernel.m())
    }

    /// `⟨f, g⟩_K = Σᵢⱼ cᵢᵀ K(xᵢ, x'ⱼ) c'ⱼ` for two models on the same kernel.
    pub fn k_inner(&self, other: &RidgeModel) -> Result<f64> {
        if self.kernel.m() != other.kernel.m() {
            return Err(arg_err!("models have different output dimensions"));
        }
        let m = self.kernel.m();
        let mut acc = 0.0;
        for (i, a) in self.anchors.iter().enumerate() {
            for (j, b) in other.anchors.iter().enumerate() {
                let k = self.kernel.eval(a, b)?;
                acc += self.coefficients.rows(i * m, m).dot(&(k * other.coefficients.rows(j * m, m)));
            }
        }
        Ok(acc)
    }

    /// `‖f‖_K = √(cᵀ A c)`.
    pub fn rkhs_norm(&self) -> Result<f64> {
        let a = block_gram(&self.kernel, &self.anchors)?;
        Ok(self.coefficients.dot(&(a * &self.coefficients)).max(0.0).sqrt())
    }

    /// `f + t·g` for two models sharing anchors.
    pub fn perturbed(&self, direction: &RidgeModel, t: f64) -> Result<RidgeModel> {
        if self.anchors != direction.anchors {
            return Err(arg_err!("perturbation direction must share anchors"));
        }
        Ok(RidgeModel { coefficients: &self.coefficients + &direction.coefficients * t, ..self.clone() })
    }

    pub fn to_serialized(&self, space: &DiscreteSpace) -> Result<SerializedModel> {
        let anchors = self
            .anchors
            .iter()
            .map(|a| space.index_of(a).ok_or_else(|| arg_err!("anchor {a:?} is not a node of the space")))
            .collect::<Result<Vec<_>>>()?;
        let m = self.kernel.m();
        Ok(SerializedModel {
            m,
            lambda: self.lambda,
            kernel_hash: self.kernel.fingerprint(),
            anchors,
            coefficients: self.coefficients.as_slice().chunks(m).map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn from_serialized(kernel: Arc<MatrixKernel>, space: &DiscreteSpace, s: &SerializedModel) -> Result<Self> {
        if s.kernel_hash != kernel.fingerprint() {
            return Err(arg_err!("model was fitted with a different kernel (hash {})", s.kernel_hash));
        }
        if s.m != kernel.m() || s.coefficients.iter().any(|c| c.len() != s.m) {
            return Err(arg_err!("coefficient rows must have length m = {}", kernel.m()));
        }
        let anchors = s
            .anchors
            .iter()
            .map(|&i| space.nodes().get(i).cloned().ok_or_else(|| arg_err!("anchor index {i} out of range")))
            .collect::<Result<Vec<_>>>()?;
        let coefficients = DVector::from_iterator(s.coefficients.len() * s.m, s.coefficients.iter().flatten().copied());
        Self::new(kernel, anchors, coefficients, s.lambda)
    }
}

/// JSON form of a [`RidgeModel`] whose anchors are nodes of a discrete space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerializedModel {
    pub m: usize,
    pub lambda: f64,
    pub kernel_hash: String,
    pub anchors: Vec<usize>,
    /// One row of length `m` per anchor.
    pub coefficients: Vec<Vec<f64>>,
}

/// Factorizes a symmetric matrix that is PD in exact arithmetic, adding
/// jitter `1e-12·trace/dim`, escalated ×10 up to three times.
pub(crate) fn factor_spd(mut a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("system matrix has non-finite entries".into()));
    }
    let dim = a.nrows();
    let mut jitter = 1e-12 * a.trace().abs() / dim as f64;
    for attempt in 0..=3 {
        if let Some(ch) = Cholesky::new(a.clone()) {
            return Ok(ch);
        }
        if attempt == 3 {
            break;
        }
        for i in 0..dim {
            a[(i, i)] += jitter;
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical("Cholesky factorization failed after jitter escalation".into()))
}

/// Solves `(A/n + λI) c = y/n` for the regularization network.
pub fn solve_regularization_network(kernel: &Arc<MatrixKernel>, sample: &SampleSet, lambda: f64) -> Result<RidgeModel> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(arg_err!("regularization parameter must be positive and finite, got {lambda}"));
    }
    if sample.m() != kernel.m() {
        return Err(arg_err!("sample has {} outputs but the kernel has {}", sample.m(), kernel.m()));
    }
    let n = sample.len() as f64;
    let gram = assemble_gram(kernel, sample.points())?;
    let mut system = gram.matrix / n;
    for i in 0..system.nrows() {
        system[(i, i)] += lambda;
    }
    let c = factor_spd(system)?.solve(&(sample.outputs() / n));
    RidgeModel::new(kernel.clone(), sample.points().to_vec(), c, lambda)
}

/// Exact regularization-network solve on a discrete space, aggregated by node.
///
/// Per-sample coefficients satisfy `cᵢ = (yᵢ - f(xᵢ))/(nλ)`, so summing them per
/// node `C_z` gives `(λ·diag(n/count_z) + G_vv) C_v = ȳ_v` over visited nodes
/// `v`. The system has size at most `N·m` regardless of `n`.
#[derive(Clone, Debug)]
pub struct NodeRidge {
    /// `f_{z,λ}` at every node.
    pub values: RhoFunction,
    /// Aggregated coefficients `C_z` at every node (zero where unvisited).
    pub node_coefficients: DVector<f64>,
}

pub fn solve_on_space(gram: &DMatrix<f64>, m: usize, nodes: &[usize], outputs: &DVector<f64>, lambda: f64) -> Result<NodeRidge> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(arg_err!("regularization parameter must be positive and finite, got {lambda}"));
    }
    if nodes.is_empty() || outputs.len() != nodes.len() * m {
        return Err(arg_err!("sample is empty or outputs do not match the node list"));
    }
    let total = gram.nrows() / m;
    let n = nodes.len() as f64;
    let mut counts = vec![0usize; total];
    let mut sums = DVector::zeros(total * m);
    for (i, &z) in nodes.iter().enumerate() {
        if z >= total {
            return Err(arg_err!("node index {z} outside space of {total} nodes"));
        }
        counts[z] += 1;
        let mut block = sums.rows_mut(z * m, m);
        block += outputs.rows(i * m, m);
    }
    let visited: Vec<usize> = (0..total).filter(|&z| counts[z] > 0).collect();
    let v = visited.len() * m;
    let idx: Vec<usize> = visited.iter().flat_map(|&z| z * m..z * m + m).collect();
    let mut system = DMatrix::from_fn(v, v, |a, b| gram[(idx[a], idx[b])]);
    let mut rhs = DVector::zeros(v);
    for (a, &row) in idx.iter().enumerate() {
        let count = counts[row / m] as f64;
        system[(a, a)] += lambda * n / count;
        rhs[a] = sums[row] / count;
    }
    let cv = factor_spd(system)?.solve(&rhs);
    let mut node_coefficients = DVector::zeros(total * m);
    for (a, &row) in idx.iter().enumerate() {
        node_coefficients[row] = cv[a];
    }
    let values = gram * &node_coefficients;
    Ok(NodeRidge { values: RhoFunction::new(values, m)?, node_coefficients })
}

/// Something with values at sample points and a K-norm.
pub trait RkhsElement {
    fn value_at(&self, x: &[f64]) -> Result<DVector<f64>>;
    fn k_norm(&self) -> Result<f64>;
}

impl RkhsElement for RidgeModel {
    fn value_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.evaluate(x)
    }

    fn k_norm(&self) -> Result<f64> {
        self.rkhs_norm()
    }
}

/// A node-value function measured in `H_K` through a spectral decomposition.
pub struct NodeFunction<'a> {
    pub dec: &'a SpectralDecomposition,
    pub f: &'a RhoFunction,
}

impl RkhsElement for NodeFunction<'_> {
    fn value_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        let i = self
            .dec
            .space()
            .index_of(x)
            .ok_or_else(|| Error::Domain(format!("{x:?} is not a node of the space")))?;
        Ok(self.f.at(i))
    }

    fn k_norm(&self) -> Result<f64> {
        self.dec.k_norm(self.f)
    }
}

/// `(1/n) Σ ‖f(xᵢ) - yᵢ‖² + λ‖f‖²_K`.
pub fn empirical_objective(f: &impl RkhsElement, sample: &SampleSet, lambda: f64) -> Result<f64> {
    let mut loss = 0.0;
    for (i, x) in sample.points().iter().enumerate() {
        loss += (f.value_at(x)? - sample.output(i)).norm_squared();
    }
    Ok(loss / sample.len() as f64 + lambda * f.k_norm()?.powi(2))
}

/// Solves the network two ways and returns the max node-value discrepancy:
/// the coefficient route `(A/n + λI)^{-1} y/n`, and the operator route
/// `(S*S/n + λI) f = S*y/n` posed directly on the `N·m` node values.
pub fn verify_representer_identity(
    kernel: &Arc<MatrixKernel>,
    sample: &SampleSet,
    lambda: f64,
    space: &DiscreteSpace,
) -> Result<f64> {
    let nodes = sample.node_indices(space)?;
    let coefficient_route = solve_regularization_network(kernel, sample, lambda)?.node_values(space)?;

    let m = kernel.m();
    let nm = space.len() * m;
    let n = sample.len() as f64;
    let g = block_gram(kernel, space.nodes())?;
    let mut op = DMatrix::<f64>::zeros(nm, nm);
    let mut rhs = DVector::<f64>::zeros(nm);
    for (i, &z) in nodes.iter().enumerate() {
        let cols = g.columns(z * m, m);
        let mut target = op.columns_mut(z * m, m);
        target += &cols;
        rhs += cols * sample.outputs().rows(i * m, m);
    }
    let system = op / n + DMatrix::identity(nm, nm) * lambda;
    let operator_route = system
        .lu()
        .solve(&(rhs / n))
        .ok_or_else(|| Error::Numerical("operator-route system is singular".into()))?;
    Ok((coefficient_route.values() - operator_route).amax())
}
