//! JSON schemas for kernels and input spaces.
//!
//! ```json
//! { "space":  { "grid": { "count": 16, "a": 0.0, "b": 1.0 } },
//!   "kernel": { "type": "separable_gaussian", "gamma": 40.0,
//!               "coupling": { "kind": "equicorrelated", "c": 0.5 } } }
//! ```
//!
//! Kernels whose coupling is `identity` or `equicorrelated` are generic in
//! the task count `m`; explicit matrices and lookups fix it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::kernels::{CouplingMatrix, MatrixKernel, ScalarKernel};
use crate::spectral::DiscreteSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coordinate {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Coordinate {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Coordinate::Scalar(x) => vec![x],
            Coordinate::Vector(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub count: usize,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
}

fn one() -> f64 {
    1.0
}

/// Either an explicit node list (uniform weights when omitted) or a uniform grid on `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Grid { grid: GridSpec },
    Explicit { nodes: Vec<Coordinate>, weights: Option<Vec<f64>> },
}

impl SpaceSpec {
    pub fn build(&self) -> Result<DiscreteSpace> {
        match self {
            SpaceSpec::Grid { grid } => DiscreteSpace::uniform_grid(grid.count, grid.a, grid.b),
            SpaceSpec::Explicit { nodes, weights } => {
                let nodes: Vec<Vec<f64>> = nodes.iter().cloned().map(Coordinate::into_vec).collect();
                match weights {
                    Some(w) => DiscreteSpace::new(nodes, w.clone()),
                    None => DiscreteSpace::uniform(nodes),
                }
            }
        }
    }
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec::Grid { grid: GridSpec { count: 16, a: 0.0, b: 1.0 } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    Identity,
    /// `(1 - c) I + c 11ᵀ`.
    Equicorrelated { c: f64 },
    /// Row-major `m × m` matrix.
    Matrix { values: Vec<f64> },
}

impl CouplingSpec {
    fn fixed_m(&self) -> Result<Option<usize>> {
        match self {
            CouplingSpec::Matrix { values } => {
                let m = (values.len() as f64).sqrt().round() as usize;
                if m * m != values.len() || m == 0 {
                    return Err(arg_err!("coupling with {} entries is not square", values.len()));
                }
                Ok(Some(m))
            }
            _ => Ok(None),
        }
    }

    fn build(&self, m: usize) -> Result<CouplingMatrix> {
        match self {
            CouplingSpec::Identity => Ok(CouplingMatrix::identity(m)),
            CouplingSpec::Equicorrelated { c } => CouplingMatrix::equicorrelated(m, *c),
            CouplingSpec::Matrix { values } => CouplingMatrix::from_row_slice(m, values),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumTermSpec {
    pub gamma: f64,
    pub coupling: CouplingSpec,
}

/// One `m × m` block of a lookup kernel, row-major, keyed by node indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub i: usize,
    pub j: usize,
    pub block: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    SeparableGaussian { gamma: f64, coupling: CouplingSpec },
    /// One Gaussian width per task.
    DiagonalGaussian { gammas: Vec<f64> },
    SumGaussian { terms: Vec<SumTermSpec> },
    IdentityLookup { m: usize },
    /// Blocks not listed are zero; block `(j, i)` defaults to the transpose of `(i, j)`.
    Lookup { m: usize, blocks: Vec<BlockSpec> },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::SeparableGaussian { gamma: 40.0, coupling: CouplingSpec::Equicorrelated { c: 0.5 } }
    }
}

impl KernelSpec {
    /// The task count this spec pins down, if any.
    pub fn fixed_m(&self) -> Result<Option<usize>> {
        match self {
            KernelSpec::SeparableGaussian { coupling, .. } => coupling.fixed_m(),
            KernelSpec::DiagonalGaussian { gammas } => Ok(Some(gammas.len())),
            KernelSpec::SumGaussian { terms } => {
                let mut fixed = None;
                for t in terms {
                    if let Some(m) = t.coupling.fixed_m()? {
                        if fixed.is_some_and(|f| f != m) {
                            return Err(arg_err!("sum terms disagree on m"));
                        }
                        fixed = Some(m);
                    }
                }
                Ok(fixed)
            }
            KernelSpec::IdentityLookup { m } | KernelSpec::Lookup { m, .. } => Ok(Some(*m)),
        }
    }

    /// Builds the kernel on `space`. `m` is required for `m`-generic specs and
    /// must agree with the kernel otherwise.
    pub fn build(&self, space: &DiscreteSpace, m: Option<usize>) -> Result<MatrixKernel> {
        let m = match (self.fixed_m()?, m) {
            (Some(f), Some(req)) if f != req => return Err(arg_err!("kernel fixes m = {f} but m = {req} was requested")),
            (Some(f), _) => f,
            (None, Some(req)) => req,
            (None, None) => return Err(arg_err!("kernel spec does not fix m; give one explicitly")),
        };
        if m == 0 {
            return Err(arg_err!("m must be at least 1"));
        }
        match self {
            KernelSpec::SeparableGaussian { gamma, coupling } => {
                Ok(MatrixKernel::separable(ScalarKernel::gaussian(*gamma)?, coupling.build(m)?))
            }
            KernelSpec::DiagonalGaussian { gammas } => {
                MatrixKernel::diagonal(gammas.iter().map(|&g| ScalarKernel::gaussian(g)).collect::<Result<_>>()?)
            }
            KernelSpec::SumGaussian { terms } => MatrixKernel::sum(
                terms
                    .iter()
                    .map(|t| Ok((ScalarKernel::gaussian(t.gamma)?, t.coupling.build(m)?)))
                    .collect::<Result<_>>()?,
            ),
            KernelSpec::IdentityLookup { .. } => MatrixKernel::identity_lookup(space.nodes().to_vec(), m),
            KernelSpec::Lookup { blocks, .. } => {
                let n = space.len();
                let mut gram = DMatrix::zeros(n * m, n * m);
                let mut set = vec![false; n * n];
                for b in blocks {
                    if b.i >= n || b.j >= n {
                        return Err(arg_err!("lookup block ({}, {}) outside {n} nodes", b.i, b.j));
                    }
                    if b.block.len() != m * m {
                        return Err(arg_err!("lookup block ({}, {}) needs {} entries", b.i, b.j, m * m));
                    }
                    let blk = DMatrix::from_row_slice(m, m, &b.block);
                    gram.view_mut((b.i * m, b.j * m), (m, m)).copy_from(&blk);
                    set[b.i * n + b.j] = true;
                    if !set[b.j * n + b.i] {
                        gram.view_mut((b.j * m, b.i * m), (m, m)).copy_from(&blk.transpose());
                    }
                }
                MatrixKernel::lookup(space.nodes().to_vec(), m, gram)
            }
        }
    }
}
