#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvrkhs::{CouplingMatrix, DiscreteSpace, MatrixKernel, RhoFunction, ScalarKernel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Q diag(spectrum) Qᵀ` with a random orthogonal `Q`.
pub fn psd_with_spectrum(rng: &mut ChaCha8Rng, spectrum: &[f64]) -> DMatrix<f64> {
    let k = spectrum.len();
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    let q = a.qr().q();
    &q * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * q.transpose()
}

pub fn random_coupling(rng: &mut ChaCha8Rng, m: usize) -> CouplingMatrix {
    let spectrum: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
    let b = psd_with_spectrum(rng, &spectrum);
    CouplingMatrix::new((&b + b.transpose()) * 0.5).unwrap()
}

/// Distinct sorted nodes in `[0, 1]` with random positive weights.
pub fn random_space(rng: &mut ChaCha8Rng, n: usize) -> DiscreteSpace {
    let mut xs: Vec<f64> = Vec::with_capacity(n);
    while xs.len() < n {
        let x: f64 = rng.gen_range(0.0..1.0);
        if xs.iter().all(|y| (x - y).abs() > 1e-3) {
            xs.push(x);
        }
    }
    xs.sort_by(f64::total_cmp);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..n - 1].iter().sum();
    weights[n - 1] = 1.0 - head;
    DiscreteSpace::new(xs.into_iter().map(|x| vec![x]).collect(), weights).unwrap()
}

pub fn separable(gamma: f64, b: CouplingMatrix) -> MatrixKernel {
    MatrixKernel::separable(ScalarKernel::gaussian(gamma).unwrap(), b)
}

/// One of the four kernel variants, chosen by `variant % 4`.
pub fn random_kernel(rng: &mut ChaCha8Rng, space: &DiscreteSpace, m: usize, variant: usize) -> MatrixKernel {
    match variant % 4 {
        0 => separable(rng.gen_range(0.5..20.0), random_coupling(rng, m)),
        1 => MatrixKernel::diagonal((0..m).map(|_| ScalarKernel::gaussian(rng.gen_range(0.5..20.0)).unwrap()).collect())
            .unwrap(),
        2 => MatrixKernel::sum(
            (0..2)
                .map(|_| (ScalarKernel::gaussian(rng.gen_range(0.5..20.0)).unwrap(), random_coupling(rng, m)))
                .collect(),
        )
        .unwrap(),
        _ => {
            let dim = space.len() * m;
            let spectrum: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect();
            let g = psd_with_spectrum(rng, &spectrum);
            MatrixKernel::lookup(space.nodes().to_vec(), m, (&g + g.transpose()) * 0.5).unwrap()
        }
    }
}

/// Lookup kernel with a full-rank, well-conditioned Gram on `space`.
pub fn well_conditioned(rng: &mut ChaCha8Rng, space: &DiscreteSpace, m: usize) -> Arc<MatrixKernel> {
    Arc::new(random_kernel(rng, space, m, 3))
}

/// Separable kernel whose coupling has rank `m - 1`.
pub fn rank_deficient(space_gamma: f64, m: usize) -> MatrixKernel {
    assert!(m >= 2);
    let mut b = DMatrix::identity(m, m);
    b[(m - 1, m - 1)] = 0.0;
    separable(space_gamma, CouplingMatrix::new(b).unwrap())
}

pub fn random_function(rng: &mut ChaCha8Rng, space: &DiscreteSpace, m: usize) -> RhoFunction {
    RhoFunction::new(DVector::from_fn(space.len() * m, |_, _| rng.gen_range(-1.0..1.0)), m).unwrap()
}

/// `diag(w) ⊗ I_m` as a dense matrix.
pub fn weight_matrix(space: &DiscreteSpace, m: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&space.expanded_weights(m))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
