//! Seeded random operators for tests, sweeps and sampled families.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algebra::{Algebra, Block, Mat, Operator, C64};

pub type NcRng = ChaCha8Rng;

pub fn rng(seed: u64) -> NcRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar unitary through QR of a Ginibre matrix with phase correction.
pub fn haar_unitary(rng: &mut impl Rng, n: usize) -> Mat {
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_algebra(rng: &mut impl Rng, max_blocks: usize, max_dim: usize) -> Algebra {
    let k = rng.random_range(1..=max_blocks.max(1));
    let blocks = (0..k)
        .map(|_| Block { dim: rng.random_range(1..=max_dim.max(1)), weight: rng.random_range(0.25..2.0) })
        .collect();
    Algebra::new(blocks).expect("random algebra is valid")
}

/// Algebra with the given total dimension split into random blocks.
pub fn random_algebra_of_dim(rng: &mut impl Rng, total: usize) -> Algebra {
    let mut left = total.max(1);
    let mut blocks = Vec::new();
    while left > 0 {
        let d = rng.random_range(1..=left);
        blocks.push(Block { dim: d, weight: rng.random_range(0.25..2.0) });
        left -= d;
    }
    Algebra::new(blocks).expect("random algebra is valid")
}

pub fn random_operator(rng: &mut impl Rng, a: &Algebra) -> Operator {
    let blocks = a.blocks().iter().map(|b| gaussian_matrix(rng, b.dim, b.dim)).collect();
    Operator::from_blocks(a, blocks).expect("shapes match")
}

pub fn random_hermitian(rng: &mut impl Rng, a: &Algebra) -> Operator {
    let g = random_operator(rng, a);
    (&g + &g.adjoint()).scale(0.5)
}

/// `g g*` with `g` Gaussian of a random rank, so the spectrum often has zeros.
pub fn random_psd(rng: &mut impl Rng, a: &Algebra) -> Operator {
    let blocks = a
        .blocks()
        .iter()
        .map(|b| {
            let r = rng.random_range(1..=b.dim);
            let g = gaussian_matrix(rng, b.dim, r);
            &g * g.adjoint()
        })
        .collect();
    Operator::from_blocks(a, blocks).expect("shapes match")
}

/// Random strict-rank contraction: `V diag(s) W*` with singular values in `[0, 1]`.
pub fn random_contraction(rng: &mut impl Rng, a: &Algebra) -> Operator {
    let blocks = a
        .blocks()
        .iter()
        .map(|b| {
            let v = haar_unitary(rng, b.dim);
            let w = haar_unitary(rng, b.dim);
            let s = DMatrix::from_fn(b.dim, b.dim, |i, j| {
                if i == j {
                    C64::new(rng.random_range(0.0..=1.0), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            &v * s * w.adjoint()
        })
        .collect();
    Operator::from_blocks(a, blocks).expect("shapes match")
}

/// Random projection obtained from a spectral projection of a random
/// Hermitian operator.
pub fn random_projection(rng: &mut impl Rng, a: &Algebra) -> crate::algebra::Projection {
    let h = random_hermitian(rng, a);
    let shift: f64 = rng.random_range(-0.5..0.5);
    h.spectral_projection(|v| v > shift).expect("hermitian")
}
