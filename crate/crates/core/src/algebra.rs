//! Finite-dimensional tracial algebras: direct sums of matrix blocks
//! `M_{d_1} ⊕ … ⊕ M_{d_k}` with trace `τ(x) = Σ_b w_b tr(x_b)`.
//!
//! Every operator carries a copy of its algebra, so all binary operations
//! check compatibility before touching the data. Arithmetic through the
//! `std::ops` traits panics on mismatched algebras; use the checked
//! constructors when the inputs come from outside.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NcError, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

/// Relative tolerance for self-adjointness and idempotency checks.
pub const EPS_SYM: f64 = 1e-10;
/// Same tolerance used when accepting projections.
pub const EPS_PROJ: f64 = 1e-10;
/// Working tolerance for numerical identities.
pub const EPS_NUM: f64 = 1e-8;
/// Relative cutoff below which singular values are treated as zero.
pub const EPS_RANK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub dim: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Algebra {
    blocks: Vec<Block>,
}

impl Algebra {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(NcError::invalid("algebra.blocks", "at least one block required"));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(NcError::invalid(format!("algebra.blocks[{i}].dim"), "must be >= 1"));
            }
            if !(b.weight.is_finite() && b.weight > 0.0) {
                return Err(NcError::invalid(
                    format!("algebra.blocks[{i}].weight"),
                    "must be finite and > 0",
                ));
            }
        }
        Ok(Self { blocks })
    }

    /// `M_d` with the given trace weight.
    pub fn matrix(dim: usize, weight: f64) -> Self {
        Self::new(vec![Block { dim, weight }]).expect("valid matrix algebra")
    }

    /// `ℂ^n` with atom weights.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        Self::new(weights.iter().map(|&weight| Block { dim: 1, weight }).collect())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// `τ(1)`.
    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.weight * b.dim as f64).sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.blocks.iter().map(|b| b.weight).fold(f64::INFINITY, f64::min)
    }

    /// Same algebra with every trace weight multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        Self::new(self.blocks.iter().map(|b| Block { dim: b.dim, weight: b.weight * s }).collect())
    }
}

impl fmt::Display for Algebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.blocks.iter().map(|b| format!("M{}[{}]", b.dim, b.weight)).collect();
        write!(f, "{}", parts.join(" ⊕ "))
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub(crate) fn herm_eig(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Sorted eigenvalues only, skipping the eigenvector accumulation.
pub(crate) fn herm_vals(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// `V diag(vals) V*`.
pub(crate) fn reassemble(vals: &[f64], vecs: &Mat) -> Mat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        for r in 0..n {
            scaled[(r, c)] *= v;
        }
    }
    &scaled * vecs.adjoint()
}

/// Projection onto the span of the selected columns of an orthonormal matrix.
pub(crate) fn column_projector(vecs: &Mat, keep: impl Fn(usize) -> bool) -> Mat {
    let n = vecs.nrows();
    let mut out = Mat::zeros(n, n);
    for c in 0..vecs.ncols() {
        if keep(c) {
            let col = vecs.column(c);
            out += &col * col.adjoint();
        }
    }
    out
}

fn op_norm_mat(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let adj = m.adjoint();
    if m.nrows() == m.ncols() && (&adj - m).norm() <= 1e-14 * m.norm() {
        return herm_vals(m).into_iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    }
    let gram = adj * m;
    herm_vals(&gram)
        .last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    algebra: Algebra,
    blocks: Vec<Mat>,
}

impl Operator {
    pub fn from_blocks(algebra: &Algebra, blocks: Vec<Mat>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(NcError::DimensionMismatch(format!(
                "{} blocks given for an algebra with {}",
                blocks.len(),
                algebra.num_blocks()
            )));
        }
        for (i, (m, b)) in blocks.iter().zip(algebra.blocks()).enumerate() {
            if m.nrows() != b.dim || m.ncols() != b.dim {
                return Err(NcError::DimensionMismatch(format!(
                    "block {i} is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    b.dim,
                    b.dim
                )));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(NcError::invalid(format!("blocks[{i}]"), "non-finite entry"));
            }
        }
        Ok(Self { algebra: algebra.clone(), blocks })
    }

    pub fn zero(algebra: &Algebra) -> Self {
        let blocks = algebra.blocks().iter().map(|b| Mat::zeros(b.dim, b.dim)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn identity(algebra: &Algebra) -> Self {
        let blocks = algebra.blocks().iter().map(|b| Mat::identity(b.dim, b.dim)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn scalar(algebra: &Algebra, c: f64) -> Self {
        Self::identity(algebra).scale(c)
    }

    /// Real diagonal operator; `diag` runs through the blocks in order.
    pub fn from_diagonal(algebra: &Algebra, diag: &[f64]) -> Result<Self> {
        if diag.len() != algebra.total_dim() {
            return Err(NcError::DimensionMismatch(format!(
                "{} diagonal entries for total dimension {}",
                diag.len(),
                algebra.total_dim()
            )));
        }
        let mut off = 0;
        let mut blocks = Vec::with_capacity(algebra.num_blocks());
        for b in algebra.blocks() {
            let m = Mat::from_fn(b.dim, b.dim, |r, c| {
                if r == c {
                    C64::new(diag[off + r], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            off += b.dim;
            blocks.push(m);
        }
        Self::from_blocks(algebra, blocks)
    }

    /// Matrix unit `e_{ij}` (zero-based) inside one block.
    pub fn unit(algebra: &Algebra, block: usize, i: usize, j: usize) -> Self {
        let mut out = Self::zero(algebra);
        out.blocks[block][(i, j)] = C64::new(1.0, 0.0);
        out
    }

    pub fn algebra(&self) -> &Algebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &Mat {
        &self.blocks[b]
    }

    pub(crate) fn map_blocks(&self, f: impl Fn(usize, &Mat) -> Mat) -> Self {
        let blocks = self.blocks.iter().enumerate().map(|(i, m)| f(i, m)).collect();
        Self { algebra: self.algebra.clone(), blocks }
    }

    fn assert_same(&self, other: &Self) {
        assert!(
            self.algebra == other.algebra,
            "operators live in different algebras: {} vs {}",
            self.algebra,
            other.algebra
        );
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|_, m| m.adjoint())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_blocks(|_, m| m * C64::new(c, 0.0))
    }

    pub fn scale_complex(&self, c: C64) -> Self {
        self.map_blocks(|_, m| m * c)
    }

    /// `τ(x)`.
    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .zip(self.algebra.blocks())
            .map(|(m, b)| m.trace() * b.weight)
            .sum()
    }

    /// Real part of `τ(x)`; exact trace for self-adjoint `x`.
    pub fn trace_re(&self) -> f64 {
        self.trace().re
    }

    /// Operator (spectral) norm.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(op_norm_mat).fold(0.0, f64::max)
    }

    /// Largest Frobenius norm among the blocks; an upper bound for `norm()`
    /// that avoids an eigensolve.
    pub fn fro_norm(&self) -> f64 {
        self.blocks.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// Singular values of every block paired with the block's weight.
    pub fn singular_values(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.algebra.total_dim());
        for (m, b) in self.blocks.iter().zip(self.algebra.blocks()) {
            let (vals, _) = herm_eig(&(m.adjoint() * m));
            out.extend(vals.into_iter().map(|v| (v.max(0.0).sqrt(), b.weight)));
        }
        out
    }

    /// `‖x‖_p = τ(|x|^p)^{1/p}`; `p = ∞` gives the operator norm. Valid for
    /// every `p > 0` (quasi-norm below 1).
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.norm();
        }
        let s: f64 = self
            .singular_values()
            .into_iter()
            .filter(|(s, _)| *s > 0.0)
            .map(|(s, w)| w * s.powf(p))
            .sum();
        s.powf(1.0 / p)
    }

    pub fn self_adjoint_defect(&self) -> f64 {
        self.blocks.iter().map(|m| (m - m.adjoint()).norm()).fold(0.0, f64::max)
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.self_adjoint_defect() <= tol * self.fro_norm().max(1.0)
    }

    pub(crate) fn require_self_adjoint(&self) -> Result<()> {
        let defect = self.self_adjoint_defect();
        if defect > EPS_SYM * self.fro_norm().max(1.0) {
            return Err(NcError::NotSelfAdjoint(defect));
        }
        Ok(())
    }

    /// Blockwise Hermitian eigendecomposition (ascending eigenvalues).
    pub fn eigh(&self) -> Result<Vec<(Vec<f64>, Mat)>> {
        self.require_self_adjoint()?;
        Ok(self.blocks.iter().map(herm_eig).collect())
    }

    /// All eigenvalues (with block weights) of a self-adjoint operator.
    pub fn eigenvalues(&self) -> Result<Vec<(f64, f64)>> {
        self.require_self_adjoint()?;
        Ok(self
            .blocks
            .iter()
            .map(herm_vals)
            .zip(self.algebra.blocks())
            .flat_map(|(vals, b)| vals.into_iter().map(move |v| (v, b.weight)))
            .collect())
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.into_iter().map(|(v, _)| v).fold(f64::INFINITY, f64::min))
    }

    pub fn lambda_max(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.into_iter().map(|(v, _)| v).fold(f64::NEG_INFINITY, f64::max))
    }

    /// `U f(Λ) U*` computed blockwise. `f` returns `None` where it is
    /// undefined, which is reported as a domain error.
    pub fn try_functional_calculus(&self, f: impl Fn(f64) -> Option<f64>) -> Result<Self> {
        let eig = self.eigh()?;
        let mut blocks = Vec::with_capacity(eig.len());
        for (vals, vecs) in eig {
            let mapped = vals
                .iter()
                .map(|&v| f(v).ok_or_else(|| NcError::Domain(format!("function undefined at {v}"))))
                .collect::<Result<Vec<f64>>>()?;
            blocks.push(reassemble(&mapped, &vecs));
        }
        Self::from_blocks(&self.algebra, blocks)
    }

    pub fn functional_calculus(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.try_functional_calculus(|v| {
            let y = f(v);
            y.is_finite().then_some(y)
        })
    }

    /// Spectral projection `1_S(x)` for the set `S = {t : keep(t)}`.
    pub fn spectral_projection(&self, keep: impl Fn(f64) -> bool) -> Result<Projection> {
        let eig = self.eigh()?;
        let blocks = eig.iter().map(|(vals, vecs)| column_projector(vecs, |c| keep(vals[c]))).collect();
        Ok(Projection::new_unchecked(Self { algebra: self.algebra.clone(), blocks }))
    }

    /// `1_{[0,λ]}(x)`; eigenvalues equal to `λ` are included. Negative
    /// eigenvalues are included as well so that the result is the spectral
    /// projection of `(−∞, λ]`, which is what the weak-type constructions use.
    pub fn below(&self, lambda: f64) -> Result<Projection> {
        self.spectral_projection(|v| v <= lambda)
    }

    /// Principal square root of a positive operator; tiny negative
    /// eigenvalues from roundoff are clipped to zero.
    pub fn sqrt_psd(&self) -> Result<Self> {
        self.functional_calculus(|v| v.max(0.0).sqrt())
    }

    pub fn pow_psd(&self, alpha: f64) -> Result<Self> {
        self.functional_calculus(|v| if v > 0.0 { v.powf(alpha) } else { 0.0 })
    }

    /// `|x| = (x*x)^{1/2}`.
    pub fn abs(&self) -> Self {
        (&self.adjoint() * self).sqrt_psd().expect("x*x is self-adjoint")
    }

    /// Moore–Penrose inverse of a positive operator with relative cutoff.
    pub fn pinv_psd(&self, eps_rank: f64) -> Result<Self> {
        let top = self.eigenvalues()?.into_iter().map(|(v, _)| v.abs()).fold(0.0, f64::max);
        let cut = eps_rank * top;
        self.functional_calculus(|v| if v > cut && v > 0.0 { 1.0 / v } else { 0.0 })
    }

    /// `(g^{1/2}, (g^{1/2})^+)` for a positive Gram operator `g`. The rank
    /// cutoff applies to the eigenvalues of `g` itself: roundoff of order
    /// `ε‖g‖` in a null direction becomes `√ε` after the square root.
    pub fn sqrt_and_pinv_sqrt(&self, eps_rank: f64) -> Result<(Self, Self)> {
        let eig = self.eigh()?;
        let top = eig.iter().flat_map(|(v, _)| v.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let cut = eps_rank * top;
        let mut roots = Vec::with_capacity(eig.len());
        let mut invs = Vec::with_capacity(eig.len());
        for (vals, vecs) in &eig {
            let s: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
            let si: Vec<f64> = vals.iter().map(|&v| if v > cut && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }).collect();
            roots.push(reassemble(&s, vecs));
            invs.push(reassemble(&si, vecs));
        }
        Ok((Self::from_blocks(&self.algebra, roots)?, Self::from_blocks(&self.algebra, invs)?))
    }

    /// Support projection of a positive operator (eigenvalues above the
    /// relative cutoff).
    pub fn support(&self, eps_rank: f64) -> Result<Projection> {
        let top = self.eigenvalues()?.into_iter().map(|(v, _)| v.abs()).fold(0.0, f64::max);
        let cut = eps_rank * top;
        self.spectral_projection(|v| v > cut && v > 0.0)
    }

    /// Polar decomposition `x = u|x|` together with the pseudo-inverse of `x`.
    pub fn polar_and_pinv(&self, eps_rank: f64) -> Polar {
        let mut us = Vec::new();
        let mut mods = Vec::new();
        let mut pinvs = Vec::new();
        let top = self.norm();
        let cut = eps_rank * top;
        for m in &self.blocks {
            let n = m.nrows();
            let (vals, vecs) = herm_eig(&(m.adjoint() * m));
            let sing: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
            let modulus = reassemble(&sing, &vecs);
            let inv: Vec<f64> = sing.iter().map(|&s| if s > cut && s > 0.0 { 1.0 / s } else { 0.0 }).collect();
            let mod_pinv = reassemble(&inv, &vecs);
            // u = x |x|^+ is a partial isometry from supp|x| onto range x.
            let u = if top == 0.0 { Mat::zeros(n, n) } else { m * &mod_pinv };
            // x^+ = |x|^+ u*
            let pinv = &mod_pinv * u.adjoint();
            us.push(u);
            mods.push(modulus);
            pinvs.push(pinv);
        }
        let mk = |blocks| Operator { algebra: self.algebra.clone(), blocks };
        Polar { isometry: mk(us), modulus: mk(mods), pinv: mk(pinvs) }
    }

    /// PSD test with slack relative to the operator norm.
    pub fn psd_check(&self, eps: f64) -> Result<PsdReport> {
        let evs = self.eigenvalues()?;
        let lambda_min = evs.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
        let scale = evs.iter().map(|(v, _)| v.abs()).fold(0.0, f64::max).max(1.0);
        Ok(PsdReport { is_psd: lambda_min >= -eps * scale, lambda_min })
    }

    pub fn require_psd(&self, eps: f64) -> Result<()> {
        let rep = self.psd_check(eps)?;
        if !rep.is_psd {
            return Err(NcError::NotPositive(rep.lambda_min));
        }
        Ok(())
    }

    /// `e x e`.
    pub fn compress(&self, e: &Projection) -> Self {
        let e = e.as_operator();
        &(e * self) * e
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        if self.algebra != other.algebra {
            return Err(NcError::DimensionMismatch("operands live in different algebras".into()));
        }
        Ok(self + other)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        if self.algebra != other.algebra {
            return Err(NcError::DimensionMismatch("operands live in different algebras".into()));
        }
        Ok(self * other)
    }

    /// Replace the algebra by one with the same block dimensions.
    pub fn with_algebra(&self, algebra: &Algebra) -> Result<Self> {
        Self::from_blocks(algebra, self.blocks.clone())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same(rhs);
        let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a + b).collect();
        Operator { algebra: self.algebra.clone(), blocks }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same(rhs);
        let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a - b).collect();
        Operator { algebra: self.algebra.clone(), blocks }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same(rhs);
        let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| mat_mul(a, b)).collect();
        Operator { algebra: self.algebra.clone(), blocks }
    }
}

/// Complex product through four real products, which take the fast `f64`
/// gemm path; small blocks use the generic kernel.
pub(crate) fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    if a.nrows().min(a.ncols()).min(b.ncols()) < 24 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-1.0)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        &self + &rhs
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        &self - &rhs
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        &self * &rhs
    }
}

#[derive(Clone, Debug)]
pub struct Polar {
    pub isometry: Operator,
    pub modulus: Operator,
    pub pinv: Operator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsdReport {
    pub is_psd: bool,
    pub lambda_min: f64,
}

/// Self-adjoint idempotent operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection(Operator);

impl Projection {
    pub fn new(op: Operator) -> Result<Self> {
        let scale = op.fro_norm().max(1.0);
        let idem = (&(&op * &op) - &op).fro_norm();
        let sym = op.self_adjoint_defect();
        if idem > EPS_PROJ * scale || sym > EPS_PROJ * scale {
            return Err(NcError::NotProjection(idem.max(sym)));
        }
        Ok(Self(op))
    }

    pub(crate) fn new_unchecked(op: Operator) -> Self {
        Self(op)
    }

    pub fn zero(algebra: &Algebra) -> Self {
        Self(Operator::zero(algebra))
    }

    pub fn one(algebra: &Algebra) -> Self {
        Self(Operator::identity(algebra))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn algebra(&self) -> &Algebra {
        self.0.algebra()
    }

    /// `τ(e)`.
    pub fn tau(&self) -> f64 {
        self.0.trace_re()
    }

    pub fn complement(&self) -> Self {
        Self(&Operator::identity(self.algebra()) - &self.0)
    }

    /// Range projection of `e + f`, i.e. `e ∨ f`. Nonzero eigenvalues of
    /// `e + f` can be as small as `1 − cos` of the smallest principal angle,
    /// so the cutoff sits near roundoff rather than at `1/2`.
    pub fn join(&self, other: &Self) -> Self {
        let sum = &self.0 + &other.0;
        sum.spectral_projection(|v| v > 1e-9).expect("sum of projections is self-adjoint")
    }

    /// `e ∧ f = 1 − ((1−e) ∨ (1−f))`.
    pub fn meet(&self, other: &Self) -> Self {
        self.complement().join(&other.complement()).complement()
    }

    pub fn is_zero(&self) -> bool {
        self.0.fro_norm() < 0.5
    }
}

/// Self-adjoint operator stored as `Σ_b V_b diag(d_b) V_b*` over its
/// numerical range, for cheap compressions `‖e y e‖` when the rank is low.
#[derive(Clone, Debug)]
pub struct ThinSelfAdjoint {
    blocks: Vec<(Mat, Vec<f64>)>,
    rank: usize,
}

impl ThinSelfAdjoint {
    pub fn new(y: &Operator, rel_tol: f64) -> Result<Self> {
        let eig = y.eigh()?;
        let top = eig.iter().flat_map(|(v, _)| v.iter().map(|x| x.abs())).fold(0.0, f64::max);
        let mut rank = 0;
        let blocks = eig
            .into_iter()
            .map(|(vals, vecs)| {
                let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() > rel_tol * top).collect();
                rank += keep.len();
                let v = Mat::from_fn(vecs.nrows(), keep.len(), |r, c| vecs[(r, keep[c])]);
                (v, keep.iter().map(|&i| vals[i]).collect())
            })
            .collect();
        Ok(Self { blocks, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `‖e y e‖`: with `eV = QR`, the nonzero spectrum is that of `R D R*`.
    pub fn compressed_norm(&self, e: &Projection) -> f64 {
        let mut best: f64 = 0.0;
        for ((v, d), eb) in self.blocks.iter().zip(e.as_operator().blocks()) {
            if d.is_empty() {
                continue;
            }
            let w = eb * v;
            let r = w.qr().r();
            let dm = Mat::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|&x| C64::new(x, 0.0))));
            let m = &r * dm * r.adjoint();
            best = best.max(herm_vals(&m).into_iter().fold(0.0, |a: f64, x| a.max(x.abs())));
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(entries: [[f64; 2]; 2]) -> Mat {
        Mat::from_fn(2, 2, |r, c| C64::new(entries[r][c], 0.0))
    }

    fn op2(entries: [[f64; 2]; 2]) -> Operator {
        Operator::from_blocks(&Algebra::matrix(2, 1.0), vec![m2(entries)]).unwrap()
    }

    #[test]
    fn trace_examples() {
        let a = Algebra::matrix(2, 1.0);
        assert_eq!(Operator::identity(&a).trace_re(), 2.0);
        let b = Algebra::new(vec![Block { dim: 2, weight: 0.5 }, Block { dim: 3, weight: 2.0 }]).unwrap();
        assert!((Operator::identity(&b).trace_re() - 7.0).abs() < 1e-15);
        assert_eq!(op2([[1.0, 0.0], [0.0, -1.0]]).trace_re(), 0.0);
    }

    #[test]
    fn invalid_algebras_rejected() {
        assert!(Algebra::new(vec![]).is_err());
        assert!(Algebra::new(vec![Block { dim: 0, weight: 1.0 }]).is_err());
        assert!(Algebra::new(vec![Block { dim: 2, weight: 0.0 }]).is_err());
        let a = Algebra::matrix(2, 1.0);
        assert!(matches!(
            Operator::from_blocks(&a, vec![Mat::zeros(3, 3)]),
            Err(NcError::DimensionMismatch(_))
        ));
        let mut bad = Mat::zeros(2, 2);
        bad[(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(Operator::from_blocks(&a, vec![bad]).is_err());
    }

    #[test]
    fn functional_calculus_examples() {
        let x = op2([[4.0, 0.0], [0.0, 1.0]]);
        let r = x.functional_calculus(f64::sqrt).unwrap();
        assert!((&r - &op2([[2.0, 0.0], [0.0, 1.0]])).fro_norm() < 1e-12);

        let y = op2([[3.0, 0.0], [0.0, 1.0]]);
        let e = y.spectral_projection(|v| (0.0..=2.0).contains(&v)).unwrap();
        assert!((e.as_operator() - &op2([[0.0, 0.0], [0.0, 1.0]])).fro_norm() < 1e-12);
        assert!(Projection::new(e.into_operator()).is_ok());

        let z = op2([[2.0, 1.0], [1.0, 2.0]]);
        let sq = z.functional_calculus(|t| t * t).unwrap();
        assert!((&sq - &(&z * &z)).fro_norm() < 1e-12);

        let id = z.functional_calculus(|t| t).unwrap();
        assert!((&id - &z).fro_norm() < 1e-12);
    }

    #[test]
    fn functional_calculus_rejects_non_self_adjoint() {
        let x = op2([[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(x.functional_calculus(|t| t), Err(NcError::NotSelfAdjoint(_))));
        let y = op2([[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(y.try_functional_calculus(|t| (t > 0.0).then(|| t.ln())), Err(NcError::Domain(_))));
    }

    #[test]
    fn spectral_projection_includes_ties() {
        let x = op2([[2.0, 0.0], [0.0, 1.0]]);
        assert!((x.below(2.0).unwrap().tau() - 2.0).abs() < 1e-12);
        assert!((x.below(1.5).unwrap().tau() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polar_examples() {
        let x = op2([[2.0, 0.0], [0.0, 0.0]]);
        let p = x.polar_and_pinv(EPS_RANK);
        assert!((&p.isometry - &op2([[1.0, 0.0], [0.0, 0.0]])).fro_norm() < 1e-12);
        assert!((&p.modulus - &x).fro_norm() < 1e-12);
        assert!((&p.pinv - &op2([[0.5, 0.0], [0.0, 0.0]])).fro_norm() < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = op2([[s, -s], [s, s]]);
        let p = u.polar_and_pinv(EPS_RANK);
        assert!((&p.isometry - &u).fro_norm() < 1e-12);
        assert!((&p.modulus - &Operator::identity(u.algebra())).fro_norm() < 1e-12);
        assert!((&p.pinv - &u.adjoint()).fro_norm() < 1e-12);

        // nilpotent e_12: |x| = e_22 and u = e_12
        let n = op2([[0.0, 1.0], [0.0, 0.0]]);
        let p = n.polar_and_pinv(EPS_RANK);
        assert!((&p.modulus - &op2([[0.0, 0.0], [0.0, 1.0]])).fro_norm() < 1e-12);
        assert!((&p.isometry - &n).fro_norm() < 1e-12);
        assert!((&(&p.isometry * &p.modulus) - &n).fro_norm() < 1e-12);

        let z = Operator::zero(u.algebra()).polar_and_pinv(EPS_RANK);
        assert_eq!(z.isometry.fro_norm(), 0.0);
    }

    #[test]
    fn psd_examples() {
        let r = op2([[1.0, 1.0], [1.0, 1.0]]).psd_check(1e-10).unwrap();
        assert!(r.is_psd && r.lambda_min.abs() < 1e-12);
        let r = op2([[1.0, 2.0], [2.0, 1.0]]).psd_check(1e-10).unwrap();
        assert!(!r.is_psd && (r.lambda_min + 1.0).abs() < 1e-12);
        let r = op2([[1.0, -1.0], [-1.0, 1.0]]).psd_check(1e-10).unwrap();
        assert!(r.is_psd && r.lambda_min.abs() < 1e-12);
    }

    #[test]
    fn lp_norms_weighted() {
        let a = Algebra::new(vec![Block { dim: 1, weight: 2.0 }, Block { dim: 1, weight: 0.5 }]).unwrap();
        let x = Operator::from_diagonal(&a, &[1.0, -2.0]).unwrap();
        assert!((x.lp_norm(1.0) - 3.0).abs() < 1e-12);
        assert!((x.lp_norm(2.0) - 4.0f64.sqrt()).abs() < 1e-12);
        assert!((x.lp_norm(f64::INFINITY) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_operations() {
        let a = Algebra::matrix(3, 1.0);
        let e = Projection::new(Operator::from_diagonal(&a, &[1.0, 1.0, 0.0]).unwrap()).unwrap();
        let f = Projection::new(Operator::from_diagonal(&a, &[0.0, 1.0, 1.0]).unwrap()).unwrap();
        assert!((e.join(&f).tau() - 3.0).abs() < 1e-12);
        assert!((e.meet(&f).tau() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_product_matches_generic_kernel() {
        let mut r = crate::random::rng(3);
        let a = crate::random::gaussian_matrix(&mut r, 40, 33);
        let b = crate::random::gaussian_matrix(&mut r, 33, 29);
        assert!((mat_mul(&a, &b) - &a * &b).norm() < 1e-11 * a.norm() * b.norm());
    }

    #[test]
    fn thin_compression_matches_dense() {
        let mut r = crate::random::rng(4);
        let alg = Algebra::new(vec![Block { dim: 30, weight: 1.0 }, Block { dim: 5, weight: 2.0 }]).unwrap();
        let g = crate::random::gaussian_matrix(&mut r, 30, 3);
        let low = Operator::from_blocks(&alg, vec![&g * g.adjoint(), Mat::zeros(5, 5)]).unwrap();
        let y = &low - &Operator::unit(&alg, 1, 2, 2);
        let thin = ThinSelfAdjoint::new(&y, 1e-13).unwrap();
        assert_eq!(thin.rank(), 4);
        for seed in 0..5 {
            let e = crate::random::random_projection(&mut crate::random::rng(seed), &alg);
            let dense = y.compress(&e).norm();
            assert!((thin.compressed_norm(&e) - dense).abs() < 1e-10 * y.norm());
        }
    }
}
