//! Dyadic projection decomposition `x = Σ_n 2^{-n} r_n` of a positive
//! operator, where `r_n` is the spectral projection onto the eigenvalues whose
//! `−n`-th binary digit is 1.

use serde::Serialize;

use crate::algebra::{column_projector, Operator, Projection, EPS_NUM};
use crate::error::{NcError, Result};
use crate::stepfn::{self, StepFunction};

/// Hard cap on the number of retained digits below the leading one.
const MAX_DIGITS: i32 = 1100;

#[derive(Clone, Debug)]
pub struct DyadicDecomposition {
    pub terms: Vec<(i32, Projection)>,
    pub source: Operator,
    pub n_min: i32,
    pub n_max: i32,
    /// `‖x − Σ_{n≤n_max} 2^{-n} r_n‖_p` measured on the operators.
    pub residual: f64,
    pub p: f64,
    /// Eigenvalues of `x` (clipped at 0) with their trace weights.
    pub spectrum: Vec<(f64, f64)>,
}

/// `λ = m·2^e` with `m` an integer mantissa; `λ` must be positive and finite.
fn split_f64(lambda: f64) -> (u64, i32) {
    let bits = lambda.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// The `−n`-th binary digit of `λ ≥ 0`, i.e. the coefficient of `2^{-n}`.
pub fn digit(lambda: f64, n: i32) -> bool {
    if lambda <= 0.0 {
        return false;
    }
    let (m, e) = split_f64(lambda);
    let j = -(n as i64) - e as i64;
    (0..64).contains(&j) && (m >> j) & 1 == 1
}

/// `(leading, last)` digit indices of `λ > 0`.
fn digit_range(lambda: f64) -> (i32, i32) {
    let (m, e) = split_f64(lambda);
    let hi = 63 - m.leading_zeros() as i32;
    let lo = m.trailing_zeros() as i32;
    (-(e + hi), -(e + lo))
}

pub fn dyadic_decompose(x: &Operator, p: f64, eps_trunc: f64) -> Result<DyadicDecomposition> {
    if !(p > 0.0) {
        return Err(NcError::invalid("p", "must be > 0"));
    }
    if !(eps_trunc > 0.0) {
        return Err(NcError::invalid("eps_trunc", "must be > 0"));
    }
    x.require_psd(EPS_NUM)?;
    let eig = x.eigh()?;
    let a = x.algebra();
    let mut spectrum = Vec::new();
    let mut lo = i32::MAX;
    let mut hi = i32::MIN;
    let mut supp = 0.0;
    for ((vals, _), b) in eig.iter().zip(a.blocks()) {
        for &v in vals {
            let v = v.max(0.0);
            spectrum.push((v, b.weight));
            if v > 0.0 {
                let (l, h) = digit_range(v);
                lo = lo.min(l);
                hi = hi.max(h);
                supp += b.weight;
            }
        }
    }
    if lo == i32::MAX {
        return Ok(DyadicDecomposition {
            terms: Vec::new(),
            source: x.clone(),
            n_min: 0,
            n_max: -1,
            residual: 0.0,
            p,
            spectrum,
        });
    }
    // 2^{-n_max} τ(supp)^{1/p} ≤ ε bounds the dropped tail.
    let mass = if p.is_infinite() { 1.0 } else { supp.powf(1.0 / p) };
    let needed = (mass / eps_trunc).log2().ceil() as i32;
    let n_max = hi.min(needed.max(lo)).min(lo + MAX_DIGITS);
    let mut terms = Vec::new();
    for n in lo..=n_max {
        let blocks: Vec<_> = eig
            .iter()
            .map(|(vals, vecs)| column_projector(vecs, |c| digit(vals[c].max(0.0), n)))
            .collect();
        if blocks.iter().all(|m| m.iter().all(|z| z.norm() == 0.0)) {
            continue;
        }
        let op = Operator::from_blocks(a, blocks)?;
        terms.push((n, Projection::new_unchecked(op)));
    }
    let mut rebuilt = Operator::zero(a);
    for (n, r) in &terms {
        rebuilt = &rebuilt + &r.as_operator().scale(2f64.powi(-n));
    }
    let residual = (x - &rebuilt).lp_norm(p);
    Ok(DyadicDecomposition { terms, source: x.clone(), n_min: lo, n_max, residual, p, spectrum })
}

impl DyadicDecomposition {
    /// `τ(r_n)` from the spectrum, exact up to summation order.
    pub fn tau(&self, n: i32) -> f64 {
        self.spectrum.iter().filter(|(v, _)| digit(*v, n)).map(|(_, w)| w).sum()
    }

    pub fn reconstruct(&self) -> Operator {
        let mut out = Operator::zero(self.source.algebra());
        for (n, r) in &self.terms {
            out = &out + &r.as_operator().scale(2f64.powi(-n));
        }
        out
    }

    /// `μ(f(x))` computed from the spectrum of `x`.
    fn mu_of(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        StepFunction::rearrange(self.spectrum.iter().map(|&(v, w)| (f(v), w)).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DyadicReport {
    pub alpha: f64,
    /// `(1 − 2^{-α})^{-1}`.
    pub constant: f64,
    /// Smallest `C` with `Σ 2^{-nα} 1_{[0,τ(r_n)]} ≤ C μ(x^α)`.
    pub ratio: f64,
    pub pass: bool,
    /// Smallest `C` with `Σ (|n|+1) 2^{-n} 1_{[0,τ(r_n)]} ≤ C μ(x(|ln x| + 1))`.
    pub log_constant: f64,
    /// Smallest `C` with `Σ 2^{-m} μ(r_m) ≤ C μ(x)`; must be at most 2.
    pub sum_ratio: f64,
    pub sum_pass: bool,
    pub residual: f64,
}

/// Checks both step-function bounds and the sum bound pointwise at
/// breakpoints, reporting the worst ratios.
pub fn verify_dyadic_bounds(d: &DyadicDecomposition, alpha: f64, rel_tol: f64) -> DyadicReport {
    assert!(alpha > 0.0);
    let total: f64 = d.spectrum.iter().map(|p| p.1).sum();
    let min_len = 1e-12 * total;
    let ind = |n: i32, c: f64| StepFunction::indicator(d.tau(n), c);

    let lhs1 = stepfn::sum(&d.terms.iter().map(|(n, _)| ind(*n, 2f64.powf(-(*n as f64) * alpha))).collect::<Vec<_>>());
    let constant = 1.0 / (1.0 - 2f64.powf(-alpha));
    let ratio = stepfn::pointwise_ratio_ae(&lhs1, &d.mu_of(|v| v.powf(alpha)), min_len);

    let lhs2 = stepfn::sum(
        &d.terms.iter().map(|(n, _)| ind(*n, (n.unsigned_abs() as f64 + 1.0) * 2f64.powi(-n))).collect::<Vec<_>>(),
    );
    let log_constant = stepfn::pointwise_ratio_ae(
        &lhs2,
        &d.mu_of(|v| if v > 0.0 { v * (v.ln().abs() + 1.0) } else { 0.0 }),
        min_len,
    );

    let lhs3 = stepfn::sum(&d.terms.iter().map(|(n, _)| ind(*n, 2f64.powi(-n))).collect::<Vec<_>>());
    let sum_ratio = stepfn::pointwise_ratio_ae(&lhs3, &d.mu_of(|v| v), min_len);

    DyadicReport {
        alpha,
        constant,
        ratio,
        pass: ratio <= constant * (1.0 + rel_tol),
        log_constant,
        sum_ratio,
        sum_pass: sum_ratio <= 2.0 * (1.0 + rel_tol),
        residual: d.residual,
    }
}
