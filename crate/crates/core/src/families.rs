//! Explicit example and counterexample families, truncated at size `N`.

use rand::Rng;
use serde::Serialize;

use crate::algebra::{Algebra, Mat, Operator, Projection, C64};
use crate::envelope::{DiagonalEnvelopeProblem, DiagonalForm};
use crate::error::{NcError, Result};
use crate::lambda::OperatorSequence;
use crate::marcin::{asymmetric_factorization, InterpolationParams};
use crate::oracle::{MapFamily, WeakTypeOracle};
use crate::random;
use crate::stepfn::StepFunction;

fn need(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(NcError::invalid("N", format!("must be ≥ {min}")));
    }
    Ok(())
}

/// `T_n = e_11 + n^{−1/2}(e_1n + e_n1) + e_nn/n` for `2 ≤ n ≤ N`, in `M_N`.
pub fn asym_operators(n_max: usize) -> Result<Vec<Operator>> {
    need(n_max, 2)?;
    let a = Algebra::matrix(n_max, 1.0);
    Ok((2..=n_max)
        .map(|n| {
            let s = 1.0 / (n as f64).sqrt();
            let mut m = Mat::zeros(n_max, n_max);
            m[(0, 0)] = C64::new(1.0, 0.0);
            m[(0, n - 1)] = C64::new(s, 0.0);
            m[(n - 1, 0)] = C64::new(s, 0.0);
            m[(n - 1, n - 1)] = C64::new(1.0 / n as f64, 0.0);
            Operator::from_blocks(&a, vec![m]).expect("shape")
        })
        .collect())
}

pub fn gen_asym(n_max: usize) -> Result<MapFamily> {
    MapFamily::scalar(asym_operators(n_max)?)
}

/// `T_n = e_n1 + e_1n` for `2 ≤ n ≤ N`, in `M_N`.
pub fn nonpositive_operators(n_max: usize) -> Result<Vec<Operator>> {
    need(n_max, 2)?;
    let a = Algebra::matrix(n_max, 1.0);
    Ok((2..=n_max).map(|n| &Operator::unit(&a, 0, n - 1, 0) + &Operator::unit(&a, 0, 0, n - 1)).collect())
}

pub fn gen_nonpositive(n_max: usize) -> Result<MapFamily> {
    MapFamily::scalar(nonpositive_operators(n_max)?)
}

pub fn gen_nonpositive_sequence(n_max: usize) -> Result<OperatorSequence> {
    OperatorSequence::new(nonpositive_operators(n_max)?)
}

/// Oracles for the two scalar families: tail projections for weak (1,1),
/// and the uniform bound `sup_n ‖T_n‖ ≤ 2`.
pub fn scalar_family_oracles(n_max: usize) -> (WeakTypeOracle, WeakTypeOracle) {
    let a = Algebra::matrix(n_max, 1.0);
    (WeakTypeOracle::tail(&a), WeakTypeOracle::uniform(&a, 2.0))
}

/// Diagonal blocks of dimensions `dims` placed consecutively in `M_{Σ dims}`.
pub fn dyadic_blocks(dims: &[usize]) -> (Algebra, Vec<Projection>) {
    let total: usize = dims.iter().sum();
    let a = Algebra::matrix(total, 1.0);
    let mut off = 0;
    let mut out = Vec::new();
    for &d in dims {
        let diag: Vec<f64> = (0..total).map(|i| if i >= off && i < off + d { 1.0 } else { 0.0 }).collect();
        out.push(Projection::new_unchecked(Operator::from_diagonal(&a, &diag).expect("length")));
        off += d;
    }
    (a, out)
}

/// `x = Σ_i α_i c_i q_i` for contractions `c_i`, built column block by column
/// block. Random tuples draw `c_i` Haar-rotated with singular values in
/// `[0, 1]`; structured tuples use `c_i = v ξ_i*` with a common `v`.
fn block_combination(rng: &mut impl Rng, a: &Algebra, q: &[Projection], alpha: &[f64], structured: bool) -> Operator {
    let d = a.total_dim();
    let v = random::gaussian_matrix(rng, d, 1);
    let v = &v / C64::new(v.norm(), 0.0);
    let mut x = Operator::zero(a);
    for (qi, &al) in q.iter().zip(alpha) {
        let c = if structured {
            let xi = random::gaussian_matrix(rng, d, 1);
            let xi = qi.as_operator().block(0) * xi;
            let n = xi.norm();
            Operator::from_blocks(a, vec![&v * (xi / C64::new(n, 0.0)).adjoint()]).expect("shape")
        } else {
            random::random_contraction(rng, a)
        };
        x = &x + &(&c * qi.as_operator()).scale(al);
    }
    x
}

#[derive(Clone, Debug)]
pub struct OptiInstance {
    pub algebra: Algebra,
    /// `q_0, …, q_{N−1}` with `τ(q_i) = 2^i`.
    pub q: Vec<Projection>,
    /// Sampled `x = b*b`, `b = Σ 2^{−i/2} c_i q_i`.
    pub sequence: OperatorSequence,
    /// `b` for each sample.
    pub b: Vec<Operator>,
    /// Exact positive-form problem `w_i = 2^i`, `α_i = 2^{−i/2}`.
    pub problem: DiagonalEnvelopeProblem,
}

pub fn opti_problem(n: usize, p: f64) -> DiagonalEnvelopeProblem {
    DiagonalEnvelopeProblem {
        weights: (0..n).map(|i| 2f64.powi(i as i32)).collect(),
        alpha: (0..n).map(|i| 2f64.powf(-(i as f64) / 2.0)).collect(),
        p,
        form: DiagonalForm::Positive,
    }
}

/// Half the samples are random contraction tuples, half structured rank-one.
pub fn gen_opti(n: usize, samples: usize, seed: u64, p: f64) -> Result<OptiInstance> {
    need(n, 1)?;
    need(samples, 1)?;
    let dims: Vec<usize> = (0..n).map(|i| 1 << i).collect();
    let (a, q) = dyadic_blocks(&dims);
    let alpha: Vec<f64> = (0..n).map(|i| 2f64.powf(-(i as f64) / 2.0)).collect();
    let mut rng = random::rng(seed);
    let b: Vec<Operator> = (0..samples).map(|k| block_combination(&mut rng, &a, &q, &alpha, k % 2 == 1)).collect();
    let xs = b.iter().map(|b| &b.adjoint() * b).collect();
    Ok(OptiInstance { algebra: a, q, sequence: OperatorSequence::new(xs)?, b, problem: opti_problem(n, p) })
}

impl OptiInstance {
    /// `max_x ‖Q_n^⊥ x Q_n^⊥‖ · 2^n` for each `n < N`; at most 1.
    pub fn tail_ratios(&self) -> Vec<f64> {
        let mut q_sum = Operator::zero(&self.algebra);
        let mut out = Vec::new();
        for (n, qn) in self.q.iter().enumerate() {
            q_sum = &q_sum + qn.as_operator();
            let perp = Projection::new_unchecked(&Operator::identity(&self.algebra) - &q_sum);
            let worst = self.sequence.terms().iter().map(|x| x.compress(&perp).norm()).fold(0.0, f64::max);
            out.push(worst * 2f64.powi(n as i32));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct LlInstance {
    pub algebra: Algebra,
    /// `p_1, …, p_N` with `τ(p_i) = 2^{i−1}`.
    pub blocks: Vec<Projection>,
    pub sequence: OperatorSequence,
}

fn ll_alpha(n: usize, p: f64) -> Vec<f64> {
    (1..=n).map(|i| 2f64.powf(-(i as f64) / p)).collect()
}

/// `x_n = Σ_i 2^{−i/p} u_{n,i} p_i` with sampled contractions; `u_{n,i} p_i`
/// maps the block into the whole space.
pub fn gen_ll(n: usize, p: f64, samples: usize, seed: u64) -> Result<LlInstance> {
    need(n, 1)?;
    need(samples, 1)?;
    if !(p > 2.0) {
        return Err(NcError::invalid("p", "need p > 2"));
    }
    let dims: Vec<usize> = (0..n).map(|i| 1 << i).collect();
    let (a, blocks) = dyadic_blocks(&dims);
    let alpha = ll_alpha(n, p);
    let mut rng = random::rng(seed);
    let xs = (0..samples).map(|k| block_combination(&mut rng, &a, &blocks, &alpha, k % 2 == 1)).collect();
    Ok(LlInstance { algebra: a, blocks, sequence: OperatorSequence::new(xs)? })
}

/// Column envelope of the dense family restricted to block-scalar `c^{1/2}`.
pub fn ll_diagonal_problem(n: usize, p: f64) -> DiagonalEnvelopeProblem {
    DiagonalEnvelopeProblem {
        weights: (1..=n).map(|i| 2f64.powi(i as i32 - 1)).collect(),
        alpha: ll_alpha(n, p),
        p,
        form: DiagonalForm::Column,
    }
}

/// `‖(a_k)‖_{p,p,ω}` for the decomposition `X = Σ a_k U_k q_k` with
/// `q_k = p_{k+1}`, `a_k = 2^{−(k+1)/p}`; equal to `(N/2)^{1/p}`.
pub fn ll_lambda_estimate(n: usize, p: f64) -> f64 {
    let pieces = ll_alpha(n, p).into_iter().enumerate().map(|(k, a)| (a, 2f64.powi(k as i32))).collect();
    StepFunction::rearrange(pieces).lorentz_norm(p, p)
}

/// Upper bound on `‖X‖_{Λ_p^c}` itself for the dense family: removing
/// `p_1, …, p_j` costs `2^j − 1` and leaves `sup_n ‖x_n e‖ ≤ (Σ_{i>j} α_i²)^{1/2}`.
pub fn ll_lambda_direct(n: usize, p: f64) -> f64 {
    let alpha = ll_alpha(n, p);
    let pieces = (0..n)
        .map(|j| {
            let v = alpha[j..].iter().map(|a| a * a).sum::<f64>().sqrt();
            (v, 2f64.powi(j as i32))
        })
        .collect();
    StepFunction::rearrange(pieces).lorentz_norm(p, p)
}

/// The same estimate evaluated on the sampled sequence.
pub fn ll_lambda_sampled(inst: &LlInstance, p: f64) -> f64 {
    let a = &inst.algebra;
    let mut removed = Operator::zero(a);
    let mut pieces = Vec::new();
    for (j, pj) in inst.blocks.iter().enumerate() {
        let e = Projection::new_unchecked(&Operator::identity(a) - &removed);
        let v = inst.sequence.terms().iter().map(|x| (x * e.as_operator()).norm()).fold(0.0, f64::max);
        pieces.push((v, 2f64.powi(j as i32)));
        removed = &removed + pj.as_operator();
    }
    StepFunction::rearrange(pieces).lorentz_norm(p, p)
}

#[derive(Clone, Debug, Serialize)]
pub struct NoasymRow {
    pub n: usize,
    /// `Σ_{2≤k≤N} ‖a^θ δ_k‖²`.
    pub sum: f64,
    /// `1/(U² ‖b^{1−θ} δ_1‖²)` with `U = max_k ‖u_k‖`.
    pub c: f64,
    /// `c (H_N − 1)`.
    pub lower: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoasymProbe {
    pub theta: f64,
    pub p: f64,
    pub rows: Vec<NoasymRow>,
    /// Slope of `sum` against `ln N`.
    pub slope: f64,
    pub min_c: f64,
    pub pass: bool,
}

/// Factorizes `T_k = a^θ u_k b^{1−θ}` for the asymmetric family at each `N`
/// and checks the harmonic lower bound forced by `⟨a^θ δ_k, u_k b^{1−θ} δ_1⟩ = k^{−1/2}`.
pub fn noasym_probe(grid: &[usize], theta: f64, p: f64, eps_trunc: f64) -> Result<NoasymProbe> {
    let params = InterpolationParams::new(1.0, f64::INFINITY, p)?;
    let mut rows = Vec::new();
    for &n in grid {
        let fam = gen_asym(n)?;
        let (o0, o1) = scalar_family_oracles(n);
        let one = Operator::identity(&fam.source);
        let f = asymmetric_factorization(&fam, &o0, &o1, &one, &params, theta, eps_trunc)?;
        let at = f.a.pow_psd(theta)?;
        let bt = f.b.pow_psd(1.0 - theta)?;
        let col = |m: &Operator, k: usize| m.block(0).column(k).norm();
        let sum: f64 = (1..n).map(|k| col(&at, k).powi(2)).sum();
        let c = 1.0 / (f.u_norm.max(1.0).powi(2) * col(&bt, 0).powi(2));
        let h: f64 = (2..=n).map(|k| 1.0 / k as f64).sum();
        rows.push(NoasymRow { n, sum, c, lower: c * h, residual: f.residual });
    }
    let ln: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sum).collect();
    let m = ln.len() as f64;
    let (mx, my) = (ln.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let slope = ln.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / ln.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let min_c = rows.iter().map(|r| r.c).fold(f64::INFINITY, f64::min);
    let pass = rows.iter().all(|r| r.sum >= r.lower * (1.0 - 1e-9)) && slope >= 0.9 * min_c;
    Ok(NoasymProbe { theta, p, rows, slope, min_c, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::verify_oracle;

    #[test]
    fn asym_entries_and_positivity() {
        let ts = asym_operators(4).unwrap();
        let t2 = ts[0].block(0);
        let s = 0.5f64.sqrt();
        assert_eq!(t2[(0, 0)].re, 1.0);
        assert!((t2[(0, 1)].re - s).abs() < 1e-15 && (t2[(1, 0)].re - s).abs() < 1e-15);
        assert_eq!(t2[(1, 1)].re, 0.5);
        for t in &ts {
            assert!(t.psd_check(1e-12).unwrap().is_psd);
            assert!(t.norm() <= 2.0);
        }
        assert!(gen_asym(4).unwrap().positive);
    }

    #[test]
    fn nonpositive_squares() {
        let ts = nonpositive_operators(5).unwrap();
        let a = ts[0].algebra().clone();
        for (i, t) in ts.iter().enumerate() {
            let n = i + 2;
            let want = &Operator::unit(&a, 0, 0, 0) + &Operator::unit(&a, 0, n - 1, n - 1);
            assert!((&(t * t) - &want).norm() < 1e-15);
        }
        assert!(!gen_nonpositive(5).unwrap().positive);
    }

    #[test]
    fn scalar_families_pass_their_oracles() {
        let lambdas = [0.05, 0.3, 1.0, 2.5, 10.0];
        let xs: Vec<Operator> = [1.0, -0.4].iter().map(|&c| Operator::scalar(&Algebra::matrix(1, 1.0), c)).collect();
        for n in [3, 9, 20] {
            for fam in [gen_asym(n).unwrap(), gen_nonpositive(n).unwrap()] {
                let (o0, o1) = scalar_family_oracles(n);
                assert!(verify_oracle(&o0, &fam, &xs, &lambdas).unwrap().pass);
                assert!(verify_oracle(&o1, &fam, &xs, &lambdas).unwrap().pass);
            }
        }
    }

    #[test]
    fn opti_blocks_and_witness() {
        let inst = gen_opti(3, 6, 11, 2.0).unwrap();
        let taus: Vec<f64> = inst.q.iter().map(Projection::tau).collect();
        assert_eq!(taus, vec![1.0, 2.0, 4.0]);
        for r in inst.tail_ratios() {
            assert!(r <= 1.0 + 1e-12, "{r}");
        }
        for x in inst.sequence.terms() {
            assert!(x.psd_check(1e-12).unwrap().is_psd);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_ll(3, 4.0, 4, 9).unwrap();
        let b = gen_ll(3, 4.0, 4, 9).unwrap();
        assert_eq!(a.sequence, b.sequence);
        let c = gen_opti(2, 3, 5, 2.0).unwrap();
        let d = gen_opti(2, 3, 5, 2.0).unwrap();
        assert_eq!(c.sequence, d.sequence);
    }

    #[test]
    fn ll_block_dims() {
        let inst = gen_ll(4, 4.0, 2, 1).unwrap();
        let taus: Vec<f64> = inst.blocks.iter().map(Projection::tau).collect();
        assert_eq!(taus, vec![1.0, 2.0, 4.0, 8.0]);
        // Each sampled x_n has ‖x_n p_i‖ ≤ 2^{−i/p}.
        for x in inst.sequence.terms() {
            for (i, pi) in inst.blocks.iter().enumerate() {
                assert!((x * pi.as_operator()).norm() <= 2f64.powf(-((i + 1) as f64) / 4.0) + 1e-12);
            }
        }
        assert!(ll_lambda_sampled(&inst, 4.0) <= ll_lambda_direct(4, 4.0) * (1.0 + 1e-12));
    }

    #[test]
    fn ll_lambda_estimate_grows_like_n_to_one_over_p() {
        for n in [4usize, 8, 16, 32] {
            assert!((ll_lambda_estimate(n, 4.0) - (n as f64 / 2.0).powf(0.25)).abs() < 1e-12);
            // The direct value stays within the decomposition constant.
            let bound = (crate::lambda::hardy_constant(4.0) / 2.0).powf(0.25);
            assert!(ll_lambda_direct(n, 4.0) <= bound * ll_lambda_estimate(n, 4.0), "N = {n}");
        }
    }
}
