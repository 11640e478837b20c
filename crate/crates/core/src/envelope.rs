//! Convex envelope problems behind the strong maximal norms:
//! `inf ‖a‖_p` over `a ⪰ x_n` (positive), `−A ⪯ x_n ⪯ A` (self-adjoint) and
//! `c ⪰ x_n* x_n` with objective `‖c^{1/2}‖_p` (column).
//!
//! All three are `min τ(a^r)` subject to `a ⪰ B_j`, solved by ADMM with a
//! feasible primal point and a Lagrangian dual bound at every check.

use serde::Serialize;

use crate::algebra::{herm_eig, reassemble, Algebra, Mat, Operator};
use crate::error::{NcError, Result};
use crate::lambda::OperatorSequence;

/// Documented soft limit on the total dimension.
pub const MAX_TOTAL_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    Positive,
    SelfAdjoint,
    Column,
}

impl std::str::FromStr for EnvelopeKind {
    type Err = NcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" | "positive" => Ok(Self::Positive),
            "sa" | "selfadjoint" => Ok(Self::SelfAdjoint),
            "col" | "column" => Ok(Self::Column),
            _ => Err(NcError::invalid("kind", format!("unknown envelope kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeProblem {
    pub kind: EnvelopeKind,
    pub sequence: OperatorSequence,
    pub p: f64,
}

impl EnvelopeProblem {
    pub fn new(kind: EnvelopeKind, sequence: OperatorSequence, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(NcError::invalid("p", "must be ≥ 1"));
        }
        match kind {
            EnvelopeKind::Positive => {
                for x in sequence.terms() {
                    x.require_psd(1e-10)?;
                }
            }
            EnvelopeKind::SelfAdjoint => {
                for x in sequence.terms() {
                    if !x.is_self_adjoint(1e-10 * x.norm().max(1.0)) {
                        return Err(NcError::NotSelfAdjoint(x.self_adjoint_defect()));
                    }
                }
            }
            EnvelopeKind::Column if p < 2.0 => {
                return Err(NcError::invalid("p", "column envelope needs p ≥ 2"));
            }
            EnvelopeKind::Column => {}
        }
        Ok(Self { kind, sequence, p })
    }

    /// Lower bounds `B_j` and the exponent `r` of `τ(a^r)`.
    fn constraints(&self) -> (Vec<Operator>, f64) {
        let xs = self.sequence.terms();
        match self.kind {
            EnvelopeKind::Positive => (xs.to_vec(), self.p),
            EnvelopeKind::SelfAdjoint => (xs.iter().flat_map(|x| [x.clone(), -x]).collect(), self.p),
            EnvelopeKind::Column => (xs.iter().map(|x| &x.adjoint() * x).collect(), self.p / 2.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolverOptions {
    /// Relative gap `(f − g)/f` on `τ(a^r)` at which to stop.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 20_000, rho: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeSolution {
    /// Feasible minimizer (`a`, `A` or `c`).
    pub optimum: Operator,
    /// `‖a‖_p`, `‖A‖_p` or `‖c^{1/2}‖_p` at the feasible point.
    pub value: f64,
    /// Certified lower bound on the optimal value.
    pub lower_bound: f64,
    /// `(value − lower_bound)/value`.
    pub gap: f64,
    /// `min_j λ_min(a − B_j)`, ≥ 0 up to rounding.
    pub feasibility: f64,
    /// ADMM primal and dual residuals at exit.
    pub stationarity: (f64, f64),
    pub iterations: usize,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeSummary {
    pub kind: EnvelopeKind,
    pub p: f64,
    pub value: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub feasibility: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EnvelopeSolution {
    pub fn summary(&self, prob: &EnvelopeProblem) -> EnvelopeSummary {
        EnvelopeSummary {
            kind: prob.kind,
            p: prob.p,
            value: self.value,
            lower_bound: self.lower_bound,
            gap: self.gap,
            feasibility: self.feasibility,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// `argmin_{λ≥0} w λ^r + (c/2)(λ − v)²`.
fn scalar_prox(w: f64, r: f64, c: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if r == 1.0 {
        return (v - w / c).max(0.0);
    }
    let g = |l: f64| w * r * l.powf(r - 1.0) + c * (l - v);
    let (mut lo, mut hi) = (0.0, v);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * v {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn psd_part(m: &Mat) -> Mat {
    let (vals, vecs) = herm_eig(m);
    reassemble(&vals.iter().map(|v| v.max(0.0)).collect::<Vec<_>>(), &vecs)
}

fn objective(a: &Algebra, blocks: &[Mat], r: f64) -> f64 {
    blocks
        .iter()
        .zip(a.blocks())
        .map(|(m, b)| b.weight * herm_eig(m).0.iter().map(|v| v.max(0.0).powf(r)).sum::<f64>())
        .sum()
}

/// `sup_{a⪰0} tr(Y a) − τ(a^r)`, block by block.
fn conjugate(a: &Algebra, y: &[Mat], r: f64) -> f64 {
    let mut total = 0.0;
    for (m, b) in y.iter().zip(a.blocks()) {
        for v in herm_eig(m).0 {
            if v <= 0.0 {
                continue;
            }
            if r == 1.0 {
                if v > b.weight * (1.0 + 1e-15) {
                    return f64::INFINITY;
                }
            } else {
                total += (1.0 - 1.0 / r) * v.powf(r / (r - 1.0)) * (b.weight * r).powf(-1.0 / (r - 1.0));
            }
        }
    }
    total
}


/// Dual bound `max_s Σ⟨sZ_j, B_j⟩ − f*(sY)` for `Z_j ⪰ 0`.
fn dual_bound(a: &Algebra, b: &[Vec<Mat>], z: &[Vec<Mat>], r: f64) -> f64 {
    let nb = a.num_blocks();
    let c: f64 = z
        .iter()
        .zip(b)
        .map(|(zj, bj)| zj.iter().zip(bj).map(|(zz, bb)| (zz.adjoint() * bb).trace().re).sum::<f64>())
        .sum();
    if c <= 0.0 {
        return 0.0;
    }
    let y: Vec<Mat> = (0..nb)
        .map(|blk| z.iter().fold(Mat::zeros(z[0][blk].nrows(), z[0][blk].ncols()), |acc, zj| acc + &zj[blk]))
        .collect();
    if r == 1.0 {
        let s = y
            .iter()
            .zip(a.blocks())
            .map(|(m, bl)| {
                let top = herm_eig(m).0.last().copied().unwrap_or(0.0);
                if top > 0.0 { bl.weight / top } else { f64::INFINITY }
            })
            .fold(f64::INFINITY, f64::min);
        return if s.is_finite() { s * c } else { 0.0 };
    }
    let f = conjugate(a, &y, r);
    if f <= 0.0 {
        return 0.0;
    }
    let rp = r / (r - 1.0);
    let s = (c / (rp * f)).powf(1.0 / (rp - 1.0));
    s * c - s.powf(rp) * f
}

/// ADMM on `min τ(a^r)` s.t. `a = B_j + S_j`, `S_j ⪰ 0`.
pub fn solve_envelope(prob: &EnvelopeProblem, opts: &SolverOptions) -> Result<EnvelopeSolution> {
    let alg = prob.sequence.algebra().clone();
    if alg.total_dim() > MAX_TOTAL_DIM {
        return Err(NcError::Domain(format!(
            "envelope solver is limited to total dimension {MAX_TOTAL_DIM}, got {}",
            alg.total_dim()
        )));
    }
    let (bs, r) = prob.constraints();
    let p = prob.p;
    let scale = bs.iter().map(Operator::norm).fold(0.0, f64::max);
    let floor = |m: &Operator| m.lambda_max().unwrap_or(0.0).max(0.0);
    if scale == 0.0 || bs.iter().all(|b| floor(b) == 0.0) {
        let zero = Operator::zero(&alg);
        return Ok(EnvelopeSolution {
            optimum: zero,
            value: 0.0,
            lower_bound: 0.0,
            gap: 0.0,
            feasibility: 0.0,
            stationarity: (0.0, 0.0),
            iterations: 0,
            converged: true,
        });
    }
    if p.is_infinite() {
        // a = (max_j λ_max(B_j)) 1; any a ⪰ B_j has ‖a‖ at least that.
        let top = bs.iter().map(floor).fold(0.0, f64::max);
        let value = if prob.kind == EnvelopeKind::Column { top.sqrt() } else { top };
        return Ok(EnvelopeSolution {
            optimum: Operator::scalar(&alg, top),
            value,
            lower_bound: value,
            gap: 0.0,
            feasibility: 0.0,
            stationarity: (0.0, 0.0),
            iterations: 0,
            converged: true,
        });
    }
    let nb = alg.num_blocks();
    let m = bs.len();
    let b: Vec<Vec<Mat>> = bs.iter().map(|x| x.blocks().iter().map(|blk| blk / crate::C64::new(scale, 0.0)).collect()).collect();
    let dims: Vec<usize> = alg.blocks().iter().map(|bl| bl.dim).collect();
    let zeros = || dims.iter().map(|&d| Mat::zeros(d, d)).collect::<Vec<_>>();
    let mut a: Vec<Mat>;
    let mut s: Vec<Vec<Mat>> = b.iter().map(|bj| bj.iter().map(|x| psd_part(&-x)).collect()).collect();
    let mut u: Vec<Vec<Mat>> = (0..m).map(|_| zeros()).collect();
    let mut rho = opts.rho;
    let mut best: Option<(f64, Vec<Mat>, f64)> = None;
    let mut lower = 0.0f64;
    let mut res = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        iterations = it;
        // a-update: spectral prox of τ(·^r) around the mean of B_j + S_j − U_j.
        let mut next = Vec::with_capacity(nb);
        for blk in 0..nb {
            let mut v = Mat::zeros(dims[blk], dims[blk]);
            for j in 0..m {
                v += &b[j][blk] + &s[j][blk] - &u[j][blk];
            }
            v /= crate::C64::new(m as f64, 0.0);
            let (vals, vecs) = herm_eig(&v);
            let w = alg.blocks()[blk].weight;
            let lam: Vec<f64> = vals.iter().map(|&x| scalar_prox(w, r, m as f64 * rho, x)).collect();
            next.push(reassemble(&lam, &vecs));
        }
        let mut prim = 0.0;
        let mut dual = 0.0;
        for j in 0..m {
            for blk in 0..nb {
                let t = &next[blk] - &b[j][blk] + &u[j][blk];
                let new_s = psd_part(&t);
                dual += (&new_s - &s[j][blk]).norm_squared();
                let rj = &next[blk] - &b[j][blk] - &new_s;
                prim += rj.norm_squared();
                u[j][blk] += &rj;
                s[j][blk] = new_s;
            }
        }
        a = next;
        res = (prim.sqrt(), rho * dual.sqrt());
        if it % 10 == 0 || it == opts.max_iter {
            // Certified feasible point a + δ1 and dual bound from Z_j = (−ρU_j)_+.
            let delta = (0..m)
                .flat_map(|j| (0..nb).map(move |blk| (j, blk)))
                .map(|(j, blk)| -herm_eig(&(&a[blk] - &b[j][blk])).0[0])
                .fold(0.0, f64::max);
            let feas: Vec<Mat> = a.iter().map(|x| x + Mat::identity(x.nrows(), x.ncols()) * crate::C64::new(delta, 0.0)).collect();
            let f = objective(&alg, &feas, r);
            if best.as_ref().is_none_or(|bb| f < bb.0) {
                best = Some((f, feas, delta));
            }
            let z: Vec<Vec<Mat>> = u
                .iter()
                .map(|uj| uj.iter().map(|x| psd_part(&(x * crate::C64::new(-rho, 0.0)))).collect())
                .collect();
            lower = lower.max(dual_bound(&alg, &b, &z, r));
            let fb = best.as_ref().expect("set above").0;
            if fb - lower <= opts.tol * fb {
                converged = true;
                break;
            }
            // Residual balancing.
            if res.0 > 10.0 * res.1 {
                rho *= 2.0;
                u.iter_mut().flatten().for_each(|x| *x /= crate::C64::new(2.0, 0.0));
            } else if res.1 > 10.0 * res.0 {
                rho /= 2.0;
                u.iter_mut().flatten().for_each(|x| *x *= crate::C64::new(2.0, 0.0));
            }
        }
    }
    let (f, feas, _) = best.expect("at least one check ran");
    let unscale = scale.powf(r);
    let value = (f * unscale).powf(1.0 / p);
    let lower_bound = (lower * unscale).powf(1.0 / p);
    let optimum =
        Operator::from_blocks(&alg, feas.into_iter().map(|x| x * crate::C64::new(scale, 0.0)).collect())?;
    let feasibility = bs
        .iter()
        .map(|bj| (&optimum - bj).lambda_min().unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    Ok(EnvelopeSolution {
        optimum,
        value,
        lower_bound,
        gap: (value - lower_bound) / value,
        feasibility,
        stationarity: res,
        iterations,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalForm {
    /// `min (Σ w_i d_i^p)^{1/p}` s.t. `Σ α_i²/d_i² ≤ 1`.
    Column,
    /// `a = Σ d_i² q_i ⪰ b*b`: the column problem at exponent `2p`, squared.
    Positive,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagonalEnvelopeProblem {
    pub weights: Vec<f64>,
    pub alpha: Vec<f64>,
    pub p: f64,
    pub form: DiagonalForm,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagonalSolution {
    pub d: Vec<f64>,
    pub objective: f64,
}

/// Lagrange closed form `d_i = s (α_i²/w_i)^{1/(p+2)}` with the constraint active.
pub fn solve_diagonal(prob: &DiagonalEnvelopeProblem) -> Result<DiagonalSolution> {
    let (w, al) = (&prob.weights, &prob.alpha);
    if w.len() != al.len() {
        return Err(NcError::DimensionMismatch(format!("{} weights, {} coefficients", w.len(), al.len())));
    }
    if w.iter().any(|&x| !(x > 0.0)) || al.iter().any(|&x| !(x >= 0.0)) {
        return Err(NcError::invalid("weights/alpha", "need w_i > 0 and α_i ≥ 0"));
    }
    if !(prob.p >= 1.0 && prob.p.is_finite()) {
        return Err(NcError::invalid("p", "need 1 ≤ p < ∞"));
    }
    let p = match prob.form {
        DiagonalForm::Column => prob.p,
        DiagonalForm::Positive => 2.0 * prob.p,
    };
    if al.iter().all(|&x| x == 0.0) {
        return Ok(DiagonalSolution { d: vec![0.0; w.len()], objective: 0.0 });
    }
    let shape: Vec<f64> = al.iter().zip(w).map(|(&a, &wi)| (a * a / wi).powf(1.0 / (p + 2.0))).collect();
    let s2: f64 = al.iter().zip(&shape).filter(|(a, _)| **a > 0.0).map(|(&a, &g)| a * a / (g * g)).sum();
    let d: Vec<f64> = shape.iter().map(|g| s2.sqrt() * g).collect();
    let col = d.iter().zip(w).map(|(&di, &wi)| wi * di.powf(p)).sum::<f64>().powf(1.0 / p);
    Ok(match prob.form {
        DiagonalForm::Column => DiagonalSolution { d, objective: col },
        DiagonalForm::Positive => DiagonalSolution { d: d.iter().map(|x| x * x).collect(), objective: col * col },
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GrowthFamily {
    /// Self-adjoint envelope of `T_n = e_{n1} + e_{1n}`, solved by ADMM.
    Nonpos { p: f64 },
    /// Column envelope of the Λ-separation family (diagonal closed form).
    LlColumn { p: f64 },
    /// Decomposition-norm estimate of `‖X‖_{Λ_p^c}` for the same family.
    LlLambda { p: f64 },
}

impl GrowthFamily {
    pub fn predicted_slope(&self) -> f64 {
        match *self {
            Self::Nonpos { p } => 1.0 / (2.0 * p),
            Self::LlColumn { p } => 0.5 + 1.0 / p,
            Self::LlLambda { p } => 1.0 / p,
        }
    }

    pub fn value(&self, n: usize, opts: &SolverOptions) -> Result<(f64, bool)> {
        match *self {
            Self::Nonpos { p } => {
                let seq = crate::families::gen_nonpositive_sequence(n)?;
                let prob = EnvelopeProblem::new(EnvelopeKind::SelfAdjoint, seq, p)?;
                let sol = solve_envelope(&prob, opts)?;
                Ok((sol.value, sol.converged))
            }
            Self::LlColumn { p } => Ok((solve_diagonal(&crate::families::ll_diagonal_problem(n, p))?.objective, true)),
            Self::LlLambda { p } => Ok((crate::families::ll_lambda_estimate(n, p), true)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub p: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub family: GrowthFamily,
    pub rows: Vec<GrowthRow>,
    pub slope: f64,
    pub predicted: f64,
    pub tolerance: f64,
    /// False when a solve hit its iteration cap.
    pub reliable: bool,
    pub pass: bool,
}

impl GrowthReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,p,value,slope\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.12e},{:.6}\n", r.n, r.p, r.value, self.slope));
        }
        out
    }
}

/// Log-log slope of the family's value against `N`, compared with the
/// predicted exponent within `tolerance`.
pub fn verify_counterexample_growth(
    family: GrowthFamily,
    grid: &[usize],
    tolerance: f64,
    opts: &SolverOptions,
) -> Result<GrowthReport> {
    if grid.len() < 2 {
        return Err(NcError::invalid("grid", "need at least two sizes"));
    }
    let p = match family {
        GrowthFamily::Nonpos { p } | GrowthFamily::LlColumn { p } | GrowthFamily::LlLambda { p } => p,
    };
    let mut rows = Vec::new();
    let mut reliable = true;
    for &n in grid {
        let (value, ok) = family.value(n, opts)?;
        reliable &= ok;
        rows.push(GrowthRow { n, p, value });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let slope = loglog_slope(&xs, &ys);
    let predicted = family.predicted_slope();
    Ok(GrowthReport {
        family,
        rows,
        slope,
        predicted,
        tolerance,
        reliable,
        pass: reliable && (slope - predicted).abs() <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use proptest::prelude::*;

    fn seq(xs: Vec<Operator>) -> OperatorSequence {
        OperatorSequence::new(xs).unwrap()
    }

    #[test]
    fn single_positive_term_is_its_own_envelope() {
        let mut r = random::rng(3);
        let a = Algebra::new(vec![crate::Block { dim: 3, weight: 0.5 }, crate::Block { dim: 2, weight: 2.0 }]).unwrap();
        let x = random::random_psd(&mut r, &a);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let prob = EnvelopeProblem::new(EnvelopeKind::Positive, seq(vec![x.clone()]), p).unwrap();
            let sol = solve_envelope(&prob, &SolverOptions::default()).unwrap();
            assert!(sol.converged, "p = {p}");
            assert!((sol.value - x.lp_norm(p)).abs() <= 1e-5 * x.lp_norm(p), "p = {p}: {} vs {}", sol.value, x.lp_norm(p));
            assert!(sol.feasibility >= -1e-10);
        }
    }

    #[test]
    fn infinite_p_is_max_norm() {
        let mut r = random::rng(5);
        let a = Algebra::matrix(3, 1.0);
        let xs: Vec<Operator> = (0..4).map(|_| random::random_psd(&mut r, &a)).collect();
        let top = xs.iter().map(Operator::norm).fold(0.0, f64::max);
        let prob = EnvelopeProblem::new(EnvelopeKind::Positive, seq(xs), f64::INFINITY).unwrap();
        let sol = solve_envelope(&prob, &SolverOptions::default()).unwrap();
        assert!((sol.value - top).abs() < 1e-12);
    }

    #[test]
    fn flip_has_identity_envelope() {
        // −A ⪯ T ⪯ A with T = e12 + e21 forces A11 A22 ≥ 1; A = 1 is optimal.
        let a = Algebra::matrix(2, 1.0);
        let t = &Operator::unit(&a, 0, 0, 1) + &Operator::unit(&a, 0, 1, 0);
        let prob = EnvelopeProblem::new(EnvelopeKind::SelfAdjoint, seq(vec![t]), 2.0).unwrap();
        let sol = solve_envelope(&prob, &SolverOptions { tol: 1e-8, ..Default::default() }).unwrap();
        assert!((sol.value - 2f64.sqrt()).abs() < 1e-6, "{}", sol.value);
        assert!((&sol.optimum - &Operator::identity(&a)).norm() < 1e-3);
        // brute force over diagonal A = diag(s, 1/s)
        let brute = (1..4000).map(|i| i as f64 / 1000.0).map(|s| (s * s + 1.0 / (s * s)).sqrt()).fold(f64::INFINITY, f64::min);
        assert!((sol.value - brute).abs() < 1e-5);
    }

    #[test]
    fn column_kind_rejects_small_p() {
        let a = Algebra::matrix(2, 1.0);
        let s = seq(vec![Operator::identity(&a)]);
        assert!(EnvelopeProblem::new(EnvelopeKind::Column, s.clone(), 1.5).is_err());
        assert!(EnvelopeProblem::new(EnvelopeKind::Positive, seq(vec![-&Operator::identity(&a)]), 2.0).is_err());
    }

    #[test]
    fn commuting_positive_terms_have_pointwise_max() {
        let a = Algebra::diagonal(&[1.0, 2.0, 0.5]).unwrap();
        let xs = vec![
            Operator::from_diagonal(&a, &[3.0, 0.0, 1.0]).unwrap(),
            Operator::from_diagonal(&a, &[1.0, 2.0, 0.0]).unwrap(),
        ];
        let prob = EnvelopeProblem::new(EnvelopeKind::Positive, seq(xs), 2.0).unwrap();
        let sol = solve_envelope(&prob, &SolverOptions::default()).unwrap();
        let want = (9.0 + 2.0 * 4.0 + 0.5 * 1.0f64).sqrt();
        assert!((sol.value - want).abs() < 1e-5 * want);
    }

    #[test]
    fn diagonal_examples() {
        let one = solve_diagonal(&DiagonalEnvelopeProblem { weights: vec![3.0], alpha: vec![0.7], p: 2.5, form: DiagonalForm::Column }).unwrap();
        assert!((one.d[0] - 0.7).abs() < 1e-14);
        assert!((one.objective - 3f64.powf(1.0 / 2.5) * 0.7).abs() < 1e-14);
        let two = solve_diagonal(&DiagonalEnvelopeProblem { weights: vec![1.0, 1.0], alpha: vec![1.0, 1.0], p: 2.0, form: DiagonalForm::Column }).unwrap();
        assert!(two.d.iter().all(|d| (d - 2f64.sqrt()).abs() < 1e-14));
        assert!((two.objective - 2.0).abs() < 1e-14);
        let zero = solve_diagonal(&DiagonalEnvelopeProblem { weights: vec![1.0], alpha: vec![0.0], p: 2.0, form: DiagonalForm::Column }).unwrap();
        assert_eq!(zero.objective, 0.0);
    }

    #[test]
    fn diagonal_matches_brute_force() {
        let w = [1.0, 2.0];
        let al = [1.0, 0.5];
        let closed = solve_diagonal(&DiagonalEnvelopeProblem { weights: w.to_vec(), alpha: al.to_vec(), p: 2.0, form: DiagonalForm::Column }).unwrap();
        // brute force over d1 on the active constraint
        let brute = (1..200_000)
            .map(|i| 1.0 + i as f64 * 1e-4)
            .filter_map(|d1: f64| {
                let rest = 1.0 - al[0] * al[0] / (d1 * d1);
                (rest > 0.0).then(|| {
                    let d2 = al[1] / rest.sqrt();
                    (w[0] * d1.powi(2) + w[1] * d2.powi(2)).sqrt()
                })
            })
            .fold(f64::INFINITY, f64::min);
        assert!((closed.objective - brute).abs() < 1e-6, "{} vs {brute}", closed.objective);
    }

    #[test]
    fn loglog_fit() {
        let xs = [4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.75)).collect();
        assert!((loglog_slope(&xs, &ys) - 0.75).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn solution_is_feasible_and_certified(seed in any::<u64>(), p in 1.0f64..4.0) {
            let mut r = random::rng(seed);
            let a = random::random_algebra_of_dim(&mut r, 4);
            let xs: Vec<Operator> = (0..3).map(|_| random::random_psd(&mut r, &a)).collect();
            let prob = EnvelopeProblem::new(EnvelopeKind::Positive, seq(xs.clone()), p).unwrap();
            let sol = solve_envelope(&prob, &SolverOptions { tol: 1e-5, ..Default::default() }).unwrap();
            prop_assert!(sol.feasibility >= -1e-9 * sol.optimum.norm());
            prop_assert!(sol.lower_bound <= sol.value * (1.0 + 1e-12));
            prop_assert!(sol.value >= xs.iter().map(|x| x.lp_norm(p)).fold(0.0, f64::max) * (1.0 - 1e-9));
            // removing a constraint cannot increase the certified lower bound past the value
            let fewer = EnvelopeProblem::new(EnvelopeKind::Positive, seq(xs[..2].to_vec()), p).unwrap();
            let sol2 = solve_envelope(&fewer, &SolverOptions { tol: 1e-5, ..Default::default() }).unwrap();
            prop_assert!(sol2.lower_bound <= sol.value * (1.0 + 1e-9));
        }
    }
}
