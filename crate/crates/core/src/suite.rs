//! The acceptance criteria as runnable checks, shared by `ncmax verify` and
//! the acceptance test binary.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::algebra::{Algebra, Mat, Operator, Projection, C64};
use crate::dyadic::{dyadic_decompose, verify_dyadic_bounds};
use crate::envelope::{
    loglog_slope, solve_diagonal, solve_envelope, verify_counterexample_growth, DiagonalEnvelopeProblem, DiagonalForm,
    EnvelopeKind, EnvelopeProblem, GrowthFamily, SolverOptions,
};
use crate::error::{NcError, Result};
use crate::facto::diag_majorant;
use crate::families;
use crate::lambda::{k_functional, mu_seq, Method, Mode, OperatorSequence};
use crate::marcin::{
    asymmetric_factorization, doob_uniform_majorant, marcinkiewicz_majorant, row_column_majorant, InterpolationParams,
    WeightKind,
};
use crate::oracle::{cuculescu, Filtration, MapFamily, WeakTypeOracle};
use crate::random::{self, NcRng};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Relative gap for the envelope solver.
    pub tol: f64,
    /// Dyadic truncation.
    pub trunc: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: 2024, tol: 1e-6, trunc: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    pub metrics: Value,
    #[serde(skip)]
    pub elapsed: Duration,
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "diagonal majorization certificate"),
    (2, "dyadic step-function bounds"),
    (3, "Cuculescu weak (1,1)"),
    (4, "Doob majorant, explicit constant"),
    (5, "p-independent Doob majorant"),
    (6, "asymmetric factorization and noasym probe"),
    (7, "non-positive family: envelope growth, row+column bound"),
    (8, "Lambda vs strong norm separation"),
    (9, "K-functional sandwich"),
    (10, "quasi-triangle inequality"),
    (11, "optimality probe"),
];

/// `core` (criteria 1–2: step functions, dyadic pieces, diagonal
/// majorization), `all`, or a comma list of criterion numbers.
pub fn suite_ids(suite: &str) -> Result<Vec<u8>> {
    match suite {
        "core" => Ok(vec![1, 2]),
        "all" | "acceptance" => Ok((1..=11).collect()),
        list => list
            .split(',')
            .map(|s| match s.trim().parse::<u8>() {
                Ok(k) if (1..=11).contains(&k) => Ok(k),
                _ => Err(NcError::invalid("suite", format!("unknown suite or criterion {s:?}"))),
            })
            .collect(),
    }
}

pub fn run(id: u8, cfg: &SuiteConfig) -> Outcome {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
    let start = Instant::now();
    let res = match id {
        1 => diagonal_certificate(cfg),
        2 => dyadic_bounds(cfg),
        3 => cuculescu_weak(cfg),
        4 => doob_constant(cfg),
        5 => doob_uniform(cfg),
        6 => asymmetric(cfg),
        7 => nonpositive(cfg),
        8 => separation(cfg),
        9 => k_sandwich(cfg),
        10 => quasi_triangle(cfg),
        11 => optimality(cfg),
        _ => Err(NcError::invalid("criterion", format!("{id} is not in 1..=11"))),
    };
    let (pass, summary, metrics) = match res {
        Ok(c) => c,
        Err(e) => (false, format!("error: {e}"), Value::Null),
    };
    Outcome { id, name, pass, summary, metrics, elapsed: start.elapsed() }
}

type Check = Result<(bool, String, Value)>;

fn rng_for(cfg: &SuiteConfig, id: u64) -> NcRng {
    random::rng(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(id))
}

/// Random mutually orthogonal projections, not necessarily summing to 1.
fn random_partition(rng: &mut NcRng, a: &Algebra) -> Vec<Projection> {
    let k = rng.random_range(1..=a.total_dim().min(5));
    let mut blocks: Vec<Vec<Mat>> = vec![Vec::new(); k];
    for blk in a.blocks() {
        let u = random::haar_unitary(rng, blk.dim);
        let mut parts = vec![Mat::zeros(blk.dim, blk.dim); k];
        for c in 0..blk.dim {
            // about one column in six is left out of every q_k
            let g = rng.random_range(0..k + 1);
            if g < k {
                let col = u.column(c);
                parts[g] += &col * col.adjoint();
            }
        }
        for (g, m) in parts.into_iter().enumerate() {
            blocks[g].push(m);
        }
    }
    blocks
        .into_iter()
        .map(|b| Projection::new_unchecked(Operator::from_blocks(a, b).expect("block shapes")))
        .filter(|q| q.tau() > 0.0)
        .collect()
}

fn diagonal_certificate(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 1);
    let mut worst = f64::INFINITY;
    let mut count = 0;
    while count < 500 {
        let d = 2 + count % 15;
        let a = random::random_algebra_of_dim(&mut rng, d);
        let q = random_partition(&mut rng, &a);
        if q.is_empty() {
            continue;
        }
        let x = random::random_psd(&mut rng, &a);
        let w: Vec<f64> = q.iter().map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
        let m = diag_majorant(&x, &q, &w)?;
        worst = worst.min(m.lambda_min / x.norm());
        count += 1;
    }
    let pass = worst >= -1e-8;
    Ok((pass, format!("{count} instances, min λ_min/‖x‖ = {worst:.3e}"), json!({"instances": count, "min_relative_lambda": worst})))
}

fn dyadic_bounds(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 2);
    let mut worst = [0.0f64; 3];
    let alphas = [0.5, 1.0, 2.0];
    let mut pass = true;
    for _ in 0..200 {
        let a = random::random_algebra(&mut rng, 3, 5);
        let x = random::random_psd(&mut rng, &a).scale(10f64.powf(rng.random_range(-3.0..3.0)));
        let d = dyadic_decompose(&x, 2.0, cfg.trunc.min(1e-8) * x.norm())?;
        for (i, &al) in alphas.iter().enumerate() {
            let r = verify_dyadic_bounds(&d, al, 1e-10);
            pass &= r.pass;
            worst[i] = worst[i].max(r.ratio / r.constant);
        }
    }
    Ok((
        pass,
        format!("200 operators, worst ratio/constant = {:.4} / {:.4} / {:.4} for α = 0.5, 1, 2", worst[0], worst[1], worst[2]),
        json!({"operators": 200, "alpha": alphas, "worst_ratio_over_constant": worst}),
    ))
}

fn cuculescu_weak(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 3);
    let mut trace_slack = f64::INFINITY;
    let mut norm_excess: f64 = 0.0;
    let mut pass = true;
    for _ in 0..100 {
        let d = rng.random_range(2..=32);
        let a = random::random_algebra_of_dim(&mut rng, d);
        let depth = rng.random_range(1..=6);
        let f = Filtration::random(&mut rng, &a, depth);
        let x = random::random_psd(&mut rng, &a);
        let lambda = x.norm() * rng.random_range(0.02..1.2);
        let c = cuculescu(&f, &x, lambda)?;
        let budget = x.trace().re / lambda;
        let miss = c.q.complement().tau();
        // traces of complementary projections are sums in a different order
        pass &= miss <= budget * (1.0 + 1e-12);
        trace_slack = trace_slack.min(budget - miss);
        for n in 0..f.depth() {
            let v = f.conditional_expectation(n, &x)?.compress(&c.q).norm();
            pass &= v <= lambda * (1.0 + 1e-8);
            norm_excess = norm_excess.max(v / lambda - 1.0);
        }
    }
    Ok((
        pass,
        format!("100 instances, min (‖x‖₁/λ − τ(1−q)) = {trace_slack:.3e}, max ‖qE_n(x)q‖/λ − 1 = {norm_excess:.3e}"),
        json!({"instances": 100, "min_trace_slack": trace_slack, "max_norm_excess": norm_excess}),
    ))
}

fn random_doob(rng: &mut NcRng, dim: usize, depth: usize) -> (Filtration, MapFamily, WeakTypeOracle, WeakTypeOracle) {
    let a = random::random_algebra_of_dim(rng, dim);
    let f = Filtration::random(rng, &a, depth);
    let s = MapFamily::doob(&f);
    let o0 = WeakTypeOracle::cuculescu(&f);
    let o1 = WeakTypeOracle::uniform(&a, 1.0);
    (f, s, o0, o1)
}

/// `8(1/(1−2^{(1/p−1)/2}) + 1)²`.
pub fn doob_geometric_constant(p: f64) -> f64 {
    8.0 * (1.0 / (1.0 - 2f64.powf((1.0 / p - 1.0) / 2.0)) + 1.0).powi(2)
}

fn doob_constant(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 4);
    let mut rows = Vec::new();
    let mut pass = true;
    for p in [1.5, 2.0, 3.0] {
        let bound = doob_geometric_constant(p);
        let params = InterpolationParams::new(1.0, f64::INFINITY, p)?;
        let mut worst_ratio: f64 = 0.0;
        let mut worst_res = f64::INFINITY;
        for i in 0..8 {
            let (_, s, o0, o1) = random_doob(&mut rng, 4 + 2 * i, 2 + i % 3);
            let x = random::random_psd(&mut rng, &s.source);
            let c = marcinkiewicz_majorant(&s, &o0, &o1, &x, &params, WeightKind::Geometric, cfg.trunc)?;
            let zn = c.z.norm().max(f64::MIN_POSITIVE);
            let res = c.residuals.iter().copied().fold(f64::INFINITY, f64::min) / zn;
            pass &= c.norm_ratio <= bound && res >= -1e-8 && c.within_bound;
            worst_ratio = worst_ratio.max(c.norm_ratio);
            worst_res = worst_res.min(res);
        }
        rows.push(json!({"p": p, "bound": bound, "max_ratio": worst_ratio, "min_relative_residual": worst_res}));
    }
    let summary = rows
        .iter()
        .map(|r| format!("p={}: ratio {:.2} ≤ {:.1}", r["p"], r["max_ratio"].as_f64().unwrap_or(f64::NAN), r["bound"].as_f64().unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((pass, summary, Value::Array(rows)))
}

fn doob_uniform(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 5);
    let qs = [1.25, 1.5, 2.0, 4.0];
    let mut pass = true;
    let mut rows = Vec::new();
    for i in 0..6 {
        let (f, _, _, _) = random_doob(&mut rng, 6 + i, 3 + i % 2);
        let x = random::random_psd(&mut rng, f.algebra());
        let u = doob_uniform_majorant(&f, &x, &qs, cfg.trunc)?;
        let zn = u.certificate.z.norm();
        let dominates = u.certificate.residuals.iter().all(|&r| r >= -1e-8 * zn);
        let ratios: Vec<f64> = u.ratios.iter().map(|r| r.ratio).collect();
        let finite = u.ratios.iter().all(|r| r.ratio.is_finite() && r.pass);
        let monotone = ratios.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let xs: Vec<f64> = qs.iter().map(|q| q - 1.0).collect();
        let slope = loglog_slope(&xs, &ratios);
        let env: Vec<f64> = u.ratios.iter().map(|r| r.ratio / r.envelope).collect();
        pass &= dominates && finite && monotone;
        rows.push(json!({"ratios": ratios, "ratio_over_envelope": env, "slope": slope, "dominates": dominates, "monotone": monotone}));
    }
    let slopes: Vec<f64> = rows.iter().filter_map(|r| r["slope"].as_f64()).collect();
    let s_max = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        pass,
        format!("6 instances dominate with finite, nonincreasing ratios; reported log-ratio slope vs ln(q−1) ≤ {s_max:.3} (desk-scale target −1.8 not asserted)"),
        Value::Array(rows),
    ))
}

fn asymmetric(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 6);
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (i, gamma) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let p = 2.5;
        let params = InterpolationParams::new(1.0, f64::INFINITY, p)?;
        for j in 0..3 {
            let (_, s, o0, o1) = random_doob(&mut rng, 6 + 2 * j, 3);
            let x = if (i + j) % 2 == 0 { random::random_psd(&mut rng, &s.source) } else { random::random_operator(&mut rng, &s.source) };
            // the residual includes the dyadic truncation, so truncate well below 1e-8
            let f = asymmetric_factorization(&s, &o0, &o1, &x, &params, gamma, cfg.trunc.min(1e-10) * x.norm())?;
            let rel = f.residual / x.norm();
            pass &= rel <= 1e-8;
            worst = worst.max(rel);
        }
    }
    // outside the region the construction must refuse
    let (_, s, o0, o1) = random_doob(&mut rng, 4, 2);
    let x = random::random_psd(&mut rng, &s.source);
    let low = InterpolationParams::new(1.0, f64::INFINITY, 1.2)?;
    let refused = matches!(asymmetric_factorization(&s, &o0, &o1, &x, &low, 0.7, cfg.trunc), Err(NcError::ParameterRegion(_)));
    let grid = [16, 32, 64, 128, 256];
    let probe = families::noasym_probe(&grid, 0.7, 2.0, cfg.trunc)?;
    pass &= refused && probe.pass;
    Ok((
        pass,
        format!(
            "max residual/‖x‖ = {worst:.2e}; noasym slope vs ln N = {:.2} ≥ 0.9·c = {:.3} on N = 16..256",
            probe.slope,
            0.9 * probe.min_c
        ),
        json!({"max_relative_residual": worst, "refused_outside_region": refused, "noasym": probe}),
    ))
}

fn nonpositive(cfg: &SuiteConfig) -> Check {
    let opts = SolverOptions { tol: cfg.tol, ..SolverOptions::default() };
    // τ(A²) = 2√(N−1) has local slope N/(N−1) against √N, so start at 8
    let grid = [8usize, 16, 32];
    let p = 2.0;
    let report = verify_counterexample_growth(GrowthFamily::Nonpos { p }, &grid, 0.05, &opts)?;
    let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).powf(1.0 / p)).collect();
    let ys: Vec<f64> = report.rows.iter().map(|r| r.value.powf(p)).collect();
    let slope = loglog_slope(&xs, &ys);
    // τ(A²) = a² + (N−1)/a² over diagonal A with A₁₁A_nn ≥ 1, minimized at a⁴ = N−1
    let oracle_err = report
        .rows
        .iter()
        .map(|r| (r.value.powi(2) / (2.0 * ((r.n - 1) as f64).sqrt()) - 1.0).abs())
        .fold(0.0, f64::max);
    let mut rc_worst: f64 = 0.0;
    let mut rc_bound: f64 = 0.0;
    let mut rc_res: f64 = 0.0;
    for &n in &grid {
        let fam = families::gen_nonpositive(n)?;
        let (o0, o1) = families::scalar_family_oracles(n);
        let params = InterpolationParams::new(1.0, f64::INFINITY, p)?;
        let one = Projection::one(&fam.source);
        let c = row_column_majorant(&fam, &o0, &o1, &one, &params)?;
        rc_worst = rc_worst.max(c.u_norm.max(c.v_norm));
        rc_bound = rc_bound.max(c.bound);
        rc_res = rc_res.max(c.residual);
    }
    let pass = report.reliable && (slope - 1.0).abs() <= 0.1 && oracle_err <= 10.0 * cfg.tol.max(1e-6) && rc_worst <= rc_bound * (1.0 + 1e-8) && rc_res <= 1e-8;
    Ok((
        pass,
        format!(
            "slope of τ(A²) vs N^(1/2) = {slope:.3}; max |τ(A²)/2√(N−1) − 1| = {oracle_err:.1e}; max ‖u_n‖,‖v_n‖ = {rc_worst:.3} ≤ {rc_bound:.3}"
        ),
        json!({"growth": report, "slope_vs_n_1_over_p": slope, "oracle_error": oracle_err, "row_column_norm": rc_worst, "row_column_bound": rc_bound, "row_column_residual": rc_res}),
    ))
}

fn separation(cfg: &SuiteConfig) -> Check {
    let p = 4.0;
    let grid = [4usize, 8, 16, 32];
    let opts = SolverOptions { tol: cfg.tol, ..SolverOptions::default() };
    let col = verify_counterexample_growth(GrowthFamily::LlColumn { p }, &grid, 0.1, &opts)?;
    let lam = verify_counterexample_growth(GrowthFamily::LlLambda { p }, &grid, 0.1, &opts)?;
    let direct: Vec<f64> = grid.iter().map(|&n| families::ll_lambda_direct(n, p)).collect();
    let direct_slope = loglog_slope(&grid.iter().map(|&n| n as f64).collect::<Vec<_>>(), &direct);
    let n = 4;
    let closed = solve_diagonal(&families::ll_diagonal_problem(n, p))?.objective;
    let mut sampled = Vec::new();
    for samples in [4usize, 16, 64] {
        let inst = families::gen_ll(n, p, samples, cfg.seed)?;
        let prob = EnvelopeProblem::new(EnvelopeKind::Column, inst.sequence, p)?;
        let sol = solve_envelope(&prob, &opts)?;
        sampled.push(json!({"samples": samples, "value": sol.value, "lower_bound": sol.lower_bound, "ratio": sol.value / closed}));
    }
    let last = sampled.last().and_then(|s| s["ratio"].as_f64()).unwrap_or(0.0);
    let pass = col.slope >= 0.65 && lam.slope <= 0.35 && (last - 1.0).abs() <= 0.1;
    Ok((
        pass,
        format!(
            "column slope {:.3} ≥ 0.65, Λ estimate slope {:.3} ≤ 0.35 (direct cut value {direct_slope:.3}, reported); sampled/closed at N=4, 64 samples = {last:.4}",
            col.slope, lam.slope
        ),
        json!({"column": col, "lambda": lam, "direct": direct, "direct_slope": direct_slope, "sampled": sampled, "closed_form": closed}),
    ))
}

/// Commutative `ℂ^d` with random weights, where every projection is a
/// coordinate subset and the exhaustive search is exact.
fn commutative_sequence(rng: &mut NcRng, d: usize, len: usize) -> Result<OperatorSequence> {
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.25..2.0)).collect();
    let a = Algebra::diagonal(&w)?;
    let terms = (0..len)
        .map(|_| {
            let v: Vec<C64> = (0..d).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            Operator::from_blocks(&a, v.into_iter().map(|z| Mat::from_element(1, 1, z)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    OperatorSequence::new(terms)
}

fn k_sandwich(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 9);
    let mut worst: f64 = 0.0;
    let mut ordered = true;
    for i in 0..50 {
        let d = 2 + i % 5;
        let x = commutative_sequence(&mut rng, d, 3)?;
        let t = 10f64.powf(rng.random_range(-1.0..1.0));
        let mode = if i % 2 == 0 { Mode::Column } else { Mode::Plain };
        let k = k_functional(&x, t, 2.0, mode, Method::Exhaustive)?;
        ordered &= k.lower <= k.upper * (1.0 + 1e-12);
        worst = worst.max(k.ratio);
    }
    let pass = ordered && worst <= 8.0;
    Ok((pass, format!("50 instances, lower ≤ upper, max upper/lower = {worst:.3} ≤ 8"), json!({"instances": 50, "max_ratio": worst})))
}

fn quasi_triangle(cfg: &SuiteConfig) -> Check {
    let mut rng = rng_for(cfg, 10);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        let d = 2 + i % 5;
        let x = commutative_sequence(&mut rng, d, 2)?;
        let y = commutative_sequence(&mut rng, d, 2)?;
        // same algebra for both: rebuild y on x's weights
        let y = OperatorSequence::new(
            y.terms().iter().map(|t| Operator::from_blocks(x.algebra(), t.blocks().to_vec())).collect::<Result<Vec<_>>>()?,
        )?;
        let xy = x.checked_add(&y)?;
        let total = x.algebra().total_trace();
        let (t, s) = (rng.random_range(0.0..total), rng.random_range(0.0..total));
        for mode in [Mode::Plain, Mode::Column, Mode::Row] {
            let lhs = mu_seq(&xy, t + s, mode, Method::Exhaustive)?.value;
            let rhs = mu_seq(&x, t, mode, Method::Exhaustive)?.value + mu_seq(&y, s, mode, Method::Exhaustive)?.value;
            worst = worst.max(lhs - rhs);
            if lhs > rhs + 1e-10 {
                violations += 1;
            }
        }
    }
    Ok((
        violations == 0,
        format!("100 pairs × 3 modes, {violations} violations, max μ(x+y, t+s) − μ(x,t) − μ(y,s) = {worst:.3e}"),
        json!({"pairs": 100, "violations": violations, "max_excess": worst}),
    ))
}

fn optimality(_cfg: &SuiteConfig) -> Check {
    let ps: [f64; 4] = [1.05, 1.1, 1.2, 1.4];
    let mut col = Vec::new();
    let mut pos = Vec::new();
    let mut ns = Vec::new();
    for &p in &ps {
        let n = (2.0 / (p - 1.0)).ceil() as usize;
        let mut prob: DiagonalEnvelopeProblem = families::opti_problem(n, p);
        pos.push(solve_diagonal(&prob)?.objective);
        prob.form = DiagonalForm::Column;
        col.push(solve_diagonal(&prob)?.objective);
        ns.push(n);
    }
    let xs: Vec<f64> = ps.iter().map(|p| 1.0 / (p - 1.0)).collect();
    let col_slope = loglog_slope(&xs, &col);
    let pos_slope = loglog_slope(&xs, &pos);
    Ok((
        col_slope > 2.05,
        format!("column-form exponent {col_slope:.3} > 2.05 (positive form {pos_slope:.3}, reported)"),
        json!({"p": ps, "N": ns, "column": col, "positive": pos, "column_exponent": col_slope, "positive_exponent": pos_slope}),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        assert_eq!(suite_ids("core").unwrap(), vec![1, 2]);
        assert_eq!(suite_ids("all").unwrap().len(), 11);
        assert_eq!(suite_ids("3, 10").unwrap(), vec![3, 10]);
        assert!(suite_ids("12").is_err());
        assert!(suite_ids("fast").is_err());
    }

    #[test]
    fn partitions_are_orthogonal() {
        let mut r = random::rng(1);
        for _ in 0..20 {
            let a = random::random_algebra_of_dim(&mut r, 7);
            let q = random_partition(&mut r, &a);
            assert!(crate::facto::check_disjoint(&q).is_ok());
            assert!(q.iter().map(Projection::tau).sum::<f64>() <= a.total_trace() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_at_two() {
        assert!((doob_geometric_constant(2.0) - 424.5947).abs() < 1e-3);
    }
}
