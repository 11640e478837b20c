//! Cross-module invariants on random instances.

use ncmax::algebra::{Algebra, Operator, EPS_NUM};
use ncmax::envelope::{
    solve_diagonal, solve_envelope, DiagonalEnvelopeProblem, DiagonalForm, EnvelopeKind, EnvelopeProblem,
    SolverOptions,
};
use ncmax::lambda::{lambda_norm, Method, Mode, OperatorSequence};
use ncmax::random;
use proptest::prelude::*;

fn small_algebra(seed: u64) -> (random::NcRng, Algebra) {
    let mut r = random::rng(seed);
    let a = random::random_algebra(&mut r, 3, 4);
    (r, a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_is_tracial(seed in any::<u64>()) {
        let (mut r, a) = small_algebra(seed);
        let x = random::random_operator(&mut r, &a);
        let y = random::random_operator(&mut r, &a);
        let d = ((&x * &y).trace() - (&y * &x).trace()).norm();
        prop_assert!(d <= EPS_NUM * x.norm() * y.norm() * a.total_trace());
    }

    #[test]
    fn identity_calculus_and_composition(seed in any::<u64>()) {
        let (mut r, a) = small_algebra(seed);
        let h = random::random_hermitian(&mut r, &a);
        let same = h.functional_calculus(|v| v).unwrap();
        prop_assert!((&same - &h).norm() <= EPS_NUM * h.norm().max(1.0));
        // exp then ln equals the identity; both sides commute with h
        let e = h.functional_calculus(f64::exp).unwrap();
        let back = e.functional_calculus(f64::ln).unwrap();
        prop_assert!((&back - &h).norm() <= 1e-8 * h.norm().max(1.0));
        let sq = &h * &h;
        let via = h.functional_calculus(|v| v * v).unwrap();
        prop_assert!((&sq - &via).norm() <= 1e-10 * sq.norm().max(1.0));
    }

    #[test]
    fn polar_triple(seed in any::<u64>()) {
        let (mut r, a) = small_algebra(seed);
        let x = random::random_operator(&mut r, &a);
        let p = x.polar_and_pinv(1e-12);
        prop_assert!((&(&p.isometry * &p.modulus) - &x).norm() <= EPS_NUM * x.norm());
        prop_assert!(p.isometry.norm() <= 1.0 + EPS_NUM);
    }

    #[test]
    fn lambda_is_below_twice_the_envelope(seed in any::<u64>(), pi in 0usize..3) {
        let p = [1.0, 2.0, 3.0][pi];
        let mut r = random::rng(seed);
        let a = random::random_algebra_of_dim(&mut r, 4);
        let xs: Vec<Operator> = (0..3).map(|_| random::random_psd(&mut r, &a)).collect();
        let seq = OperatorSequence::new(xs).unwrap();
        let env = solve_envelope(&EnvelopeProblem::new(EnvelopeKind::Positive, seq.clone(), p).unwrap(), &SolverOptions::default()).unwrap();
        let lam = lambda_norm(&seq, p, p, Mode::Plain, Method::Spectral).unwrap();
        prop_assert!(lam.value <= 2f64.powf(1.0 / p) * env.value * (1.0 + 1e-6), "{} vs {}", lam.value, env.value);
    }

    #[test]
    fn envelope_monotone_in_constraints(seed in any::<u64>()) {
        let mut r = random::rng(seed);
        let a = random::random_algebra_of_dim(&mut r, 4);
        let xs: Vec<Operator> = (0..3).map(|_| random::random_psd(&mut r, &a)).collect();
        let opts = SolverOptions::default();
        let full = OperatorSequence::new(xs.clone()).unwrap();
        let fewer = OperatorSequence::new(xs[..2].to_vec()).unwrap();
        let v_full = solve_envelope(&EnvelopeProblem::new(EnvelopeKind::Positive, full, 2.0).unwrap(), &opts).unwrap();
        let v_few = solve_envelope(&EnvelopeProblem::new(EnvelopeKind::Positive, fewer, 2.0).unwrap(), &opts).unwrap();
        // certified bounds bracket both optima
        prop_assert!(v_few.lower_bound <= v_full.value * (1.0 + 1e-9));
    }
}

/// The solver reproduces the diagonal closed form on instances where the
/// minimizer is block-scalar: `x_i = α_i² q_i` with orthogonal `q_i`.
#[test]
fn solver_matches_diagonal_closed_form() {
    let dims = [1usize, 2, 3];
    let w: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
    let alpha = [0.9, 0.6, 0.3];
    let a = Algebra::diagonal(&vec![1.0; 6]).unwrap();
    let mut start = 0;
    let mut xs = Vec::new();
    for (i, &d) in dims.iter().enumerate() {
        let mut v = vec![0.0; 6];
        for k in start..start + d {
            v[k] = alpha[i] * alpha[i];
        }
        start += d;
        xs.push(Operator::from_diagonal(&a, &v).unwrap());
    }
    let seq = OperatorSequence::new(xs).unwrap();
    for p in [1.5, 2.0, 3.0] {
        let sol = solve_envelope(&EnvelopeProblem::new(EnvelopeKind::Positive, seq.clone(), p).unwrap(), &SolverOptions::default()).unwrap();
        // commuting terms: a = max_i x_i, so the value is (Σ_i d_i α_i^{2p})^{1/p}
        let direct = w.iter().zip(&alpha).map(|(d, al)| d * al.powf(2.0 * p)).sum::<f64>().powf(1.0 / p);
        assert!((sol.value - direct).abs() <= 1e-5 * direct, "p = {p}: {} vs {direct}", sol.value);
    }
    // the closed form with a single constraint per block reduces to the same number
    let one = solve_diagonal(&DiagonalEnvelopeProblem { weights: vec![2.0], alpha: vec![0.5], p: 2.0, form: DiagonalForm::Column }).unwrap();
    assert!((one.objective - 2f64.sqrt() * 0.5).abs() < 1e-14);
}
