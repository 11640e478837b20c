//! Nonincreasing right-continuous step functions on `(0, ∞)`: singular value
//! functions, Lorentz quasi-norms, Hardy–Littlewood majorization and dilations.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::{Operator, EPS_NUM};
use crate::error::{NcError, Result};

/// Values closer than this (relative) are merged in normal form.
const MERGE_REL: f64 = 1e-14;

/// Pieces `(value, length)` with strictly decreasing positive values. The
/// function is zero after the last piece; only the last piece may have
/// infinite length.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StepFunction {
    pieces: Vec<(f64, f64)>,
}

impl StepFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `c·1_{[0,len)}`.
    pub fn indicator(len: f64, c: f64) -> Self {
        Self::from_pieces(vec![(c, len)]).expect("valid indicator")
    }

    /// Validates and normalizes pieces. Input must already be nonincreasing.
    pub fn from_pieces(pieces: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(v, l)) in pieces.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(NcError::invalid(format!("pieces[{i}].value"), "must be finite and >= 0"));
            }
            if l.is_nan() || l < 0.0 {
                return Err(NcError::invalid(format!("pieces[{i}].length"), "must be >= 0"));
            }
            if l.is_infinite() && i + 1 != pieces.len() {
                return Err(NcError::invalid(format!("pieces[{i}].length"), "only the last piece may be infinite"));
            }
            if i > 0 && v > pieces[i - 1].0 {
                return Err(NcError::invalid(format!("pieces[{i}].value"), "values must be nonincreasing"));
            }
        }
        Ok(Self::normalize(pieces))
    }

    /// Decreasing rearrangement of arbitrary `(value, length)` pieces.
    pub fn rearrange(mut pieces: Vec<(f64, f64)>) -> Self {
        pieces.retain(|&(v, l)| v > 0.0 && l > 0.0);
        pieces.sort_by(|a, b| b.0.total_cmp(&a.0));
        if let Some(pos) = pieces.iter().position(|p| p.1.is_infinite()) {
            pieces.truncate(pos + 1);
        }
        Self::normalize(pieces)
    }

    fn normalize(pieces: Vec<(f64, f64)>) -> Self {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (v, l) in pieces {
            if v <= 0.0 || l <= 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if (last.0 - v).abs() <= MERGE_REL * last.0 => last.1 += l,
                _ => out.push((v, l)),
            }
            if l.is_infinite() {
                break;
            }
        }
        Self { pieces: out }
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Length of the support `{f > 0}`.
    pub fn support_len(&self) -> f64 {
        self.pieces.iter().map(|p| p.1).sum()
    }

    pub fn sup(&self) -> f64 {
        self.pieces.first().map_or(0.0, |p| p.0)
    }

    /// Right endpoints of the pieces (the last may be `∞`).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.pieces
            .iter()
            .map(|&(_, l)| {
                acc += l;
                acc
            })
            .collect()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, l) in &self.pieces {
            acc += l;
            if t < acc {
                return v;
            }
        }
        0.0
    }

    /// `∫₀^t f`.
    pub fn primitive(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut total = 0.0;
        for &(v, l) in &self.pieces {
            if t <= acc + l {
                return total + v * (t - acc).max(0.0);
            }
            acc += l;
            total += v * l;
        }
        total
    }

    /// Value on the final unbounded stretch.
    fn tail_value(&self) -> f64 {
        match self.pieces.last() {
            Some(&(v, l)) if l.is_infinite() => v,
            _ => 0.0,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite());
        Self::normalize(self.pieces.iter().map(|&(v, l)| (v * c, l)).collect())
    }

    /// `f^α` for `α > 0`.
    pub fn powf(&self, alpha: f64) -> Self {
        Self::normalize(self.pieces.iter().map(|&(v, l)| (v.powf(alpha), l)).collect())
    }

    /// `D_s f(t) = f(t/s)`.
    pub fn dilate(&self, s: f64) -> Self {
        assert!(s > 0.0 && s.is_finite(), "dilation factor must be positive");
        Self::normalize(self.pieces.iter().map(|&(v, l)| (v, l * s)).collect())
    }

    /// `(f − s)_+`.
    pub fn sub_clip(&self, s: f64) -> Self {
        Self::normalize(self.pieces.iter().map(|&(v, l)| ((v - s).max(0.0), l)).collect())
    }

    /// `min(f, s)`.
    pub fn clip(&self, s: f64) -> Self {
        Self::normalize(self.pieces.iter().map(|&(v, l)| (v.min(s), l)).collect())
    }

    /// `f·1_{[0,len)}`.
    pub fn restrict(&self, len: f64) -> Self {
        let mut acc = 0.0;
        let mut out = Vec::new();
        for &(v, l) in &self.pieces {
            if acc >= len {
                break;
            }
            out.push((v, l.min(len - acc)));
            acc += l;
        }
        Self::normalize(out)
    }

    /// Lorentz quasi-norm `‖f‖_{p,q}` in closed form; may return `∞`.
    pub fn lorentz_norm(&self, p: f64, q: f64) -> f64 {
        assert!(p > 0.0 && q > 0.0, "Lorentz exponents must be positive");
        if self.is_zero() {
            return 0.0;
        }
        if self.tail_value() > 0.0 && p.is_finite() {
            return f64::INFINITY;
        }
        if p.is_infinite() {
            return if q.is_infinite() { self.sup() } else { f64::INFINITY };
        }
        let mut a = 0.0;
        if q.is_infinite() {
            let mut best: f64 = 0.0;
            for &(v, l) in &self.pieces {
                a += l;
                best = best.max(v * a.powf(1.0 / p));
            }
            return best;
        }
        let r = q / p;
        let mut s = 0.0;
        for &(v, l) in &self.pieces {
            let b = a + l;
            s += v.powf(q) * (p / q) * (b.powf(r) - a.powf(r));
            a = b;
        }
        s.powf(1.0 / q)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lorentz_norm(p, p)
    }
}

/// Union of the finite breakpoints of several functions, sorted, with `0`.
fn union_breakpoints(fs: &[&StepFunction]) -> Vec<f64> {
    let mut pts = vec![0.0];
    for f in fs {
        pts.extend(f.breakpoints().into_iter().filter(|t| t.is_finite()));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `μ(x)`: singular values of every block, each carrying its block weight.
pub fn mu(x: &Operator) -> StepFunction {
    StepFunction::rearrange(x.singular_values())
}

/// Pointwise sum.
pub fn sum(fs: &[StepFunction]) -> StepFunction {
    let refs: Vec<&StepFunction> = fs.iter().collect();
    let pts = union_breakpoints(&refs);
    let mut pieces = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let v: f64 = fs.iter().map(|f| f.eval(w[0])).sum();
        pieces.push((v, w[1] - w[0]));
    }
    let tail: f64 = fs.iter().map(StepFunction::tail_value).sum();
    if tail > 0.0 {
        pieces.push((tail, f64::INFINITY));
    }
    StepFunction::normalize(pieces)
}

/// `∫₀^t f ≤ (1+ε)∫₀^t g` at every breakpoint and on the tails.
pub fn hl_majorize_tol(f: &StepFunction, g: &StepFunction, eps: f64) -> bool {
    let pts = union_breakpoints(&[f, g]);
    for &t in &pts[1..] {
        let gf = g.primitive(t);
        if f.primitive(t) > gf + eps * gf {
            return false;
        }
    }
    f.tail_value() <= g.tail_value() * (1.0 + eps)
}

pub fn hl_majorize(f: &StepFunction, g: &StepFunction) -> bool {
    hl_majorize_tol(f, g, EPS_NUM)
}

/// Smallest `C` with `f ≤ C g` pointwise (`∞` if `f > 0 = g` somewhere).
pub fn pointwise_ratio(f: &StepFunction, g: &StepFunction) -> f64 {
    pointwise_ratio_ae(f, g, 0.0)
}

/// As [`pointwise_ratio`] but ignores intervals shorter than `min_len`, so
/// breakpoints that differ only by rounding do not count.
pub fn pointwise_ratio_ae(f: &StepFunction, g: &StepFunction, min_len: f64) -> f64 {
    let pts = union_breakpoints(&[f, g]);
    let mut worst: f64 = 0.0;
    let mut check = |fv: f64, gv: f64| {
        if fv > 0.0 {
            worst = worst.max(if gv > 0.0 { fv / gv } else { f64::INFINITY });
        }
    };
    for w in pts.windows(2) {
        if w[1] - w[0] > min_len {
            check(f.eval(w[0]), g.eval(w[0]));
        }
    }
    check(f.tail_value(), g.tail_value());
    worst
}

/// `f ≤ (1+ε) g` pointwise.
pub fn pointwise_le(f: &StepFunction, g: &StepFunction, eps: f64) -> bool {
    pointwise_ratio(f, g) <= 1.0 + eps
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LenRepr {
    Finite(f64),
    Sentinel(String),
}

impl Serialize for StepFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<(f64, LenRepr)> = self
            .pieces
            .iter()
            .map(|&(v, l)| (v, if l.is_infinite() { LenRepr::Sentinel("inf".into()) } else { LenRepr::Finite(l) }))
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<(f64, LenRepr)> = Vec::deserialize(d)?;
        let mut pieces = Vec::with_capacity(raw.len());
        for (v, l) in raw {
            let len = match l {
                LenRepr::Finite(x) => x,
                LenRepr::Sentinel(s) if s == "inf" => f64::INFINITY,
                LenRepr::Sentinel(s) => return Err(serde::de::Error::custom(format!("bad length {s:?}"))),
            };
            pieces.push((v, len));
        }
        StepFunction::from_pieces(pieces).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Algebra, Mat, C64};
    use crate::random;
    use proptest::prelude::*;

    fn sf(p: &[(f64, f64)]) -> StepFunction {
        StepFunction::from_pieces(p.to_vec()).unwrap()
    }

    fn op(entries: [[f64; 2]; 2], w: f64) -> Operator {
        let m = Mat::from_fn(2, 2, |r, c| C64::new(entries[r][c], 0.0));
        Operator::from_blocks(&Algebra::matrix(2, w), vec![m]).unwrap()
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu(&op([[3.0, 0.0], [0.0, 1.0]], 1.0)).pieces(), &[(3.0, 1.0), (1.0, 1.0)]);
        assert_eq!(mu(&op([[2.0, 0.0], [0.0, 2.0]], 0.5)).pieces(), &[(2.0, 1.0)]);
        let f = mu(&op([[0.0, 1.0], [0.0, 0.0]], 1.0));
        assert_eq!(f.pieces().len(), 1);
        assert!((f.pieces()[0].0 - 1.0).abs() < 1e-14 && f.pieces()[0].1 == 1.0);
    }

    #[test]
    fn lorentz_examples() {
        assert!((sf(&[(1.0, 1.0)]).lorentz_norm(2.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((sf(&[(1.0, 4.0)]).lorentz_norm(2.0, f64::INFINITY) - 2.0).abs() < 1e-15);
        assert!((sf(&[(3.0, 1.0), (1.0, 1.0)]).lorentz_norm(1.0, 1.0) - 4.0).abs() < 1e-15);
        assert_eq!(sf(&[(1.0, f64::INFINITY)]).lorentz_norm(2.0, 2.0), f64::INFINITY);
        assert_eq!(sf(&[(1.0, 1.0)]).lorentz_norm(f64::INFINITY, 1.0), f64::INFINITY);
        assert_eq!(sf(&[(5.0, 1.0)]).lorentz_norm(f64::INFINITY, f64::INFINITY), 5.0);
        assert_eq!(StepFunction::zero().lorentz_norm(1.0, 0.5), 0.0);
    }

    #[test]
    fn majorization_examples() {
        let a = sf(&[(1.0, 2.0)]);
        let b = sf(&[(2.0, 1.0)]);
        assert!(hl_majorize(&a, &b));
        assert!(!hl_majorize(&b, &a));
    }

    #[test]
    fn majorization_on_infinite_tails() {
        let a = sf(&[(1.0, f64::INFINITY)]);
        let b = sf(&[(3.0, 1.0)]);
        assert!(!hl_majorize(&a, &b));
        assert!(hl_majorize(&b, &sf(&[(3.0, 1.0), (0.5, f64::INFINITY)])));
    }

    #[test]
    fn dilation_examples() {
        let f = sf(&[(1.0, 1.0)]);
        assert_eq!(f.dilate(2.0), sf(&[(1.0, 2.0)]));
        assert_eq!(f.dilate(1.0), f);
    }

    #[test]
    fn sum_examples() {
        let one = sf(&[(1.0, 1.0)]);
        assert_eq!(sum(&[one.clone(), one.clone()]), sf(&[(2.0, 1.0)]));
        assert_eq!(sum(&[one.clone(), sf(&[(1.0, 2.0)])]), sf(&[(2.0, 1.0), (1.0, 1.0)]));
        assert!(sum(&[]).is_zero());
    }

    #[test]
    fn rejects_malformed_pieces() {
        assert!(StepFunction::from_pieces(vec![(1.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(StepFunction::from_pieces(vec![(1.0, f64::INFINITY), (0.5, 1.0)]).is_err());
        assert!(StepFunction::from_pieces(vec![(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn json_round_trip_with_sentinel() {
        let f = sf(&[(3.0, 0.5), (1.0, f64::INFINITY)]);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"[[3.0,0.5],[1.0,"inf"]]"#);
        let g: StepFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<StepFunction>(r#"[[1.0,"forever"]]"#).is_err());
    }

    #[test]
    fn pointwise_ratio_detects_uncovered_support() {
        assert_eq!(pointwise_ratio(&sf(&[(1.0, 2.0)]), &sf(&[(1.0, 1.0)])), f64::INFINITY);
        assert!((pointwise_ratio(&sf(&[(1.0, 1.0)]), &sf(&[(4.0, 1.0)])) - 0.25).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lorentz_pp_is_lp(seed in any::<u64>(), pi in 0usize..5) {
            let p = [0.5, 1.0, 1.5, 2.0, 3.0][pi];
            let mut r = random::rng(seed);
            let a = random::random_algebra(&mut r, 3, 4);
            let x = random::random_operator(&mut r, &a);
            let lhs = mu(&x).lorentz_norm(p, p);
            let rhs = x.lp_norm(p);
            prop_assert!((lhs - rhs).abs() <= EPS_NUM * rhs.max(1.0));
        }

        #[test]
        fn sum_majorization(seed in any::<u64>(), n in 1usize..5) {
            let mut r = random::rng(seed);
            let a = random::random_algebra(&mut r, 2, 4);
            let xs: Vec<Operator> = (0..n).map(|_| random::random_hermitian(&mut r, &a)).collect();
            let total = xs.iter().skip(1).fold(xs[0].clone(), |acc, x| &acc + x);
            let mus: Vec<StepFunction> = xs.iter().map(mu).collect();
            prop_assert!(hl_majorize(&mu(&total), &sum(&mus)));
        }

        #[test]
        fn majorization_controls_lp(seed in any::<u64>(), pi in 0usize..3) {
            // μ(x+y) ⪯ μ(x)+μ(y) pairs give majorizing pairs with an operator on both sides.
            let p = [1.0, 2.0, 3.5][pi];
            let mut r = random::rng(seed);
            let a = random::random_algebra(&mut r, 2, 4);
            let x = random::random_hermitian(&mut r, &a);
            let c = random::random_contraction(&mut r, &a);
            // |c x c*| is majorized by |x| (contraction compression)
            let y = &(&c * &x) * &c.adjoint();
            let (fy, fx) = (mu(&y), mu(&x));
            prop_assert!(hl_majorize(&fy, &fx));
            prop_assert!(y.lp_norm(p) <= x.lp_norm(p) * (1.0 + EPS_NUM));
        }

        #[test]
        fn dilation_scales_lp(seed in any::<u64>(), k in -3i32..=3, pi in 0usize..3) {
            let p = [1.0, 2.0, 3.0][pi];
            let mut r = random::rng(seed);
            let a = random::random_algebra(&mut r, 2, 4);
            let x = random::random_operator(&mut r, &a);
            let s = 2f64.powi(k);
            let lhs = mu(&x).dilate(s).lp_norm(p);
            prop_assert!((lhs - s.powf(1.0 / p) * x.lp_norm(p)).abs() <= EPS_NUM * lhs.max(1.0));
        }
    }
}
