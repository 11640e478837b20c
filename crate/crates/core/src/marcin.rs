//! Majorant engine. Weak-type oracles produce a ladder of projections for
//! each dyadic piece of `x`; diagonal majorization turns every ladder into a
//! bound `S_n(r) ≤ z_r`, and the pieces are summed back into `z` with
//! `S_n(x) ≤ z`. Also the asymmetric factorization `a^γ u_n b^{1−γ}` and the
//! row + column decomposition `z u_n + v_n z` for non-positive families.

use serde::{Deserialize, Serialize};

use crate::algebra::{Operator, Projection, ThinSelfAdjoint, C64, EPS_NUM, EPS_RANK};
use crate::dyadic::dyadic_decompose;
use crate::error::{NcError, Result};
use crate::facto::RowColumnFrame;
use crate::oracle::{Filtration, MapFamily, WeakTypeOracle};
use crate::stepfn::{self, StepFunction};

/// `Σ_{k∈ℤ} 1/(|k|+1)² = π²/3 − 1`; its square root bounds the row and
/// column contractions of a single ladder.
pub const ROW_COLUMN_CONSTANT: f64 = 1.513_231_024_561_832_3;

/// Serde for `f64` that accepts and writes `"inf"`.
pub mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad number {t:?}"))),
        }
    }
}

fn recip(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

fn one() -> f64 {
    1.0
}

fn nan() -> f64 {
    f64::NAN
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationParams {
    pub p0: f64,
    #[serde(with = "ext_f64")]
    pub p1: f64,
    pub p: f64,
    #[serde(default = "nan")]
    pub theta: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "one")]
    pub c1: f64,
}

impl InterpolationParams {
    pub fn new(p0: f64, p1: f64, p: f64) -> Result<Self> {
        Self { p0, p1, p, theta: f64::NAN, c0: 1.0, c1: 1.0 }.validated()
    }

    pub fn with_constants(mut self, c0: f64, c1: f64) -> Result<Self> {
        self.c0 = c0;
        self.c1 = c1;
        self.validated()
    }

    /// `1/p = (1−θ)/p0 + θ/p1` solved for `θ`.
    pub fn theta_from_exponents(&self) -> f64 {
        (1.0 / self.p0 - 1.0 / self.p) / (1.0 / self.p0 - recip(self.p1))
    }

    /// Checks `0 < p0 < p < p1 ≤ ∞` and fills in or checks `θ`.
    pub fn validated(mut self) -> Result<Self> {
        if !(self.p0 > 0.0 && self.p0 < self.p && self.p < self.p1) || self.p.is_infinite() {
            return Err(NcError::ParameterRegion(format!(
                "need 0 < p0 < p < p1 ≤ ∞, got p0 = {}, p = {}, p1 = {}",
                self.p0, self.p, self.p1
            )));
        }
        if !(self.c0 > 0.0 && self.c1 > 0.0) {
            return Err(NcError::invalid("c0/c1", "oracle constants must be > 0"));
        }
        let theta = self.theta_from_exponents();
        if self.theta.is_nan() {
            self.theta = theta;
        } else if (self.theta - theta).abs() > EPS_NUM {
            return Err(NcError::invalid("theta", format!("{} does not match the exponents ({theta})", self.theta)));
        }
        Ok(self)
    }

    pub fn is_quasi(&self) -> bool {
        self.p0 < 1.0
    }

    /// `(1/p0 − 1/p)^{-1} + (1/p − 1/p1)^{-1}`.
    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 / self.p0 - 1.0 / self.p) + 1.0 / (1.0 / self.p - recip(self.p1))
    }

    /// `8 (1/(1−2^{(1/p−1/p0)/2}) + 2/(1−2^{(1/p1−1/p)/2}))²`, with the
    /// second summand equal to 1 when `p1 = ∞`.
    pub fn geometric_bound(&self) -> f64 {
        let first = 1.0 / (1.0 - 2f64.powf((1.0 / self.p - 1.0 / self.p0) / 2.0));
        let second = if self.p1.is_infinite() {
            1.0
        } else {
            2.0 / (1.0 - 2f64.powf((1.0 / self.p1 - 1.0 / self.p) / 2.0))
        };
        8.0 * (first + second).powi(2)
    }

    /// `C0^{1−θ} C1^θ α²`.
    pub fn alpha_square_form(&self) -> f64 {
        self.c0.powf(1.0 - self.theta) * self.c1.powf(self.theta) * self.alpha().powi(2)
    }

    /// `C0^{1−θ} C1^θ (α ln α)²`.
    pub fn alpha_log_form(&self) -> f64 {
        let a = self.alpha();
        self.c0.powf(1.0 - self.theta) * self.c1.powf(self.theta) * (a * a.ln()).powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    /// `d_k = 2^{k(1/p0−1/p)/2}` (k ≥ 1), `2^{k(1/p1−1/p)/2}` (k ≤ 0).
    Geometric,
    /// `d_k = |k| (ln|k|)² + 1`, independent of `p`.
    LogSquare,
}

impl std::str::FromStr for WeightKind {
    type Err = NcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "logsquare" => Ok(Self::LogSquare),
            _ => Err(NcError::invalid("weights", format!("unknown kind {s:?}"))),
        }
    }
}

/// Exponent and oracle constant used at ladder index `k`.
fn side(k: i32, params: &InterpolationParams, c: (f64, f64)) -> (f64, f64) {
    if k >= 1 {
        (params.p0, c.0)
    } else {
        (params.p1, c.1)
    }
}

/// `max(4, 2^{2/p})`: bound for `λ_k 2^{k/p}` after monotonization.
fn ladder_factor(p: f64) -> f64 {
    4f64.max(2f64.powf(2.0 * recip(p)))
}

/// Weights `d_k` and `d̃_k` on a finite window `k_lo..=k_hi`.
#[derive(Clone, Debug, Serialize)]
pub struct WeightSequence {
    pub kind: WeightKind,
    pub k_lo: i32,
    pub k_hi: i32,
    pub d: Vec<f64>,
    /// `Σ 1/d_k` over the window.
    pub c_d: f64,
    pub tilde: Vec<f64>,
}

impl WeightSequence {
    pub fn d_k(kind: WeightKind, params: &InterpolationParams, k: i32) -> f64 {
        let kf = k as f64;
        match kind {
            WeightKind::Geometric if k >= 1 => 2f64.powf(kf * (1.0 / params.p0 - 1.0 / params.p) / 2.0),
            WeightKind::Geometric => 2f64.powf(kf * (recip(params.p1) - 1.0 / params.p) / 2.0),
            WeightKind::LogSquare => {
                let a = kf.abs();
                if a == 0.0 {
                    1.0
                } else {
                    a * a.ln().powi(2) + 1.0
                }
            }
        }
    }

    /// `constants` are the oracle constants `(C0, C1)`, absorbed by
    /// homogeneity into `d̃_k`.
    pub fn new(kind: WeightKind, params: &InterpolationParams, constants: (f64, f64), k_lo: i32, k_hi: i32) -> Self {
        let d: Vec<f64> = (k_lo..=k_hi).map(|k| Self::d_k(kind, params, k)).collect();
        let c_d: f64 = d.iter().map(|v| 1.0 / v).sum();
        let tilde = (k_lo..=k_hi)
            .zip(&d)
            .map(|(k, dk)| {
                let (pk, ck) = side(k, params, constants);
                ladder_factor(pk) * ck * c_d * dk * 2f64.powf(-(k as f64) * recip(pk))
            })
            .collect();
        Self { kind, k_lo, k_hi, d, c_d, tilde }
    }

    pub fn tilde_at(&self, k: i32) -> f64 {
        if k < self.k_lo || k > self.k_hi {
            0.0
        } else {
            self.tilde[(k - self.k_lo) as usize]
        }
    }

    /// `Σ d̃_k 2^{k/p}` over the window.
    pub fn summability(&self, p: f64) -> f64 {
        (self.k_lo..=self.k_hi).map(|k| self.tilde_at(k) * 2f64.powf(k as f64 * recip(p))).sum()
    }

    /// `Σ d̃_k^p 2^k` over the window.
    pub fn quasi_sum(&self, p: f64) -> f64 {
        (self.k_lo..=self.k_hi).map(|k| self.tilde_at(k).powf(p) * 2f64.powi(k)).sum()
    }
}

/// Window `[k_lo, k_hi]` for a projection of trace `t`: below `k_lo` the
/// trace bound `2^{k−2} t` is smaller than any nonzero projection, so
/// `e_k = 1`; at `k_hi` we have `2^{k_hi} t ≥ τ(1)` and the ladder may stop.
pub fn ladder_window(t: f64, min_weight: f64, total: f64, params: &InterpolationParams) -> (i32, i32) {
    let lo = if params.p1.is_infinite() {
        0
    } else {
        let mut k = ((min_weight / t).log2().floor() as i32) + 2;
        while 2f64.powi(k - 2) * t >= min_weight {
            k -= 1;
        }
        while 2f64.powi(k - 1) * t < min_weight {
            k += 1;
        }
        k
    };
    let mut hi = (total / t).log2().ceil() as i32;
    while 2f64.powi(hi) * t < total {
        hi += 1;
    }
    while hi > lo && 2f64.powi(hi - 1) * t >= total {
        hi -= 1;
    }
    (lo, hi.max(lo))
}

/// Decreasing projections `e_k` with `τ(1−e_k) ≤ 2^{k−1} t` and
/// `‖e_k S_n(r) e_k‖ ≤ C λ_k`, and `q_k = e_k − e_{k+1}` summing to 1.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub k_lo: i32,
    pub k_hi: i32,
    pub t: f64,
    pub e: Vec<Projection>,
    pub q: Vec<Projection>,
    /// `C λ_k`, the norm bound handed to the oracle at index `k`.
    pub bounds: Vec<f64>,
}

impl Ladder {
    pub fn q_at(&self, k: i32) -> &Projection {
        &self.q[(k - self.k_lo) as usize]
    }

    pub fn taus(&self) -> Vec<(i32, f64)> {
        (self.k_lo..=self.k_hi).zip(&self.q).map(|(k, q)| (k, q.tau())).collect()
    }

    /// `τ(q_k) ≤ 2^k t` for every `k`.
    pub fn traces_ok(&self, total: f64) -> bool {
        self.taus().iter().all(|&(k, tq)| tq <= 2f64.powi(k) * self.t * (1.0 + 1e-9) + 1e-12 * total)
    }
}

/// Calls the oracles along the window, checks their contracts and
/// monotonizes via `1 − ∨_{i≤k}(1 − e_i)`.
pub fn projection_ladder(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    r: &Projection,
    images: &[Operator],
    params: &InterpolationParams,
    window: (i32, i32),
) -> Result<Ladder> {
    let t = r.tau();
    let total = s.target.total_trace();
    let mut joined = Projection::zero(&s.target);
    let mut e = Vec::new();
    let mut bounds = Vec::new();
    let image_norms: Vec<f64> = images.iter().map(Operator::norm).collect();
    let dim = s.target.total_dim();
    let thin: Vec<Option<ThinSelfAdjoint>> = images
        .iter()
        .map(|y| ThinSelfAdjoint::new(y, 1e-13).ok().filter(|t| 4 * t.rank() <= dim))
        .collect();
    for k in window.0..=window.1 {
        let (o, pk) = if k >= 1 { (o0, params.p0) } else { (o1, params.p1) };
        let bound = o.constant * 2f64.powf(-(k as f64 - 2.0) * recip(pk));
        let ek = o.produce(r.as_operator(), bound)?;
        let miss = ek.complement().tau();
        let allowed = 2f64.powi(k - 2) * t;
        if miss > allowed * (1.0 + 1e-12) + 1e-12 * total {
            return Err(NcError::OracleViolation(format!(
                "{}: τ(1−e_{k}) = {miss} exceeds {allowed}",
                o.name
            )));
        }
        for (n, y) in images.iter().enumerate() {
            let slack = bound * (1.0 + EPS_NUM) + EPS_NUM * image_norms[n];
            // ‖eye‖ ≤ ‖y‖, so the eigensolve is only needed near the bound
            if image_norms[n] <= slack {
                continue;
            }
            let v = match &thin[n] {
                Some(t) => t.compressed_norm(&ek),
                None => y.compress(&ek).norm(),
            };
            if v > slack {
                return Err(NcError::OracleViolation(format!(
                    "{}: ‖e_{k} S_{n}(r) e_{k}‖ = {v} exceeds {bound}",
                    o.name
                )));
            }
        }
        joined = joined.join(&ek.complement());
        e.push(joined.complement());
        bounds.push(bound);
    }
    let mut q = Vec::with_capacity(e.len());
    for i in 0..e.len() {
        let next = e.get(i + 1).map(|p| p.as_operator().clone()).unwrap_or_else(|| Operator::zero(&s.target));
        q.push(Projection::new_unchecked(e[i].as_operator() - &next));
    }
    Ok(Ladder { k_lo: window.0, k_hi: window.1, t, e, q, bounds })
}

/// `Σ d̃_k q_k`.
fn ladder_sum(l: &Ladder, w: &WeightSequence) -> Operator {
    let mut z = Operator::zero(l.q[0].algebra());
    for k in l.k_lo..=l.k_hi {
        z = &z + &l.q_at(k).as_operator().scale(w.tilde_at(k));
    }
    z
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderSummary {
    pub t: f64,
    /// `(k, τ(q_k))`.
    pub taus: Vec<(i32, f64)>,
    pub traces_ok: bool,
    /// `min_n λ_min(z_r − S_n(r))`.
    pub min_residual: f64,
    /// `μ(z_r) ≼ Σ d̃_k D_{2^k}(μ(r))`.
    pub majorized: bool,
}

/// One dyadic piece `coef · 2^{-m} r` of `x`.
#[derive(Clone, Debug)]
pub struct Part {
    pub coef: C64,
    pub m: i32,
    pub r: Projection,
    pub z: Operator,
    /// `S_n(r)`.
    pub images: Vec<Operator>,
    /// `λ_min(z_part − S_n(r))`.
    pub residuals: Vec<f64>,
    pub ladder: Ladder,
    pub summary: LadderSummary,
}

fn part_for(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    coef: C64,
    m: i32,
    r: &Projection,
    params: &InterpolationParams,
    w: &WeightSequence,
) -> Result<Part> {
    let images = s.apply_all(r.as_operator());
    let ladder = projection_ladder(s, o0, o1, r, &images, params, (w.k_lo, w.k_hi))?;
    let z = ladder_sum(&ladder, w);
    let residuals = images.iter().map(|y| (&z - y).lambda_min()).collect::<Result<Vec<_>>>()?;
    let min_residual = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let rhs: Vec<StepFunction> =
        (w.k_lo..=w.k_hi).map(|k| StepFunction::indicator(2f64.powi(k) * ladder.t, w.tilde_at(k))).collect();
    let majorized = stepfn::hl_majorize_tol(&stepfn::mu(&z), &stepfn::sum(&rhs), 1e-9);
    let summary = LadderSummary {
        t: ladder.t,
        taus: ladder.taus(),
        traces_ok: ladder.traces_ok(s.target.total_trace()),
        min_residual,
        majorized,
    };
    Ok(Part { coef, m, r: r.clone(), z, images, residuals, ladder, summary })
}

/// `x = Σ_k i^k x_k` with `x_k ⪰ 0`; a positive `x` is returned unchanged.
pub fn positive_split(x: &Operator) -> Result<Vec<(C64, Operator)>> {
    if x.is_self_adjoint(1e-12 * x.norm().max(1.0)) && x.psd_check(EPS_NUM)?.is_psd {
        return Ok(vec![(C64::new(1.0, 0.0), x.clone())]);
    }
    let h = (x + &x.adjoint()).scale(0.5);
    let g = (x - &x.adjoint()).scale_complex(C64::new(0.0, -0.5));
    let pos = |y: &Operator, sign: f64| y.functional_calculus(|v| (sign * v).max(0.0));
    let candidates = [
        (C64::new(1.0, 0.0), pos(&h, 1.0)?),
        (C64::new(0.0, 1.0), pos(&g, 1.0)?),
        (C64::new(-1.0, 0.0), pos(&h, -1.0)?),
        (C64::new(0.0, -1.0), pos(&g, -1.0)?),
    ];
    Ok(candidates.into_iter().filter(|(_, y)| y.norm() > 0.0).collect())
}

/// Dyadic projections of every positive part, each with its coefficient.
fn dyadic_pieces(x: &Operator, p: f64, eps_trunc: f64) -> Result<(Vec<(C64, i32, Projection)>, f64, f64)> {
    let mut pieces = Vec::new();
    let mut residual = 0.0;
    let mut part_norms = 0.0;
    for (coef, y) in positive_split(x)? {
        let d = dyadic_decompose(&y, p, eps_trunc)?;
        if d.residual > 2.0 * eps_trunc {
            return Err(NcError::ParameterRegion(format!(
                "dyadic window exhausted with residual {} above {eps_trunc}",
                d.residual
            )));
        }
        residual += d.residual;
        part_norms += y.lp_norm(p);
        pieces.extend(d.terms.into_iter().map(|(m, r)| (coef, m, r)));
    }
    Ok((pieces, residual, part_norms))
}

/// Window covering every piece.
fn global_window(s: &MapFamily, params: &InterpolationParams, traces: impl Iterator<Item = f64>) -> (i32, i32) {
    let mut lo = i32::MAX;
    let mut hi = i32::MIN;
    for t in traces {
        let (a, b) = ladder_window(t, s.source.min_weight().min(s.target.min_weight()), s.target.total_trace(), params);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    (lo, hi)
}

#[derive(Clone, Debug)]
pub struct MajorantCertificate {
    pub z: Operator,
    pub parts: Vec<Part>,
    pub weights: WeightSequence,
    pub params: InterpolationParams,
    /// `λ_min(z − S_n(x))`; empty when `x` is not positive.
    pub residuals: Vec<f64>,
    pub dominates: bool,
    /// Every ladder satisfies `τ(q_k) ≤ 2^k t` and its majorization bound.
    pub majorized: bool,
    /// `‖z‖_p / ‖x‖_p`.
    pub norm_ratio: f64,
    /// `2 Σ d̃_k 2^{k/p}` times `Σ‖x_k‖_p / ‖x‖_p` over the positive parts;
    /// for `p < 1` the `p`-th power bound `(1−2^{−p})^{−1} Σ d̃_k^p 2^k`.
    pub proof_bound: f64,
    pub geometric_bound: Option<f64>,
    pub within_bound: bool,
    pub dyadic_residual: f64,
}

impl MajorantCertificate {
    /// Contractions with `S_n(x) = z^{1/2} u_n z^{1/2}`.
    pub fn factorization(&self, s: &MapFamily, x: &Operator) -> Result<Factorization> {
        factor_parts(&self.parts, 0.5, s, x)
    }
}

#[derive(Clone, Debug)]
pub struct Factorization {
    /// `(Σ 2^{−2γm} z_m)^{1/2}`.
    pub left: Operator,
    /// `(Σ 2^{−2(1−γ)m} z_m)^{1/2}`.
    pub right: Operator,
    pub u: Vec<Operator>,
    /// `max_n ‖left u_n right − S_n(x)‖`.
    pub residual: f64,
    pub u_norm: f64,
}

/// `S_n(x) = Σ (2^{−γm} z_m^{1/2}) (coef c_{m,n}) (2^{−(1−γ)m} z_m^{1/2})`
/// with `c_{m,n} = z_m^{−1/2} S_n(r_m) z_m^{−1/2}`, reassembled through a
/// single contraction.
fn factor_parts(parts: &[Part], gamma: f64, s: &MapFamily, x: &Operator) -> Result<Factorization> {
    let targets = s.apply_all(x);
    if parts.is_empty() {
        let zero = Operator::zero(&s.target);
        let residual = targets.iter().map(Operator::norm).fold(0.0, f64::max);
        return Ok(Factorization { left: zero.clone(), right: zero.clone(), u: vec![zero; s.len()], residual, u_norm: 0.0 });
    }
    let roots: Vec<(Operator, Operator)> =
        parts.iter().map(|p| p.z.sqrt_and_pinv_sqrt(EPS_RANK)).collect::<Result<_>>()?;
    let a: Vec<Operator> = parts.iter().zip(&roots).map(|(p, (r, _))| r.scale(2f64.powf(-gamma * p.m as f64))).collect();
    let b: Vec<Operator> =
        parts.iter().zip(&roots).map(|(p, (r, _))| r.scale(2f64.powf(-(1.0 - gamma) * p.m as f64))).collect();
    let frame = RowColumnFrame::new(&a, &b)?;
    let mut u = Vec::with_capacity(s.len());
    let mut residual: f64 = 0.0;
    let mut u_norm: f64 = 0.0;
    let mut left = Operator::zero(&s.target);
    let mut right = Operator::zero(&s.target);
    for (n, target) in targets.iter().enumerate() {
        let c: Vec<Operator> = parts
            .iter()
            .zip(&roots)
            .map(|(p, (_, ri))| (&(ri * &p.images[n]) * ri).scale_complex(p.coef))
            .collect();
        let f = frame.factor(&c)?;
        residual = residual.max((&(&(&f.r * &f.w) * &f.c) - target).norm());
        u_norm = u_norm.max(f.w_norm);
        left = f.r;
        right = f.c;
        u.push(f.w);
    }
    Ok(Factorization { left, right, u, residual, u_norm })
}

fn certify(
    s: &MapFamily,
    x: &Operator,
    parts: Vec<Part>,
    weights: WeightSequence,
    params: &InterpolationParams,
    part_norms: f64,
    dyadic_residual: f64,
) -> Result<MajorantCertificate> {
    let mut z = Operator::zero(&s.target);
    for p in &parts {
        z = &z + &p.z.scale(2f64.powi(-p.m));
    }
    let positive = parts.iter().all(|p| p.coef == C64::new(1.0, 0.0));
    let mut residuals = Vec::new();
    let single = parts.len() == 1 && parts[0].m == 0 && (x - parts[0].r.as_operator()).fro_norm() == 0.0;
    if positive && single {
        residuals = parts[0].residuals.clone();
    } else if positive {
        for y in s.apply_all(x) {
            residuals.push((&z - &y).lambda_min()?);
        }
    }
    let zn = z.norm().max(1.0);
    let dominates = residuals.iter().all(|&r| r >= -EPS_NUM * zn);
    let majorized = parts.iter().all(|p| p.summary.majorized && p.summary.traces_ok);
    let xp = x.lp_norm(params.p);
    let pp = params.p;
    let (norm_ratio, proof_bound) = if xp == 0.0 {
        (0.0, 0.0)
    } else if pp < 1.0 {
        let lhs = z.lp_norm(pp).powf(pp) / xp.powf(pp);
        (lhs, weights.quasi_sum(pp) / (1.0 - 2f64.powf(-pp)) * part_norms.powf(pp) / xp.powf(pp))
    } else {
        (z.lp_norm(pp) / xp, 2.0 * weights.summability(pp) * part_norms / xp)
    };
    let geometric_bound = (weights.kind == WeightKind::Geometric && pp >= 1.0 && params.p0 >= 1.0)
        .then(|| params.geometric_bound() * part_norms / xp.max(f64::MIN_POSITIVE) * params.c0.max(params.c1));
    let mut within_bound = norm_ratio <= proof_bound * (1.0 + 1e-9) + 1e-12;
    if let Some(g) = geometric_bound {
        within_bound &= norm_ratio <= g * (1.0 + 1e-9);
    }
    Ok(MajorantCertificate {
        z,
        parts,
        weights,
        params: *params,
        residuals,
        dominates,
        majorized,
        norm_ratio,
        proof_bound,
        geometric_bound,
        within_bound,
        dyadic_residual,
    })
}

fn oracle_pair_check(o0: &WeakTypeOracle, o1: &WeakTypeOracle, params: &InterpolationParams) -> Result<()> {
    if o0.p != params.p0 || o1.p != params.p1 {
        return Err(NcError::ParameterRegion(format!(
            "oracle exponents ({}, {}) do not match (p0, p1) = ({}, {})",
            o0.p, o1.p, params.p0, params.p1
        )));
    }
    Ok(())
}

/// Single projection: `0 ≤ S_n(r) ≤ z` with `z = Σ d̃_k q_k`.
pub fn basic_majorant(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    r: &Projection,
    params: &InterpolationParams,
    kind: WeightKind,
) -> Result<MajorantCertificate> {
    if !s.positive {
        return Err(NcError::invalid("family", "the majorant needs positive maps"));
    }
    oracle_pair_check(o0, o1, params)?;
    let params = params.with_constants(o0.constant, o1.constant)?;
    let window = global_window(s, &params, std::iter::once(r.tau()).filter(|&t| t > 0.0));
    if window.0 > window.1 {
        let w = WeightSequence::new(kind, &params, (o0.constant, o1.constant), 0, 0);
        return certify(s, r.as_operator(), Vec::new(), w, &params, 0.0, 0.0);
    }
    let w = WeightSequence::new(kind, &params, (o0.constant, o1.constant), window.0, window.1);
    let part = part_for(s, o0, o1, C64::new(1.0, 0.0), 0, r, &params, &w)?;
    let xn = r.as_operator().lp_norm(params.p);
    certify(s, r.as_operator(), vec![part], w, &params, xn, 0.0)
}

/// `S_n(x) ≤ z` (positive `x`) or `S_n(x) = z^{1/2} u_n z^{1/2}` (general
/// `x`, through the four positive parts).
pub fn marcinkiewicz_majorant(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    x: &Operator,
    params: &InterpolationParams,
    kind: WeightKind,
    eps_trunc: f64,
) -> Result<MajorantCertificate> {
    if !s.positive {
        return Err(NcError::invalid("family", "the majorant needs positive maps"));
    }
    oracle_pair_check(o0, o1, params)?;
    if x.algebra() != &s.source {
        return Err(NcError::DimensionMismatch("x is not in the source algebra".into()));
    }
    let params = params.with_constants(o0.constant, o1.constant)?;
    let (pieces, dyadic_residual, part_norms) = dyadic_pieces(x, params.p.max(1.0), eps_trunc)?;
    if pieces.is_empty() {
        let w = WeightSequence::new(kind, &params, (o0.constant, o1.constant), 0, 0);
        return certify(s, x, Vec::new(), w, &params, part_norms, dyadic_residual);
    }
    let window = global_window(s, &params, pieces.iter().map(|(_, _, r)| r.tau()));
    let w = WeightSequence::new(kind, &params, (o0.constant, o1.constant), window.0, window.1);
    let parts = pieces
        .iter()
        .map(|(c, m, r)| part_for(s, o0, o1, *c, *m, r, &params, &w))
        .collect::<Result<Vec<_>>>()?;
    certify(s, x, parts, w, &params, part_norms, dyadic_residual)
}

#[derive(Clone, Debug, Serialize)]
pub struct DoobRatio {
    pub q: f64,
    /// `‖z‖_q / ‖x‖_q`.
    pub ratio: f64,
    /// `2 Σ d̃_k 2^{k/q}`.
    pub proof_bound: f64,
    /// `((|ln(q−1)| + 1)/(q−1))²`, floored at 1.
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct DoobUniform {
    pub certificate: MajorantCertificate,
    pub ratios: Vec<DoobRatio>,
    /// `‖z‖_∞ / ‖x‖_∞`.
    pub sup_ratio: f64,
    /// `2 max_m ‖z_m‖`.
    pub sup_bound: f64,
}

/// One `z` for every `q` in `plist`, built from Cuculescu's oracle and the
/// trivial `(∞,∞)` bound with `p`-independent weights.
pub fn doob_uniform_majorant(f: &Filtration, x: &Operator, plist: &[f64], eps_trunc: f64) -> Result<DoobUniform> {
    if let Some(q) = plist.iter().find(|&&q| !(q > 1.0)) {
        return Err(NcError::invalid("plist", format!("every exponent must exceed 1, got {q}")));
    }
    x.require_psd(EPS_NUM)?;
    let s = MapFamily::doob(f);
    let o0 = WeakTypeOracle::cuculescu(f);
    let o1 = WeakTypeOracle::uniform(f.algebra(), 1.0);
    // p only sets the dyadic truncation; the log-square weights ignore it.
    let params = InterpolationParams::new(1.0, f64::INFINITY, 2.0)?;
    let certificate = marcinkiewicz_majorant(&s, &o0, &o1, x, &params, WeightKind::LogSquare, eps_trunc)?;
    let z = &certificate.z;
    let ratios = plist
        .iter()
        .map(|&q| {
            let xq = x.lp_norm(q);
            let ratio = if xq == 0.0 { 0.0 } else { z.lp_norm(q) / xq };
            let proof_bound = 2.0 * certificate.weights.summability(q);
            let envelope = (((q - 1.0).ln().abs() + 1.0) / (q - 1.0)).powi(2).max(1.0);
            DoobRatio { q, ratio, proof_bound, envelope, pass: ratio <= proof_bound * (1.0 + 1e-9) }
        })
        .collect();
    let xn = x.norm();
    let sup_ratio = if xn == 0.0 { 0.0 } else { z.norm() / xn };
    let sup_bound = 2.0 * certificate.parts.iter().map(|p| p.z.norm()).fold(0.0, f64::max);
    Ok(DoobUniform { certificate, ratios, sup_ratio, sup_bound })
}

#[derive(Clone, Debug)]
pub struct AsymmetricFactorization {
    pub gamma: f64,
    pub a: Operator,
    pub b: Operator,
    pub u: Vec<Operator>,
    /// `max_n ‖a^γ u_n b^{1−γ} − S_n(x)‖`.
    pub residual: f64,
    pub u_norm: f64,
    /// `‖a‖_p / ‖x‖_p` and `‖b‖_p / ‖x‖_p`.
    pub a_ratio: f64,
    pub b_ratio: f64,
}

/// `S_n(x) = a^γ u_n b^{1−γ}` with `a = (Σ 2^{−2γm} z_m)^{1/(2γ)}` and
/// `b = (Σ 2^{−2(1−γ)m} z_m)^{1/(2(1−γ))}`.
pub fn asymmetric_factorization(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    x: &Operator,
    params: &InterpolationParams,
    gamma: f64,
    eps_trunc: f64,
) -> Result<AsymmetricFactorization> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(NcError::invalid("gamma", "must lie in (0, 1)"));
    }
    let edge = (2.0 * gamma).max(2.0 * (1.0 - gamma));
    if params.p <= edge {
        return Err(NcError::ParameterRegion(format!(
            "p = {} ≤ max(2γ, 2(1−γ)) = {edge}: the scalar family e_11 + n^(-1/2)(e_1n + e_n1) + e_nn/n \
             has no γ-asymmetric factorization there",
            params.p
        )));
    }
    let cert = marcinkiewicz_majorant(s, o0, o1, x, params, WeightKind::LogSquare, eps_trunc)?;
    let f = factor_parts(&cert.parts, gamma, s, x)?;
    let a = (&f.left * &f.left).pow_psd(1.0 / (2.0 * gamma))?;
    let b = (&f.right * &f.right).pow_psd(1.0 / (2.0 * (1.0 - gamma)))?;
    let xp = x.lp_norm(params.p);
    let ratio = |y: &Operator| if xp == 0.0 { 0.0 } else { y.lp_norm(params.p) / xp };
    Ok(AsymmetricFactorization {
        gamma,
        a_ratio: ratio(&a),
        b_ratio: ratio(&b),
        a,
        b,
        u: f.u,
        residual: f.residual,
        u_norm: f.u_norm,
    })
}

#[derive(Clone, Debug)]
pub struct RowColumnCertificate {
    pub z: Operator,
    pub u: Vec<Operator>,
    pub v: Vec<Operator>,
    /// `max_n ‖z u_n + v_n z − S_n(x)‖`.
    pub residual: f64,
    pub u_norm: f64,
    pub v_norm: f64,
    /// Proven bound on `‖u_n‖, ‖v_n‖`.
    pub bound: f64,
    /// `‖z‖_p / (‖x‖_{p0}^{1−θ} ‖x‖_{p1}^θ)`.
    pub norm_ratio: f64,
    pub traces_ok: bool,
}

/// `c_k = max(4, 2^{2/p_k}) C_k 2^{−k/p_k} (|k|+1)`.
fn row_column_weight(k: i32, params: &InterpolationParams, c: (f64, f64)) -> f64 {
    let (pk, ck) = side(k, params, c);
    ladder_factor(pk) * ck * 2f64.powf(-(k as f64) * recip(pk)) * (k.abs() as f64 + 1.0)
}

struct RowColumnPiece {
    z: Operator,
    u: Vec<Operator>,
    v: Vec<Operator>,
    bound: f64,
    traces_ok: bool,
}

fn row_column_piece(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    r: &Projection,
    params: &InterpolationParams,
    window: (i32, i32),
) -> Result<RowColumnPiece> {
    let images = s.apply_all(r.as_operator());
    let ladder = projection_ladder(s, o0, o1, r, &images, params, window)?;
    let c = (o0.constant, o1.constant);
    let alg = &s.target;
    let mut z = Operator::zero(alg);
    for k in ladder.k_lo..=ladder.k_hi {
        z = &z + &ladder.q_at(k).as_operator().scale(row_column_weight(k, params, c));
    }
    let zero = Projection::zero(alg);
    let mut u = Vec::with_capacity(images.len());
    let mut v = Vec::with_capacity(images.len());
    for y in &images {
        let mut un = Operator::zero(alg);
        let mut vn = Operator::zero(alg);
        for (i, k) in (ladder.k_lo..=ladder.k_hi).enumerate() {
            let q = ladder.q[i].as_operator();
            let ek = ladder.e[i].as_operator();
            let next = ladder.e.get(i + 1).unwrap_or(&zero).as_operator();
            let w = 1.0 / row_column_weight(k, params, c);
            un = &un + &(&(q * y) * next).scale(w);
            vn = &vn + &(&(ek * y) * q).scale(w);
        }
        u.push(un);
        v.push(vn);
    }
    let bound = (ladder.k_lo..=ladder.k_hi).map(|k| (k.abs() as f64 + 1.0).powi(-2)).sum::<f64>().sqrt();
    Ok(RowColumnPiece { z, u, v, bound, traces_ok: ladder.traces_ok(alg.total_trace()) })
}

fn finish_row_column(
    s: &MapFamily,
    x: &Operator,
    params: &InterpolationParams,
    z: Operator,
    u: Vec<Operator>,
    v: Vec<Operator>,
    bound: f64,
    traces_ok: bool,
) -> RowColumnCertificate {
    let residual = s
        .apply_all(x)
        .iter()
        .zip(u.iter().zip(&v))
        .map(|(y, (un, vn))| (&(&(&z * un) + &(vn * &z)) - y).norm())
        .fold(0.0, f64::max);
    let u_norm = u.iter().map(Operator::norm).fold(0.0, f64::max);
    let v_norm = v.iter().map(Operator::norm).fold(0.0, f64::max);
    let denom = x.lp_norm(params.p0).powf(1.0 - params.theta) * x.lp_norm(params.p1).powf(params.theta);
    let norm_ratio = if denom == 0.0 { 0.0 } else { z.lp_norm(params.p) / denom };
    RowColumnCertificate { z, u, v, residual, u_norm, v_norm, bound, norm_ratio, traces_ok }
}

/// `S_n(r) = z u_n + v_n z` for a projection `r`; positivity of the maps is
/// not needed.
pub fn row_column_majorant(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    r: &Projection,
    params: &InterpolationParams,
) -> Result<RowColumnCertificate> {
    oracle_pair_check(o0, o1, params)?;
    let params = params.with_constants(o0.constant, o1.constant)?;
    if r.tau() == 0.0 {
        let zero = Operator::zero(&s.target);
        return Ok(finish_row_column(s, r.as_operator(), &params, zero.clone(), vec![zero.clone(); s.len()], vec![zero; s.len()], 0.0, true));
    }
    let window = global_window(s, &params, std::iter::once(r.tau()));
    let p = row_column_piece(s, o0, o1, r, &params, window)?;
    Ok(finish_row_column(s, r.as_operator(), &params, p.z, p.u, p.v, p.bound, p.traces_ok))
}

/// General `x`: `z = (Σ_m 4^{−m} (|m|+1)² z_m²)^{1/2}` over all dyadic
/// pieces, `u_n = z^+ Σ A_m U_m`, `v_n = (Σ V_m A_m) z^+`.
pub fn row_column_general(
    s: &MapFamily,
    o0: &WeakTypeOracle,
    o1: &WeakTypeOracle,
    x: &Operator,
    params: &InterpolationParams,
    eps_trunc: f64,
) -> Result<RowColumnCertificate> {
    oracle_pair_check(o0, o1, params)?;
    let params = params.with_constants(o0.constant, o1.constant)?;
    let (pieces, _, _) = dyadic_pieces(x, params.p.max(1.0), eps_trunc)?;
    let alg = &s.target;
    let zero = Operator::zero(alg);
    if pieces.is_empty() {
        return Ok(finish_row_column(s, x, &params, zero.clone(), vec![zero.clone(); s.len()], vec![zero; s.len()], 0.0, true));
    }
    let window = global_window(s, &params, pieces.iter().map(|(_, _, r)| r.tau()));
    let mut gram = zero.clone();
    let mut au = vec![zero.clone(); s.len()];
    let mut va = vec![zero.clone(); s.len()];
    let mut bound_sq = 0.0;
    let mut traces_ok = true;
    for (coef, m, r) in &pieces {
        let p = row_column_piece(s, o0, o1, r, &params, window)?;
        let lift = m.abs() as f64 + 1.0;
        let a = p.z.scale(2f64.powi(-m) * lift);
        gram = &gram + &(&a * &a);
        for n in 0..s.len() {
            let scale = *coef / C64::new(lift, 0.0);
            au[n] = &au[n] + &(&a * &p.u[n]).scale_complex(scale);
            va[n] = &va[n] + &(&p.v[n] * &a).scale_complex(scale);
        }
        bound_sq += (p.bound / lift).powi(2);
        traces_ok &= p.traces_ok;
    }
    let (z, zi) = gram.sqrt_and_pinv_sqrt(EPS_RANK)?;
    let u = au.iter().map(|t| &zi * t).collect();
    let v = va.iter().map(|t| t * &zi).collect();
    Ok(finish_row_column(s, x, &params, z, u, v, bound_sq.sqrt(), traces_ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Algebra;
    use crate::oracle::Level;
    use crate::random;
    use proptest::prelude::*;

    fn doob_setup(seed: u64) -> (Filtration, MapFamily, WeakTypeOracle, WeakTypeOracle) {
        let a = Algebra::matrix(8, 1.0);
        let f = Filtration::random(&mut random::rng(seed), &a, 3);
        let s = MapFamily::doob(&f);
        let o0 = WeakTypeOracle::cuculescu(&f);
        let o1 = WeakTypeOracle::uniform(&a, 1.0);
        (f, s, o0, o1)
    }

    #[test]
    fn parameter_formulas() {
        let p = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        assert!((p.theta - 0.5).abs() < 1e-15);
        assert!((p.alpha() - 4.0).abs() < 1e-14);
        let want = 8.0 * (1.0 / (1.0 - 2f64.powf(-0.25)) + 1.0).powi(2);
        assert!((p.geometric_bound() - want).abs() < 1e-12);
        assert!((p.geometric_bound() - 424.5947).abs() < 1e-3);
        assert!(InterpolationParams::new(2.0, 3.0, 4.0).is_err());
        let bad = InterpolationParams { theta: 0.3, ..p };
        assert!(bad.validated().is_err());
    }

    #[test]
    fn params_json_accepts_inf() {
        let p: InterpolationParams = serde_json::from_str(r#"{"p0":1,"p1":"inf","p":2}"#).unwrap();
        let p = p.validated().unwrap();
        assert_eq!(p.p1, f64::INFINITY);
        assert!(serde_json::to_string(&p).unwrap().contains("\"inf\""));
    }

    #[test]
    fn window_edges() {
        let p = InterpolationParams::new(1.0, 4.0, 2.0).unwrap();
        let (lo, hi) = ladder_window(1.0, 1.0, 8.0, &p);
        assert_eq!((lo, hi), (1, 3));
        assert!(2f64.powi(lo - 2) < 1.0 && 2f64.powi(lo - 1) >= 1.0);
        let q = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        assert_eq!(ladder_window(1.0, 1.0, 8.0, &q), (0, 3));
    }

    #[test]
    fn identity_family_ladder_is_short() {
        let a = Algebra::matrix(4, 1.0);
        let s = MapFamily::identity(&a);
        let r = Projection::new(Operator::from_diagonal(&a, &[1.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
        let params = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        let c = basic_majorant(&s, &WeakTypeOracle::spectral(1.0), &WeakTypeOracle::uniform(&a, 1.0), &r, &params, WeightKind::LogSquare)
            .unwrap();
        assert!(c.dominates && c.majorized && c.within_bound, "{c:?}");
        let part = &c.parts[0];
        // ‖S(r)‖ = 1 so only q_0 and q_1 carry mass
        for &(k, tq) in &part.summary.taus {
            assert!(k <= 1 || tq.abs() < 1e-12, "k = {k}, τ = {tq}");
        }
    }

    #[test]
    fn doob_pipeline_on_rank_two() {
        let (_, s, o0, o1) = doob_setup(11);
        let a = s.source.clone();
        let mut rng = random::rng(12);
        let h = random::random_hermitian(&mut rng, &a);
        let eig = h.eigh().unwrap();
        let m = crate::algebra::column_projector(&eig[0].1, |c| c < 2);
        let r = Projection::new(Operator::from_blocks(&a, vec![m]).unwrap()).unwrap();
        let params = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        let c = basic_majorant(&s, &o0, &o1, &r, &params, WeightKind::LogSquare).unwrap();
        assert!(c.residuals.iter().all(|&v| v >= -1e-8));
        assert!(c.majorized && c.parts[0].summary.traces_ok);
    }

    #[test]
    fn single_projection_reduces_to_basic() {
        let (_, s, o0, o1) = doob_setup(5);
        let a = s.source.clone();
        let r = Projection::new(Operator::from_diagonal(&a, &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let params = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        let b = basic_majorant(&s, &o0, &o1, &r, &params, WeightKind::Geometric).unwrap();
        let m = marcinkiewicz_majorant(&s, &o0, &o1, r.as_operator(), &params, WeightKind::Geometric, 1e-13).unwrap();
        assert_eq!(m.parts.len(), 1);
        assert_eq!(m.parts[0].m, 0);
        assert!((&m.z - &b.z).norm() < 1e-12);
    }

    #[test]
    fn unit_input_is_dominated() {
        let (f, _, _, _) = doob_setup(3);
        let one = Operator::identity(f.algebra());
        let d = doob_uniform_majorant(&f, &one, &[1.5, 2.0], 1e-13).unwrap();
        assert!(d.certificate.dominates);
        assert!((&d.certificate.z - &one).lambda_min().unwrap() >= -1e-10);
        assert!(d.sup_ratio <= d.sup_bound + 1e-12);
    }

    #[test]
    fn asymmetric_gate_and_symmetric_case() {
        let (_, s, o0, o1) = doob_setup(9);
        let x = random::random_psd(&mut random::rng(10), &s.source);
        let p17 = InterpolationParams::new(1.0, f64::INFINITY, 1.7).unwrap();
        assert!(matches!(
            asymmetric_factorization(&s, &o0, &o1, &x, &p17, 0.9, 1e-13),
            Err(NcError::ParameterRegion(_))
        ));
        let p2 = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        let half = asymmetric_factorization(&s, &o0, &o1, &x, &p2, 0.5, 1e-13).unwrap();
        let cert = marcinkiewicz_majorant(&s, &o0, &o1, &x, &p2, WeightKind::LogSquare, 1e-13).unwrap();
        assert!((&half.a - &cert.z).norm() <= 1e-9 * cert.z.norm());
        assert!((&half.b - &cert.z).norm() <= 1e-9 * cert.z.norm());
        let asym = asymmetric_factorization(&s, &o0, &o1, &x, &p2, 0.7, 1e-13).unwrap();
        assert!(asym.residual <= 1e-8 * x.norm().max(1.0));
        assert!(asym.u_norm <= 1.0 + 1e-8);
    }

    #[test]
    fn non_positive_x_is_factored() {
        let (_, s, o0, o1) = doob_setup(21);
        let x = random::random_operator(&mut random::rng(22), &s.source);
        let params = InterpolationParams::new(1.0, f64::INFINITY, 3.0).unwrap();
        let c = marcinkiewicz_majorant(&s, &o0, &o1, &x, &params, WeightKind::Geometric, 1e-13).unwrap();
        assert!(c.residuals.is_empty());
        let f = c.factorization(&s, &x).unwrap();
        assert!(f.residual <= 1e-8 * x.norm());
        assert!(f.u_norm <= 1.0 + 1e-8);
        assert!(c.within_bound);
    }

    #[test]
    fn row_column_on_non_positive_family() {
        let n = 16;
        let t = Algebra::matrix(n, 1.0);
        let ts: Vec<Operator> =
            (2..=n).map(|k| &Operator::unit(&t, 0, k - 1, 0) + &Operator::unit(&t, 0, 0, k - 1)).collect();
        let s = MapFamily::scalar(ts).unwrap();
        let src = Algebra::matrix(1, 1.0);
        let r = Projection::one(&src);
        let o0 = WeakTypeOracle::tail(&t);
        let o1 = WeakTypeOracle::uniform(&t, 1.0);
        let params = InterpolationParams::new(1.0, f64::INFINITY, 2.0).unwrap();
        let c = row_column_majorant(&s, &o0, &o1, &r, &params).unwrap();
        assert!(c.residual < 1e-12, "{}", c.residual);
        assert!(c.u_norm <= c.bound * (1.0 + 1e-9) && c.v_norm <= c.bound * (1.0 + 1e-9));
        assert!(c.bound <= ROW_COLUMN_CONSTANT);
        assert!(c.traces_ok);
        assert!(basic_majorant(&s, &o0, &o1, &r, &params, WeightKind::LogSquare).is_err());
    }

    #[test]
    fn row_column_constant_value() {
        let s: f64 = (1..2_000_000).map(|k| 1.0 / (k as f64 + 1.0).powi(2)).sum::<f64>();
        let tail = 1.0 / 2_000_001.0;
        assert!(((1.0 + 2.0 * (s + tail)).sqrt() - ROW_COLUMN_CONSTANT).abs() < 1e-9);
        assert!((ROW_COLUMN_CONSTANT - (std::f64::consts::PI.powi(2) / 3.0 - 1.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quasi_mode_on_diagonal_algebra() {
        let a = Algebra::diagonal(&[0.5, 1.0, 2.0, 0.25]).unwrap();
        let s = MapFamily::identity(&a);
        let x = Operator::from_diagonal(&a, &[3.0, 0.2, 1.25, 0.0]).unwrap();
        let params = InterpolationParams::new(0.5, f64::INFINITY, 0.8).unwrap();
        let c = marcinkiewicz_majorant(&s, &WeakTypeOracle::spectral(0.5), &WeakTypeOracle::uniform(&a, 1.0), &x, &params, WeightKind::LogSquare, 1e-13)
            .unwrap();
        assert!(c.dominates);
        assert!(c.norm_ratio <= c.proof_bound, "{} > {}", c.norm_ratio, c.proof_bound);
    }

    #[test]
    fn level_helpers_used_by_tests() {
        let a = Algebra::matrix(2, 1.0);
        let f = Filtration::new(&a, vec![Level::scalar(&a), Level::full(&a)]).unwrap();
        let x = Operator::from_diagonal(&a, &[4.0, 0.0]).unwrap();
        let d = doob_uniform_majorant(&f, &x, &[1.25, 4.0], 1e-13).unwrap();
        assert!(d.ratios.iter().all(|r| r.pass));
        assert!(d.certificate.dominates);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn geometric_constant_never_exceeded(seed in any::<u64>(), p in 1.2f64..6.0) {
            let mut r = random::rng(seed);
            let a = random::random_algebra(&mut r, 2, 5);
            let f = Filtration::random(&mut r, &a, 3);
            let s = MapFamily::doob(&f);
            let x = random::random_psd(&mut r, &a);
            let params = InterpolationParams::new(1.0, f64::INFINITY, p).unwrap();
            let c = marcinkiewicz_majorant(&s, &WeakTypeOracle::cuculescu(&f), &WeakTypeOracle::uniform(&a, 1.0), &x, &params, WeightKind::Geometric, 1e-13).unwrap();
            prop_assert!(c.dominates, "{:?}", c.residuals);
            prop_assert!(c.majorized);
            prop_assert!(c.within_bound);
            prop_assert!(c.norm_ratio <= params.geometric_bound());
        }

        #[test]
        fn asymmetric_reconstruction(seed in any::<u64>(), gamma in 0.2f64..0.8) {
            let mut r = random::rng(seed);
            let a = random::random_algebra(&mut r, 2, 4);
            let f = Filtration::random(&mut r, &a, 3);
            let s = MapFamily::doob(&f);
            let x = random::random_psd(&mut r, &a);
            let params = InterpolationParams::new(1.0, f64::INFINITY, 2.5).unwrap();
            let g = asymmetric_factorization(&s, &WeakTypeOracle::cuculescu(&f), &WeakTypeOracle::uniform(&a, 1.0), &x, &params, gamma, 1e-13).unwrap();
            prop_assert!(g.residual <= EPS_NUM * x.norm().max(1.0));
            prop_assert!(g.u_norm <= 1.0 + EPS_NUM);
        }
    }
}
