//! Weak maximal quasi-norms of operator sequences: `μ`, `μ_c`, `μ_r`, the
//! `Λ_{p,q}` quasi-norms, the column decomposition `X = Σ a_k U_k q_k`, and
//! two-sided K-functional estimates for `(Λ_p, Λ_∞)`.

use serde::Serialize;

use crate::algebra::{herm_eig, Algebra, Mat, Operator, Projection, C64};
use crate::error::{NcError, Result};
use crate::stepfn::{self, StepFunction};

/// Largest total dimension accepted by the exhaustive search.
pub const EXHAUSTIVE_MAX_DIM: usize = 8;

/// Largest number of achievable traces used as an exact `t`-grid.
const MAX_GRID: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSequence {
    terms: Vec<Operator>,
}

impl OperatorSequence {
    pub fn new(terms: Vec<Operator>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| NcError::invalid("terms", "empty sequence"))?;
        if let Some(i) = terms.iter().position(|x| x.algebra() != first.algebra()) {
            return Err(NcError::DimensionMismatch(format!("terms[{i}] lives in a different algebra")));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Operator] {
        &self.terms
    }

    pub fn algebra(&self) -> &Algebra {
        self.terms[0].algebra()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn adjoint(&self) -> Self {
        Self { terms: self.terms.iter().map(Operator::adjoint).collect() }
    }

    pub fn map(&self, f: impl Fn(&Operator) -> Operator) -> Self {
        Self { terms: self.terms.iter().map(f).collect() }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(NcError::DimensionMismatch(format!("lengths {} and {}", self.len(), other.len())));
        }
        let terms = self.terms.iter().zip(&other.terms).map(|(a, b)| a.checked_add(b)).collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    /// `sup_n ‖x_n‖`.
    pub fn sup_norm(&self) -> f64 {
        self.terms.iter().map(Operator::norm).fold(0.0, f64::max)
    }

    /// `sup_n ‖e x_n e‖` (plain) or `sup_n ‖x_n e‖` (column).
    pub fn cut_value(&self, e: &Projection, mode: Mode) -> f64 {
        let e_op = e.as_operator();
        match mode {
            Mode::Plain => self.terms.iter().map(|x| x.compress(e).norm()).fold(0.0, f64::max),
            Mode::Column => self.terms.iter().map(|x| (x * e_op).norm()).fold(0.0, f64::max),
            Mode::Row => self.terms.iter().map(|x| (e_op * x).norm()).fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Column,
    Row,
}

impl std::str::FromStr for Mode {
    type Err = NcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "p" => Ok(Self::Plain),
            "column" | "c" => Ok(Self::Column),
            "row" | "r" => Ok(Self::Row),
            _ => Err(NcError::invalid("mode", format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Greedy spectral cuts and peeling; a feasible upper bound.
    Spectral,
    /// Search over subsets of many eigenbases; the reference value on small
    /// algebras.
    Exhaustive,
}

impl std::str::FromStr for Method {
    type Err = NcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "exhaustive" => Ok(Self::Exhaustive),
            _ => Err(NcError::invalid("method", format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MuValue {
    pub value: f64,
    /// Feasible `e` with `τ(1−e) ≤ t` attaining `value`.
    pub witness: Projection,
    pub method: Method,
}

/// Slack for comparing traces of removed subspaces against a budget.
fn fits(cost: f64, budget: f64) -> bool {
    cost <= budget * (1.0 + 1e-12) + 1e-12
}

/// Projection `1 − Σ v v*` from removed unit vectors per block.
fn keep_projection(a: &Algebra, removed: &[Vec<nalgebra::DVector<C64>>]) -> Projection {
    let blocks = a
        .blocks()
        .iter()
        .zip(removed)
        .map(|(b, vs)| {
            let mut m = Mat::identity(b.dim, b.dim);
            for v in vs {
                m -= v * v.adjoint();
            }
            m
        })
        .collect();
    Projection::new_unchecked(Operator::from_blocks(a, blocks).expect("shapes match"))
}

/// Positive "envelopes" whose top eigenvectors are natural cut directions.
fn envelopes(x: &OperatorSequence, mode: Mode) -> Vec<Operator> {
    let a = x.algebra();
    let mut out = Vec::new();
    let mut total = Operator::zero(a);
    for t in x.terms() {
        let h = match mode {
            Mode::Column => &t.adjoint() * t,
            Mode::Row => t * &t.adjoint(),
            Mode::Plain => &t.abs() + &t.adjoint().abs(),
        };
        total = &total + &h;
        out.push(h);
    }
    out.insert(0, total);
    out
}

/// Cut the largest eigenvalues of `h` within the budget. With `skip`, a
/// direction that does not fit is skipped and smaller ones are still tried.
fn spectral_cut(h: &Operator, t: f64, skip: bool) -> Projection {
    let a = h.algebra();
    let mut dirs: Vec<(f64, f64, usize, nalgebra::DVector<C64>)> = Vec::new();
    for ((b, m), blk) in h.blocks().iter().enumerate().zip(a.blocks()) {
        let (vals, vecs) = herm_eig(m);
        for (c, v) in vals.iter().enumerate() {
            dirs.push((*v, blk.weight, b, vecs.column(c).into_owned()));
        }
    }
    dirs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut removed = vec![Vec::new(); a.num_blocks()];
    let mut cost = 0.0;
    for (_, w, b, v) in dirs {
        if fits(cost + w, t) {
            cost += w;
            removed[b].push(v);
        } else if !skip {
            break;
        }
    }
    keep_projection(a, &removed)
}

/// Repeatedly removes the top singular direction of the worst term inside
/// the current corner.
fn peel(x: &OperatorSequence, t: f64, mode: Mode) -> Projection {
    let a = x.algebra();
    let mut removed: Vec<Vec<nalgebra::DVector<C64>>> = vec![Vec::new(); a.num_blocks()];
    let mut cost = 0.0;
    loop {
        let e = keep_projection(a, &removed);
        let mut best: Option<(f64, usize, nalgebra::DVector<C64>)> = None;
        for term in x.terms() {
            let cut = match mode {
                Mode::Plain => term.compress(&e),
                Mode::Column => term * e.as_operator(),
                Mode::Row => &e.as_operator().adjoint() * &(term.adjoint()),
            };
            for (b, m) in cut.blocks().iter().enumerate() {
                let gram = match mode {
                    Mode::Plain => {
                        let g = m.adjoint() * m + m * m.adjoint();
                        g
                    }
                    _ => m.adjoint() * m,
                };
                let (vals, vecs) = herm_eig(&gram);
                let top = vals.len() - 1;
                if vals[top] > best.as_ref().map_or(0.0, |b| b.0) {
                    best = Some((vals[top], b, vecs.column(top).into_owned()));
                }
            }
        }
        match best {
            Some((v, b, dir)) if v > 0.0 && fits(cost + a.blocks()[b].weight, t) => {
                cost += a.blocks()[b].weight;
                // Keep the removed set orthonormal.
                let mut d = dir;
                for u in &removed[b] {
                    let c = u.dotc(&d);
                    d -= u * c;
                }
                let n = d.norm();
                if n < 1e-8 {
                    return e;
                }
                removed[b].push(d / C64::new(n, 0.0));
            }
            _ => return e,
        }
    }
}

fn mu_spectral(x: &OperatorSequence, t: f64, mode: Mode) -> MuValue {
    let mut cands = Vec::new();
    for h in envelopes(x, mode) {
        cands.push(spectral_cut(&h, t, false));
        cands.push(spectral_cut(&h, t, true));
    }
    cands.push(peel(x, t, mode));
    best_of(x, cands, mode, Method::Spectral)
}

fn best_of(x: &OperatorSequence, cands: Vec<Projection>, mode: Mode, method: Method) -> MuValue {
    let mut best: Option<(f64, Projection)> = None;
    for e in cands {
        let v = x.cut_value(&e, mode);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, e));
        }
    }
    let (value, witness) = best.expect("at least one candidate");
    MuValue { value, witness, method }
}

/// Per-block table: best value and removed vectors for each removal count.
type BlockTable = Vec<(f64, Vec<nalgebra::DVector<C64>>)>;

fn block_tables(x: &OperatorSequence, mode: Mode) -> Vec<BlockTable> {
    let a = x.algebra();
    let mut bases_by_block: Vec<Vec<Mat>> = vec![Vec::new(); a.num_blocks()];
    let mut push_basis = |h: &Operator| {
        for (b, m) in h.blocks().iter().enumerate() {
            bases_by_block[b].push(herm_eig(m).1);
        }
    };
    push_basis(&Operator::zero(a));
    for h in envelopes(x, mode) {
        push_basis(&h);
    }
    for term in x.terms() {
        push_basis(&(&term.adjoint() * term));
        push_basis(&(term * &term.adjoint()));
        push_basis(&(term + &term.adjoint()));
        push_basis(&(term - &term.adjoint()).scale_complex(C64::new(0.0, 1.0)));
    }
    let mut tables = Vec::with_capacity(a.num_blocks());
    for (b, blk) in a.blocks().iter().enumerate() {
        let d = blk.dim;
        let value = |basis: &Mat, k: usize| {
            let mut keep = Mat::identity(d, d);
            for c in 0..k {
                let v = basis.column(c);
                keep -= &v * v.adjoint();
            }
            x.terms()
                .iter()
                .map(|term| {
                    let m = term.block(b);
                    match mode {
                        Mode::Plain => (&keep * m * &keep).norm_value(),
                        Mode::Column => (m * &keep).norm_value(),
                        Mode::Row => (&keep * m).norm_value(),
                    }
                })
                .fold(0.0, f64::max)
        };
        // Best basis per removal count; removed vectors are the first k columns.
        let mut best: Vec<(f64, Mat)> = vec![(f64::INFINITY, Mat::identity(d, d)); d + 1];
        for basis in &bases_by_block[b] {
            for mask in 0u32..(1u32 << d) {
                let k = mask.count_ones() as usize;
                let order: Vec<usize> =
                    (0..d).filter(|&c| mask >> c & 1 == 1).chain((0..d).filter(|&c| mask >> c & 1 == 0)).collect();
                let permuted = Mat::from_fn(d, d, |i, j| basis[(i, order[j])]);
                let val = value(&permuted, k);
                if val < best[k].0 {
                    best[k] = (val, permuted);
                }
            }
        }
        let mut table: BlockTable = Vec::with_capacity(d + 1);
        for (k, (v, basis)) in best.into_iter().enumerate() {
            let (v, basis) = refine(v, basis, k, &value);
            table.push((v, (0..k).map(|c| basis.column(c).into_owned()).collect()));
        }
        // Removing more never hurts.
        for k in 1..=d {
            if table[k - 1].0 < table[k].0 {
                table[k] = table[k - 1].clone();
            }
        }
        tables.push(table);
    }
    tables
}

/// Local search: rotates removed against kept basis vectors on a shrinking
/// grid of angles and phases, keeping any improvement.
fn refine(mut v: f64, mut basis: Mat, k: usize, value: &impl Fn(&Mat, usize) -> f64) -> (f64, Mat) {
    let d = basis.ncols();
    if k == 0 || k == d || v == 0.0 {
        return (v, basis);
    }
    let phases: Vec<C64> = (0..4).map(|i| C64::from_polar(1.0, i as f64 * std::f64::consts::FRAC_PI_2)).collect();
    for level in 2..10 {
        let theta = std::f64::consts::PI / f64::from(1u32 << level);
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 20 {
            improved = false;
            sweeps += 1;
            for i in 0..k {
                for j in k..d {
                    for &ph in &phases {
                        for th in [theta, -theta] {
                            let (c, s) = (th.cos(), th.sin());
                            let mut cand = basis.clone();
                            let ci = basis.column(i).into_owned();
                            let cj = basis.column(j).into_owned();
                            cand.set_column(i, &(&ci * C64::new(c, 0.0) + &cj * (ph * s)));
                            cand.set_column(j, &(&cj * C64::new(c, 0.0) - &ci * (ph.conj() * s)));
                            let w = value(&cand, k);
                            if w < v * (1.0 - 1e-12) {
                                v = w;
                                basis = cand;
                                improved = true;
                            }
                        }
                    }
                }
            }
        }
    }
    (v, basis)
}

trait SpectralNorm {
    fn norm_value(&self) -> f64;
}

impl SpectralNorm for Mat {
    fn norm_value(&self) -> f64 {
        let (vals, _) = herm_eig(&(self.adjoint() * self));
        vals.last().map_or(0.0, |v| v.max(0.0).sqrt())
    }
}

fn combine_tables(a: &Algebra, tables: &[BlockTable], t: f64) -> (f64, Projection) {
    let dims: Vec<usize> = a.blocks().iter().map(|b| b.dim).collect();
    let mut counts = vec![0usize; dims.len()];
    let mut best = (f64::INFINITY, counts.clone());
    loop {
        let cost: f64 = counts.iter().zip(a.blocks()).map(|(&k, b)| k as f64 * b.weight).sum();
        if fits(cost, t) {
            let v = counts.iter().enumerate().map(|(b, &k)| tables[b][k].0).fold(0.0, f64::max);
            if v < best.0 {
                best = (v, counts.clone());
            }
        }
        let mut i = 0;
        loop {
            if i == dims.len() {
                let removed: Vec<_> = best.1.iter().enumerate().map(|(b, &k)| tables[b][k].1.clone()).collect();
                return (best.0, keep_projection(a, &removed));
            }
            counts[i] += 1;
            if counts[i] <= dims[i] {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// `μ_♯(X, t)` with a feasible witness `e`, `τ(1−e) ≤ t`.
pub fn mu_seq(x: &OperatorSequence, t: f64, mode: Mode, method: Method) -> Result<MuValue> {
    if !(t >= 0.0) {
        return Err(NcError::invalid("t", "must be ≥ 0"));
    }
    match method {
        Method::Spectral => Ok(mu_spectral(x, t, mode)),
        Method::Exhaustive => {
            let a = x.algebra();
            if a.total_dim() > EXHAUSTIVE_MAX_DIM {
                return Err(NcError::Domain(format!(
                    "exhaustive search needs total dimension ≤ {EXHAUSTIVE_MAX_DIM}, got {}",
                    a.total_dim()
                )));
            }
            let tables = block_tables(x, mode);
            let (v, e) = combine_tables(a, &tables, t);
            let spectral = mu_spectral(x, t, mode);
            let exhaustive = MuValue { value: x.cut_value(&e, mode), witness: e, method: Method::Exhaustive };
            // The spectral candidates are part of the search space.
            debug_assert!(v.is_finite());
            Ok(if spectral.value < exhaustive.value {
                MuValue { method: Method::Exhaustive, ..spectral }
            } else {
                exhaustive
            })
        }
    }
}

/// Every value `Σ_b k_b w_b` with `0 ≤ k_b ≤ d_b`, sorted; `None` if there
/// are too many.
pub fn achievable_traces(a: &Algebra) -> Option<Vec<f64>> {
    let mut ts = vec![0.0];
    for b in a.blocks() {
        let mut next = Vec::with_capacity(ts.len() * (b.dim + 1));
        for &t in &ts {
            for k in 0..=b.dim {
                next.push(t + k as f64 * b.weight);
            }
        }
        next.sort_by(f64::total_cmp);
        next.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1.0));
        if next.len() > MAX_GRID {
            return None;
        }
        ts = next;
    }
    Some(ts)
}

/// `t`-grid on which `μ_♯(X, ·)` is evaluated. For small algebras these are
/// the achievable traces, where `μ_♯` can jump; otherwise powers of 2.
pub fn t_grid(a: &Algebra) -> Vec<f64> {
    if let Some(ts) = achievable_traces(a) {
        return ts;
    }
    let lo = a.min_weight().log2().floor() as i32;
    let hi = a.total_trace().log2().ceil() as i32;
    let mut ts = vec![0.0];
    ts.extend((lo..=hi).map(|k| 2f64.powi(k)));
    ts
}

#[derive(Clone, Debug, Serialize)]
pub struct MuProfile {
    /// `(t_i, μ_♯(X, t_i))`.
    pub samples: Vec<(f64, f64)>,
    /// Upper envelope: value `μ(t_i)` on `[t_i, t_{i+1})`.
    pub upper: StepFunction,
    /// Lower envelope: value `μ(t_{i+1})` on `[t_i, t_{i+1})`.
    pub lower: StepFunction,
    /// True when the grid contains every jump of `μ_♯`.
    pub exact_grid: bool,
    pub method: Method,
}

fn profile_from(samples: Vec<(f64, f64)>, exact_grid: bool, method: Method) -> MuProfile {
    let mut up = Vec::new();
    let mut lo = Vec::new();
    for w in samples.windows(2) {
        let len = w[1].0 - w[0].0;
        up.push((w[0].1, len));
        lo.push((w[1].1, len));
    }
    MuProfile {
        upper: StepFunction::rearrange(up),
        lower: StepFunction::rearrange(lo),
        samples,
        exact_grid,
        method,
    }
}

/// `μ_♯(X, ·)` on the grid; values are made nonincreasing by taking running
/// minima, since every witness stays feasible for larger `t`.
pub fn mu_profile(x: &OperatorSequence, mode: Mode, method: Method) -> Result<MuProfile> {
    let a = x.algebra();
    let exact_grid = achievable_traces(a).is_some();
    let mut samples = Vec::new();
    let mut running = f64::INFINITY;
    for t in t_grid(a) {
        running = running.min(mu_seq(x, t, mode, method)?.value);
        samples.push((t, running));
    }
    Ok(profile_from(samples, exact_grid, method))
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaNorm {
    /// `‖·‖_{p,q}` of the upper envelope of `μ_♯`.
    pub value: f64,
    /// Same for the lower envelope.
    pub lower: f64,
    /// False unless the method is exhaustive and the grid exact.
    pub exact: bool,
    pub profile: MuProfile,
}

pub fn lambda_norm(x: &OperatorSequence, p: f64, q: f64, mode: Mode, method: Method) -> Result<LambdaNorm> {
    if !(p > 0.0 && q > 0.0) {
        return Err(NcError::invalid("p/q", "exponents must be > 0"));
    }
    let profile = mu_profile(x, mode, method)?;
    Ok(LambdaNorm {
        value: profile.upper.lorentz_norm(p, q),
        lower: profile.lower.lorentz_norm(p, q),
        exact: method == Method::Exhaustive && profile.exact_grid,
        profile,
    })
}

/// Hardy-inequality constant for `Σ_l 2^l (Σ_{k≥l} a_k)^p ≤ K̃_p Σ_k 2^k a_k^p`.
/// For `p > 1` Hölder with weights `2^{±ks}` gives
/// `(1 − 2^{−sp'})^{−(p−1)} (1 − 2^{−(1−sp)})^{−1}` for `0 < s < 1/p`,
/// minimized over `s`; for `p ≤ 1` it is 2.
pub fn hardy_constant(p: f64) -> f64 {
    if p <= 1.0 {
        return 2.0;
    }
    let pp = p / (p - 1.0);
    (1..1000)
        .map(|i| {
            let s = i as f64 / 1000.0 / p;
            (1.0 - 2f64.powf(-s * pp)).powf(-(p - 1.0)) / (1.0 - 2f64.powf(-(1.0 - s * p)))
        })
        .fold(f64::INFINITY, f64::min)
}

/// `(1 − 2^{−1/(p−1)})^{−(p−1)}` as printed with the column lemma.
pub fn printed_k(p: f64) -> f64 {
    if p <= 1.0 {
        1.0
    } else {
        (1.0 - 2f64.powf(-1.0 / (p - 1.0))).powf(-(p - 1.0))
    }
}

#[derive(Clone, Debug)]
pub struct LambdaDecomposition {
    pub alpha: f64,
    /// `(k, a_k)`, only nonzero levels.
    pub a: Vec<(i32, f64)>,
    pub q: Vec<Projection>,
    /// `U_k = a_k^{−1} X q_k`.
    pub u: Vec<OperatorSequence>,
    /// `max_n ‖x_n − Σ a_k u_{n,k} q_k‖`.
    pub residual: f64,
    /// `‖(a_k)‖_{p,q,ω^α}`.
    pub a_norm: f64,
    /// Upper estimate of `‖X‖_{Λ^c_{p,q}}`.
    pub x_norm: f64,
    /// `x_norm / a_norm`.
    pub upper_ratio: f64,
    /// `a_norm / x_norm`.
    pub lower_ratio: f64,
    /// `(K̃_p/2)^{1/p}` for `p = q`, `α = 1`; `None` otherwise.
    pub upper_bound: Option<f64>,
    pub traces_ok: bool,
}

impl LambdaDecomposition {
    pub fn rebuild(&self, x: &OperatorSequence) -> OperatorSequence {
        let a = x.algebra();
        let terms = (0..x.len())
            .map(|n| {
                let mut acc = Operator::zero(a);
                for ((_, ak), (q, u)) in self.a.iter().zip(self.q.iter().zip(&self.u)) {
                    acc = &acc + &(&u.terms()[n] * q.as_operator()).scale(*ak);
                }
                acc
            })
            .collect();
        OperatorSequence { terms }
    }
}

/// Decreasing ladder `e_k` from `μ_c` witnesses at `t_k = (1−2^{−α})2^{α(k−1)}`,
/// so that `τ(1−e_k) ≤ 2^{α(k−1)}` after taking meets.
fn witness_ladder(x: &OperatorSequence, alpha: f64, mode: Mode, method: Method) -> Result<(i32, Vec<Projection>)> {
    let a = x.algebra();
    let total = a.total_trace();
    let c = 1.0 - 2f64.powf(-alpha);
    let tk = |k: i32| c * 2f64.powf(alpha * (k as f64 - 1.0));
    let mut k_lo = ((a.min_weight() / c).log2() / alpha).floor() as i32 + 1;
    while tk(k_lo) >= a.min_weight() {
        k_lo -= 1;
    }
    let mut k_hi = k_lo;
    while 2f64.powf(alpha * k_hi as f64) < total {
        k_hi += 1;
    }
    let mut meet = Projection::one(a);
    let mut e = Vec::new();
    for k in k_lo..=k_hi {
        let f = mu_seq(x, tk(k), mode, method)?.witness;
        meet = meet.meet(&f);
        e.push(meet.clone());
    }
    Ok((k_lo, e))
}

/// `X = Σ a_k U_k q_k` with `τ(q_k) ≤ 2^{αk}` (column mode; row mode works
/// on adjoints).
pub fn lambda_decompose(x: &OperatorSequence, p: f64, q: f64, alpha: f64, method: Method) -> Result<LambdaDecomposition> {
    if !(alpha > 0.0) {
        return Err(NcError::invalid("alpha", "must be > 0"));
    }
    let alg = x.algebra();
    let empty = |x_norm: f64| LambdaDecomposition {
        alpha,
        a: Vec::new(),
        q: Vec::new(),
        u: Vec::new(),
        residual: 0.0,
        a_norm: 0.0,
        x_norm,
        upper_ratio: 0.0,
        lower_ratio: 0.0,
        upper_bound: None,
        traces_ok: true,
    };
    if x.sup_norm() == 0.0 {
        return Ok(empty(0.0));
    }
    let (k_lo, e) = witness_ladder(x, alpha, Mode::Column, method)?;
    let zero = Projection::zero(alg);
    let mut levels = Vec::new();
    let mut qs = Vec::new();
    let mut us = Vec::new();
    let mut pieces = Vec::new();
    let mut traces_ok = true;
    for (i, ek) in e.iter().enumerate() {
        let k = k_lo + i as i32;
        let next = e.get(i + 1).unwrap_or(&zero);
        let qk = Projection::new_unchecked(ek.as_operator() - next.as_operator());
        traces_ok &= fits(qk.tau(), 2f64.powf(alpha * k as f64));
        let ak = x.cut_value(ek, Mode::Column);
        if ak == 0.0 || qk.tau() < 0.5 * alg.min_weight() {
            continue;
        }
        let u = x.map(|t| (t * qk.as_operator()).scale(1.0 / ak));
        pieces.push((ak, 2f64.powf(alpha * k as f64)));
        levels.push((k, ak));
        qs.push(qk);
        us.push(u);
    }
    let mut d = LambdaDecomposition { a: levels, q: qs, u: us, ..empty(0.0) };
    d.traces_ok = traces_ok;
    let rebuilt = d.rebuild(x);
    d.residual = x.terms().iter().zip(rebuilt.terms()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    d.a_norm = StepFunction::rearrange(pieces).lorentz_norm(p, q);
    // μ_c(X, τ(1−e_k)) ≤ ‖X e_k‖ tightens the method's upper envelope.
    let prof = mu_profile(x, Mode::Column, method)?;
    let ladder: Vec<(f64, f64)> = e.iter().map(|ek| (ek.complement().tau(), x.cut_value(ek, Mode::Column))).collect();
    let samples: Vec<(f64, f64)> = prof
        .samples
        .iter()
        .map(|&(t, v)| {
            let l = ladder.iter().filter(|(c, _)| fits(*c, t)).map(|(_, v)| *v).fold(v, f64::min);
            (t, l)
        })
        .collect();
    let mut running = f64::INFINITY;
    let samples = samples.into_iter().map(|(t, v)| { running = running.min(v); (t, running) }).collect();
    d.x_norm = profile_from(samples, prof.exact_grid, method).upper.lorentz_norm(p, q);
    d.upper_ratio = if d.a_norm > 0.0 { d.x_norm / d.a_norm } else { 0.0 };
    d.lower_ratio = if d.x_norm > 0.0 { d.a_norm / d.x_norm } else { 0.0 };
    d.upper_bound = (p == q && alpha == 1.0).then(|| (hardy_constant(p) / 2.0).powf(1.0 / p));
    Ok(d)
}

/// `X = C + R` with `C = Σ f_k X q_k` of column type and `R = Σ q_k X f_{k+1}`
/// of row type, from plain `μ` witnesses.
pub fn lambda_split(x: &OperatorSequence, method: Method) -> Result<(OperatorSequence, OperatorSequence)> {
    let alg = x.algebra();
    let (_, f) = witness_ladder(x, 1.0, Mode::Plain, method)?;
    let zero = Projection::zero(alg);
    let mut col = x.map(|_| Operator::zero(alg));
    let mut row = col.clone();
    for (i, fk) in f.iter().enumerate() {
        let next = f.get(i + 1).unwrap_or(&zero);
        let qk = fk.as_operator() - next.as_operator();
        col = col.checked_add(&x.map(|t| &(fk.as_operator() * t) * &qk))?;
        row = row.checked_add(&x.map(|t| &(&qk * t) * next.as_operator()))?;
    }
    Ok((col, row))
}

/// `K(t, f; L_p, L_∞) = inf_λ ‖(f − λ)_+‖_p + tλ` for a nonincreasing step
/// function.
pub fn k_functional_step(f: &StepFunction, t: f64, p: f64) -> f64 {
    let cost = |lam: f64| f.sub_clip(lam).lp_norm(p) + t * lam;
    let mut cands: Vec<f64> = f.pieces().iter().map(|&(v, _)| v).collect();
    cands.push(0.0);
    let mut best = cands.iter().map(|&l| cost(l)).fold(f64::INFINITY, f64::min);
    // The cost is convex in λ between consecutive values; refine each gap.
    let mut vals: Vec<f64> = cands.clone();
    vals.sort_by(f64::total_cmp);
    for w in vals.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        for _ in 0..80 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if cost(m1) <= cost(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best = best.min(cost(0.5 * (lo + hi)));
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct KBounds {
    /// `K(t, μ_♯(X), L_p, L_∞)` with the method's `μ_♯`.
    pub lower: f64,
    /// Same with a certified lower envelope of `μ_♯` built from the singular
    /// values of the individual terms.
    pub certified_lower: f64,
    /// `‖a‖_{Λ_p} + t ‖b‖_∞` for the split at a witness of `μ_♯(X, t^p)`.
    pub upper: f64,
    pub ratio: f64,
}

/// Two-sided estimate of `K(t, X; Λ_p^♯, Λ_∞^♯)`.
pub fn k_functional(x: &OperatorSequence, t: f64, p: f64, mode: Mode, method: Method) -> Result<KBounds> {
    if !(t > 0.0 && p > 0.0 && p.is_finite()) {
        return Err(NcError::invalid("t/p", "need t > 0 and 0 < p < ∞"));
    }
    let prof = mu_profile(x, mode, method)?;
    let lower = k_functional_step(&prof.upper, t, p);
    let certified = certified_mu_lower(x, mode);
    let certified_lower = k_functional_step(&certified, t, p);
    let w = mu_seq(x, t.powf(p), mode, method)?;
    let e = w.witness.as_operator();
    let ec = w.witness.complement();
    let ec = ec.as_operator();
    let (a, b) = match mode {
        Mode::Plain => (x.map(|y| &(&(ec * y) + &(&(e * y) * ec)) + &Operator::zero(y.algebra())), x.map(|y| &(e * y) * e)),
        Mode::Column => (x.map(|y| y * ec), x.map(|y| y * e)),
        Mode::Row => (x.map(|y| ec * y), x.map(|y| e * y)),
    };
    let a_norm = lambda_norm(&a, p, p, mode, method)?.value;
    let upper = a_norm + t * b.sup_norm();
    Ok(KBounds { lower, certified_lower, upper, ratio: if lower > 0.0 { upper / lower } else { 1.0 } })
}

/// `sup_n μ(x_n)(t)` (column, row) or `sup_n μ(x_n)(2t)` (plain), a lower
/// bound for `μ_♯(X, t)`.
pub fn certified_mu_lower(x: &OperatorSequence, mode: Mode) -> StepFunction {
    let mus: Vec<StepFunction> = x.terms().iter().map(stepfn::mu).collect();
    let mut pts: Vec<f64> = mus.iter().flat_map(|m| m.breakpoints()).collect();
    let dil = if mode == Mode::Plain { 0.5 } else { 1.0 };
    pts = pts.into_iter().map(|t| t * dil).collect();
    pts.push(0.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut pieces = Vec::new();
    for w in pts.windows(2) {
        let v = mus.iter().map(|m| m.eval(w[0] / dil)).fold(0.0, f64::max);
        pieces.push((v, w[1] - w[0]));
    }
    StepFunction::rearrange(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Block;
    use crate::random;
    use proptest::prelude::*;

    fn diag_seq(a: &Algebra, d: &[f64]) -> OperatorSequence {
        OperatorSequence::new(vec![Operator::from_diagonal(a, d).unwrap()]).unwrap()
    }

    #[test]
    fn single_term_examples() {
        let a = Algebra::matrix(2, 1.0);
        let x = diag_seq(&a, &[3.0, 1.0]);
        for method in [Method::Spectral, Method::Exhaustive] {
            let m = mu_seq(&x, 1.0, Mode::Plain, method).unwrap();
            assert!((m.value - 1.0).abs() < 1e-12);
            assert_eq!(m.witness.as_operator(), &Operator::unit(&a, 0, 1, 1));
            assert!((mu_seq(&x, 0.0, Mode::Plain, method).unwrap().value - 3.0).abs() < 1e-12);
            assert_eq!(mu_seq(&x, 2.0, Mode::Column, method).unwrap().value, 0.0);
        }
    }

    #[test]
    fn constant_sequence_recovers_mu() {
        let mut r = random::rng(1);
        let a = Algebra::new(vec![Block { dim: 3, weight: 0.5 }, Block { dim: 2, weight: 1.25 }]).unwrap();
        let h = random::random_hermitian(&mut r, &a);
        let pos = random::random_psd(&mut r, &a);
        let mu_h = stepfn::mu(&h);
        let mu_pos = stepfn::mu(&pos);
        let xh = OperatorSequence::new(vec![h.clone(), h.clone(), h.clone()]).unwrap();
        let xpos = OperatorSequence::new(vec![pos.clone(), pos]).unwrap();
        for t in mu_h.breakpoints() {
            let v = mu_seq(&xh, t, Mode::Column, Method::Exhaustive).unwrap().value;
            assert!((v - mu_h.eval(t)).abs() < 1e-9, "t = {t}: {v} vs {}", mu_h.eval(t));
            assert!(mu_seq(&xh, t, Mode::Plain, Method::Exhaustive).unwrap().value <= mu_h.eval(t) + 1e-9);
        }
        for t in mu_pos.breakpoints() {
            let v = mu_seq(&xpos, t, Mode::Plain, Method::Exhaustive).unwrap().value;
            assert!((v - mu_pos.eval(t)).abs() < 1e-9, "t = {t}: {v} vs {}", mu_pos.eval(t));
        }
    }

    #[test]
    fn indefinite_constant_sequence_drops_below_mu() {
        // ‖e a e‖ vanishes on the diagonal direction of diag(1, −1).
        let a = Algebra::matrix(2, 1.0);
        let h = Operator::from_diagonal(&a, &[1.0, -1.0]).unwrap();
        let x = OperatorSequence::new(vec![h.clone()]).unwrap();
        let v = mu_seq(&x, 1.0, Mode::Plain, Method::Exhaustive).unwrap().value;
        assert!(v < 1e-12);
        assert_eq!(stepfn::mu(&h).eval(1.0), 1.0);
    }

    #[test]
    fn weak_norm_of_singleton() {
        let a = Algebra::diagonal(&[1.0, 1.0, 1.0]).unwrap();
        let x = diag_seq(&a, &[4.0, 2.0, 1.0]);
        for p in [1.0, 2.0, 3.0] {
            let l = lambda_norm(&x, p, f64::INFINITY, Mode::Plain, Method::Exhaustive).unwrap();
            let want = stepfn::mu(&x.terms()[0]).lorentz_norm(p, f64::INFINITY);
            assert!((l.value - want).abs() < 1e-12 && l.exact);
        }
    }

    #[test]
    fn decomposition_of_projection() {
        // Witnesses: nothing removed at t = 1/2, one column at t = 1.
        let a = Algebra::matrix(4, 1.0);
        let e = Operator::from_diagonal(&a, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        let x = OperatorSequence::new(vec![e]).unwrap();
        let d = lambda_decompose(&x, 2.0, 2.0, 1.0, Method::Spectral).unwrap();
        assert_eq!(d.a, vec![(1, 1.0), (2, 1.0)]);
        assert_eq!(d.q.iter().map(Projection::tau).collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert!(d.residual < 1e-12);
        assert!(lambda_decompose(&x.map(|y| y.scale(0.0)), 2.0, 2.0, 1.0, Method::Spectral).unwrap().a.is_empty());
    }

    #[test]
    fn random_decomposition_rebuilds() {
        let mut r = random::rng(7);
        let a = Algebra::matrix(8, 1.0);
        let x = OperatorSequence::new((0..3).map(|_| random::random_operator(&mut r, &a)).collect()).unwrap();
        for p in [1.0, 2.0, 4.0] {
            let d = lambda_decompose(&x, p, p, 1.0, Method::Spectral).unwrap();
            assert!(d.residual <= 1e-8, "{}", d.residual);
            assert!(d.traces_ok);
            assert!(d.upper_ratio <= d.upper_bound.unwrap() * (1.0 + 1e-9), "p = {p}: {} > {:?}", d.upper_ratio, d.upper_bound);
        }
    }

    #[test]
    fn hardy_constants() {
        assert_eq!(hardy_constant(1.0), 2.0);
        assert!((printed_k(2.0) - 2.0).abs() < 1e-15);
        // Direct check of the Hardy inequality on a worst-ish sequence.
        for p in [1.5, 2.0, 4.0] {
            let k = hardy_constant(p);
            let a: Vec<f64> = (0..60).map(|i| 2f64.powf(-(i as f64) / p) * 0.97f64.powi(i)).collect();
            let lhs: f64 = (0..60).map(|l| 2f64.powi(l as i32) * a[l..].iter().sum::<f64>().powf(p)).sum();
            let rhs: f64 = (0..60).map(|i| 2f64.powi(i as i32) * a[i].powf(p)).sum();
            assert!(lhs <= k * rhs, "p = {p}");
            assert!(k >= printed_k(p));
        }
    }

    #[test]
    fn k_functional_commutative_case() {
        let a = Algebra::diagonal(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let x = diag_seq(&a, &[5.0, 3.0, 1.0, 0.5]);
        let f = stepfn::mu(&x.terms()[0]);
        for t in [0.5, 1.0, 2.0] {
            let k = k_functional(&x, t, 2.0, Mode::Plain, Method::Exhaustive).unwrap();
            // brute force over λ
            let brute = (0..=50_000)
                .map(|i| {
                    let l = 5.0 * i as f64 / 50_000.0;
                    f.sub_clip(l).lp_norm(2.0) + t * l
                })
                .fold(f64::INFINITY, f64::min);
            assert!((k.lower - brute).abs() < 1e-6, "{} vs {brute}", k.lower);
            assert!(k.lower <= k.upper + 1e-12);
        }
    }

    #[test]
    fn split_rebuilds() {
        let mut r = random::rng(4);
        let a = Algebra::matrix(4, 1.0);
        let x = OperatorSequence::new((0..2).map(|_| random::random_operator(&mut r, &a)).collect()).unwrap();
        let (c, rw) = lambda_split(&x, Method::Spectral).unwrap();
        let s = c.checked_add(&rw).unwrap();
        for (u, v) in s.terms().iter().zip(x.terms()) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn exhaustive_rejects_large() {
        let a = Algebra::matrix(9, 1.0);
        let x = OperatorSequence::new(vec![Operator::identity(&a)]).unwrap();
        assert!(matches!(mu_seq(&x, 1.0, Mode::Plain, Method::Exhaustive), Err(NcError::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectral_dominates_exhaustive(seed in any::<u64>(), t in 0.0f64..4.0) {
            let mut r = random::rng(seed);
            let a = random::random_algebra_of_dim(&mut r, 4);
            let x = OperatorSequence::new((0..3).map(|_| random::random_operator(&mut r, &a)).collect()).unwrap();
            for mode in [Mode::Plain, Mode::Column, Mode::Row] {
                let s = mu_seq(&x, t, mode, Method::Spectral).unwrap();
                let e = mu_seq(&x, t, mode, Method::Exhaustive).unwrap();
                prop_assert!(e.value <= s.value + 1e-12);
                prop_assert!(fits(e.witness.complement().tau(), t));
                prop_assert!(fits(s.witness.complement().tau(), t));
                let lower = certified_mu_lower(&x, mode).eval(t);
                prop_assert!(lower <= e.value * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn quasi_triangle(seed in any::<u64>(), t in 0.0f64..2.0, s in 0.0f64..2.0) {
            let mut r = random::rng(seed);
            let a = random::random_algebra_of_dim(&mut r, 3);
            let x = OperatorSequence::new((0..2).map(|_| random::random_operator(&mut r, &a)).collect()).unwrap();
            let y = OperatorSequence::new((0..2).map(|_| random::random_operator(&mut r, &a)).collect()).unwrap();
            let xy = x.checked_add(&y).unwrap();
            for mode in [Mode::Plain, Mode::Column] {
                // the exhaustive value is only an upper bound, so test the
                // inequality through the certified witnesses of x and y
                let ex = mu_seq(&x, t, mode, Method::Exhaustive).unwrap();
                let ey = mu_seq(&y, s, mode, Method::Exhaustive).unwrap();
                let e = ex.witness.meet(&ey.witness);
                prop_assert!(fits(e.complement().tau(), t + s));
                prop_assert!(xy.cut_value(&e, mode) <= ex.value + ey.value + 1e-10);
            }
        }

        #[test]
        fn lorentz_log_convexity(seed in any::<u64>(), theta in 0.05f64..0.95) {
            let mut r = random::rng(seed);
            let a = random::random_algebra_of_dim(&mut r, 4);
            let x = OperatorSequence::new((0..2).map(|_| random::random_operator(&mut r, &a)).collect()).unwrap();
            let (p0, p1) = (1.0, 4.0);
            let p = 1.0 / ((1.0 - theta) / p0 + theta / p1);
            let n = |p: f64| lambda_norm(&x, p, p, Mode::Column, Method::Exhaustive).unwrap().value;
            prop_assert!(n(p) <= n(p0).powf(1.0 - theta) * n(p1).powf(theta) * (1.0 + 1e-9));
        }
    }
}
