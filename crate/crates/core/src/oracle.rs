//! Filtrations of block algebras, conditional expectations, Cuculescu's
//! projections and weak-type oracles `(x, λ) ↦ e`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{herm_eig, Algebra, Mat, Operator, Projection, C64, EPS_NUM};
use crate::error::{NcError, Result};

/// One embedding of a summand `M_m` into a block: `y ↦ y ⊗ 1_mult` placed
/// on indices `offset + i·mult + l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub block: usize,
    pub offset: usize,
    pub mult: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summand {
    pub dim: usize,
    pub occurrences: Vec<Occurrence>,
}

/// A unital subalgebra `⊕_s M_{m_s}` of the ambient algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub summands: Vec<Summand>,
}

impl Level {
    /// The whole algebra.
    pub fn full(a: &Algebra) -> Self {
        let summands = a
            .blocks()
            .iter()
            .enumerate()
            .map(|(b, blk)| Summand { dim: blk.dim, occurrences: vec![Occurrence { block: b, offset: 0, mult: 1 }] })
            .collect();
        Self { summands }
    }

    /// Scalars `ℂ·1`.
    pub fn scalar(a: &Algebra) -> Self {
        let occurrences = a
            .blocks()
            .iter()
            .enumerate()
            .map(|(b, blk)| Occurrence { block: b, offset: 0, mult: blk.dim })
            .collect();
        Self { summands: vec![Summand { dim: 1, occurrences }] }
    }

    fn validate(&self, a: &Algebra) -> Result<()> {
        let mut cover: Vec<Vec<u8>> = a.blocks().iter().map(|b| vec![0; b.dim]).collect();
        for (s, sm) in self.summands.iter().enumerate() {
            if sm.dim == 0 || sm.occurrences.is_empty() {
                return Err(NcError::invalid(format!("summands[{s}]"), "empty summand"));
            }
            for o in &sm.occurrences {
                if o.block >= a.num_blocks() || o.mult == 0 {
                    return Err(NcError::invalid(format!("summands[{s}].occurrences"), "bad block or multiplicity"));
                }
                let end = o.offset + sm.dim * o.mult;
                if end > a.blocks()[o.block].dim {
                    return Err(NcError::invalid(format!("summands[{s}].occurrences"), "runs past the block"));
                }
                for c in &mut cover[o.block][o.offset..end] {
                    *c += 1;
                }
            }
        }
        if cover.iter().flatten().any(|&c| c != 1) {
            return Err(NcError::invalid("summands", "occurrences must tile every block exactly once"));
        }
        Ok(())
    }

    /// Embedding of `y ∈ M_m` (summand `s`) into the ambient algebra.
    pub fn embed(&self, a: &Algebra, s: usize, y: &Mat) -> Operator {
        let sm = &self.summands[s];
        let mut out = Operator::zero(a);
        let mut blocks: Vec<Mat> = out.blocks().to_vec();
        for o in &sm.occurrences {
            let m = &mut blocks[o.block];
            for i in 0..sm.dim {
                for j in 0..sm.dim {
                    for l in 0..o.mult {
                        m[(o.offset + i * o.mult + l, o.offset + j * o.mult + l)] = y[(i, j)];
                    }
                }
            }
        }
        out = Operator::from_blocks(a, blocks).expect("shapes match");
        out
    }

    /// Trace-preserving conditional expectation onto this level.
    pub fn expect(&self, x: &Operator) -> Operator {
        let a = x.algebra();
        let mut blocks: Vec<Mat> = a.blocks().iter().map(|b| Mat::zeros(b.dim, b.dim)).collect();
        for sm in &self.summands {
            let mut y = Mat::zeros(sm.dim, sm.dim);
            let mut mass = 0.0;
            for o in &sm.occurrences {
                let w = a.blocks()[o.block].weight;
                let xb = x.block(o.block);
                for i in 0..sm.dim {
                    for j in 0..sm.dim {
                        let mut acc = C64::new(0.0, 0.0);
                        for l in 0..o.mult {
                            acc += xb[(o.offset + i * o.mult + l, o.offset + j * o.mult + l)];
                        }
                        y[(i, j)] += acc * w;
                    }
                }
                mass += w * o.mult as f64;
            }
            y /= C64::new(mass, 0.0);
            for o in &sm.occurrences {
                let m = &mut blocks[o.block];
                for i in 0..sm.dim {
                    for j in 0..sm.dim {
                        for l in 0..o.mult {
                            m[(o.offset + i * o.mult + l, o.offset + j * o.mult + l)] = y[(i, j)];
                        }
                    }
                }
            }
        }
        Operator::from_blocks(a, blocks).expect("shapes match")
    }

    /// `M_{m1·m2} → M_{m1} ⊗ 1_{m2}` on summand `s`.
    fn tensor_split(&self, s: usize, m2: usize) -> Self {
        let mut out = self.clone();
        let sm = &mut out.summands[s];
        sm.dim /= m2;
        for o in &mut sm.occurrences {
            o.mult *= m2;
        }
        out
    }

    /// `M_m → M_{m1} ⊕ M_{m−m1}` on summand `s`.
    fn diag_split(&self, s: usize, m1: usize) -> Self {
        let mut out = self.clone();
        let sm = out.summands.remove(s);
        let first = Summand { dim: m1, occurrences: sm.occurrences.clone() };
        let second = Summand {
            dim: sm.dim - m1,
            occurrences: sm
                .occurrences
                .iter()
                .map(|o| Occurrence { block: o.block, offset: o.offset + m1 * o.mult, mult: o.mult })
                .collect(),
        };
        out.summands.push(first);
        out.summands.push(second);
        out
    }

    /// Diagonal merge `y ↦ y ⊕ y` of two summands of equal size.
    fn merge(&self, s: usize, t: usize) -> Self {
        let mut out = self.clone();
        let (lo, hi) = (s.min(t), s.max(t));
        let other = out.summands.remove(hi);
        out.summands[lo].occurrences.extend(other.occurrences);
        out
    }
}

/// Increasing tower of subalgebras `𝒩_0 ⊂ 𝒩_1 ⊂ …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filtration {
    #[serde(skip)]
    algebra: Option<Algebra>,
    pub levels: Vec<Level>,
}

impl Filtration {
    pub fn new(algebra: &Algebra, levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(NcError::invalid("levels", "at least one level required"));
        }
        for (n, l) in levels.iter().enumerate() {
            l.validate(algebra).map_err(|e| NcError::invalid(format!("levels[{n}]"), e.to_string()))?;
        }
        for n in 0..levels.len() - 1 {
            for (s, sm) in levels[n].summands.iter().enumerate() {
                for i in 0..sm.dim {
                    for j in 0..sm.dim {
                        let mut y = Mat::zeros(sm.dim, sm.dim);
                        y[(i, j)] = C64::new(1.0, 0.0);
                        let u = levels[n].embed(algebra, s, &y);
                        if (&levels[n + 1].expect(&u) - &u).fro_norm() > 1e-12 {
                            return Err(NcError::invalid(
                                format!("levels[{n}]"),
                                format!("not contained in level {}", n + 1),
                            ));
                        }
                    }
                }
            }
        }
        Ok(Self { algebra: Some(algebra.clone()), levels })
    }

    pub fn algebra(&self) -> &Algebra {
        self.algebra.as_ref().expect("filtration carries its algebra")
    }

    /// Reattach the algebra after deserialization and validate.
    pub fn attach(self, algebra: &Algebra) -> Result<Self> {
        Self::new(algebra, self.levels)
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn conditional_expectation(&self, n: usize, x: &Operator) -> Result<Operator> {
        let level = self.levels.get(n).ok_or(NcError::IndexOutOfRange { index: n, len: self.levels.len() })?;
        if x.algebra() != self.algebra() {
            return Err(NcError::DimensionMismatch("operator is not in the filtered algebra".into()));
        }
        Ok(level.expect(x))
    }

    /// Random tower of the given depth ending with the full algebra. Levels
    /// are produced top-down by tensor splits, diagonal splits and merges.
    pub fn random(rng: &mut impl Rng, algebra: &Algebra, depth: usize) -> Self {
        let mut levels = vec![Level::full(algebra)];
        while levels.len() < depth.max(1) {
            let cur = levels.last().unwrap();
            let mut next = None;
            for _ in 0..8 {
                let s = rng.random_range(0..cur.summands.len());
                let m = cur.summands[s].dim;
                match rng.random_range(0..3) {
                    0 => {
                        let divs: Vec<usize> = (2..=m).filter(|d| m % d == 0).collect();
                        if !divs.is_empty() {
                            next = Some(cur.tensor_split(s, divs[rng.random_range(0..divs.len())]));
                        }
                    }
                    1 if m >= 2 => next = Some(cur.diag_split(s, rng.random_range(1..m))),
                    _ => {
                        let same: Vec<usize> =
                            (0..cur.summands.len()).filter(|&t| t != s && cur.summands[t].dim == m).collect();
                        if !same.is_empty() {
                            next = Some(cur.merge(s, same[rng.random_range(0..same.len())]));
                        }
                    }
                }
                if next.is_some() {
                    break;
                }
            }
            let lvl = next.unwrap_or_else(|| cur.clone());
            levels.push(lvl);
        }
        levels.reverse();
        Self::new(algebra, levels).expect("random tower is nested")
    }
}

/// Cuculescu's projections for `x ⪰ 0` at level `λ`.
#[derive(Clone, Debug)]
pub struct Cuculescu {
    pub q: Projection,
    pub levels: Vec<Projection>,
}

/// Spectral projection of `q y q` restricted to the range of `q`.
fn corner_projection(q: &Projection, y: &Operator, lambda: f64) -> Result<Projection> {
    let a = y.algebra();
    let mut blocks = Vec::with_capacity(a.num_blocks());
    for (qb, yb) in q.as_operator().blocks().iter().zip(y.blocks()) {
        let (qv, qvec) = herm_eig(qb);
        let cols: Vec<usize> = (0..qv.len()).filter(|&c| qv[c] > 0.5).collect();
        let n = qb.nrows();
        if cols.is_empty() {
            blocks.push(Mat::zeros(n, n));
            continue;
        }
        let v = Mat::from_fn(n, cols.len(), |r, c| qvec[(r, cols[c])]);
        let corner = v.adjoint() * yb * &v;
        let (cv, cvec) = herm_eig(&corner);
        let w = &v * cvec;
        let mut out = Mat::zeros(n, n);
        for c in 0..cv.len() {
            if cv[c] <= lambda {
                let col = w.column(c);
                out += &col * col.adjoint();
            }
        }
        blocks.push(out);
    }
    Ok(Projection::new_unchecked(Operator::from_blocks(a, blocks)?))
}

pub fn cuculescu(f: &Filtration, x: &Operator, lambda: f64) -> Result<Cuculescu> {
    if !(lambda > 0.0) {
        return Err(NcError::invalid("lambda", "must be > 0"));
    }
    x.require_psd(EPS_NUM)?;
    let mut q = Projection::one(x.algebra());
    let mut levels = Vec::with_capacity(f.depth());
    for n in 0..f.depth() {
        let en = f.conditional_expectation(n, x)?;
        q = corner_projection(&q, &en, lambda)?;
        levels.push(q.clone());
    }
    Ok(Cuculescu { q, levels })
}

/// A linear map between block algebras.
#[derive(Clone)]
pub enum LinearMap {
    CondExp { filtration: Arc<Filtration>, level: usize },
    Identity,
    /// `ℂ → 𝒩`, `λ ↦ λ T`.
    Scalar(Operator),
    /// Any closure; used for composed or sampled maps.
    Custom(Arc<dyn Fn(&Operator) -> Operator + Send + Sync>),
}

impl fmt::Debug for LinearMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearMap::CondExp { level, .. } => write!(f, "CondExp({level})"),
            LinearMap::Identity => write!(f, "Identity"),
            LinearMap::Scalar(_) => write!(f, "Scalar"),
            LinearMap::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl LinearMap {
    pub fn apply(&self, x: &Operator) -> Operator {
        match self {
            LinearMap::CondExp { filtration, level } => filtration.levels[*level].expect(x),
            LinearMap::Identity => x.clone(),
            LinearMap::Scalar(t) => {
                let c = x.block(0)[(0, 0)];
                t.scale_complex(c)
            }
            LinearMap::Custom(f) => f(x),
        }
    }
}

/// Finite family `S = (S_n)`.
#[derive(Clone, Debug)]
pub struct MapFamily {
    pub source: Algebra,
    pub target: Algebra,
    pub maps: Vec<LinearMap>,
    pub positive: bool,
}

impl MapFamily {
    pub fn doob(f: &Filtration) -> Self {
        let arc = Arc::new(f.clone());
        let maps = (0..f.depth()).map(|level| LinearMap::CondExp { filtration: arc.clone(), level }).collect();
        Self { source: f.algebra().clone(), target: f.algebra().clone(), maps, positive: true }
    }

    pub fn identity(a: &Algebra) -> Self {
        Self { source: a.clone(), target: a.clone(), maps: vec![LinearMap::Identity], positive: true }
    }

    /// `λ ↦ λ T_n` from `ℂ`; positive iff every `T_n ⪰ 0`.
    pub fn scalar(ts: Vec<Operator>) -> Result<Self> {
        let target = ts.first().ok_or_else(|| NcError::invalid("maps", "empty family"))?.algebra().clone();
        let mut positive = true;
        for t in &ts {
            positive &= t.is_self_adjoint(1e-12) && t.psd_check(EPS_NUM)?.is_psd;
        }
        let maps = ts.into_iter().map(LinearMap::Scalar).collect();
        Ok(Self { source: Algebra::matrix(1, 1.0), target, maps, positive })
    }

    pub fn apply_all(&self, x: &Operator) -> Vec<Operator> {
        self.maps.iter().map(|m| m.apply(x)).collect()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Sampled positivity check on rank-one projections and matrix units.
    pub fn certify_positive(&self, rng: &mut impl Rng, samples: usize) -> Result<bool> {
        let mut tests = Vec::new();
        for (b, blk) in self.source.blocks().iter().enumerate() {
            for i in 0..blk.dim {
                tests.push(Operator::unit(&self.source, b, i, i));
            }
        }
        for _ in 0..samples {
            let g = crate::random::random_operator(rng, &self.source);
            tests.push(&g * &g.adjoint());
        }
        for t in &tests {
            for m in &self.maps {
                let y = m.apply(t);
                if !y.is_self_adjoint(1e-10) || !y.psd_check(EPS_NUM)?.is_psd {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

type Produce = dyn Fn(&Operator, f64) -> Result<Projection> + Send + Sync;

/// Weak type `(p, p)` witness: for each `(x, λ)` a projection `e` in the
/// target with `τ(1−e) ≤ C^p ‖x‖_p^p/λ^p` and `‖e S_n(x) e‖ ≤ λ`.
#[derive(Clone)]
pub struct WeakTypeOracle {
    pub name: String,
    pub p: f64,
    pub constant: f64,
    produce: Arc<Produce>,
}

impl fmt::Debug for WeakTypeOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeakTypeOracle({}, p={}, C={})", self.name, self.p, self.constant)
    }
}

impl WeakTypeOracle {
    pub fn new(
        name: impl Into<String>,
        p: f64,
        constant: f64,
        produce: impl Fn(&Operator, f64) -> Result<Projection> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), p, constant, produce: Arc::new(produce) }
    }

    pub fn produce(&self, x: &Operator, lambda: f64) -> Result<Projection> {
        (self.produce)(x, lambda)
    }

    /// The right-hand side `C^p ‖x‖_p^p / λ^p` (with the `p = ∞` convention).
    pub fn trace_bound(&self, x: &Operator, lambda: f64) -> f64 {
        if self.p.is_infinite() {
            if lambda >= self.constant * x.norm() {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.constant * x.lp_norm(self.p) / lambda).powf(self.p)
        }
    }

    /// Weak (1,1) for a martingale, constant 1.
    pub fn cuculescu(f: &Filtration) -> Self {
        let f = f.clone();
        Self::new("cuculescu", 1.0, 1.0, move |x, l| Ok(cuculescu(&f, x, l)?.q))
    }

    /// `1_{(−∞,λ]}(x)` for the identity family, any `p`.
    pub fn spectral(p: f64) -> Self {
        Self::new("spectral", p, 1.0, |x, l| x.below(l))
    }

    /// Strong `(∞,∞)` with constant `C`: `e = 1` when `λ ≥ C‖x‖`, else `0`.
    pub fn uniform(target: &Algebra, constant: f64) -> Self {
        let t = target.clone();
        Self::new("uniform", f64::INFINITY, constant, move |x, l| {
            // Relative slack absorbs roundoff in ‖x‖ for projections.
            Ok(if l >= constant * x.norm() * (1.0 - 1e-12) { Projection::one(&t) } else { Projection::zero(&t) })
        })
    }

    /// Weak (1,1), constant 2, for scalar families on `M_N` built from
    /// `e_{1,1}` and `e_{1,n}`: `r = Σ_{k > 1/t} e_{k,k}` with `t = λ/(2|c|)`.
    pub fn tail(target: &Algebra) -> Self {
        let t = target.clone();
        Self::new("tail", 1.0, 2.0, move |x, l| {
            let c = x.block(0)[(0, 0)].norm();
            if c == 0.0 {
                return Ok(Projection::one(&t));
            }
            let tt = l / (2.0 * c);
            let n = t.blocks()[0].dim;
            let diag: Vec<f64> = (1..=n).map(|k| if (k as f64) > 1.0 / tt { 1.0 } else { 0.0 }).collect();
            Ok(Projection::new_unchecked(Operator::from_diagonal(&t, &diag)?))
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub checks: usize,
    /// Largest `τ(1−e) − C^p‖x‖_p^p/λ^p`, relative to the bound.
    pub worst_trace_excess: f64,
    /// Largest `‖e S_n(x) e‖ / λ`.
    pub worst_norm_ratio: f64,
    pub pass: bool,
}

/// Checks both halves of the weak-type contract on every `(x, λ)` pair.
pub fn verify_oracle(o: &WeakTypeOracle, s: &MapFamily, xs: &[Operator], lambdas: &[f64]) -> Result<OracleReport> {
    let mut checks = 0;
    let mut worst_trace_excess = f64::NEG_INFINITY;
    let mut worst_norm_ratio: f64 = 0.0;
    let mut pass = true;
    for x in xs {
        let images = s.apply_all(x);
        for &l in lambdas {
            let e = o.produce(x, l)?;
            let miss = e.complement().tau();
            let bound = o.trace_bound(x, l);
            let slack = 1e-12 * s.target.total_trace();
            let excess = if bound.is_finite() { (miss - bound) / bound.max(slack) } else { f64::NEG_INFINITY };
            worst_trace_excess = worst_trace_excess.max(excess);
            if bound.is_finite() && miss > bound + slack {
                pass = false;
            }
            for y in &images {
                let r = y.compress(&e).norm() / l;
                worst_norm_ratio = worst_norm_ratio.max(r);
                if r > 1.0 + EPS_NUM {
                    pass = false;
                }
            }
            checks += 1;
        }
    }
    Ok(OracleReport { checks, worst_trace_excess, worst_norm_ratio, pass })
}
