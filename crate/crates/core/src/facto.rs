//! Diagonal majorization with a PSD certificate, and row/column factorization
//! of `Σ a_i u_i b_i` through a single contraction.

use crate::algebra::{Operator, Projection, EPS_NUM, EPS_PROJ, EPS_RANK};
use crate::error::{NcError, Result};

#[derive(Clone, Debug)]
pub struct DiagMajorant {
    /// `M = (Σ 1/d_k) Σ d_k q_k x q_k`.
    pub majorant: Operator,
    /// `M − e x e`, `e = Σ q_k`.
    pub certificate: Operator,
    pub lambda_min: f64,
    pub is_psd: bool,
}

pub fn check_disjoint(q: &[Projection]) -> Result<()> {
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            let overlap = (q[i].as_operator() * q[j].as_operator()).norm();
            if overlap > EPS_PROJ {
                return Err(NcError::OverlappingProjections(i, j, overlap));
            }
        }
    }
    Ok(())
}

pub fn diag_majorant(x: &Operator, q: &[Projection], d: &[f64]) -> Result<DiagMajorant> {
    if q.len() != d.len() {
        return Err(NcError::DimensionMismatch(format!("{} projections, {} weights", q.len(), d.len())));
    }
    if q.is_empty() {
        return Err(NcError::invalid("q", "at least one projection required"));
    }
    if let Some(i) = d.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(NcError::invalid(format!("d[{i}]"), "must be finite and > 0"));
    }
    for qk in q {
        if qk.algebra() != x.algebra() {
            return Err(NcError::DimensionMismatch("projection and operator algebras differ".into()));
        }
    }
    check_disjoint(q)?;
    x.require_psd(EPS_NUM)?;
    let c: f64 = d.iter().map(|v| 1.0 / v).sum();
    let a = x.algebra();
    let mut m = Operator::zero(a);
    let mut e = Operator::zero(a);
    for (qk, &dk) in q.iter().zip(d) {
        m = &m + &x.compress(qk).scale(c * dk);
        e = &e + qk.as_operator();
    }
    let exe = &(&e * x) * &e;
    let certificate = &m - &exe;
    // Scale the PSD slack by ‖x‖, the natural size of both terms.
    let lambda_min = certificate.lambda_min()?;
    let is_psd = lambda_min >= -EPS_NUM * x.norm().max(1.0);
    Ok(DiagMajorant { majorant: m, certificate, lambda_min, is_psd })
}

#[derive(Clone, Debug)]
pub struct RowColumn {
    /// `(Σ a_i a_i*)^{1/2}`.
    pub r: Operator,
    pub w: Operator,
    /// `(Σ b_i* b_i)^{1/2}`.
    pub c: Operator,
    /// `‖R w C − Σ a_i u_i b_i‖`.
    pub residual: f64,
    pub w_norm: f64,
}

/// `R, R⁺, C, C⁺` for fixed `a, b`, so many middle lists can share them.
#[derive(Clone, Debug)]
pub struct RowColumnFrame {
    a: Vec<Operator>,
    b: Vec<Operator>,
    r: Operator,
    r_inv: Operator,
    c: Operator,
    c_inv: Operator,
}

impl RowColumnFrame {
    pub fn new(a: &[Operator], b: &[Operator]) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(NcError::DimensionMismatch(format!("factor lists have lengths {}, {}", a.len(), b.len())));
        }
        let alg = a[0].algebra();
        let mut aa = Operator::zero(alg);
        let mut bb = Operator::zero(alg);
        for (ai, bi) in a.iter().zip(b) {
            aa = aa.checked_add(&(ai * &ai.adjoint()))?;
            bb = bb.checked_add(&(&bi.adjoint() * bi))?;
        }
        let (r, r_inv) = aa.sqrt_and_pinv_sqrt(EPS_RANK)?;
        let (c, c_inv) = bb.sqrt_and_pinv_sqrt(EPS_RANK)?;
        Ok(Self { a: a.to_vec(), b: b.to_vec(), r, r_inv, c, c_inv })
    }

    pub fn factor(&self, u: &[Operator]) -> Result<RowColumn> {
        if u.len() != self.a.len() {
            return Err(NcError::DimensionMismatch(format!("{} middles for {} factors", u.len(), self.a.len())));
        }
        for (i, ui) in u.iter().enumerate() {
            let n = ui.norm();
            if n > 1.0 + EPS_NUM {
                return Err(NcError::invalid(format!("u[{i}]"), format!("not a contraction (norm {n})")));
            }
        }
        let mut s = Operator::zero(self.r.algebra());
        for ((ai, ui), bi) in self.a.iter().zip(u).zip(&self.b) {
            s = s.checked_add(&(&(ai * ui) * bi))?;
        }
        let w = &(&self.r_inv * &s) * &self.c_inv;
        let residual = (&(&(&self.r * &w) * &self.c) - &s).norm();
        let w_norm = w.norm();
        Ok(RowColumn { r: self.r.clone(), w, c: self.c.clone(), residual, w_norm })
    }
}

pub fn row_column_factor(a: &[Operator], u: &[Operator], b: &[Operator]) -> Result<RowColumn> {
    if a.len() != u.len() || a.len() != b.len() || a.is_empty() {
        return Err(NcError::DimensionMismatch(format!(
            "factor lists have lengths {}, {}, {}",
            a.len(),
            u.len(),
            b.len()
        )));
    }
    RowColumnFrame::new(a, b)?.factor(u)
}
