//! Element assembly of the Navier-Stokes operators on a [`MixedSpace`].
//!
//! All matrices share one sparsity pattern: full velocity-velocity coupling,
//! velocity-pressure coupling in both directions, the multiplier row and
//! column over the pressure block, and the whole diagonal. Element kernels
//! may run on the rayon pool; the scatter into global storage is sequential
//! in element order, so results do not depend on the thread count.

mod convective;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::fem::{quadrature, Constraints, MixedSpace, QuadratureRule, Tabulation};
use crate::scalar::Real;
use crate::sparse::{CsrMatrix, CsrPattern};

pub use convective::{PointField, FieldPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvectiveForm {
    Convective,
    Skew,
    Conservative,
    Emac,
}

impl ConvectiveForm {
    pub const ALL: [ConvectiveForm; 4] = [
        ConvectiveForm::Convective,
        ConvectiveForm::Skew,
        ConvectiveForm::Conservative,
        ConvectiveForm::Emac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvectiveForm::Convective => "conv",
            ConvectiveForm::Skew => "skew",
            ConvectiveForm::Conservative => "cons",
            ConvectiveForm::Emac => "emac",
        }
    }
}

impl fmt::Display for ConvectiveForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConvectiveForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conv" | "convective" => Ok(ConvectiveForm::Convective),
            "skew" | "skew-symmetric" | "skew_symmetric" => Ok(ConvectiveForm::Skew),
            "cons" | "conservative" => Ok(ConvectiveForm::Conservative),
            "emac" => Ok(ConvectiveForm::Emac),
            _ => Err(format!(
                "unknown convective form '{s}' (expected conv, skew, cons or emac)"
            )),
        }
    }
}

pub(crate) struct Tables<T> {
    pub rule: QuadratureRule<T>,
    pub u: Tabulation<T>,
    pub p: Tabulation<T>,
}

impl<T: Real> Tables<T> {
    fn new(space: &MixedSpace<T>, degree: usize) -> Self {
        let rule = quadrature(degree).expect("degree within supported range for k <= 4");
        let u = space.velocity().element().tabulate(&rule);
        let p = space.pressure().element().tabulate(&rule);
        Tables { rule, u, p }
    }
}

const CHUNK: usize = 256;

pub struct Assembler<T: Real> {
    space: Arc<MixedSpace<T>>,
    pattern: Arc<CsrPattern>,
    /// Exactness 2k, for bilinear forms.
    lin: Tables<T>,
    /// Exactness 3k, for the trilinear forms.
    nl: Tables<T>,
}

impl<T: Real> Assembler<T> {
    pub fn new(space: Arc<MixedSpace<T>>) -> Self {
        let k = space.order();
        let lin = Tables::new(&space, 2 * k);
        let nl = Tables::new(&space, 3 * k);
        let pattern = Arc::new(mixed_pattern(&space));
        Assembler {
            space,
            pattern,
            lin,
            nl,
        }
    }

    pub fn space(&self) -> &Arc<MixedSpace<T>> {
        &self.space
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn zeros(&self) -> CsrMatrix<T> {
        CsrMatrix::zeros(self.pattern.clone())
    }

    pub(crate) fn lin_tables(&self) -> &Tables<T> {
        &self.lin
    }

    fn n_local(&self) -> (usize, usize) {
        (
            self.space.velocity().n_local(),
            self.space.pressure().n_local(),
        )
    }

    /// Global indices of the local element unknowns `[u_x | u_y | p]`.
    fn local_map(&self, t: usize, out: &mut Vec<usize>) {
        let s = &self.space;
        out.clear();
        for c in 0..2 {
            let off = s.u_offset(c);
            out.extend(s.velocity().cell_dofs(t).iter().map(|&d| off + d));
        }
        let off = s.p_offset();
        out.extend(s.pressure().cell_dofs(t).iter().map(|&d| off + d));
    }

    fn assemble_matrix<F>(&self, kernel: F) -> CsrMatrix<T>
    where
        F: Fn(usize, &mut [T]) + Sync,
    {
        let (nu, np) = self.n_local();
        let nl = 2 * nu + np;
        let nt = self.space.mesh().n_triangles();
        let mut m = self.zeros();
        let mut map = Vec::with_capacity(nl);
        let mut start = 0;
        while start < nt {
            let end = (start + CHUNK).min(nt);
            let locals: Vec<Vec<T>> = (start..end)
                .into_par_iter()
                .map(|t| {
                    let mut loc = vec![T::zero(); nl * nl];
                    kernel(t, &mut loc);
                    loc
                })
                .collect();
            for (t, loc) in (start..end).zip(&locals) {
                self.local_map(t, &mut map);
                for (i, &gi) in map.iter().enumerate() {
                    for (j, &gj) in map.iter().enumerate() {
                        let v = loc[i * nl + j];
                        if v != T::zero() {
                            m.add(gi, gj, v);
                        }
                    }
                }
            }
            start = end;
        }
        m
    }

    fn assemble_vector<F>(&self, kernel: F) -> Vec<T>
    where
        F: Fn(usize, &mut [T]) + Sync,
    {
        let (nu, np) = self.n_local();
        let nl = 2 * nu + np;
        let nt = self.space.mesh().n_triangles();
        let mut r = self.space.zeros();
        let mut map = Vec::with_capacity(nl);
        let mut start = 0;
        while start < nt {
            let end = (start + CHUNK).min(nt);
            let locals: Vec<Vec<T>> = (start..end)
                .into_par_iter()
                .map(|t| {
                    let mut loc = vec![T::zero(); nl];
                    kernel(t, &mut loc);
                    loc
                })
                .collect();
            for (t, loc) in (start..end).zip(&locals) {
                self.local_map(t, &mut map);
                for (&g, &v) in map.iter().zip(loc) {
                    r[g] += v;
                }
            }
            start = end;
        }
        r
    }

    /// L2 Gram matrix on the velocity block; zero elsewhere.
    pub fn assemble_mass(&self) -> CsrMatrix<T> {
        let (nu, np) = self.n_local();
        let nl = 2 * nu + np;
        let tabs = &self.lin;
        self.assemble_matrix(|t, loc| {
            let jac = self.space.geometry(t).area * T::lit(2.0);
            for q in 0..tabs.rule.len() {
                let w = tabs.rule.weights[q] * jac;
                let phi = tabs.u.values(q);
                for a in 0..nu {
                    for b in 0..nu {
                        let v = w * phi[a] * phi[b];
                        loc[a * nl + b] += v;
                        loc[(nu + a) * nl + nu + b] += v;
                    }
                }
            }
        })
    }

    /// `a(u, v) = integral of (nu/2) D(u) : D(v)` with `D(u) = grad u + grad u^T`.
    pub fn assemble_viscous(&self, nu_visc: T) -> CsrMatrix<T> {
        let (nu, np) = self.n_local();
        let nl = 2 * nu + np;
        let tabs = &self.lin;
        self.assemble_matrix(|t, loc| {
            let geo = self.space.geometry(t);
            let jac = geo.area * T::lit(2.0);
            let mut g = vec![[T::zero(); 2]; nu];
            for q in 0..tabs.rule.len() {
                let w = tabs.rule.weights[q] * jac * nu_visc;
                tabs.u.grads(q, &geo.grad_bary, &mut g);
                for a in 0..nu {
                    for b in 0..nu {
                        let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                        for c in 0..2 {
                            for d in 0..2 {
                                let mut v = g[a][d] * g[b][c];
                                if c == d {
                                    v += dot;
                                }
                                loc[(c * nu + a) * nl + d * nu + b] += w * v;
                            }
                        }
                    }
                }
            }
        })
    }

    /// `b(v, q) = -integral of q div v` in both off-diagonal blocks, plus the
    /// multiplier row and column `m_a = integral of psi_a`.
    pub fn assemble_div(&self) -> CsrMatrix<T> {
        let (nu, np) = self.n_local();
        let nl = 2 * nu + np;
        let tabs = &self.lin;
        let mut m = self.assemble_matrix(|t, loc| {
            let geo = self.space.geometry(t);
            let jac = geo.area * T::lit(2.0);
            let mut g = vec![[T::zero(); 2]; nu];
            for q in 0..tabs.rule.len() {
                let w = tabs.rule.weights[q] * jac;
                tabs.u.grads(q, &geo.grad_bary, &mut g);
                let psi = tabs.p.values(q);
                for (r, &pr) in psi.iter().enumerate() {
                    let row = 2 * nu + r;
                    for a in 0..nu {
                        for c in 0..2 {
                            let v = -w * pr * g[a][c];
                            let col = c * nu + a;
                            loc[row * nl + col] += v;
                            loc[col * nl + row] += v;
                        }
                    }
                }
            }
        });
        let lam = self.space.lambda_index();
        let off = self.space.p_offset();
        for (a, w) in self.space.pressure_weights().into_iter().enumerate() {
            m.add(off + a, lam, w);
            m.add(lam, off + a, w);
        }
        m
    }

    /// `r_i = c(u, u, phi_i)` for every velocity test function; zero in the
    /// pressure and multiplier entries.
    pub fn assemble_convective(&self, form: ConvectiveForm, u: &[T]) -> Vec<T> {
        let nu = self.space.velocity().n_local();
        let tabs = &self.nl;
        self.assemble_vector(|t, loc| {
            let mut field = PointField::new(nu);
            for q in 0..tabs.rule.len() {
                let p = field.eval(&self.space, &tabs.u, t, q, u);
                let w = tabs.rule.weights[q] * field.jac;
                let (fv, fg) = convective::flux(form, &p);
                for a in 0..nu {
                    let (phi, g) = (field.phi[a], field.grad[a]);
                    for c in 0..2 {
                        loc[c * nu + a] += w * (fv[c] * phi + fg[c][0] * g[0] + fg[c][1] * g[1]);
                    }
                }
            }
        })
    }

    /// Gateaux derivative of [`Self::assemble_convective`] at `u`.
    pub fn assemble_convective_jacobian(&self, form: ConvectiveForm, u: &[T]) -> CsrMatrix<T> {
        let (nu, np) = self.n_local();
        let nl = 2 * nu + np;
        let tabs = &self.nl;
        self.assemble_matrix(|t, loc| {
            let mut field = PointField::new(nu);
            for q in 0..tabs.rule.len() {
                let p = field.eval(&self.space, &tabs.u, t, q, u);
                let w = tabs.rule.weights[q] * field.jac;
                for d in 0..2 {
                    for b in 0..nu {
                        let (dv, dg) = convective::flux_derivative(
                            form,
                            &p,
                            d,
                            field.phi[b],
                            field.grad[b],
                        );
                        let col = d * nu + b;
                        for a in 0..nu {
                            let (phi, g) = (field.phi[a], field.grad[a]);
                            for c in 0..2 {
                                let v = dv[c] * phi + dg[c][0] * g[0] + dg[c][1] * g[1];
                                loc[(c * nu + a) * nl + col] += w * v;
                            }
                        }
                    }
                }
            }
        })
    }
}

/// Sparsity pattern shared by every operator on `space`.
pub fn mixed_pattern<T: Real>(space: &MixedSpace<T>) -> CsrPattern {
    let n = space.size();
    let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let nt = space.mesh().n_triangles();
    let mut us = Vec::new();
    let mut ps = Vec::new();
    for t in 0..nt {
        us.clear();
        for c in 0..2 {
            let off = space.u_offset(c);
            us.extend(space.velocity().cell_dofs(t).iter().map(|&d| off + d));
        }
        ps.clear();
        let off = space.p_offset();
        ps.extend(space.pressure().cell_dofs(t).iter().map(|&d| off + d));
        for &i in &us {
            rows[i].extend_from_slice(&us);
            rows[i].extend_from_slice(&ps);
        }
        for &i in &ps {
            rows[i].extend_from_slice(&us);
        }
    }
    let lam = space.lambda_index();
    for a in space.p_offset()..lam {
        rows[a].push(lam);
        rows[lam].push(a);
    }
    CsrPattern::from_rows(rows)
}

/// Strong Dirichlet elimination, symmetric in rows and columns.
///
/// Constrained rows become identity rows with right-hand side `g`; in every
/// other row the constrained columns are moved to the right-hand side and
/// zeroed.
pub fn apply_dirichlet<T: Real>(a: &mut CsrMatrix<T>, mut rhs: Option<&mut [T]>, c: &Constraints<T>) {
    let pattern = a.pattern().clone();
    let values = a.values_mut();
    for i in 0..pattern.n() {
        let range = pattern.row_ptr()[i]..pattern.row_ptr()[i + 1];
        if c.mask[i] {
            for p in range {
                values[p] = if pattern.col_idx()[p] == i {
                    T::one()
                } else {
                    T::zero()
                };
            }
            if let Some(r) = rhs.as_deref_mut() {
                r[i] = c.values[i];
            }
        } else {
            for p in range {
                let j = pattern.col_idx()[p];
                if c.mask[j] {
                    if let Some(r) = rhs.as_deref_mut() {
                        r[i] -= values[p] * c.values[j];
                    }
                    values[p] = T::zero();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
