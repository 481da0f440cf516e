//! Drag and lift, conservation monitors and the shedding period.
//!
//! Forces are reported as the force exerted by the fluid on the body,
//! `F = -integral over the body boundary of sigma n` with `n` the outward
//! normal of the fluid domain and `sigma = nu D(u) - p I`.

mod period;

use std::collections::HashSet;

use crate::assembly::{Assembler, ConvectiveForm, PointField};
use crate::fem::{gauss_legendre_unit, MixedSpace, QuadratureRule, Tabulation};
use crate::mesh::BoundaryTag;
use crate::scalar::Real;
use crate::timeloop::{FlowOperator, Scheme, StepError};

pub use period::{estimate_period, NoPeriod, PeriodEstimate, PERIOD_WINDOW};

/// Everything recorded for one accepted time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepQuantities {
    pub t: f64,
    pub drag: f64,
    pub lift: f64,
    pub drag_direct: f64,
    pub lift_direct: f64,
    pub kinetic_energy: f64,
    pub momentum: [f64; 2],
    pub angular_momentum: f64,
    pub div_l2: f64,
    pub newton_iters: usize,
    pub factorizations: usize,
    pub residual: f64,
}

impl StepQuantities {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.drag,
            self.lift,
            self.drag_direct,
            self.lift_direct,
            self.kinetic_energy,
            self.momentum[0],
            self.momentum[1],
            self.angular_momentum,
            self.div_l2,
            self.residual,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Integral quantities of a velocity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors<T> {
    /// `1/2 integral |u|^2`
    pub kinetic_energy: T,
    /// `integral u`
    pub momentum: [T; 2],
    /// `integral (x u_y - y u_x)`
    pub angular_momentum: T,
    /// `||div u||_{L2}`
    pub div_l2: T,
}

pub fn monitors<T: Real>(assembler: &Assembler<T>, u: &[T]) -> Monitors<T> {
    let space = assembler.space();
    let tabs = assembler.lin_tables();
    let mut pf = PointField::new(space.velocity().n_local());
    let mut e = T::zero();
    let mut m = [T::zero(); 2];
    let mut l = T::zero();
    let mut d = T::zero();
    for t in 0..space.mesh().n_triangles() {
        let geo = space.geometry(t);
        for q in 0..tabs.rule.len() {
            let fp = pf.eval(space, &tabs.u, t, q, u);
            let w = tabs.rule.weights[q] * pf.jac;
            let x = geo.map(tabs.rule.points[q]);
            e += w * (fp.u[0] * fp.u[0] + fp.u[1] * fp.u[1]);
            m[0] += w * fp.u[0];
            m[1] += w * fp.u[1];
            l += w * (x[0] * fp.u[1] - x[1] * fp.u[0]);
            d += w * fp.div() * fp.div();
        }
    }
    Monitors {
        kinetic_energy: e * T::lit(0.5),
        momentum: m,
        angular_momentum: l,
        div_l2: d.sqrt(),
    }
}

/// Nodal indicators of the velocity dofs on boundary part `tag`: `[V_x, V_y]`
/// with `V_x = (1, 0)` and `V_y = (0, 1)` there and zero elsewhere.
pub fn force_lifting<T: Real>(space: &MixedSpace<T>, tag: &BoundaryTag) -> [Vec<T>; 2] {
    let dofs = space.velocity().boundary_dofs(tag);
    [0, 1].map(|c| {
        let mut v = space.zeros();
        let off = space.u_offset(c);
        for &d in dofs {
            v[off + d] = T::one();
        }
        v
    })
}

/// Drag and lift on boundary part `tag` from the residual of the step
/// equation of type `kind`, tested with the lifting of `force_lifting`.
///
/// `states` are newest first and must reach as deep as the stencil of `kind`.
pub fn force_residual<T: Real>(
    op: &FlowOperator<T>,
    tag: &BoundaryTag,
    kind: Scheme,
    dt: f64,
    states: &[&[T]],
) -> Result<[T; 2], StepError> {
    let r = op.step_residual(kind, dt, states)?;
    let space = op.space();
    let dofs = space.velocity().boundary_dofs(tag);
    let mut f = [T::zero(); 2];
    for (c, fc) in f.iter_mut().enumerate() {
        let off = space.u_offset(c);
        for &d in dofs {
            *fc -= r[off + d];
        }
    }
    Ok(f)
}

/// Drag and lift on boundary part `tag` by integrating the traction.
///
/// With the EMAC form the solved pressure is shifted back to the kinematic
/// one, `p + |u|^2 / 2`.
pub fn force_direct<T: Real>(
    space: &MixedSpace<T>,
    tag: &BoundaryTag,
    u: &[T],
    nu: T,
    form: ConvectiveForm,
) -> [T; 2] {
    let mesh = space.mesh();
    let wanted: HashSet<[usize; 2]> = mesh
        .edges_with_tag(tag)
        .map(|e| sorted(e.vertices))
        .collect();
    if wanted.is_empty() {
        return [T::zero(); 2];
    }
    let rules = EdgeRules::new(space);
    let mut pf = PointField::new(space.velocity().n_local());
    let po = space.p_offset();
    let mut f = [T::zero(); 2];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            if !wanted.contains(&sorted([a, b])) {
                continue;
            }
            let [pa, pb] = [mesh.vertices()[a], mesh.vertices()[b]];
            let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
            let len = (dx * dx + dy * dy).sqrt();
            // Counterclockwise triangle: the outward normal is on the right.
            let n = [dy / len, -dx / len];
            let r = &rules.edges[e];
            for q in 0..r.weights.len() {
                let fp = pf.eval(space, &r.u, t, q, u);
                let mut p = space
                    .pressure()
                    .cell_dofs(t)
                    .iter()
                    .zip(r.p.values(q))
                    .map(|(&d, &v)| u[po + d] * v)
                    .sum::<T>();
                if form == ConvectiveForm::Emac {
                    p += T::lit(0.5) * (fp.u[0] * fp.u[0] + fp.u[1] * fp.u[1]);
                }
                let w = r.weights[q] * len;
                for (i, fi) in f.iter_mut().enumerate() {
                    let mut s = -p * n[i];
                    for (j, &nj) in n.iter().enumerate() {
                        s += nu * (fp.g[i][j] + fp.g[j][i]) * nj;
                    }
                    *fi -= w * s;
                }
            }
        }
    }
    f
}

fn sorted([a, b]: [usize; 2]) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

struct EdgeRule<T> {
    weights: Vec<T>,
    u: Tabulation<T>,
    p: Tabulation<T>,
}

/// Gauss rules on the three local edges, exact for degree `2k + 1`.
struct EdgeRules<T> {
    edges: Vec<EdgeRule<T>>,
}

impl<T: Real> EdgeRules<T> {
    fn new(space: &MixedSpace<T>) -> Self {
        let k = space.order();
        let (xs, ws) = gauss_legendre_unit(k + 1);
        let edges = (0..3)
            .map(|e| {
                let points = xs
                    .iter()
                    .map(|&s| {
                        let mut b = [T::zero(); 3];
                        b[e] = T::lit(1.0 - s);
                        b[(e + 1) % 3] = T::lit(s);
                        b
                    })
                    .collect();
                let rule = QuadratureRule {
                    points,
                    weights: ws.iter().map(|&w| T::lit(w)).collect(),
                    degree: 2 * k + 1,
                };
                EdgeRule {
                    u: space.velocity().element().tabulate(&rule),
                    p: space.pressure().element().tabulate(&rule),
                    weights: rule.weights,
                }
            })
            .collect();
        EdgeRules { edges }
    }
}

#[cfg(test)]
mod tests;
