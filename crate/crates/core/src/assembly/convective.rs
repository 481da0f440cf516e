//! Pointwise integrands of the convective forms.
//!
//! Every form is written as `F_val . w + F_grad : grad w` for a test function
//! `w`, with `G_ij = d_j u_i`.

use super::ConvectiveForm;
use crate::fem::{MixedSpace, Tabulation};
use crate::scalar::Real;

/// Velocity value and gradient at one point.
#[derive(Debug, Clone, Copy)]
pub struct FieldPoint<T> {
    pub u: [T; 2],
    /// `g[i][j] = d_j u_i`
    pub g: [[T; 2]; 2],
}

impl<T: Real> FieldPoint<T> {
    #[inline]
    pub fn div(&self) -> T {
        self.g[0][0] + self.g[1][1]
    }
}

/// Scratch space for evaluating a velocity field on one element.
pub struct PointField<T> {
    pub phi: Vec<T>,
    pub grad: Vec<[T; 2]>,
    /// Twice the element area: the reference-to-physical Jacobian.
    pub jac: T,
}

impl<T: Real> PointField<T> {
    pub fn new(n_local: usize) -> Self {
        PointField {
            phi: vec![T::zero(); n_local],
            grad: vec![[T::zero(); 2]; n_local],
            jac: T::zero(),
        }
    }

    /// Loads basis data for point `q` of triangle `t` and evaluates `u` there.
    pub fn eval(
        &mut self,
        space: &MixedSpace<T>,
        tab: &Tabulation<T>,
        t: usize,
        q: usize,
        u: &[T],
    ) -> FieldPoint<T> {
        let geo = space.geometry(t);
        self.jac = geo.area * T::lit(2.0);
        self.phi.copy_from_slice(tab.values(q));
        tab.grads(q, &geo.grad_bary, &mut self.grad);
        let dofs = space.velocity().cell_dofs(t);
        let mut p = FieldPoint {
            u: [T::zero(); 2],
            g: [[T::zero(); 2]; 2],
        };
        for c in 0..2 {
            let off = space.u_offset(c);
            for (a, &d) in dofs.iter().enumerate() {
                let x = u[off + d];
                p.u[c] += x * self.phi[a];
                p.g[c][0] += x * self.grad[a][0];
                p.g[c][1] += x * self.grad[a][1];
            }
        }
        p
    }
}

type Flux<T> = ([T; 2], [[T; 2]; 2]);

/// `(u . grad) u` as `G u`.
#[inline]
fn gu<T: Real>(g: &[[T; 2]; 2], u: &[T; 2]) -> [T; 2] {
    [
        g[0][0] * u[0] + g[0][1] * u[1],
        g[1][0] * u[0] + g[1][1] * u[1],
    ]
}

/// `G^T u`, which equals `grad(|u|^2 / 2)`.
#[inline]
fn gtu<T: Real>(g: &[[T; 2]; 2], u: &[T; 2]) -> [T; 2] {
    [
        g[0][0] * u[0] + g[1][0] * u[1],
        g[0][1] * u[0] + g[1][1] * u[1],
    ]
}

pub fn flux<T: Real>(form: ConvectiveForm, p: &FieldPoint<T>) -> Flux<T> {
    let z = T::zero();
    let (u, g) = (&p.u, &p.g);
    match form {
        ConvectiveForm::Convective => (gu(g, u), [[z; 2]; 2]),
        ConvectiveForm::Skew => {
            let a = gu(g, u);
            let h = T::lit(0.5) * p.div();
            ([a[0] + h * u[0], a[1] + h * u[1]], [[z; 2]; 2])
        }
        ConvectiveForm::Conservative => (
            [z; 2],
            [
                [-u[0] * u[0], -u[0] * u[1]],
                [-u[1] * u[0], -u[1] * u[1]],
            ],
        ),
        ConvectiveForm::Emac => {
            let a = gu(g, u);
            let b = gtu(g, u);
            let d = p.div();
            (
                [a[0] + b[0] + d * u[0], a[1] + b[1] + d * u[1]],
                [[z; 2]; 2],
            )
        }
    }
}

/// Derivative of [`flux`] in direction `phi e_d` (gradient `grad_phi`).
pub fn flux_derivative<T: Real>(
    form: ConvectiveForm,
    p: &FieldPoint<T>,
    d: usize,
    phi: T,
    grad_phi: [T; 2],
) -> Flux<T> {
    let z = T::zero();
    let (u, g) = (&p.u, &p.g);
    // dU = phi e_d, dG = e_d (x) grad_phi, d(div) = d_d phi
    let e = |i: usize| if i == d { T::one() } else { z };
    let ug = grad_phi[0] * u[0] + grad_phi[1] * u[1];
    // d(G u) = dG u + G dU
    let dgu = [e(0) * ug + g[0][d] * phi, e(1) * ug + g[1][d] * phi];
    match form {
        ConvectiveForm::Convective => (dgu, [[z; 2]; 2]),
        ConvectiveForm::Skew => {
            let h = T::lit(0.5);
            let div = p.div();
            let dd = grad_phi[d];
            (
                [
                    dgu[0] + h * (dd * u[0] + div * e(0) * phi),
                    dgu[1] + h * (dd * u[1] + div * e(1) * phi),
                ],
                [[z; 2]; 2],
            )
        }
        ConvectiveForm::Conservative => {
            // d(-u_i u_j) = -(dU_i u_j + u_i dU_j)
            let du = [e(0) * phi, e(1) * phi];
            (
                [z; 2],
                [
                    [-(du[0] * u[0] + u[0] * du[0]), -(du[0] * u[1] + u[0] * du[1])],
                    [-(du[1] * u[0] + u[1] * du[0]), -(du[1] * u[1] + u[1] * du[1])],
                ],
            )
        }
        ConvectiveForm::Emac => {
            // d(G^T u)_i = dG_{d i} u_d + G_{d i} phi
            let dgtu = [grad_phi[0] * u[d] + g[d][0] * phi, grad_phi[1] * u[d] + g[d][1] * phi];
            let div = p.div();
            let dd = grad_phi[d];
            (
                [
                    dgu[0] + dgtu[0] + dd * u[0] + div * e(0) * phi,
                    dgu[1] + dgtu[1] + dd * u[1] + div * e(1) * phi,
                ],
                [[z; 2]; 2],
            )
        }
    }
}
