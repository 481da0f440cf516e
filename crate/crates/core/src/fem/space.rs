use std::collections::BTreeMap;
use std::sync::Arc;

use super::basis::LagrangeElement;
use super::quadrature::quadrature;
use super::FemError;
use crate::mesh::{BoundaryTag, Mesh};
use crate::scalar::Real;

/// Affine map data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry<T> {
    pub vertices: [[T; 2]; 3],
    pub area: T,
    /// Gradients of the barycentric coordinates.
    pub grad_bary: [[T; 2]; 3],
}

impl<T: Real> CellGeometry<T> {
    pub fn new(vertices: [[T; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let g1 = [(p2[1] - p0[1]) / det, -(p2[0] - p0[0]) / det];
        let g2 = [-(p1[1] - p0[1]) / det, (p1[0] - p0[0]) / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        CellGeometry {
            vertices,
            area: det * T::lit(0.5),
            grad_bary: [g0, g1, g2],
        }
    }

    #[inline]
    pub fn map(&self, b: [T; 3]) -> [T; 2] {
        let [p0, p1, p2] = self.vertices;
        [
            b[0] * p0[0] + b[1] * p1[0] + b[2] * p2[0],
            b[0] * p0[1] + b[1] * p1[1] + b[2] * p2[1],
        ]
    }
}

/// Continuous Lagrange space of order `k` on a mesh.
///
/// Global numbering: vertex dofs first (same index as the vertex), then
/// `k - 1` dofs per edge running from the lower to the higher vertex index,
/// then interior dofs triangle by triangle.
#[derive(Debug, Clone)]
pub struct ScalarSpace<T> {
    element: LagrangeElement,
    n_dofs: usize,
    cell_dofs: Vec<usize>,
    dof_points: Vec<[T; 2]>,
    boundary: BTreeMap<BoundaryTag, Vec<usize>>,
}

impl<T: Real> ScalarSpace<T> {
    pub fn new(mesh: &Mesh<T>, order: usize) -> Self {
        let element = LagrangeElement::new(order);
        let k = order;
        let topo = mesh.topology();
        let (nv, ne, nt) = (mesh.n_vertices(), mesh.n_edges(), mesh.n_triangles());
        let ni = element.n_interior();
        let n_dofs = nv + (k - 1) * ne + ni * nt;
        let nl = element.n_local();
        let mut cell_dofs = Vec::with_capacity(nl * nt);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            cell_dofs.extend_from_slice(tri);
            for e in 0..3 {
                let edge = topo.triangle_edges[t][e];
                let base = nv + edge * (k - 1);
                let forward = tri[e] < tri[(e + 1) % 3];
                for j in 0..k - 1 {
                    cell_dofs.push(if forward {
                        base + j
                    } else {
                        base + (k - 2 - j)
                    });
                }
            }
            let base = nv + (k - 1) * ne + t * ni;
            cell_dofs.extend(base..base + ni);
        }

        let mut dof_points = vec![[T::zero(); 2]; n_dofs];
        for t in 0..nt {
            let geo = CellGeometry::new(mesh.triangle_coords(t));
            for i in 0..nl {
                dof_points[cell_dofs[t * nl + i]] = geo.map(element.node(i));
            }
        }
        // Vertex coordinates exactly, not through the affine map.
        dof_points[..nv].copy_from_slice(mesh.vertices());

        let mut edge_index = std::collections::HashMap::with_capacity(ne);
        for (e, &pair) in topo.edges.iter().enumerate() {
            edge_index.insert(pair, e);
        }
        let mut boundary: BTreeMap<BoundaryTag, Vec<usize>> = BTreeMap::new();
        for be in mesh.boundary_edges() {
            let [a, b] = be.vertices;
            let e = edge_index[&[a.min(b), a.max(b)]];
            let set = boundary.entry(be.tag.clone()).or_default();
            set.push(a);
            set.push(b);
            set.extend(nv + e * (k - 1)..nv + (e + 1) * (k - 1));
        }
        for set in boundary.values_mut() {
            set.sort_unstable();
            set.dedup();
        }

        ScalarSpace {
            element,
            n_dofs,
            cell_dofs,
            dof_points,
            boundary,
        }
    }

    pub fn order(&self) -> usize {
        self.element.order()
    }

    pub fn element(&self) -> &LagrangeElement {
        &self.element
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_local(&self) -> usize {
        self.element.n_local()
    }

    #[inline]
    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        let n = self.element.n_local();
        &self.cell_dofs[t * n..(t + 1) * n]
    }

    pub fn dof_points(&self) -> &[[T; 2]] {
        &self.dof_points
    }

    /// Sorted dofs on edges carrying `tag`; empty if the tag is absent.
    pub fn boundary_dofs(&self, tag: &BoundaryTag) -> &[usize] {
        self.boundary.get(tag).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn interpolate(&self, f: impl Fn([T; 2]) -> T) -> Vec<T> {
        self.dof_points.iter().map(|&p| f(p)).collect()
    }

    /// Value of a finite element function at barycentric point `b` of triangle `t`.
    pub fn evaluate(&self, coeffs: &[T], t: usize, b: [T; 3]) -> T {
        let mut phi = vec![T::zero(); self.n_local()];
        self.element.eval(b, &mut phi);
        self.cell_dofs(t)
            .iter()
            .zip(&phi)
            .map(|(&d, &v)| coeffs[d] * v)
            .sum()
    }
}

/// Taylor-Hood pair `P_k / P_{k-1}` plus one multiplier for the pressure mean.
///
/// Layout of a coefficient vector: `[u_x | u_y | p | lambda]`.
#[derive(Debug, Clone)]
pub struct MixedSpace<T> {
    mesh: Arc<Mesh<T>>,
    velocity: ScalarSpace<T>,
    pressure: ScalarSpace<T>,
    geometry: Vec<CellGeometry<T>>,
}

pub fn make_mixed_space<T: Real>(mesh: Arc<Mesh<T>>, k: usize) -> Result<MixedSpace<T>, FemError> {
    if !(2..=4).contains(&k) {
        return Err(FemError::InvalidOrder(k));
    }
    let velocity = ScalarSpace::new(&mesh, k);
    let pressure = ScalarSpace::new(&mesh, k - 1);
    let geometry = (0..mesh.n_triangles())
        .map(|t| CellGeometry::new(mesh.triangle_coords(t)))
        .collect();
    Ok(MixedSpace {
        mesh,
        velocity,
        pressure,
        geometry,
    })
}

impl<T: Real> MixedSpace<T> {
    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.velocity.order()
    }

    pub fn velocity(&self) -> &ScalarSpace<T> {
        &self.velocity
    }

    pub fn pressure(&self) -> &ScalarSpace<T> {
        &self.pressure
    }

    pub fn n_u(&self) -> usize {
        self.velocity.n_dofs()
    }

    pub fn n_p(&self) -> usize {
        self.pressure.n_dofs()
    }

    pub fn size(&self) -> usize {
        2 * self.n_u() + self.n_p() + 1
    }

    /// Offset of the `c`-th velocity component (0 or 1).
    #[inline]
    pub fn u_offset(&self, c: usize) -> usize {
        c * self.n_u()
    }

    #[inline]
    pub fn p_offset(&self) -> usize {
        2 * self.n_u()
    }

    #[inline]
    pub fn lambda_index(&self) -> usize {
        2 * self.n_u() + self.n_p()
    }

    #[inline]
    pub fn geometry(&self, t: usize) -> &CellGeometry<T> {
        &self.geometry[t]
    }

    /// Hash of the mesh and the polynomial order.
    pub fn fingerprint(&self) -> u64 {
        self.mesh
            .fingerprint()
            .rotate_left(7)
            ^ (self.order() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    pub fn zeros(&self) -> Vec<T> {
        vec![T::zero(); self.size()]
    }

    /// Full coefficient vector with interpolated velocity and zero pressure.
    pub fn interpolate_velocity(&self, f: impl Fn([T; 2]) -> [T; 2]) -> Vec<T> {
        let mut out = self.zeros();
        let n = self.n_u();
        for (i, &p) in self.velocity.dof_points().iter().enumerate() {
            let v = f(p);
            out[i] = v[0];
            out[n + i] = v[1];
        }
        out
    }

    /// Writes the interpolated pressure into the pressure block of `out`.
    pub fn set_pressure(&self, out: &mut [T], f: impl Fn([T; 2]) -> T) {
        let off = self.p_offset();
        for (i, &p) in self.pressure.dof_points().iter().enumerate() {
            out[off + i] = f(p);
        }
    }

    /// `m_a = integral of the pressure basis function a`.
    pub fn pressure_weights(&self) -> Vec<T> {
        let rule = quadrature::<T>(self.pressure.order()).expect("low degree rule");
        let tab = self.pressure.element().tabulate(&rule);
        let mut m = vec![T::zero(); self.n_p()];
        for t in 0..self.mesh.n_triangles() {
            let area2 = self.geometry[t].area * T::lit(2.0);
            let dofs = self.pressure.cell_dofs(t);
            for q in 0..rule.len() {
                let w = rule.weights[q] * area2;
                for (&d, &v) in dofs.iter().zip(tab.values(q)) {
                    m[d] += w * v;
                }
            }
        }
        m
    }

    /// Shifts the pressure block of `u` by a constant so that its integral vanishes.
    pub fn project_mean_zero(&self, u: &mut [T]) {
        let m = self.pressure_weights();
        let off = self.p_offset();
        let p = &mut u[off..off + self.n_p()];
        let total: T = m.iter().copied().sum();
        let mean = m.iter().zip(p.iter()).map(|(&a, &b)| a * b).sum::<T>() / total;
        for x in p.iter_mut() {
            *x -= mean;
        }
    }
}
