use super::quadrature::QuadratureRule;
use crate::scalar::Real;

/// Nodal Lagrange basis of order `k` on the reference triangle.
///
/// Local node order: the three vertices, then `k - 1` nodes on each edge
/// (edge `e` runs from local vertex `e` to `(e + 1) % 3`), then interior nodes.
/// Node `i` sits at barycentric coordinates `lattice[i] / k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagrangeElement {
    order: usize,
    lattice: Vec<[usize; 3]>,
}

impl LagrangeElement {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Lagrange order must be at least 1");
        let k = order;
        let mut lattice = vec![[k, 0, 0], [0, k, 0], [0, 0, k]];
        for e in 0..3 {
            for j in 1..k {
                let mut a = [0; 3];
                a[e] = k - j;
                a[(e + 1) % 3] = j;
                lattice.push(a);
            }
        }
        for a1 in 1..k {
            for a2 in 1..k {
                if a1 + a2 < k {
                    lattice.push([k - a1 - a2, a1, a2]);
                }
            }
        }
        LagrangeElement { order, lattice }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_local(&self) -> usize {
        self.lattice.len()
    }

    pub fn lattice(&self) -> &[[usize; 3]] {
        &self.lattice
    }

    pub fn n_interior(&self) -> usize {
        let k = self.order;
        (k.saturating_sub(1)) * (k.saturating_sub(2)) / 2
    }

    /// Barycentric coordinates of local node `i`.
    pub fn node<T: Real>(&self, i: usize) -> [T; 3] {
        let k = T::from_usize_lossy(self.order);
        self.lattice[i].map(|a| T::from_usize_lossy(a) / k)
    }

    pub fn eval<T: Real>(&self, bary: [T; 3], out: &mut [T]) {
        let f = self.factors(bary);
        for (o, a) in out.iter_mut().zip(&self.lattice) {
            *o = f[0][a[0]].0 * f[1][a[1]].0 * f[2][a[2]].0;
        }
    }

    /// Derivatives of each basis function with respect to the three
    /// barycentric coordinates, treated as independent variables.
    pub fn eval_dbary<T: Real>(&self, bary: [T; 3], out: &mut [[T; 3]]) {
        let f = self.factors(bary);
        for (o, a) in out.iter_mut().zip(&self.lattice) {
            let (p0, d0) = f[0][a[0]];
            let (p1, d1) = f[1][a[1]];
            let (p2, d2) = f[2][a[2]];
            *o = [d0 * p1 * p2, p0 * d1 * p2, p0 * p1 * d2];
        }
    }

    /// `f[j][a] = (P_a(l_j), P_a'(l_j))` with
    /// `P_a(l) = prod_{m<a} (k l - m) / (m + 1)`.
    fn factors<T: Real>(&self, bary: [T; 3]) -> [Vec<(T, T)>; 3] {
        let k = T::from_usize_lossy(self.order);
        bary.map(|l| {
            let mut v = Vec::with_capacity(self.order + 1);
            let (mut p, mut d) = (T::one(), T::zero());
            v.push((p, d));
            for m in 0..self.order {
                let mf = T::from_usize_lossy(m);
                let scale = T::one() / (mf + T::one());
                let factor = (k * l - mf) * scale;
                d = d * factor + p * k * scale;
                p *= factor;
                v.push((p, d));
            }
            v
        })
    }

    pub fn tabulate<T: Real>(&self, rule: &QuadratureRule<T>) -> Tabulation<T> {
        let n = self.n_local();
        let mut values = vec![T::zero(); rule.len() * n];
        let mut dbary = vec![[T::zero(); 3]; rule.len() * n];
        for (q, &p) in rule.points.iter().enumerate() {
            self.eval(p, &mut values[q * n..(q + 1) * n]);
            self.eval_dbary(p, &mut dbary[q * n..(q + 1) * n]);
        }
        Tabulation {
            n_local: n,
            values,
            dbary,
        }
    }
}

/// Basis values and barycentric derivatives at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation<T> {
    pub n_local: usize,
    values: Vec<T>,
    dbary: Vec<[T; 3]>,
}

impl<T: Real> Tabulation<T> {
    #[inline]
    pub fn values(&self, q: usize) -> &[T] {
        &self.values[q * self.n_local..(q + 1) * self.n_local]
    }

    #[inline]
    pub fn dbary(&self, q: usize) -> &[[T; 3]] {
        &self.dbary[q * self.n_local..(q + 1) * self.n_local]
    }

    /// Physical gradients at point `q` for an element with barycentric
    /// gradients `gl`.
    #[inline]
    pub fn grads(&self, q: usize, gl: &[[T; 2]; 3], out: &mut [[T; 2]]) {
        for (o, d) in out.iter_mut().zip(self.dbary(q)) {
            *o = [
                d[0] * gl[0][0] + d[1] * gl[1][0] + d[2] * gl[2][0],
                d[0] * gl[0][1] + d[1] * gl[1][1] + d[2] * gl[2][1],
            ];
        }
    }
}
