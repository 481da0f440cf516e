use std::fmt;
use std::sync::Arc;

use super::space::MixedSpace;
use super::FemError;
use crate::mesh::BoundaryTag;
use crate::scalar::Real;

/// Velocity boundary value `g(x, y, t)`.
pub type BoundaryFn<T> = Arc<dyn Fn(T, T, T) -> [T; 2] + Send + Sync>;

/// Velocity Dirichlet data per boundary tag.
///
/// Where edges with different tags meet, the entry inserted last wins at the
/// shared vertex.
#[derive(Clone, Default)]
pub struct DirichletData<T> {
    entries: Vec<(BoundaryTag, BoundaryFn<T>)>,
}

impl<T> fmt::Debug for DirichletData<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.entries.iter().map(|(t, _)| t))
            .finish()
    }
}

impl<T: Real> DirichletData<T> {
    pub fn new() -> Self {
        DirichletData { entries: vec![] }
    }

    pub fn with(mut self, tag: BoundaryTag, g: impl Fn(T, T, T) -> [T; 2] + Send + Sync + 'static) -> Self {
        self.entries.push((tag, Arc::new(g)));
        self
    }

    /// Homogeneous condition on `tag`.
    pub fn no_slip(self, tag: BoundaryTag) -> Self {
        self.with(tag, |_, _, _| [T::zero(), T::zero()])
    }

    pub fn tags(&self) -> impl Iterator<Item = &BoundaryTag> {
        self.entries.iter().map(|(t, _)| t)
    }

    /// Constrained dofs and their values at time `t`.
    pub fn constraints(&self, space: &MixedSpace<T>, t: T) -> Result<Constraints<T>, FemError> {
        let present = space.mesh().tags();
        let n = space.size();
        let nu = space.n_u();
        let mut mask = vec![false; n];
        let mut values = vec![T::zero(); n];
        for (tag, g) in &self.entries {
            if !present.contains(tag) {
                return Err(FemError::UnknownTag(tag.clone()));
            }
            for &d in space.velocity().boundary_dofs(tag) {
                let [x, y] = space.velocity().dof_points()[d];
                let v = g(x, y, t);
                mask[d] = true;
                mask[nu + d] = true;
                values[d] = v[0];
                values[nu + d] = v[1];
            }
        }
        Ok(Constraints { mask, values })
    }
}

/// Strong Dirichlet constraints over a full mixed coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints<T> {
    pub mask: Vec<bool>,
    /// Prescribed values; zero where `mask` is false.
    pub values: Vec<T>,
}

impl<T: Real> Constraints<T> {
    pub fn none(n: usize) -> Self {
        Constraints {
            mask: vec![false; n],
            values: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn n_constrained(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Overwrites constrained entries of `u` with the prescribed values.
    pub fn impose(&self, u: &mut [T]) {
        for ((x, &m), &v) in u.iter_mut().zip(&self.mask).zip(&self.values) {
            if m {
                *x = v;
            }
        }
    }

    /// Zeroes constrained entries.
    pub fn zero(&self, r: &mut [T]) {
        for (x, &m) in r.iter_mut().zip(&self.mask) {
            if m {
                *x = T::zero();
            }
        }
    }

    /// Same constrained set with zero values, as used for Newton updates.
    pub fn homogeneous(&self) -> Self {
        Constraints {
            mask: self.mask.clone(),
            values: vec![T::zero(); self.mask.len()],
        }
    }
}
