//! Lagrange bases, quadrature, Taylor-Hood spaces and Dirichlet bookkeeping.

mod basis;
mod dirichlet;
mod quadrature;
mod space;

use thiserror::Error;

use crate::mesh::BoundaryTag;

pub use basis::{LagrangeElement, Tabulation};
pub use dirichlet::{BoundaryFn, Constraints, DirichletData};
pub use quadrature::{quadrature, QuadratureRule, MAX_QUADRATURE_DEGREE};
pub(crate) use quadrature::gauss_legendre_unit;
pub use space::{make_mixed_space, CellGeometry, MixedSpace, ScalarSpace};

#[derive(Debug, Error, PartialEq)]
pub enum FemError {
    #[error("quadrature degree {degree} not supported (supported: 0..={max})")]
    UnsupportedDegree { degree: usize, max: usize },
    #[error("velocity order {0} not supported (supported: 2..=4)")]
    InvalidOrder(usize),
    #[error("boundary tag {0} does not occur in the mesh")]
    UnknownTag(BoundaryTag),
}
