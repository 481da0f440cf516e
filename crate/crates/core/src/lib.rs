//! Taylor-Hood finite elements for the 2D incompressible Navier-Stokes
//! equations with convective, skew-symmetric, conservative and EMAC forms of
//! the nonlinear term.
//!
//! Everything is generic over the scalar type (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod assembly;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod nonlinear;
pub mod quantities;
pub mod scalar;
pub mod sparse;
pub mod timeloop;

pub use assembly::ConvectiveForm;
pub use scalar::Real;
pub use timeloop::Scheme;

pub type Mesh = mesh::Mesh<f64>;
pub type MixedSpace = fem::MixedSpace<f64>;
pub type DirichletData = fem::DirichletData<f64>;
pub type CsrMatrix = sparse::CsrMatrix<f64>;
pub type Assembler = assembly::Assembler<f64>;
pub type Factorization = linsolve::Factorization<f64>;
pub type FlowOperator = timeloop::FlowOperator<f64>;
pub type TimeStepper = timeloop::TimeStepper<f64>;
pub type Monitors = quantities::Monitors<f64>;
