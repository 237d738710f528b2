//! Time stepping for quasilinear subdiffusion `∂ₜᵅu − ∇·(a(u)∇u) = f`
//! with BDF convolution quadrature in time and P1 finite elements in space.

pub mod cq;
pub mod expr;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod stepper;
