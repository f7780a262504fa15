pub mod constants;
pub mod exchange;
pub mod fem;
pub mod impedance;
pub mod linalg;
pub mod mesh;
pub mod partition;
pub mod scattering;
pub mod skeleton;
pub mod topology;
pub mod trace;

#[cfg(test)]
mod testing;

pub use num_complex::Complex64;

pub type ComplexMatrix = nalgebra::DMatrix<Complex64>;
pub type ComplexVector = nalgebra::DVector<Complex64>;
pub type RealMatrix = nalgebra::DMatrix<f64>;
pub type LuFactorization = linalg::Lu<Complex64>;
pub type HermitianFactorization = linalg::Cholesky<Complex64>;
