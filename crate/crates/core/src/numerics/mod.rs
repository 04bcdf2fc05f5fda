//! Dense f64 linear algebra and seeded sampling kernels.

mod eigen;
pub(crate) mod matrix;
mod rng;

pub mod csv;

pub use eigen::{pca_project, pinv_psd, sym_eigen, EigenDecomposition, PINV_REL_EPS};
pub use matrix::Matrix;
pub use rng::{gauss_sample, RngStream};
