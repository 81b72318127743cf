//! Sparse storage, Matrix Market I/O, generators and the dense oracle.

mod band;
mod csr;
mod dense;
mod generators;
mod market;

pub use band::BandLu;
pub use csr::CsrMatrix;
pub use dense::{dense_inverse_diagonal, DenseInverse, DenseLu, DenseMatrix, DEFAULT_ORACLE_CAP};
pub use generators::{gen_heatflow, gen_poisson2d};
pub use market::{parse_matrix_market, read_matrix_market, write_matrix_market};
