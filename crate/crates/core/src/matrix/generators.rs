//! Deterministic test-matrix generators on a square grid.
//!
//! Nodes are numbered row-major, `k = row * side + col`, and the Dirichlet
//! boundary is implicit: grid neighbours outside the square simply do not
//! appear. This is the stencil produced by `delsq(numgrid('S', side + 2))`.

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn laplacian_triplets<T: Scalar>(side: usize, center: T, neighbour: T) -> Vec<(usize, usize, T)> {
    let n = side * side;
    let mut trip = Vec::with_capacity(5 * n);
    for r in 0..side {
        for c in 0..side {
            let k = r * side + c;
            if r > 0 {
                trip.push((k, k - side, neighbour));
            }
            if c > 0 {
                trip.push((k, k - 1, neighbour));
            }
            trip.push((k, k, center));
            if c + 1 < side {
                trip.push((k, k + 1, neighbour));
            }
            if r + 1 < side {
                trip.push((k, k + side, neighbour));
            }
        }
    }
    trip
}

/// 5-point finite-difference Laplacian on a `grid_side × grid_side` interior grid:
/// 4 on the diagonal, −1 for each grid neighbour.
pub fn gen_poisson2d<T: Scalar>(grid_side: usize) -> Result<CsrMatrix<T>> {
    if grid_side < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid_side must be >= 2, got {grid_side}"
        )));
    }
    let trip = laplacian_triplets(grid_side, T::of(4.0), -T::one());
    CsrMatrix::from_triplets(grid_side * grid_side, &trip)
}

/// One backward-Euler step of the heat equation, `I + alpha·L`, with `L` the
/// 5-point Laplacian of [`gen_poisson2d`].
pub fn gen_heatflow<T: Scalar>(grid_side: usize, alpha: T) -> Result<CsrMatrix<T>> {
    if grid_side < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid_side must be >= 2, got {grid_side}"
        )));
    }
    if !alpha.is_finite() || alpha <= T::zero() {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let trip = laplacian_triplets(grid_side, T::one() + T::of(4.0) * alpha, -alpha);
    CsrMatrix::from_triplets(grid_side * grid_side, &trip)
}
