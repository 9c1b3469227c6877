use super::check_same_shape;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{DenseMatrix, FeatureMap};

/// Dense all-pairs inner products: entry `(i, j)` correlates query position
/// `i` with reference position `j` (flat `y * W + x`).
pub fn nonlocal_correlation<T: Scalar>(
    fq: &FeatureMap<T>,
    fr: &FeatureMap<T>,
) -> Result<DenseMatrix<T>> {
    check_same_shape(fq, fr)?;
    let (c, h, w) = fq.shape();
    let n = h * w;
    let q = fq.to_position_major();
    let r = fr.to_position_major();
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        let qi = &q[i * c..(i + 1) * c];
        let row = &mut data[i * n..(i + 1) * n];
        for (j, out) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (&a, &b) in qi.iter().zip(&r[j * c..(j + 1) * c]) {
                acc += a * b;
            }
            *out = acc;
        }
    }
    DenseMatrix::from_vec(n, n, data)
}

/// Self-correlation of `f` over every pair of positions.
pub fn nonlocal_reference<T: Scalar>(f: &FeatureMap<T>) -> DenseMatrix<T> {
    nonlocal_correlation(f, f).expect("a map always matches itself")
}
