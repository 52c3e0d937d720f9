//! Dense tensor helpers for separable transforms.
//!
//! Tensors are stored flat with axis 0 varying fastest, which is the same
//! layout the natural ordering induces on lattice vectors.

/// Contracts `data` (with the given `shape`) along `axis` against `mat`,
/// where `mat` is row-major `shape[axis] x cols`. The result has
/// `shape[axis]` replaced by `cols`.
pub(crate) fn contract_axis(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    mat: &[f64],
    cols: usize,
) -> (Vec<f64>, Vec<usize>) {
    let rows = shape[axis];
    debug_assert_eq!(mat.len(), rows * cols);
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());

    let stride: usize = shape[..axis].iter().product();
    let outer: usize = shape[axis + 1..].iter().product();

    let mut new_shape = shape.to_vec();
    new_shape[axis] = cols;
    let mut out = vec![0.0; stride * cols * outer];

    for o in 0..outer {
        let in_base = o * stride * rows;
        let out_base = o * stride * cols;
        for r in 0..rows {
            let row = &mat[r * cols..(r + 1) * cols];
            let src = &data[in_base + r * stride..in_base + (r + 1) * stride];
            for (c, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let dst = &mut out[out_base + c * stride..out_base + (c + 1) * stride];
                for (y, &x) in dst.iter_mut().zip(src) {
                    *y += m * x;
                }
            }
        }
    }
    (out, new_shape)
}

/// Applies the same `rows x cols` matrix along every axis in turn.
pub(crate) fn contract_all(data: &[f64], shape: &[usize], mat: &[f64], cols: usize) -> Vec<f64> {
    let mut cur = data.to_vec();
    let mut cur_shape = shape.to_vec();
    for axis in 0..shape.len() {
        let (next, next_shape) = contract_axis(&cur, &cur_shape, axis, mat, cols);
        cur = next;
        cur_shape = next_shape;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contract_matches_naive_sum() {
        // shape (2, 3), contract axis 1 with a 3x2 matrix
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mat = [1.0, 0.5, -1.0, 2.0, 0.0, 1.0];
        let (out, shape) = contract_axis(&data, &[2, 3], 1, &mat, 2);
        assert_eq!(shape, vec![2, 2]);
        for a in 0..2 {
            for c in 0..2 {
                let mut want = 0.0;
                for b in 0..3 {
                    want += data[a + 2 * b] * mat[b * 2 + c];
                }
                assert!((out[a + 2 * c] - want).abs() < 1e-14);
            }
        }
    }
}
