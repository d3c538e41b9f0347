use nalgebra::{DMatrix, DVector, Dyn, Matrix, Storage};

/// `(column offset, block)` piece of a task matrix.
pub(crate) type Block<'a, S> = (usize, &'a Matrix<f64, Dyn, Dyn, S>);

/// Accumulates weighted least-squares tasks `w ‖A x − b‖²` into `½ xᵀ H x + gᵀ x`.
pub(crate) struct CostBuilder {
    h: DMatrix<f64>,
    g: DVector<f64>,
}

impl CostBuilder {
    pub fn new(n: usize) -> Self {
        CostBuilder {
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
        }
    }

    /// `blocks` lists `(column offset, block)` pieces of `A`.
    pub fn add<S>(&mut self, weight: f64, blocks: &[Block<S>], b: &DVector<f64>)
    where
        S: Storage<f64, Dyn, Dyn>,
    {
        let n = self.g.len();
        let mut a = DMatrix::zeros(b.len(), n);
        for (offset, block) in blocks {
            let mut view = a.view_mut((0, *offset), (block.nrows(), block.ncols()));
            view += *block;
        }
        self.h += 2.0 * weight * a.transpose() * &a;
        self.g -= 2.0 * weight * a.transpose() * b;
    }

    pub fn finish(self) -> (DMatrix<f64>, DVector<f64>) {
        (self.h, self.g)
    }
}

/// Dense copy of a fixed-size block.
pub(crate) fn dyn_block<R: nalgebra::Dim, C: nalgebra::Dim, S: Storage<f64, R, C>>(
    m: &Matrix<f64, R, C, S>,
) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Rows `lo ≤ x[offset..offset+3] ≤ hi`.
pub(crate) fn torque_bounds(
    n: usize,
    offsets: &[usize],
    lo: f64,
    hi: f64,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let m = 3 * offsets.len();
    let mut a = DMatrix::zeros(m, n);
    for (k, &off) in offsets.iter().enumerate() {
        for j in 0..3 {
            a[(3 * k + j, off + j)] = 1.0;
        }
    }
    (a, DVector::from_element(m, lo), DVector::from_element(m, hi))
}
