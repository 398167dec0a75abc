//! Plain dense 2-D storage, free of any autodiff machinery.
//!
//! `DenseMatrix` is `Send + Sync` and is the carrier for data shared across
//! threads (node features, the Laplacian, baseline outputs). [`Tensor`]
//! wraps the same layout with a recording handle for differentiable compute;
//! conversion between the two is a single copy.
//!
//! [`Tensor`]: crate::tensor::Tensor

use crate::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Real>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        DenseMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows(rows: &[Vec<Real>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Real {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Real) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Real] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }
}

/// Largest absolute entry-wise difference between two equal-shape matrices.
pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> Real {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, Real::max)
}
