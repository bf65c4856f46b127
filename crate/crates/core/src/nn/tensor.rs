use super::NnError;

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch {
                expected: shape.to_vec(),
                got: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `y = W x` for a `[rows, cols]` row-major `w`.
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, out) in y.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *out += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `x += W^T y`.
pub(crate) fn matvec_t(w: &[f64], rows: usize, cols: usize, y: &[f64], x: &mut [f64]) {
    for r in 0..rows {
        let yr = y[r];
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (xc, wc) in x.iter_mut().zip(row) {
            *xc += wc * yr;
        }
    }
}

/// `G += y x^T`.
pub(crate) fn outer_acc(g: &mut [f64], rows: usize, cols: usize, y: &[f64], x: &[f64]) {
    for r in 0..rows {
        let yr = y[r];
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gc, xc) in row.iter_mut().zip(x) {
            *gc += yr * xc;
        }
    }
}

/// `y += W x`, visiting only the non-zero entries of `x`.
pub(crate) fn matvec_sparse(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    let nz: Vec<usize> = (0..cols).filter(|&c| x[c] != 0.0).collect();
    for (r, out) in y.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *out += nz.iter().map(|&c| row[c] * x[c]).sum::<f64>();
    }
}

/// `G += y x^T`, visiting only the non-zero entries of `x`.
pub(crate) fn outer_acc_sparse(g: &mut [f64], rows: usize, cols: usize, y: &[f64], x: &[f64]) {
    let nz: Vec<usize> = (0..cols).filter(|&c| x[c] != 0.0).collect();
    for r in 0..rows {
        let yr = y[r];
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for &c in &nz {
            row[c] += yr * x[c];
        }
    }
}
