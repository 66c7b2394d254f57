//! Dense row-major f64 matrix. Everything the models need and nothing
//! more; model math runs at 64-bit while stored features stay at 32.

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Matrix::from_vec(1, values.len(), values.to_vec())
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// General matrix product with optional transposition of either
    /// operand: `op(a) @ op(b)` where `op(x) = xᵀ` when the flag is set.
    /// Inner loops are ordered i-k-j so the accumulation walks rows.
    pub fn matmul(&self, other: &Matrix, ta: bool, tb: bool) -> Matrix {
        let (m, ka) = if ta {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        };
        let (kb, n) = if tb {
            (other.cols, other.rows)
        } else {
            (other.rows, other.cols)
        };
        assert_eq!(ka, kb, "matmul inner dimension mismatch: {ka} vs {kb}");
        let k_dim = ka;
        let mut out = Matrix::zeros(m, n);
        match (ta, tb) {
            (false, false) => {
                for i in 0..m {
                    let a_row = self.row(i);
                    let out_row = out.row_mut(i);
                    for (k, &aik) in a_row.iter().enumerate().take(k_dim) {
                        if aik == 0.0 {
                            continue;
                        }
                        let b_row = other.row(k);
                        for j in 0..n {
                            out_row[j] += aik * b_row[j];
                        }
                    }
                }
            }
            (false, true) => {
                for i in 0..m {
                    let a_row = self.row(i);
                    let out_row = out.row_mut(i);
                    for j in 0..n {
                        let b_row = other.row(j);
                        let mut acc = 0.0;
                        for k in 0..k_dim {
                            acc += a_row[k] * b_row[k];
                        }
                        out_row[j] = acc;
                    }
                }
            }
            (true, false) => {
                for k in 0..k_dim {
                    let a_row = self.row(k);
                    let b_row = other.row(k);
                    for i in 0..m {
                        let aki = a_row[i];
                        if aki == 0.0 {
                            continue;
                        }
                        let out_row = out.row_mut(i);
                        for j in 0..n {
                            out_row[j] += aki * b_row[j];
                        }
                    }
                }
            }
            (true, true) => {
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..k_dim {
                            acc += self.get(k, i) * other.get(j, k);
                        }
                        out.set(i, j, acc);
                    }
                }
            }
        }
        out
    }
}
