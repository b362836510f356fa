//! Row-column 2-D FFT on row-major complex grids.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

/// Rows handed to one task in the row pass.
const ROWS_PER_TASK: usize = 8;

/// Planned forward/inverse 2-D transform for a fixed `(rows, cols)` shape.
///
/// The inverse is normalized by `1 / (rows * cols)` so `inverse(forward(a)) == a`.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, a: &mut Array2<Complex64>) {
        self.run(a, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, a: &mut Array2<Complex64>) {
        self.run(a, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        let data = a.as_slice_mut().expect("standard layout");
        par::for_each_chunk_mut(data, 1 << 14, |_, c| c.iter_mut().for_each(|v| *v *= scale));
    }

    fn run(&self, a: &mut Array2<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(a.dim(), (self.rows, self.cols), "FFT shape mismatch");
        if !a.is_standard_layout() {
            *a = a.as_standard_layout().into_owned();
        }
        let data = a.as_slice_mut().expect("standard layout");
        transform_rows(data, self.cols, row);
        let mut t = transpose(data, self.rows, self.cols);
        transform_rows(&mut t, self.rows, col);
        let back = transpose(&t, self.cols, self.rows);
        data.copy_from_slice(&back);
    }
}

fn transform_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    par::for_each_chunk_mut(data, len * ROWS_PER_TASK, |_, chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Transpose a row-major `rows x cols` buffer into a `cols x rows` buffer.
fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); rows * cols];
    par::for_each_chunk_mut(&mut dst, rows, |c, out_row| {
        for (r, v) in out_row.iter_mut().enumerate() {
            *v = src[r * cols + c];
        }
    });
    dst
}

/// Sample frequencies in FFT order for `n` samples at spacing `d`.
pub fn fftfreq(n: usize, d: f64) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - nf };
            k / (nf * d)
        })
        .collect()
}
