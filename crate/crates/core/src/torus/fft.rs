//! Multi-dimensional complex transforms on row-major `n^d` arrays.
//!
//! Each axis is transformed line by line with a 1-D plan from `rustfft`.
//! Lines are independent, so the work is split across the rayon pool
//! without changing the arithmetic performed on any line; results are
//! bitwise identical for any thread count.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Minimum number of points handed to one rayon task.
const TASK_POINTS: usize = 1 << 14;

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// Unnormalized in-place transform along every axis.
///
/// `Forward` uses the kernel `e^{-2πi jk/n}`, `Inverse` uses `e^{+2πi jk/n}`.
pub(crate) fn transform(data: &mut [Complex64], dim: usize, n: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let fft = plan(n, direction);
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            process_lines(data, n, &fft);
        } else {
            let block = n * stride;
            let mut buf = vec![Complex64::new(0.0, 0.0); block];
            for blk in data.chunks_mut(block) {
                // (n × stride) -> (stride × n) so each line is contiguous
                transpose(blk, &mut buf, n, stride);
                process_lines(&mut buf, n, &fft);
                transpose(&buf, blk, stride, n);
            }
        }
    }
}

/// Tiled transpose of the `rows × cols` array `src` into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 32;
    // each task owns a band of TILE destination rows (= source columns)
    dst.par_chunks_mut(TILE * rows)
        .enumerate()
        .for_each(|(t, band)| {
            let c0 = t * TILE;
            let width = band.len() / rows;
            for r0 in (0..rows).step_by(TILE) {
                let r1 = (r0 + TILE).min(rows);
                for r in r0..r1 {
                    let row = &src[r * cols + c0..r * cols + c0 + width];
                    for (dc, v) in row.iter().enumerate() {
                        band[dc * rows + r] = *v;
                    }
                }
            }
        });
}

fn process_lines(data: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    let lines_per_task = (TASK_POINTS / n).max(1);
    data.par_chunks_mut(n * lines_per_task).for_each(|chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft_2d(data: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for k0 in 0..n {
            for k1 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..n {
                    for j1 in 0..n {
                        let ph = sign * 2.0 * PI * ((k0 * j0 + k1 * j1) as f64) / n as f64;
                        acc += data[j0 * n + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[k0 * n + k1] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let n = 8;
        let data: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut fast = data.clone();
        transform(&mut fast, 2, n, FftDirection::Forward);
        let slow = naive_dft_2d(&data, n, -1.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-11);
        }
    }

    #[test]
    fn three_dimensional_round_trip() {
        let n = 4;
        let data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();
        let mut buf = data.clone();
        transform(&mut buf, 3, n, FftDirection::Forward);
        transform(&mut buf, 3, n, FftDirection::Inverse);
        let scale = 1.0 / (n * n * n) as f64;
        for (a, b) in buf.iter().zip(&data) {
            assert!((a * scale - b).norm() < 1e-12);
        }
    }
}
