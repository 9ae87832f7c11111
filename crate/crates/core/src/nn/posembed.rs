use ndarray::Array2;

use super::Real;

/// Fixed 1-D sinusoidal table, `len × dim` (first half sin, second half cos).
pub fn sincos_1d<F: Real>(len: usize, dim: usize) -> Array2<F> {
    let positions: Vec<f64> = (0..len).map(|p| p as f64).collect();
    sincos_from_positions(&positions, dim)
}

fn sincos_from_positions<F: Real>(positions: &[f64], dim: usize) -> Array2<F> {
    assert!(dim.is_multiple_of(2), "sin-cos embedding needs an even width");
    let half = dim / 2;
    let mut out = Array2::zeros((positions.len(), dim));
    for (i, &pos) in positions.iter().enumerate() {
        for k in 0..half {
            let omega = 1.0 / 10000f64.powf(k as f64 / half as f64);
            out[[i, k]] = F::c((pos * omega).sin());
            out[[i, half + k]] = F::c((pos * omega).cos());
        }
    }
    out
}

/// Fixed 2-D sinusoidal table for a row-major `side × side` grid, `side² × dim`.
/// The first half of the width encodes the row, the second half the column.
pub fn sincos_2d<F: Real>(side: usize, dim: usize) -> Array2<F> {
    assert!(dim.is_multiple_of(4), "2-D sin-cos embedding needs width divisible by 4");
    let rows: Vec<f64> = (0..side * side).map(|i| (i / side) as f64).collect();
    let cols: Vec<f64> = (0..side * side).map(|i| (i % side) as f64).collect();
    let r: Array2<F> = sincos_from_positions(&rows, dim / 2);
    let c: Array2<F> = sincos_from_positions(&cols, dim / 2);
    ndarray::concatenate![ndarray::Axis(1), r, c]
}
