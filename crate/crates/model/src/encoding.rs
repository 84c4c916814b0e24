//! Fixed sinusoidal positional encodings.

use crate::tensor::Tensor;

fn sinusoid(pos: f64, width: usize, out: &mut [f64]) {
    for k in 0..width / 2 {
        let freq = 10000f64.powf(-((2 * k) as f64) / width as f64);
        out[2 * k] = (pos * freq).sin();
        out[2 * k + 1] = (pos * freq).cos();
    }
}

/// `S² x D` table; row `i * S + j` puts the x index `i` in the first `D/2`
/// channels and the y index `j` in the rest.
pub fn spatial_encoding(scan_res: usize, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut t = Tensor::zeros(scan_res * scan_res, dim);
    for i in 0..scan_res {
        for j in 0..scan_res {
            let row = &mut t.data_mut()[(i * scan_res + j) * dim..(i * scan_res + j + 1) * dim];
            sinusoid(i as f64, half, &mut row[..half]);
            sinusoid(j as f64, half, &mut row[half..]);
        }
    }
    t
}

/// `1 x D` row for a frame index; defined for any index.
pub fn temporal_encoding(frame: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(1, dim);
    sinusoid(frame as f64, dim, t.data_mut());
    t
}
