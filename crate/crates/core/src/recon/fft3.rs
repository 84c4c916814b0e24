use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// In-place 3D FFT of a row-major `dims[0] x dims[1] x dims[2]` array.
/// The inverse is unnormalised; callers divide by the element count.
pub(crate) fn fft3(buf: &mut [Complex64], dims: [usize; 3], direction: FftDirection) {
    let [d0, d1, d2] = dims;
    debug_assert_eq!(buf.len(), d0 * d1 * d2);
    let mut planner = FftPlanner::<f64>::new();

    // Innermost axis is contiguous.
    let fft = planner.plan_fft(d2, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for line in buf.chunks_exact_mut(d2) {
        fft.process_with_scratch(line, &mut scratch);
    }

    strided_pass(buf, d1, d2, d0, &mut planner, direction);
    strided_pass(buf, d0, d1 * d2, 1, &mut planner, direction);
}

/// FFT along an axis of length `len` and element stride `stride`, repeated
/// over `outer` blocks of `len * stride` elements.
fn strided_pass(
    buf: &mut [Complex64],
    len: usize,
    stride: usize,
    outer: usize,
    planner: &mut FftPlanner<f64>,
    direction: FftDirection,
) {
    let fft = planner.plan_fft(len, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // Process several columns at once so the gather touches whole cache lines.
    const BATCH: usize = 16;
    let mut lines = vec![Complex64::default(); len * BATCH];
    for o in 0..outer {
        let block = &mut buf[o * len * stride..(o + 1) * len * stride];
        let mut s0 = 0;
        while s0 < stride {
            let w = BATCH.min(stride - s0);
            for k in 0..len {
                let row = &block[k * stride + s0..k * stride + s0 + w];
                for (b, v) in row.iter().enumerate() {
                    lines[b * len + k] = *v;
                }
            }
            for b in 0..w {
                fft.process_with_scratch(&mut lines[b * len..(b + 1) * len], &mut scratch);
            }
            for k in 0..len {
                let row = &mut block[k * stride + s0..k * stride + s0 + w];
                for (b, v) in row.iter_mut().enumerate() {
                    *v = lines[b * len + k];
                }
            }
            s0 += w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft() {
        let dims = [4, 3, 5];
        let n = 60;
        let input: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new(((k * 7) % 13) as f64 - 6.0, ((k * 3) % 5) as f64))
            .collect();
        let mut fast = input.clone();
        fft3(&mut fast, dims, FftDirection::Forward);
        let tau = std::f64::consts::TAU;
        for u in 0..4 {
            for v in 0..3 {
                for w in 0..5 {
                    let mut acc = Complex64::default();
                    for a in 0..4 {
                        for b in 0..3 {
                            for c in 0..5 {
                                let phase = -tau
                                    * (u * a) as f64 / 4.0
                                    - tau * (v * b) as f64 / 3.0
                                    - tau * (w * c) as f64 / 5.0;
                                acc += input[(a * 3 + b) * 5 + c] * Complex64::from_polar(1.0, phase);
                            }
                        }
                    }
                    let got = fast[(u * 3 + v) * 5 + w];
                    assert!((got - acc).norm() < 1e-9);
                }
            }
        }
        fft3(&mut fast, dims, FftDirection::Inverse);
        for (a, b) in fast.iter().zip(&input) {
            assert!((a / n as f64 - b).norm() < 1e-12);
        }
    }
}
