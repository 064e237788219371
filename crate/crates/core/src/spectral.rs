//! 2-D discrete Fourier transforms over row-major rasters.
//!
//! Forward transforms are unnormalized; [`inverse_real`] divides by `W·H`.
//! Frequency index `k` along an axis of length `n` maps to the signed index
//! in `(-n/2, n/2]`, i.e. `f = k/n` cycles per pixel.

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Signed frequency index of bin `k` for an axis of length `n`.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Frequency of bin `k` in cycles per pixel.
#[inline]
pub fn frequency(k: usize, n: usize) -> f64 {
    signed_index(k, n) as f64 / n as f64
}

fn fft_rows(buf: &mut [Complex64], w: usize, dir: FftDirection) {
    let fft = FftPlanner::new().plan_fft(w, dir);
    let scratch_len = fft.get_inplace_scratch_len();
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(w).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = vec![Complex64::default(); scratch_len];
        for row in buf.chunks_mut(w) {
            fft.process_with_scratch(row, &mut scratch);
        }
    }
}

fn transpose(src: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); w * h];
    const B: usize = 32;
    for r0 in (0..h).step_by(B) {
        for c0 in (0..w).step_by(B) {
            for r in r0..(r0 + B).min(h) {
                for c in c0..(c0 + B).min(w) {
                    dst[c * h + r] = src[r * w + c];
                }
            }
        }
    }
    dst
}

fn fft2(buf: &mut Vec<Complex64>, w: usize, h: usize, dir: FftDirection) {
    fft_rows(buf, w, dir);
    let mut t = transpose(buf, w, h);
    fft_rows(&mut t, h, dir);
    *buf = transpose(&t, h, w);
}

/// Unnormalized forward 2-D DFT of a real raster.
pub fn forward(real: &[f64], w: usize, h: usize) -> Vec<Complex64> {
    assert_eq!(real.len(), w * h);
    let mut buf: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, w, h, FftDirection::Forward);
    buf
}

/// Normalized inverse 2-D DFT, keeping the real part.
pub fn inverse_real(mut spec: Vec<Complex64>, w: usize, h: usize) -> Vec<f64> {
    assert_eq!(spec.len(), w * h);
    fft2(&mut spec, w, h, FftDirection::Inverse);
    let scale = 1.0 / (w * h) as f64;
    spec.into_iter().map(|z| z.re * scale).collect()
}

/// Even (mirror) extension of a raster to `2w × 2h`.
pub fn mirror_extend(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (w2, h2) = (2 * w, 2 * h);
    let mut out = vec![0.0; w2 * h2];
    for r in 0..h2 {
        let sr = if r < h { r } else { h2 - 1 - r };
        for c in 0..w2 {
            let sc = if c < w { c } else { w2 - 1 - c };
            out[r * w2 + c] = data[sr * w + sc];
        }
    }
    out
}

/// Top-left `w × h` window of a `stride`-wide raster.
pub fn top_left(data: &[f64], stride: usize, w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        out.extend_from_slice(&data[r * stride..r * stride + w]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_indices_cover_half_open_range() {
        let idx: Vec<i64> = (0..6).map(|k| signed_index(k, 6)).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, -2, -1]);
        let idx: Vec<i64> = (0..5).map(|k| signed_index(k, 5)).collect();
        assert_eq!(idx, vec![0, 1, 2, -2, -1]);
    }

    #[test]
    fn round_trip_non_square() {
        let (w, h) = (12, 7);
        let data: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let back = inverse_real(forward(&data, w, h), w, h);
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_in_its_bin() {
        let (w, h) = (16, 8);
        let data: Vec<f64> = (0..w * h)
            .map(|i| {
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                (2.0 * std::f64::consts::PI * (3.0 * c / w as f64 + r / h as f64)).cos()
            })
            .collect();
        let spec = forward(&data, w, h);
        let mag = |r: usize, c: usize| spec[r * w + c].norm();
        assert!((mag(1, 3) - (w * h) as f64 / 2.0).abs() < 1e-9);
        assert!((mag(h - 1, w - 3) - (w * h) as f64 / 2.0).abs() < 1e-9);
        let other: f64 = spec.iter().map(|z| z.norm()).sum::<f64>() - mag(1, 3) - mag(h - 1, w - 3);
        assert!(other < 1e-9);
    }

    #[test]
    fn mirror_extension_is_symmetric() {
        let data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ext = mirror_extend(&data, 3, 2);
        assert_eq!(&ext[0..6], &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
        assert_eq!(&ext[18..24], &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
        assert_eq!(top_left(&ext, 6, 3, 2), data);
    }
}
