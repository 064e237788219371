//! Convolutional estimator of surface normals from a tactile frame.
//!
//! Input is an 8-channel field `[R, G, B, R0, G0, B0, u, v]` where the
//! second triple is the untouched reference frame and `u = col/(W−1)`,
//! `v = row/(H−1)` are positional encodings.

mod io;
mod layers;
mod loss;
mod model;
mod scalar;
mod train;

use rand::Rng;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, WeightHeader};
pub use layers::{BatchNorm2d, Conv2d};
pub use loss::{masked_cosine_loss, masked_cosine_loss_grad, COSINE_EPS};
pub use model::{NetConfig, Network, TrainCache, INPUT_CHANNELS, OUTPUT_CHANNELS};
pub use scalar::{Scalar, Tensor};
pub use train::{evaluate, sample_loss_grad, train, train_with, write_loss_csv, Adam, EpochLoss, TrainConfig, TrainOutcome};

use crate::raster::{Mask, NormalMap};
use crate::{Error, Result, TactileImage};

/// The trained single-precision network.
pub type Model = Network<f32>;

/// Replacement for non-positive `nz` before normalization.
pub const NZ_FLOOR: f64 = 1e-6;

pub fn build_input(image: &TactileImage, untouched: &TactileImage) -> Result<Tensor<f32>> {
    let (w, h) = (image.width(), image.height());
    if (untouched.width(), untouched.height()) != (w, h) {
        return Err(Error::dims(
            format!("{w}x{h}"),
            format!("{}x{}", untouched.width(), untouched.height()),
        ));
    }
    let hw = w * h;
    let mut t = Tensor::zeros(INPUT_CHANNELS, h, w);
    for (src, base) in [(image.data(), 0), (untouched.data(), 3)] {
        for i in 0..hw {
            for ch in 0..3 {
                t.data[(base + ch) * hw + i] = src[3 * i + ch];
            }
        }
    }
    let du = if w > 1 { 1.0 / (w - 1) as f32 } else { 0.0 };
    let dv = if h > 1 { 1.0 / (h - 1) as f32 } else { 0.0 };
    for r in 0..h {
        for c in 0..w {
            t.data[6 * hw + r * w + c] = c as f32 * du;
            t.data[7 * hw + r * w + c] = r as f32 * dv;
        }
    }
    Ok(t)
}

/// Loss mask: a square of half-width `box_halfwidth` about `center_px`
/// plus `round(gamma·W·H)` uniformly drawn pixels outside it.
pub fn build_mask(
    dims: (usize, usize),
    center_px: (f64, f64),
    box_halfwidth: f64,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<Mask> {
    let (w, h) = dims;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("mask gamma {gamma} outside [0, 1)")));
    }
    if !(box_halfwidth >= 0.0) {
        return Err(Error::invalid("mask box half-width must be non-negative"));
    }
    let mut mask = Mask::empty(w, h);
    let mut outside = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let inside = (r as f64 - center_px.0).abs() <= box_halfwidth && (c as f64 - center_px.1).abs() <= box_halfwidth;
            if inside {
                mask.set(r, c, true);
            } else {
                outside.push(r * w + c);
            }
        }
    }
    let want = ((gamma * (w * h) as f64).round() as usize).min(outside.len());
    for i in rand::seq::index::sample(rng, outside.len(), want) {
        let p = outside[i];
        mask.set(p / w, p % w, true);
    }
    Ok(mask)
}

/// Raw 3-channel output converted to unit normals with `nz` kept positive.
pub fn normalize_output(out: &Tensor<f32>) -> Result<NormalMap> {
    let hw = out.h * out.w;
    let data = (0..hw)
        .map(|i| {
            let nx = out.data[i] as f64;
            let ny = out.data[hw + i] as f64;
            let mut nz = out.data[2 * hw + i] as f64;
            if nz <= 0.0 {
                nz = NZ_FLOOR;
            }
            let n = (nx * nx + ny * ny + nz * nz).sqrt();
            [nx / n, ny / n, nz / n]
        })
        .collect();
    NormalMap::new(out.w, out.h, data)
}

pub fn infer_normals(model: &Model, image: &TactileImage, untouched: &TactileImage) -> Result<NormalMap> {
    let out = model.forward(&build_input(image, untouched)?)?;
    normalize_output(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_config() -> NetConfig {
        NetConfig {
            blocks: 2,
            channels_per_block: 3,
            kernel: 3,
        }
    }

    fn toy_input(seed: u64, h: usize, w: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor {
            c: INPUT_CHANNELS,
            h,
            w,
            data: (0..INPUT_CHANNELS * h * w).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    fn toy_gt(seed: u64, h: usize, w: usize) -> NormalMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w)
            .map(|_| {
                let v = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0f64];
                let n = (v[0] * v[0] + v[1] * v[1] + 1.0).sqrt();
                [v[0] / n, v[1] / n, v[2] / n]
            })
            .collect();
        NormalMap::new(w, h, data).unwrap()
    }

    #[test]
    fn input_layout_and_encodings() {
        let img = TactileImage::filled(5, 3, [0.1, 0.2, 0.3]);
        let t = build_input(&img, &img).unwrap();
        assert_eq!((t.c, t.h, t.w), (8, 3, 5));
        for ch in 0..3 {
            assert_eq!(t.plane(ch), t.plane(ch + 3));
        }
        let u = t.plane(6);
        assert_eq!(u[0], 0.0);
        assert_eq!(u[4], 1.0);
        assert_eq!(t.plane(7)[14], 1.0);
        let other = TactileImage::filled(5, 3, [0.9, 0.0, 0.5]);
        let t2 = build_input(&other, &img).unwrap();
        assert_eq!(t.plane(6), t2.plane(6));
        assert_eq!(t.plane(7), t2.plane(7));
        assert!(build_input(&img, &TactileImage::filled(4, 3, [0.0; 3])).is_err());
    }

    #[test]
    fn mask_counts_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = build_mask((10, 10), (4.5, 4.5), 10.0, 0.0, &mut rng).unwrap();
        assert_eq!(full.count(), 100);
        let a = build_mask((40, 30), (15.0, 20.0), 3.0, 0.05, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_mask((40, 30), (15.0, 20.0), 3.0, 0.05, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(), 49 + 60);
    }

    #[test]
    fn full_resolution_mask_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = build_mask((1500, 1500), (750.0, 750.0), 100.0, 0.05, &mut rng).unwrap();
        assert_eq!(m.count(), 201 * 201 + 112_500);
    }

    #[test]
    fn zero_weights_give_bias_output() {
        let mut net = Network::<f64>::zeros(toy_config()).unwrap();
        net.head.bias = vec![0.5, -1.0, 2.0];
        let out = net.forward(&toy_input(0, 6, 7)).unwrap();
        for ch in 0..3 {
            assert!(out.plane(ch).iter().all(|&v| v == net.head.bias[ch]));
        }
    }

    #[test]
    fn output_dims_match_input() {
        for k in [1, 3, 5] {
            let cfg = NetConfig {
                blocks: 1,
                channels_per_block: 2,
                kernel: k,
            };
            let net = Network::<f32>::init(cfg, 0).unwrap();
            let out = net.forward(&toy_input(1, 9, 4).cast()).unwrap();
            assert_eq!((out.c, out.h, out.w), (3, 9, 4));
        }
        assert!(Network::<f32>::init(NetConfig { kernel: 2, ..toy_config() }, 0).is_err());
    }

    /// Loss and rectifier pattern of a training-mode pass on a copy.
    fn train_loss(net: &Network<f64>, x: &Tensor<f64>, gt: &NormalMap, mask: &Mask) -> (f64, Vec<bool>) {
        let mut n = net.clone();
        let (out, cache) = n.forward_train(x).unwrap();
        (masked_cosine_loss_grad(&out, gt, mask).unwrap().0, cache.relu_pattern())
    }

    #[test]
    fn gradients_match_central_differences() {
        let (h, w) = (16, 16);
        let mut net = Network::<f64>::init(toy_config(), 11).unwrap();
        // move normalization affine parameters off their identity state
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (_, bn) in &mut net.blocks {
            bn.gamma.iter_mut().for_each(|g| *g = rng.random_range(0.5..1.5));
            bn.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
        // unit-scale predictions, as after training; the cosine is strongly
        // curved near the origin and the difference quotient degrades there
        net.head.bias = vec![0.0, 0.0, 1.0];
        let x = toy_input(13, h, w);
        let gt = toy_gt(14, h, w);
        let mask = build_mask((w, h), (8.0, 8.0), 3.0, 0.3, &mut rng).unwrap();
        let mut probe = net.clone();
        let (out, cache) = probe.forward_train(&x).unwrap();
        let (_, dout) = masked_cosine_loss_grad(&out, &gt, &mask).unwrap();
        let grads = net.backward(&cache, &dout);
        let base_pattern = cache.relu_pattern();
        let step = 1e-3;
        let mut checked = 0;
        let mut kinks = 0;
        for (pi, name) in net.param_names().iter().enumerate() {
            let len = net.params()[pi].len();
            let mut done = 0;
            let mut tries = 0;
            while done < len.min(10) && tries < 100 {
                tries += 1;
                let j = rng.random_range(0..len);
                let mut plus = net.clone();
                plus.params_mut()[pi][j] += step;
                let mut minus = net.clone();
                minus.params_mut()[pi][j] -= step;
                let (lp, pp) = train_loss(&plus, &x, &gt, &mask);
                let (lm, pm) = train_loss(&minus, &x, &gt, &mask);
                if pp != base_pattern || pm != base_pattern {
                    // a rectifier switched inside the stencil: not differentiable there
                    kinks += 1;
                    continue;
                }
                let fd = (lp - lm) / (2.0 * step);
                let an = grads[pi][j];
                let rel = (fd - an).abs() / (fd.abs().max(an.abs())).max(1e-6);
                assert!(rel < 1e-4, "{name}[{j}]: analytic {an:e} vs numeric {fd:e} (rel {rel:e})");
                done += 1;
                checked += 1;
            }
            assert!(done > 0, "{name}: every probe crossed a kink");
        }
        assert!(checked >= 50, "checked {checked}, skipped {kinks}");
    }

    #[test]
    fn inference_output_unit_and_upward() {
        let net = Network::<f32>::init(toy_config(), 3).unwrap();
        let img = TactileImage::filled(6, 5, [0.4, 0.5, 0.6]);
        let n = infer_normals(&net, &img, &img).unwrap();
        for v in n.data() {
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-6 && v[2] > 0.0);
        }
        assert_eq!(n, infer_normals(&net, &img, &img).unwrap());
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = Tensor::<f32> {
            c: 3,
            h: 2,
            w: 3,
            data: (0..18).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let mut scaled = out.clone();
        for i in 0..6 {
            let s = rng.random_range(0.1f32..10.0);
            for ch in 0..3 {
                scaled.data[ch * 6 + i] *= s;
            }
        }
        let a = normalize_output(&out).unwrap();
        let b = normalize_output(&scaled).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            // the nz floor is not scale-invariant; compare only upward pixels
            if p[2] > 1e-3 {
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() < 1e-5);
                }
            }
        }
    }
}
