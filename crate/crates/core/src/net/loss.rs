use super::scalar::{Scalar, Tensor};
use crate::raster::{Mask, NormalMap};
use crate::{Error, Result};

/// Stabilizer on vector norms inside the cosine.
pub const COSINE_EPS: f64 = 1e-8;

fn check(len: usize, w: usize, h: usize, gt: &NormalMap, mask: &Mask) -> Result<()> {
    if len != w * h || gt.width() != w || gt.height() != h || mask.width() != w || mask.height() != h {
        return Err(Error::dims(
            format!("{w}x{h} prediction, normals and mask"),
            format!(
                "{} values, {}x{} normals, {}x{} mask",
                len,
                gt.width(),
                gt.height(),
                mask.width(),
                mask.height()
            ),
        ));
    }
    if mask.count() == 0 {
        return Err(Error::invalid("loss mask has no set pixel"));
    }
    Ok(())
}

#[inline]
fn cosine(p: [f64; 3], g: [f64; 3]) -> (f64, f64, f64) {
    let pn = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(COSINE_EPS);
    let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt().max(COSINE_EPS);
    let dot = p[0] * g[0] + p[1] * g[1] + p[2] * g[2];
    (dot / (pn * gn), pn, gn)
}

/// Mean of `1 − cos(pred, gt)` over the set pixels of `mask`.
pub fn masked_cosine_loss(pred: &[[f64; 3]], gt: &NormalMap, mask: &Mask) -> Result<f64> {
    check(pred.len(), gt.width(), gt.height(), gt, mask)?;
    let mut sum = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if m {
            sum += 1.0 - cosine(pred[i], gt.data()[i]).0;
        }
    }
    Ok(sum / mask.count() as f64)
}

/// Loss and its gradient with respect to a planar 3-channel prediction.
pub fn masked_cosine_loss_grad<T: Scalar>(pred: &Tensor<T>, gt: &NormalMap, mask: &Mask) -> Result<(f64, Tensor<T>)> {
    if pred.c != 3 {
        return Err(Error::dims("3 prediction channels", pred.c));
    }
    let hw = pred.h * pred.w;
    check(hw, pred.w, pred.h, gt, mask)?;
    let inv_m = 1.0 / mask.count() as f64;
    let mut grad = Tensor::zeros(3, pred.h, pred.w);
    let mut sum = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if !m {
            continue;
        }
        let p = [pred.data[i].f64(), pred.data[hw + i].f64(), pred.data[2 * hw + i].f64()];
        let g = gt.data()[i];
        let (cos, pn, gn) = cosine(p, g);
        sum += 1.0 - cos;
        let raw = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        for k in 0..3 {
            let dcos = if raw > COSINE_EPS {
                g[k] / (pn * gn) - cos * p[k] / (pn * pn)
            } else {
                g[k] / (pn * gn)
            };
            grad.data[k * hw + i] = T::of(-dcos * inv_m);
        }
    }
    Ok((sum * inv_m, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (NormalMap, Mask) {
        let gt = NormalMap::flat(4, 2);
        let mask = Mask::new(4, 2, vec![true; 8]).unwrap();
        (gt, mask)
    }

    #[test]
    fn identical_prediction_has_zero_loss() {
        let (gt, mask) = setup();
        assert_eq!(masked_cosine_loss(gt.data(), &gt, &mask).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_prediction_has_loss_two() {
        let (gt, mask) = setup();
        let pred: Vec<[f64; 3]> = gt.data().iter().map(|v| [-v[0], -v[1], -v[2]]).collect();
        assert_eq!(masked_cosine_loss(&pred, &gt, &mask).unwrap(), 2.0);
    }

    #[test]
    fn half_orthogonal_gives_one_half() {
        let (gt, mask) = setup();
        let pred: Vec<[f64; 3]> = (0..8).map(|i| if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 3.0] }).collect();
        assert!((masked_cosine_loss(&pred, &gt, &mask).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unmasked_pixels_are_ignored() {
        let gt = NormalMap::flat(2, 1);
        let mask = Mask::new(2, 1, vec![true, false]).unwrap();
        let pred = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        assert_eq!(masked_cosine_loss(&pred, &gt, &mask).unwrap(), 0.0);
    }

    #[test]
    fn zero_prediction_is_finite() {
        let (gt, mask) = setup();
        let pred = Tensor::<f64>::zeros(3, 2, 4);
        let (l, g) = masked_cosine_loss_grad(&pred, &gt, &mask).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_mask_rejected() {
        let gt = NormalMap::flat(2, 1);
        let mask = Mask::empty(2, 1);
        assert!(masked_cosine_loss(gt.data(), &gt, &mask).is_err());
    }
}
