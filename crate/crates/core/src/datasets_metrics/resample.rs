use super::{Dataset, Labels};
use crate::tensor_nn::Tensor;
use crate::{Error, Result};

/// Source coordinate for output index `i` with corner-aligned sampling.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src - 1) as f64 / 2.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Bilinear resampling of an `[H, W, C]` image with corner-aligned grids.
///
/// Output values are convex combinations of input values, so the `[0, 1]`
/// range is preserved.
pub fn resample_image(img: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("resample target must be positive"));
    }
    if img.rank() != 3 {
        return Err(Error::shape(format!("resample expects [h, w, c], got {:?}", img.shape())));
    }
    let (h, w, c) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    if (h, w) == (target_h, target_w) {
        return Ok(img.clone());
    }
    let src = img.data();
    let at = |y: usize, x: usize, ch: usize| src[(y * w + x) * c + ch];
    let mut out = Tensor::zeros(&[target_h, target_w, c]);
    let dst = out.data_mut();
    for oy in 0..target_h {
        let sy = source_coord(oy, h, target_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..target_w {
            let sx = source_coord(ox, w, target_w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let top = at(y0, x0, ch) * (1.0 - fx) + at(y0, x1, ch) * fx;
                let bottom = at(y1, x0, ch) * (1.0 - fx) + at(y1, x1, ch) * fx;
                dst[(oy * target_w + ox) * c + ch] = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Resamples every image (and mask) of a dataset to `target_h x target_w`.
pub fn resample_dataset(d: &Dataset, target_h: usize, target_w: usize) -> Result<Dataset> {
    let images = d
        .images()
        .iter()
        .map(|t| resample_image(t, target_h, target_w))
        .collect::<Result<Vec<_>>>()?;
    let labels = match d.labels() {
        Labels::Masks(m) => Labels::Masks(
            m.iter()
                .map(|t| resample_image(t, target_h, target_w))
                .collect::<Result<Vec<_>>>()?,
        ),
        other => other.clone(),
    };
    Dataset::new(d.name.clone(), images, labels)
}
