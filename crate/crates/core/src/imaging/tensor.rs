use crate::error::{Error, Result};

use super::segment::border_median;
use super::{Mask, Pixels, SliceImage, Stage};

/// Side length of the square encoder input.
pub const TENSOR_SIDE: usize = 224;

/// Crops a masked slice to its bounding box, pads to a square, resizes
/// bilinearly to 224x224, zeroes everything outside the mask and scales to
/// `[0, 1]`.
pub fn to_model_tensor(image: &SliceImage) -> Result<SliceImage> {
    if image.stage != Stage::Masked {
        return Err(Error::InvalidImage(format!(
            "tensor conversion expects a masked image, got {:?}",
            image.stage
        )));
    }
    image.check()?;
    let mask = image.mask.as_ref().expect("checked above");
    let (x0, y0, x1, y1) = mask
        .bbox()
        .ok_or_else(|| Error::InvalidImage("empty mask".into()))?;
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let side = bw.max(bh);
    // top-left of the square window, may lie outside the image
    let sx0 = x0 as isize - ((side - bw) / 2) as isize;
    let sy0 = y0 as isize - ((side - bh) / 2) as isize;
    let bg = border_median(image);

    let fetch = |x: isize, y: isize| -> ([f32; 3], f32) {
        let inside_window = x >= sx0 && y >= sy0 && x < sx0 + side as isize && y < sy0 + side as isize;
        let inside_image = x >= 0 && y >= 0 && (x as usize) < image.width && (y as usize) < image.height;
        if inside_window && inside_image {
            let p = image.pixel(x as usize, y as usize);
            (p.map(f32::from), if mask.get(x as usize, y as usize) { 1.0 } else { 0.0 })
        } else {
            (bg.map(f32::from), 0.0)
        }
    };

    let scale = side as f64 / TENSOR_SIDE as f64;
    let mut out = vec![0f32; TENSOR_SIDE * TENSOR_SIDE * 3];
    let mut out_mask = Mask::new(TENSOR_SIDE, TENSOR_SIDE);
    for v in 0..TENSOR_SIDE {
        let sy = sy0 as f64 + (v as f64 + 0.5) * scale - 0.5;
        let (yf, ty) = (sy.floor(), (sy - sy.floor()) as f32);
        for u in 0..TENSOR_SIDE {
            let sx = sx0 as f64 + (u as f64 + 0.5) * scale - 0.5;
            let (xf, tx) = (sx.floor(), (sx - sx.floor()) as f32);
            let (xi, yi) = (xf as isize, yf as isize);
            let corners = [
                (fetch(xi, yi), (1.0 - tx) * (1.0 - ty)),
                (fetch(xi + 1, yi), tx * (1.0 - ty)),
                (fetch(xi, yi + 1), (1.0 - tx) * ty),
                (fetch(xi + 1, yi + 1), tx * ty),
            ];
            let mut rgb = [0f32; 3];
            let mut m = 0f32;
            for ((px, mk), wgt) in corners {
                if wgt == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    rgb[c] += wgt * px[c];
                }
                m += wgt * mk;
            }
            if m >= 0.5 {
                out_mask.set(u, v, true);
                let i = (v * TENSOR_SIDE + u) * 3;
                for c in 0..3 {
                    out[i + c] = (rgb[c] / 255.0).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(SliceImage {
        width: TENSOR_SIDE,
        height: TENSOR_SIDE,
        stage: Stage::Tensor,
        pixels: Pixels::F32(out),
        mask: Some(out_mask),
        sample_id: image.sample_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn masked(w: usize, h: usize, fill: impl Fn(usize, usize) -> Option<[u8; 3]>) -> SliceImage {
        let mut img = SliceImage::filled(w, h, [20, 20, 20]);
        let mut mask = Mask::new(w, h);
        let data = img.rgb8_mut().unwrap();
        for y in 0..h {
            for x in 0..w {
                if let Some(c) = fill(x, y) {
                    data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
                    mask.set(x, y, true);
                }
            }
        }
        img.stage = Stage::Masked;
        img.mask = Some(mask);
        img
    }

    #[test]
    fn output_shape_and_range() {
        let img = masked(300, 200, |x, y| {
            let d = ((x as f64 - 150.0).powi(2) + (y as f64 - 90.0).powi(2)).sqrt();
            (d < 70.0).then_some([(x % 256) as u8, 128, 250])
        });
        let t = to_model_tensor(&img).unwrap();
        assert_eq!((t.width, t.height, t.stage), (224, 224, Stage::Tensor));
        t.check().unwrap();
        let v = t.unit().unwrap();
        let m = t.mask.as_ref().unwrap();
        for (i, px) in v.chunks_exact(3).enumerate() {
            if !m.bits[i] {
                assert_eq!(px, &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn exact_square_is_identity() {
        let img = masked(300, 260, |x, y| {
            ((10..234).contains(&x) && (20..244).contains(&y)).then_some([(x % 251) as u8, (y % 241) as u8, 7])
        });
        let t = to_model_tensor(&img).unwrap();
        let v = t.unit().unwrap();
        for y in 0..224 {
            for x in 0..224 {
                let src = img.pixel(x + 10, y + 20);
                for c in 0..3 {
                    assert_eq!(v[(y * 224 + x) * 3 + c], src[c] as f32 / 255.0);
                }
            }
        }
    }

    #[test]
    fn rejects_unmasked_input() {
        let img = SliceImage::filled(10, 10, [0, 0, 0]);
        assert!(to_model_tensor(&img).is_err());
    }

    #[test]
    fn rejects_tiny_mask() {
        let img = masked(300, 300, |x, y| (x == 5 && y == 5).then_some([200, 200, 200]));
        assert!(matches!(to_model_tensor(&img), Err(Error::InvalidImage(_))));
    }
}
