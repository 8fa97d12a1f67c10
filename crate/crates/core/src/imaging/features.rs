use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{SliceImage, Stage};

/// Mean color over the mask and the mask's pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleImageFeatures {
    pub mean_r: f64,
    pub mean_g: f64,
    pub mean_b: f64,
    /// Pixels.
    pub area: f64,
}

impl SimpleImageFeatures {
    /// Rec. 601 luma of the mean color.
    pub fn luminance(&self) -> f64 {
        0.299 * self.mean_r + 0.587 * self.mean_g + 0.114 * self.mean_b
    }
}

pub fn extract_simple_features(image: &SliceImage) -> Result<SimpleImageFeatures> {
    if image.stage != Stage::Masked {
        return Err(Error::InvalidImage(format!(
            "feature extraction expects a masked image, got {:?}",
            image.stage
        )));
    }
    image.check()?;
    let mask = image.mask.as_ref().expect("checked above");
    let data = image.rgb8()?;
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for (px, &m) in data.chunks_exact(3).zip(&mask.bits) {
        if m {
            for c in 0..3 {
                sum[c] += px[c] as u64;
            }
            n += 1;
        }
    }
    let nf = n as f64;
    Ok(SimpleImageFeatures {
        mean_r: sum[0] as f64 / nf,
        mean_g: sum[1] as f64 / nf,
        mean_b: sum[2] as f64 / nf,
        area: nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Mask;

    fn masked_with(w: usize, h: usize, color: impl Fn(usize, usize) -> [u8; 3], inside: impl Fn(usize, usize) -> bool) -> SliceImage {
        let mut img = SliceImage::filled(w, h, [9, 9, 9]);
        let mut mask = Mask::new(w, h);
        let data = img.rgb8_mut().unwrap();
        for y in 0..h {
            for x in 0..w {
                if inside(x, y) {
                    data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&color(x, y));
                    mask.set(x, y, true);
                }
            }
        }
        img.stage = Stage::Masked;
        img.mask = Some(mask);
        img
    }

    #[test]
    fn uniform_region() {
        let img = masked_with(100, 100, |_, _| [200, 150, 100], |x, y| x < 50 && y < 100);
        let f = extract_simple_features(&img).unwrap();
        assert_eq!(f, SimpleImageFeatures { mean_r: 200.0, mean_g: 150.0, mean_b: 100.0, area: 5000.0 });
    }

    #[test]
    fn checkerboard_averages_to_midgray() {
        let img = masked_with(
            64,
            64,
            |x, y| if (x + y) % 2 == 0 { [0, 0, 0] } else { [255, 255, 255] },
            |x, y| (8..40).contains(&x) && (8..40).contains(&y),
        );
        let f = extract_simple_features(&img).unwrap();
        assert_eq!((f.mean_r, f.mean_g, f.mean_b), (127.5, 127.5, 127.5));
        assert_eq!(f.area, 1024.0);
    }

    #[test]
    fn luminance_weights() {
        let f = SimpleImageFeatures { mean_r: 100.0, mean_g: 100.0, mean_b: 100.0, area: 1.0 };
        assert!((f.luminance() - 100.0).abs() < 1e-12);
    }
}
