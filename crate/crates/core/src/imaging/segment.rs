use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Mask, SliceImage, Stage};

/// Produces one boolean mask per detected slice.
///
/// Implementations must return pairwise-disjoint masks. The classical
/// [`ThresholdSegmenter`] is the default; a learned masker can be dropped in
/// behind the same trait.
pub trait Segmenter: Send + Sync {
    fn name(&self) -> &str;
    fn segment(&self, image: &SliceImage) -> Result<Vec<Mask>>;
}

/// Background-distance threshold, morphological closing, connected
/// components and hole filling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSegmenter {
    /// Euclidean RGB distance from the background above which a pixel is foreground.
    pub threshold: f64,
    /// Half-width of the square structuring element used for closing.
    pub close_radius: usize,
    /// Components smaller than this many pixels are discarded.
    pub min_area: usize,
    /// Background color; estimated from the image border when absent.
    #[serde(default)]
    pub background: Option<[u8; 3]>,
}

impl Default for ThresholdSegmenter {
    fn default() -> Self {
        Self {
            threshold: 60.0,
            close_radius: 2,
            min_area: 500,
            background: None,
        }
    }
}

/// Per-channel median of the outermost pixel ring.
pub(crate) fn border_median(image: &SliceImage) -> [u8; 3] {
    let (w, h) = (image.width, image.height);
    let mut chans: [Vec<u8>; 3] = Default::default();
    let mut push = |x: usize, y: usize| {
        let p = image.pixel(x, y);
        for c in 0..3 {
            chans[c].push(p[c]);
        }
    };
    for x in 0..w {
        push(x, 0);
        push(x, h - 1);
    }
    for y in 1..h.saturating_sub(1) {
        push(0, y);
        push(w - 1, y);
    }
    chans.map(|mut v| {
        v.sort_unstable();
        v[v.len() / 2]
    })
}

// Separable square max/min filter; `dilate` selects max.
fn morph(mask: &Mask, r: usize, dilate: bool) -> Mask {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let pass = |src: &Mask, horizontal: bool| -> Mask {
        let mut out = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (lo, hi, fixed) = if horizontal {
                    (x.saturating_sub(r), (x + r).min(w - 1), y)
                } else {
                    (y.saturating_sub(r), (y + r).min(h - 1), x)
                };
                let mut v = !dilate;
                for k in lo..=hi {
                    let b = if horizontal { src.get(k, fixed) } else { src.get(fixed, k) };
                    if dilate && b {
                        v = true;
                        break;
                    }
                    if !dilate && !b {
                        v = false;
                        break;
                    }
                }
                out.set(x, y, v);
            }
        }
        out
    };
    pass(&pass(mask, true), false)
}

/// 4-connected components as lists of pixel indices.
fn components(mask: &Mask) -> Vec<Vec<usize>> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(comp);
    }
    out
}

/// Fills every region of the component's complement not reachable from the
/// image border.
fn fill_holes(comp: &Mask) -> Mask {
    let (w, h) = (comp.width, comp.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |i: usize, outside: &mut Vec<bool>, q: &mut VecDeque<usize>| {
        if !comp.bits[i] && !outside[i] {
            outside[i] = true;
            q.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, &mut outside, &mut queue);
        seed((h - 1) * w + x, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(y * w, &mut outside, &mut queue);
        seed(y * w + w - 1, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            seed(i - 1, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(i + 1, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(i - w, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(i + w, &mut outside, &mut queue);
        }
    }
    Mask {
        width: w,
        height: h,
        bits: outside.iter().map(|&o| !o).collect(),
    }
}

impl Segmenter for ThresholdSegmenter {
    fn name(&self) -> &str {
        "threshold"
    }

    fn segment(&self, image: &SliceImage) -> Result<Vec<Mask>> {
        let (w, h) = (image.width, image.height);
        if w < 3 || h < 3 {
            return Err(Error::InvalidImage("image too small to segment".into()));
        }
        let bg = self.background.unwrap_or_else(|| border_median(image));
        let thr2 = self.threshold * self.threshold;
        let data = image.rgb8()?;
        let mut fg = Mask::new(w, h);
        for (i, px) in data.chunks_exact(3).enumerate() {
            let d2: f64 = (0..3).map(|c| (px[c] as f64 - bg[c] as f64).powi(2)).sum();
            fg.bits[i] = d2 > thr2;
        }
        let closed = morph(&morph(&fg, self.close_radius, true), self.close_radius, false);
        let mut masks: Vec<Mask> = components(&closed)
            .into_iter()
            .filter(|c| c.len() >= self.min_area)
            .map(|c| {
                let mut m = Mask::new(w, h);
                for i in c {
                    m.bits[i] = true;
                }
                fill_holes(&m)
            })
            .collect();
        // A filled component may swallow a smaller one nested inside it.
        let mut keep = vec![true; masks.len()];
        for i in 0..masks.len() {
            for j in 0..masks.len() {
                if i != j && keep[i] && keep[j] && !masks[i].is_disjoint(&masks[j]) {
                    let drop = if masks[i].area() >= masks[j].area() { j } else { i };
                    keep[drop] = false;
                }
            }
        }
        let mut k = 0;
        masks.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        Ok(masks)
    }
}

/// Segments a calibrated image into one masked image per slice, ordered
/// left to right by centroid.
pub fn segment_slices(
    image: &SliceImage,
    segmenter: &dyn Segmenter,
    expected_slices: usize,
) -> Result<Vec<SliceImage>> {
    if image.stage != Stage::Calibrated {
        return Err(Error::InvalidImage(format!(
            "segmentation expects a calibrated image, got {:?}",
            image.stage
        )));
    }
    let mut masks = segmenter.segment(image)?;
    if masks.is_empty() {
        return Err(Error::SegmentationEmpty);
    }
    if masks.len() > expected_slices {
        return Err(Error::SegmentationAmbiguous {
            found: masks.len(),
            expected: expected_slices,
        });
    }
    let mut keyed: Vec<(f64, Mask)> = masks
        .drain(..)
        .map(|m| (m.centroid().map_or(0.0, |c| c.0), m))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed
        .into_iter()
        .map(|(_, m)| {
            let mut out = image.clone();
            out.stage = Stage::Masked;
            out.mask = Some(m);
            out.check()?;
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_image(w: usize, h: usize, disks: &[(f64, f64, f64)], hole: f64) -> SliceImage {
        let mut img = SliceImage::filled(w, h, [30, 30, 35]);
        let data = img.rgb8_mut().unwrap();
        for y in 0..h {
            for x in 0..w {
                for &(cx, cy, r) in disks {
                    let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                    if d <= r && d > hole * r {
                        data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&[220, 200, 150]);
                    }
                }
            }
        }
        img.stage = Stage::Calibrated;
        img
    }

    #[test]
    fn blank_image_is_empty() {
        let mut img = SliceImage::filled(64, 64, [30, 30, 35]);
        img.stage = Stage::Calibrated;
        let err = segment_slices(&img, &ThresholdSegmenter::default(), 2).unwrap_err();
        assert!(matches!(err, Error::SegmentationEmpty));
    }

    #[test]
    fn cored_slice_is_filled() {
        let img = disk_image(200, 200, &[(100.0, 100.0, 60.0)], 0.35);
        let out = segment_slices(&img, &ThresholdSegmenter::default(), 1).unwrap();
        assert_eq!(out.len(), 1);
        let area = out[0].mask.as_ref().unwrap().area() as f64;
        let expect = std::f64::consts::PI * 60.0 * 60.0;
        assert!((area - expect).abs() / expect < 0.01, "{area} vs {expect}");
    }

    #[test]
    fn two_slices_left_first_and_disjoint() {
        let img = disk_image(300, 150, &[(220.0, 75.0, 50.0), (70.0, 75.0, 40.0)], 0.3);
        let out = segment_slices(&img, &ThresholdSegmenter::default(), 2).unwrap();
        assert_eq!(out.len(), 2);
        let (a, b) = (out[0].mask.as_ref().unwrap(), out[1].mask.as_ref().unwrap());
        assert!(a.is_disjoint(b));
        assert!(a.centroid().unwrap().0 < 100.0 && b.centroid().unwrap().0 > 200.0);

        let err = segment_slices(&img, &ThresholdSegmenter::default(), 1).unwrap_err();
        assert!(matches!(err, Error::SegmentationAmbiguous { found: 2, expected: 1 }));
    }

    #[test]
    fn closing_bridges_single_pixel_gaps() {
        let mut m = Mask::new(9, 3);
        for x in 0..9 {
            m.set(x, 1, x != 4);
        }
        let closed = morph(&morph(&m, 1, true), 1, false);
        assert!(closed.get(4, 1));
    }
}
