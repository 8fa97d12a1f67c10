use crate::error::{Error, Result};

use super::{SliceImage, Stage};

/// Supported correlated color temperature range, kelvin.
pub const CCT_RANGE: (f64, f64) = (2000.0, 12000.0);

// Cubic-spline approximation of the Planckian locus in CIE 1931 xy
// (Kim, Kim & Lee, US patent 7,024,034 / Kim et al. 2002), valid 1667-25000 K.
const X_LOW: [f64; 4] = [-0.266_123_9e9, -0.234_358_9e6, 0.877_695_6e3, 0.179_910];
const X_HIGH: [f64; 4] = [-3.025_846_9e9, 2.107_037_9e6, 0.222_634_7e3, 0.240_390];
const Y_1: [f64; 4] = [-1.106_381_4, -1.348_110_20, 2.185_558_32, -0.202_196_83];
const Y_2: [f64; 4] = [-0.954_947_6, -1.374_185_93, 2.091_370_15, -0.167_488_67];
const Y_3: [f64; 4] = [3.081_758_0, -5.873_386_70, 3.751_129_97, -0.370_014_83];

// CIE XYZ to linear sRGB (IEC 61966-2-1, D65).
const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

/// Chromaticity `(x, y)` of a blackbody at `cct` kelvin.
pub fn cct_to_xy(cct: f64) -> (f64, f64) {
    let (t, t2, t3) = (cct, cct * cct, cct * cct * cct);
    let cx = if cct <= 4000.0 { X_LOW } else { X_HIGH };
    let x = cx[0] / t3 + cx[1] / t2 + cx[2] / t + cx[3];
    let cy = if cct <= 2222.0 {
        Y_1
    } else if cct <= 4000.0 {
        Y_2
    } else {
        Y_3
    };
    let y = cy[0] * x * x * x + cy[1] * x * x + cy[2] * x + cy[3];
    (x, y)
}

/// Linear RGB white point of the illuminant, normalized to green = 1.
pub fn white_point_rgb(cct: f64) -> [f64; 3] {
    let (x, y) = cct_to_xy(cct);
    let xyz = [x / y, 1.0, (1.0 - x - y) / y];
    let rgb = XYZ_TO_SRGB.map(|row| row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2]);
    [rgb[0] / rgb[1], 1.0, rgb[2] / rgb[1]]
}

/// Diagonal (von Kries) gains, green normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains(pub [f64; 3]);

impl ChannelGains {
    pub fn between(source_cct: f64, target_cct: f64) -> Result<Self> {
        for cct in [source_cct, target_cct] {
            if !(CCT_RANGE.0..=CCT_RANGE.1).contains(&cct) {
                return Err(Error::domain(format!(
                    "color temperature {cct} K outside [{}, {}] K",
                    CCT_RANGE.0, CCT_RANGE.1
                )));
            }
        }
        let s = white_point_rgb(source_cct);
        let t = white_point_rgb(target_cct);
        Ok(Self([t[0] / s[0], 1.0, t[2] / s[2]]))
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.map(|g| 1.0 / g))
    }

    pub fn apply(&self, data: &mut [u8]) {
        if self.0 == [1.0; 3] {
            return;
        }
        for px in data.chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] = (px[c] as f64 * self.0[c]).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
}

/// Maps a raw image shot under `source_cct` to the `target_cct` white point.
pub fn calibrate_color(image: &SliceImage, source_cct: f64, target_cct: f64) -> Result<SliceImage> {
    if image.stage != Stage::Raw {
        return Err(Error::InvalidImage(format!(
            "calibration expects a raw image, got {:?}",
            image.stage
        )));
    }
    let gains = ChannelGains::between(source_cct, target_cct)?;
    let mut out = image.clone();
    gains.apply(out.rgb8_mut()?);
    out.stage = Stage::Calibrated;
    Ok(out)
}
