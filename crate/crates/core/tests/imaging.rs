mod common;

use std::f64::consts::PI;

use mcfusion::imaging::{calibrate_color, extract_simple_features, segment_slices, to_model_tensor};
use mcfusion::simulator::{draw_slices, SliceDraw};
use mcfusion::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn segmentation_matches_renderer_masks() {
    let cfg = RunConfig::default();
    let corpus = common::oracle_corpus(&cfg);
    assert_eq!(corpus.len(), 50);
    let (mut slices, mut found, mut iou_sum) = (0usize, 0usize, 0.0);
    for (img, truths) in &corpus {
        let cal = calibrate_color(img, cfg.imaging.source_cct, cfg.imaging.target_cct).unwrap();
        let masked = segment_slices(&cal, &cfg.imaging.segmenter, truths.len()).unwrap_or_default();
        for t in truths {
            slices += 1;
            let best = masked
                .iter()
                .map(|m| m.mask.as_ref().unwrap().intersection_over_union(&t.mask))
                .fold(0.0, f64::max);
            if best >= 0.5 {
                found += 1;
                iou_sum += best;
            }
        }
    }
    let recall = found as f64 / slices as f64;
    let mean_iou = iou_sum / found.max(1) as f64;
    assert!(recall >= 0.99, "recall {recall}");
    assert!(mean_iou >= 0.95, "mean IoU {mean_iou}");
}

#[test]
fn single_disk_area_within_one_percent() {
    let cfg = RunConfig::default();
    let spec = &cfg.simulator.render;
    let disk = SliceDraw {
        center: (320.0, 160.0),
        outer_radius: 100.0,
        hole_fraction: spec.core_hole_fraction,
        fill: [200.0, 170.0, 110.0],
        wobble: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = draw_slices(spec, &[disk], cfg.simulator.variability.pixel_noise_sd, &mut rng).unwrap();
    let cal = calibrate_color(&r.image, cfg.imaging.source_cct, cfg.imaging.target_cct).unwrap();
    let masked = segment_slices(&cal, &cfg.imaging.segmenter, 1).unwrap();
    assert_eq!(masked.len(), 1);
    let area = masked[0].mask.as_ref().unwrap().area() as f64;
    let expect = PI * 100.0 * 100.0;
    assert!((area - expect).abs() / expect <= 0.01, "area {area} vs {expect}");
}

#[test]
fn features_match_renderer_mean_color() {
    let cfg = RunConfig::default();
    for (img, truths) in common::oracle_corpus(&cfg).iter().take(10) {
        let cal = calibrate_color(img, cfg.imaging.source_cct, cfg.imaging.target_cct).unwrap();
        let masked = segment_slices(&cal, &cfg.imaging.segmenter, truths.len()).unwrap();
        for (m, t) in masked.iter().zip(truths) {
            let f = extract_simple_features(m).unwrap();
            for (got, want) in [f.mean_r, f.mean_g, f.mean_b].iter().zip(t.scene_mean) {
                assert!((got - want).abs() <= 1.0, "{got} vs {want}");
            }
        }
    }
}

#[test]
fn area_is_invariant_under_calibration() {
    let cfg = RunConfig::default();
    let (img, truths) = &common::oracle_corpus(&cfg)[0];
    let a = calibrate_color(img, 5000.0, 6500.0).unwrap();
    let b = calibrate_color(img, 6500.0, 6500.0).unwrap();
    let fa = extract_simple_features(&segment_slices(&a, &cfg.imaging.segmenter, truths.len()).unwrap()[0]).unwrap();
    let fb = extract_simple_features(&segment_slices(&b, &cfg.imaging.segmenter, truths.len()).unwrap()[0]).unwrap();
    assert_eq!(fa.area, fb.area);
}

#[test]
fn tensor_is_scale_covariant() {
    let cfg = RunConfig::default();
    let spec = &cfg.simulator.render;
    let tensor_at = |factor: usize| {
        let s = spec.scaled(factor);
        let disk = SliceDraw {
            center: (s.width as f64 / 2.0, s.height as f64 / 2.0),
            outer_radius: 80.0 * factor as f64,
            hole_fraction: s.core_hole_fraction,
            fill: [190.0, 150.0, 90.0],
            wobble: vec![(3.0, 0.02, 0.4)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = draw_slices(&s, &[disk], 0.0, &mut rng).unwrap();
        let cal = calibrate_color(&r.image, cfg.imaging.source_cct, cfg.imaging.target_cct).unwrap();
        let masked = segment_slices(&cal, &cfg.imaging.segmenter, 1).unwrap();
        to_model_tensor(&masked[0]).unwrap().to_chw::<f64>().unwrap()
    };
    let (a, b) = (tensor_at(1), tensor_at(2));
    let mad = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    assert!(mad < 0.02, "mean absolute difference {mad}");
    assert_eq!(tensor_at(1), a);
}

fn r_squared(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let fit = mcfusion::baselines::fit_ols(x, y).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(r, v)| (fit.predict(r) - v).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Mean luminance and mask area explain moisture that the process
/// parameters alone do not.
#[test]
fn images_carry_moisture_signal() {
    let (_, records) = common::benchmark();
    let y: Vec<f64> = records.iter().map(|r| r.truth).collect();
    let tab: Vec<Vec<f64>> = records.iter().map(|r| r.tabular.to_vec()).collect();
    let both: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.tabular.iter().copied().chain([r.features.luminance(), r.features.area]).collect())
        .collect();
    let (a, b) = (r_squared(&tab, &y), r_squared(&both, &y));
    assert!(b > a + 0.1, "R^2 tabular {a}, with image features {b}");
}
