//! Record types and the wet-basis moisture arithmetic.
//!
//! Moisture content (MC) is always a wet-basis fraction in `[0, 1)`; weights
//! are grams. Percentages only appear in rendered reports.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::SliceImage;
use crate::scalar::Scalar;

/// Tolerance (grams) below the dry-solids mass before a final weight is
/// rejected as physically impossible.
pub const NEGATIVE_MC_EPS_G: f64 = 1e-9;

/// Temperature levels of the reference experiment grid, °C.
pub const STRICT_TEMPERATURES: [f64; 3] = [60.0, 70.0, 80.0];
/// Air velocity levels of the reference experiment grid, m/s.
pub const STRICT_VELOCITIES: [f64; 2] = [1.5, 2.5];
/// Drying time range of the reference experiments, minutes.
pub const STRICT_TIME_RANGE: (f64, f64) = (70.0, 250.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DryingConditions {
    /// Air temperature, °C.
    pub temperature: f64,
    /// Air velocity, m/s.
    pub air_velocity: f64,
    /// Minutes.
    pub drying_time: f64,
}

impl DryingConditions {
    pub fn new(temperature: f64, air_velocity: f64, drying_time: f64) -> Self {
        Self {
            temperature,
            air_velocity,
            drying_time,
        }
    }

    /// The (temperature, velocity) pair that defines a cross-validation group.
    pub fn combo(&self) -> ConditionCombo {
        ConditionCombo::new(self.temperature, self.air_velocity)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.temperature, self.air_velocity, self.drying_time]
    }
}

/// A (temperature, air velocity) combination, compared on a 1e-6 grid so it
/// can be used as an ordered map key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionCombo {
    temperature_micro: i64,
    velocity_micro: i64,
}

impl ConditionCombo {
    pub fn new(temperature: f64, air_velocity: f64) -> Self {
        Self {
            temperature_micro: (temperature * 1e6).round() as i64,
            velocity_micro: (air_velocity * 1e6).round() as i64,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature_micro as f64 / 1e6
    }

    pub fn air_velocity(&self) -> f64 {
        self.velocity_micro as f64 / 1e6
    }
}

impl fmt::Display for ConditionCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}C/{}mps", self.temperature(), self.air_velocity())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSample {
    pub sample_id: String,
    /// Slices dried together share a run id.
    pub run_id: String,
    pub initial_weight: f64,
    pub final_weight: f64,
    /// Wet-basis fraction.
    pub initial_mc: f64,
    /// Millimeters; known only for simulated slices.
    pub thickness: Option<f64>,
    /// Millimeters; known only for simulated slices.
    pub diameter: Option<f64>,
}

impl SliceSample {
    pub fn dry_solids(&self) -> f64 {
        self.initial_weight * (1.0 - self.initial_mc)
    }
}

#[derive(Debug, Clone)]
pub enum ImageRef {
    Path(PathBuf),
    Memory(Arc<SliceImage>),
}

#[derive(Debug, Clone)]
pub struct DryingRecord {
    pub conditions: DryingConditions,
    pub sample: SliceSample,
    pub image: ImageRef,
    pub ground_truth_mc: f64,
    pub slices_in_run: usize,
    /// Left-to-right position of the slice in its run image.
    pub slice_index: usize,
}

/// Wet-basis final moisture content from the initial weight `w0`, initial
/// moisture `mc0` and final weight `wa`: `(wa - w0 (1 - mc0)) / wa`.
pub fn moisture_content<T: Scalar>(w0: T, mc0: T, wa: T) -> Result<T> {
    if !(w0 > T::zero()) || !(wa > T::zero()) {
        return Err(Error::domain(format!(
            "weights must be positive (initial {w0}, final {wa})"
        )));
    }
    if !(mc0 > T::zero() && mc0 < T::one()) {
        return Err(Error::domain(format!("initial MC {mc0} outside (0, 1)")));
    }
    let solids = w0 * (T::one() - mc0);
    if wa <= solids - T::of(NEGATIVE_MC_EPS_G) {
        return Err(Error::domain(format!(
            "final weight {wa} g is below the dry-solids mass {solids} g"
        )));
    }
    let mc = (wa - solids) / wa;
    Ok(mc.max(T::zero()))
}

/// Final moisture content of a slice from its recorded weights.
pub fn compute_final_mc(sample: &SliceSample) -> Result<f64> {
    moisture_content(sample.initial_weight, sample.initial_mc, sample.final_weight)
}

/// Final weight at which a slice reaches `target_mc`: `w0 (1 - mc0) / (1 - target)`.
pub fn final_weight_for_target_mc<T: Scalar>(w0: T, mc0: T, target_mc: T) -> Result<T> {
    if !(w0 > T::zero()) {
        return Err(Error::domain(format!("initial weight {w0} must be positive")));
    }
    if !(mc0 > T::zero() && mc0 < T::one()) {
        return Err(Error::domain(format!("initial MC {mc0} outside (0, 1)")));
    }
    if !(target_mc >= T::zero() && target_mc < T::one()) {
        return Err(Error::domain(format!("target MC {target_mc} outside [0, 1)")));
    }
    Ok(w0 * (T::one() - mc0) / (T::one() - target_mc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    TemperatureRange,
    VelocityRange,
    TimeRange,
    WeightNotPositive,
    MassIncreased,
    SolidsRemoved,
    InitialMcRange,
    GeometryNotPositive,
    GroundTruthRange,
    GroundTruthMismatch,
    EmptyId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn on_level(x: f64, levels: &[f64]) -> bool {
    levels.iter().any(|l| (x - l).abs() < 1e-9)
}

fn fmt_levels(levels: &[f64]) -> String {
    let parts: Vec<String> = levels.iter().map(|l| format!("{l}")).collect();
    format!("{{{}}}", parts.join(","))
}

/// Lists every invariant the record violates. An empty list means valid.
pub fn check_record(record: &DryingRecord, strict: bool) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let c = &record.conditions;
    let s = &record.sample;

    if !(50.0..=90.0).contains(&c.temperature) {
        out.push(Violation::new(
            TemperatureRange,
            format!("temperature {} outside [50, 90]", c.temperature),
        ));
    } else if strict && !on_level(c.temperature, &STRICT_TEMPERATURES) {
        out.push(Violation::new(
            TemperatureRange,
            format!("temperature not in {}", fmt_levels(&STRICT_TEMPERATURES)),
        ));
    }
    if !(1.0..=3.0).contains(&c.air_velocity) {
        out.push(Violation::new(
            VelocityRange,
            format!("air velocity {} outside [1, 3]", c.air_velocity),
        ));
    } else if strict && !on_level(c.air_velocity, &STRICT_VELOCITIES) {
        out.push(Violation::new(
            VelocityRange,
            format!("air velocity not in {}", fmt_levels(&STRICT_VELOCITIES)),
        ));
    }
    if !(c.drying_time > 0.0 && c.drying_time <= 400.0) {
        out.push(Violation::new(
            TimeRange,
            format!("drying time {} outside (0, 400]", c.drying_time),
        ));
    } else if strict
        && !(STRICT_TIME_RANGE.0..=STRICT_TIME_RANGE.1).contains(&c.drying_time)
    {
        out.push(Violation::new(
            TimeRange,
            format!("drying time {} outside [70, 250]", c.drying_time),
        ));
    }

    if s.sample_id.trim().is_empty() || s.run_id.trim().is_empty() {
        out.push(Violation::new(EmptyId, "empty sample or run id"));
    }
    let weights_ok = s.initial_weight > 0.0 && s.final_weight > 0.0;
    if !weights_ok {
        out.push(Violation::new(WeightNotPositive, "weights must be positive"));
    }
    let mc0_ok = s.initial_mc > 0.0 && s.initial_mc < 1.0;
    if !mc0_ok {
        out.push(Violation::new(
            InitialMcRange,
            format!("initial MC {} outside (0, 1)", s.initial_mc),
        ));
    }
    if weights_ok && s.final_weight > s.initial_weight {
        out.push(Violation::new(MassIncreased, "mass increased"));
    }
    if weights_ok && mc0_ok && s.final_weight <= s.dry_solids() {
        out.push(Violation::new(
            SolidsRemoved,
            format!(
                "final weight {} g at or below dry solids {} g",
                s.final_weight,
                s.dry_solids()
            ),
        ));
    }
    if s.thickness.is_some_and(|t| !(t > 0.0)) || s.diameter.is_some_and(|d| !(d > 0.0)) {
        out.push(Violation::new(
            GeometryNotPositive,
            "thickness and diameter must be positive",
        ));
    }

    if !(record.ground_truth_mc >= 0.0 && record.ground_truth_mc < 1.0) {
        out.push(Violation::new(
            GroundTruthRange,
            format!("ground-truth MC {} outside [0, 1)", record.ground_truth_mc),
        ));
    } else if let Ok(mc) = compute_final_mc(s) {
        if (mc - record.ground_truth_mc).abs() > 1e-9 {
            out.push(Violation::new(
                GroundTruthMismatch,
                format!(
                    "ground-truth MC {} disagrees with weights ({mc})",
                    record.ground_truth_mc
                ),
            ));
        }
    }
    out
}

/// Returns the record unchanged when valid, otherwise every violation found.
pub fn validate_record(
    record: DryingRecord,
    strict: bool,
) -> std::result::Result<DryingRecord, Vec<Violation>> {
    let violations = check_record(&record, strict);
    if violations.is_empty() {
        Ok(record)
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(w0: f64, mc0: f64, wa: f64) -> SliceSample {
        SliceSample {
            sample_id: "s1".into(),
            run_id: "r1".into(),
            initial_weight: w0,
            final_weight: wa,
            initial_mc: mc0,
            thickness: None,
            diameter: None,
        }
    }

    fn record(t: f64, v: f64, w0: f64, mc0: f64, wa: f64) -> DryingRecord {
        let s = sample(w0, mc0, wa);
        let mc = compute_final_mc(&s).unwrap_or(0.0);
        DryingRecord {
            conditions: DryingConditions::new(t, v, 120.0),
            sample: s,
            image: ImageRef::Path("x.png".into()),
            ground_truth_mc: mc,
            slices_in_run: 1,
            slice_index: 0,
        }
    }

    #[test]
    fn final_mc_examples() {
        assert_eq!(compute_final_mc(&sample(10.0, 0.85, 1.5)).unwrap(), 0.0);
        assert!((compute_final_mc(&sample(10.0, 0.85, 1.875)).unwrap() - 0.20).abs() < 1e-12);
        assert!((compute_final_mc(&sample(10.0, 0.85, 1.8)).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn final_mc_rejects_impossible_weights() {
        assert!(compute_final_mc(&sample(10.0, 0.85, 1.4)).is_err());
        assert!(compute_final_mc(&sample(0.0, 0.85, 1.4)).is_err());
        assert!(compute_final_mc(&sample(10.0, 0.85, -1.0)).is_err());
        // within the float-noise guard: clamps to zero rather than failing
        assert_eq!(compute_final_mc(&sample(10.0, 0.85, 1.5 - 1e-12)).unwrap(), 0.0);
    }

    #[test]
    fn inverse_examples() {
        assert!((final_weight_for_target_mc(10.0_f64, 0.85, 0.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((final_weight_for_target_mc(10.0_f64, 0.85, 0.2).unwrap() - 1.875).abs() < 1e-12);
        assert!((final_weight_for_target_mc(10.0_f64, 0.85, 0.1).unwrap() - 1.666_666_666_666_7).abs() < 1e-9);
        assert!(final_weight_for_target_mc(10.0, 0.85, 1.0).is_err());
    }

    #[test]
    fn boundary_no_drying_keeps_initial_mc() {
        assert_eq!(compute_final_mc(&sample(7.3, 0.84, 7.3)).unwrap(), 0.84);
    }

    #[test]
    fn generic_in_f32() {
        let mc = moisture_content(10.0f32, 0.85, 1.875).unwrap();
        assert!((mc - 0.2).abs() < 1e-6);
    }

    #[test]
    fn validation_examples() {
        assert!(validate_record(record(70.0, 1.5, 10.0, 0.85, 1.8), false).is_ok());
        assert!(validate_record(record(70.0, 1.5, 10.0, 0.85, 1.8), true).is_ok());

        let mut r = record(70.0, 1.5, 10.0, 0.85, 1.8);
        r.sample.final_weight = 11.0;
        r.ground_truth_mc = compute_final_mc(&r.sample).unwrap();
        let v = validate_record(r, false).unwrap_err();
        assert!(v.iter().any(|x| x.message == "mass increased"));

        let v = validate_record(record(65.0, 1.5, 10.0, 0.85, 1.8), true).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "temperature not in {60,70,80}");
        assert!(validate_record(record(65.0, 1.5, 10.0, 0.85, 1.8), false).is_ok());
    }

    #[test]
    fn validation_catches_label_mismatch() {
        let mut r = record(70.0, 2.5, 10.0, 0.85, 1.8);
        r.ground_truth_mc += 1e-6;
        let v = check_record(&r, false);
        assert_eq!(v[0].kind, ViolationKind::GroundTruthMismatch);
    }

    proptest! {
        #[test]
        fn round_trip(w0 in 0.5f64..50.0, mc0 in 0.05f64..0.95, m in 0.0f64..0.95) {
            let wa = final_weight_for_target_mc(w0, mc0, m).unwrap();
            let back = moisture_content(w0, mc0, wa).unwrap();
            prop_assert!((back - m).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_final_weight(w0 in 0.5f64..50.0, mc0 in 0.05f64..0.95, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let solids = w0 * (1.0 - mc0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let w_lo = solids + lo * (w0 - solids);
            let w_hi = solids + hi * (w0 - solids);
            prop_assert!(moisture_content(w0, mc0, w_lo).unwrap() < moisture_content(w0, mc0, w_hi).unwrap());
        }
    }
}
