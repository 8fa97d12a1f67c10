use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{DryingConditions, SliceSample};
use crate::error::{Error, Result};

use super::KELVIN;

/// Page thin-layer law `MR = exp(-k t^n)` with an Arrhenius temperature
/// term, power-law velocity term and thickness scaling:
/// `k = a exp(-Ea/R / T) v^b L^-c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsParams {
    /// `a`, 1/min^n.
    pub pre_exponential: f64,
    /// `Ea/R`, kelvin.
    pub activation_temperature: f64,
    /// `b`.
    pub velocity_exponent: f64,
    /// `n`.
    pub page_exponent: f64,
    /// `c`; thickness is in millimeters.
    pub thickness_exponent: f64,
    /// Wet-basis equilibrium moisture.
    pub equilibrium_mc: f64,
    /// Standard deviation of the log-normal multiplier on `k`.
    pub rate_noise_sd: f64,
}

impl KineticsParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pre_exponential > 0.0
            && self.page_exponent > 0.5
            && self.page_exponent <= 2.0
            && self.velocity_exponent >= 0.0
            && self.thickness_exponent >= 0.0
            && (0.0..0.1).contains(&self.equilibrium_mc)
            && self.rate_noise_sd >= 0.0
            && self.activation_temperature.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid kinetics parameters {self:?}")))
        }
    }
}

/// Drying constant `k` for the given conditions and slice thickness (mm).
pub fn rate_constant(kin: &KineticsParams, temperature_c: f64, air_velocity: f64, thickness_mm: f64) -> f64 {
    kin.pre_exponential
        * (-kin.activation_temperature / (temperature_c + KELVIN)).exp()
        * air_velocity.powf(kin.velocity_exponent)
        * thickness_mm.powf(-kin.thickness_exponent)
}

pub fn moisture_ratio(k: f64, minutes: f64, page_exponent: f64) -> f64 {
    (-k * minutes.powf(page_exponent)).exp()
}

fn wet_from_ratio(kin: &KineticsParams, mc0: f64, mr: f64) -> f64 {
    let x0 = mc0 / (1.0 - mc0);
    let xe = kin.equilibrium_mc / (1.0 - kin.equilibrium_mc);
    let x = xe + (x0 - xe) * mr;
    x / (1.0 + x)
}

fn thickness(sample: &SliceSample) -> Result<f64> {
    match sample.thickness {
        Some(t) if t > 0.0 => Ok(t),
        _ => Err(Error::domain(format!(
            "sample {} has no positive thickness",
            sample.sample_id
        ))),
    }
}

fn check_time(conditions: &DryingConditions) -> Result<()> {
    if conditions.drying_time > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "drying time {} must be positive",
            conditions.drying_time
        )))
    }
}

/// Final wet-basis MC with the rate multiplier fixed at 1.
pub fn final_mc_noiseless(conditions: &DryingConditions, sample: &SliceSample, kin: &KineticsParams) -> Result<f64> {
    check_time(conditions)?;
    let k = rate_constant(kin, conditions.temperature, conditions.air_velocity, thickness(sample)?);
    let mr = moisture_ratio(k, conditions.drying_time, kin.page_exponent);
    Ok(wet_from_ratio(kin, sample.initial_mc, mr))
}

/// Final wet-basis MC with a log-normal process multiplier on `k`.
pub fn simulate_final_mc<R: Rng + ?Sized>(
    conditions: &DryingConditions,
    sample: &SliceSample,
    kin: &KineticsParams,
    rng: &mut R,
) -> Result<f64> {
    check_time(conditions)?;
    let noise = if kin.rate_noise_sd > 0.0 {
        Normal::new(0.0, kin.rate_noise_sd)
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(rng)
            .exp()
    } else {
        1.0
    };
    let k = noise * rate_constant(kin, conditions.temperature, conditions.air_velocity, thickness(sample)?);
    let mr = moisture_ratio(k, conditions.drying_time, kin.page_exponent);
    Ok(wet_from_ratio(kin, sample.initial_mc, mr))
}

/// Bisection for the drying time at which the slices' mean noiseless MC
/// reaches `target_mc`.
pub fn solve_drying_time(
    temperature: f64,
    air_velocity: f64,
    slices: &[SliceSample],
    kin: &KineticsParams,
    target_mc: f64,
    bounds: (f64, f64),
) -> Result<f64> {
    let mean_mc = |t: f64| -> Result<f64> {
        let c = DryingConditions::new(temperature, air_velocity, t);
        let mut s = 0.0;
        for sample in slices {
            s += final_mc_noiseless(&c, sample, kin)?;
        }
        Ok(s / slices.len() as f64)
    };
    let (mut lo, mut hi) = bounds;
    let bracket = Error::Bracket {
        target: target_mc,
        lo,
        hi,
    };
    if slices.is_empty() || mean_mc(lo)? < target_mc || mean_mc(hi)? > target_mc {
        return Err(bracket);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_mc(mid)? > target_mc {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One calibration anchor: the drying time at which a median slice should
/// reach `mc` under the given condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerTarget {
    pub temperature: f64,
    pub air_velocity: f64,
    pub mc: f64,
    pub minutes: f64,
}

/// Least-squares fit of `(a, Ea/R, b)` to time targets for fixed `n`, `c`,
/// equilibrium MC, initial MC and median thickness.
///
/// Each target pins `k t^n = -ln MR(mc)`, which is linear in
/// `(ln a, Ea/R, b)` after taking logs.
pub fn calibrate_kinetics(
    targets: &[CornerTarget],
    template: &KineticsParams,
    initial_mc: f64,
    median_thickness: f64,
) -> Result<KineticsParams> {
    if targets.len() < 3 {
        return Err(Error::domain("need at least three calibration targets"));
    }
    let x0 = initial_mc / (1.0 - initial_mc);
    let xe = template.equilibrium_mc / (1.0 - template.equilibrium_mc);
    let a = DMatrix::from_fn(targets.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => -1.0 / (targets[i].temperature + KELVIN),
        _ => targets[i].air_velocity.ln(),
    });
    let mut rhs = Vec::with_capacity(targets.len());
    for t in targets {
        let x = t.mc / (1.0 - t.mc);
        let mr = (x - xe) / (x0 - xe);
        if !(mr > 0.0 && mr < 1.0) {
            return Err(Error::domain(format!("target MC {} is unreachable", t.mc)));
        }
        let k = -mr.ln() / t.minutes.powf(template.page_exponent);
        rhs.push(k.ln() + template.thickness_exponent * median_thickness.ln());
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&DVector::from_vec(rhs), 1e-12)
        .map_err(|e| Error::domain(e.to_string()))?;
    Ok(KineticsParams {
        pre_exponential: sol[0].exp(),
        activation_temperature: sol[1],
        velocity_exponent: sol[2],
        ..*template
    })
}
