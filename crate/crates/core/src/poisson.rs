//! Poisson sampling.
//!
//! Means below [`KNUTH_LIMIT`] use Knuth's multiplication method (exact
//! inversion of the product-of-uniforms process). Larger means use Hörmann's
//! PTRS transformed-rejection sampler, which is exact and needs ~1.2 uniform
//! pairs per draw.

use crate::error::{Error, Result};
use crate::rng::RngState;

pub const KNUTH_LIMIT: f64 = 30.0;

/// Draws one Poisson(`mean`) variate from `rng`.
pub fn poisson_sample(rng: &mut RngState, mean: f64) -> Result<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::InvalidArgument(format!("poisson mean must be finite and >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < KNUTH_LIMIT {
        Ok(knuth(rng, mean))
    } else {
        Ok(ptrs(rng, mean))
    }
}

fn knuth(rng: &mut RngState, mean: f64) -> u64 {
    let limit = (-mean).exp();
    let mut k = 0u64;
    let mut prod = rng.uniform01();
    while prod > limit {
        k += 1;
        prod *= rng.uniform01();
    }
    k
}

fn ptrs(rng: &mut RngState, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform01() - 0.5;
        let v = rng.uniform01();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// ln(k!), exact table below 10 and a Stirling series above.
pub fn ln_factorial(k: u64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.791_759_469_228_055,
        3.178_053_830_347_945_6,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
    ];
    if k < 10 {
        return TABLE[k as usize];
    }
    let x = k as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_is_zero() {
        let mut rng = RngState::new(3);
        for _ in 0..100 {
            assert_eq!(poisson_sample(&mut rng, 0.0).unwrap(), 0);
        }
    }

    #[test]
    fn rejects_bad_means() {
        let mut rng = RngState::new(3);
        assert!(poisson_sample(&mut rng, -1.0).is_err());
        assert!(poisson_sample(&mut rng, f64::NAN).is_err());
        assert!(poisson_sample(&mut rng, f64::INFINITY).is_err());
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        let mut acc = 0.0f64;
        for k in 1..200u64 {
            acc += (k as f64).ln();
            assert!((ln_factorial(k) - acc).abs() < 1e-10 * acc.max(1.0), "k={k}");
        }
    }

    #[test]
    fn unit_mean_zero_frequency() {
        let mut rng = RngState::new(11);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| poisson_sample(&mut rng, 1.0).unwrap() == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - (-1.0f64).exp()).abs() < 0.002, "freq {freq}");
    }

    #[test]
    fn large_mean_moments() {
        let mut rng = RngState::new(12);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| poisson_sample(&mut rng, 5000.0).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 5000.0).abs() < 3.0 * (5000.0f64 / n as f64).sqrt(), "mean {mean}");
        let ratio = var / mean;
        assert!((0.97..=1.03).contains(&ratio), "var/mean {ratio}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Vec<u64> = {
            let mut r = RngState::new(5);
            (0..50).map(|_| poisson_sample(&mut r, 77.0).unwrap()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngState::new(5);
            (0..50).map(|_| poisson_sample(&mut r, 77.0).unwrap()).collect()
        };
        assert_eq!(a, b);
    }
}
