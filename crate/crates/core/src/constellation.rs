//! Discrete-Gaussian-shaped QAM constellations.
//!
//! Points live on the odd-integer grid {±1, ±3, ..., ±(√M−1)} scaled by a
//! gain factor; probabilities follow the discrete Maxwell-Boltzmann
//! distribution P ∝ exp(−ν(x² + p²)).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstellationError {
    #[error("invalid order {0}: must be an even power of 4 (16, 64, 256, 1024, ...)")]
    InvalidOrder(usize),
    #[error("invalid shaping parameter nu = {0}: must be >= 0")]
    InvalidNu(f64),
    #[error("degenerate constellation: zero modulation variance")]
    Degenerate,
    #[error("invalid target variance {0}: must be > 0")]
    InvalidTarget(f64),
}

/// A shaped square QAM constellation. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    nu: f64,
    gain: f64,
    points: Vec<Complex64>,
    probabilities: Vec<f64>,
}

/// Serialized form: probabilities are always recomputed from (order, nu),
/// never stored.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConstellationRecord {
    pub order: usize,
    pub nu: f64,
    pub gain: f64,
}

fn is_even_power_of_four(m: usize) -> bool {
    // even power of 4: 4^2, 4^3, ... i.e. square M with sqrt(M) a power of 2
    if m < 16 {
        return false;
    }
    let r = (m as f64).sqrt().round() as usize;
    r * r == m && r.is_power_of_two()
}

/// Per-quadrature amplitude grid {±1, ±3, ..., ±(side−1)} for side = √M.
pub fn quadrature_levels(order: usize) -> Vec<i64> {
    let side = (order as f64).sqrt().round() as i64;
    (0..side).map(|i| 2 * i - side + 1).collect()
}

/// Build a Maxwell-Boltzmann-shaped constellation on the unscaled grid.
pub fn build_mb_constellation(order: usize, nu: f64) -> Result<Constellation, ConstellationError> {
    if !is_even_power_of_four(order) {
        return Err(ConstellationError::InvalidOrder(order));
    }
    if !(nu >= 0.0) {
        return Err(ConstellationError::InvalidNu(nu));
    }
    let levels = quadrature_levels(order);
    let mut points = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for &x in &levels {
        for &p in &levels {
            let r2 = (x * x + p * p) as f64;
            points.push(Complex64::new(x as f64, p as f64));
            weights.push((-nu * r2).exp());
        }
    }
    let norm: f64 = weights.iter().sum();
    let probabilities: Vec<f64> = weights.into_iter().map(|w| w / norm).collect();
    Ok(Constellation {
        order,
        nu,
        gain: 1.0,
        points,
        probabilities,
    })
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Complex amplitudes α_k = g·(x_k + i·p_k).
    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        let g = self.gain;
        self.points.iter().map(move |p| p * g)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Modulation variance V_A = 2·Σ P_k |α_k|², in shot-noise units.
    pub fn modulation_variance(&self) -> f64 {
        let g2 = self.gain * self.gain;
        2.0 * g2
            * self
                .points
                .iter()
                .zip(&self.probabilities)
                .map(|(a, p)| p * a.norm_sqr())
                .sum::<f64>()
    }

    /// Rescale the gain so the modulation variance hits `target_va`.
    /// Probabilities are unchanged: ν sets shape, gain sets scale.
    pub fn scale_to_variance(&self, target_va: f64) -> Result<Constellation, ConstellationError> {
        if !(target_va > 0.0) {
            return Err(ConstellationError::InvalidTarget(target_va));
        }
        let va = self.modulation_variance();
        if va <= 0.0 {
            return Err(ConstellationError::Degenerate);
        }
        let mut out = self.clone();
        out.gain = self.gain * (target_va / va).sqrt();
        Ok(out)
    }

    /// Per-quadrature distribution P₁ over the positive amplitude levels
    /// {1, 3, ..., √M−1}, from the product form of the MB distribution.
    /// Returns (levels, probabilities); levels are unscaled grid units.
    pub fn amplitude_distribution(&self) -> (Vec<u64>, Vec<f64>) {
        let side = (self.order as f64).sqrt().round() as u64;
        let levels: Vec<u64> = (0..side / 2).map(|i| 2 * i + 1).collect();
        // P₁(x) ∝ exp(−ν x²); amplitude folds the ± sign pair.
        let weights: Vec<f64> = levels
            .iter()
            .map(|&a| (-self.nu * (a * a) as f64).exp())
            .collect();
        let norm: f64 = weights.iter().sum();
        (levels, weights.into_iter().map(|w| w / norm).collect())
    }

    /// Nearest constellation point to a received (x, p) sample, in the
    /// point's own scaled coordinates.
    pub fn slice(&self, x: f64, p: f64) -> Complex64 {
        let side = (self.order as f64).sqrt().round() as i64;
        let clamp = |v: f64| -> f64 {
            let q = (v / self.gain).clamp(-(side - 1) as f64, (side - 1) as f64);
            let odd = 2.0 * ((q + (side - 1) as f64) / 2.0).round() - (side - 1) as f64;
            odd * self.gain
        };
        Complex64::new(clamp(x), clamp(p))
    }

    pub fn to_record(&self) -> ConstellationRecord {
        ConstellationRecord {
            order: self.order,
            nu: self.nu,
            gain: self.gain,
        }
    }

    pub fn from_record(rec: &ConstellationRecord) -> Result<Constellation, ConstellationError> {
        let mut c = build_mb_constellation(rec.order, rec.nu)?;
        c.gain = rec.gain;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_orders() {
        for m in [0, 4, 15, 32, 100, 128] {
            assert_eq!(
                build_mb_constellation(m, 0.1).unwrap_err(),
                ConstellationError::InvalidOrder(m)
            );
        }
        assert_eq!(
            build_mb_constellation(64, -0.1).unwrap_err(),
            ConstellationError::InvalidNu(-0.1)
        );
    }

    #[test]
    fn uniform_limit_at_nu_zero() {
        let c = build_mb_constellation(64, 0.0).unwrap();
        for &p in c.probabilities() {
            assert_abs_diff_eq!(p, 1.0 / 64.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn fig1a_probability_ratio() {
        // P(1,1)/P(7,7) = exp(0.07·(98−2)) for ν = 0.07
        let c = build_mb_constellation(64, 0.07).unwrap();
        let find = |x: f64, p: f64| {
            c.points
                .iter()
                .position(|a| a.re == x && a.im == p)
                .map(|i| c.probabilities[i])
                .unwrap()
        };
        let ratio = find(1.0, 1.0) / find(7.0, 7.0);
        assert_relative_eq!(ratio, (0.07f64 * 96.0).exp(), max_relative = 1e-12);
        assert!((ratio - 8.3e2).abs() / 8.3e2 < 0.01);
    }

    #[test]
    fn fig1b_center_point_probability() {
        // Oracle: brute-force normalization of exp(−ν r²) over the 256 grid.
        let nu = 0.035;
        let mut z = 0.0;
        for x in (-15i64..=15).step_by(2) {
            for p in (-15i64..=15).step_by(2) {
                z += (-nu * (x * x + p * p) as f64).exp();
            }
        }
        let expect = (-nu * 2.0).exp() / z;
        let c = build_mb_constellation(256, nu).unwrap();
        let i = c.points.iter().position(|a| a.re == 1.0 && a.im == 1.0).unwrap();
        assert_relative_eq!(c.probabilities[i], expect, max_relative = 1e-12);
    }

    #[test]
    fn uniform_64qam_variance_is_84() {
        // per-quadrature mean square of {±1,±3,±5,±7} is 21; V_A = 2·(21+21)
        let c = build_mb_constellation(64, 0.0).unwrap();
        assert_relative_eq!(c.modulation_variance(), 84.0, max_relative = 1e-12);
    }

    #[test]
    fn table1_scale_round_trip() {
        let c = build_mb_constellation(64, 0.079).unwrap();
        let s = c.scale_to_variance(4.457).unwrap();
        assert_relative_eq!(s.modulation_variance(), 4.457, max_relative = 1e-9);

        // gain = sqrt(target / unscaled V_A), checked by brute-force sum
        let c = build_mb_constellation(256, 0.023).unwrap();
        let mut va = 0.0;
        for (a, p) in c.points.iter().zip(&c.probabilities) {
            va += 2.0 * p * a.norm_sqr();
        }
        let s = c.scale_to_variance(14.35).unwrap();
        assert_relative_eq!(s.gain(), (14.35f64 / va).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn quadratic_scaling_law() {
        let c = build_mb_constellation(64, 0.05)
            .unwrap()
            .scale_to_variance(5.0)
            .unwrap();
        let d = c.scale_to_variance(20.0).unwrap();
        assert_relative_eq!(d.gain(), 2.0 * c.gain(), max_relative = 1e-12);
    }

    #[test]
    fn variance_decreases_with_nu_at_fixed_gain() {
        let mut last = f64::INFINITY;
        for i in 0..40 {
            let nu = 0.005 * i as f64;
            let va = build_mb_constellation(64, nu).unwrap().modulation_variance();
            assert!(va < last, "V_A not strictly decreasing at nu={nu}");
            last = va;
        }
    }

    #[test]
    fn serde_round_trip_recomputes_probabilities() {
        let c = build_mb_constellation(256, 0.035)
            .unwrap()
            .scale_to_variance(12.3)
            .unwrap();
        let json = serde_json::to_string(&c.to_record()).unwrap();
        let rec: ConstellationRecord = serde_json::from_str(&json).unwrap();
        let d = Constellation::from_record(&rec).unwrap();
        assert_eq!(c, d);
    }

    proptest! {
        #[test]
        fn invariants_hold(order in prop::sample::select(vec![16usize, 64, 256]),
                           nu in 0.0f64..0.2) {
            let c = build_mb_constellation(order, nu).unwrap();
            let total: f64 = c.probabilities().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert_eq!(c.points.len(), order);

            // 8-fold symmetry of the square grid
            let prob_at = |x: f64, p: f64| {
                c.points.iter().position(|a| a.re == x && a.im == p)
                    .map(|i| c.probabilities[i]).unwrap()
            };
            for (a, pr) in c.points.iter().zip(c.probabilities()) {
                for (x, p) in [(a.re, -a.im), (-a.re, a.im), (a.im, a.re), (-a.im, -a.re)] {
                    prop_assert!((prob_at(x, p) - pr).abs() < 1e-12);
                }
            }

            // product form P(x, p) = P₁(x)·P₁(p)
            let levels = quadrature_levels(order);
            let w1: Vec<f64> = levels.iter().map(|&x| (-nu * (x*x) as f64).exp()).collect();
            let z1: f64 = w1.iter().sum();
            for (a, pr) in c.points.iter().zip(c.probabilities()) {
                let ix = levels.iter().position(|&l| l as f64 == a.re).unwrap();
                let ip = levels.iter().position(|&l| l as f64 == a.im).unwrap();
                let product = (w1[ix] / z1) * (w1[ip] / z1);
                prop_assert!((pr - product).abs() < 1e-12);
            }

            // strictly decreasing in |α|² when ν > 0
            if nu > 0.0 {
                let mut by_r2: Vec<(f64, f64)> = c.points.iter()
                    .map(|a| a.norm_sqr())
                    .zip(c.probabilities().iter().copied())
                    .collect();
                by_r2.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                for w in by_r2.windows(2) {
                    if w[1].0 > w[0].0 {
                        prop_assert!(w[1].1 < w[0].1);
                    }
                }
            }
        }
    }
}
