//! Shot-noise-unit calibration and channel-parameter estimation from
//! paired sent/received symbols.
//!
//! Calibration records are processed through the identical frozen DSP
//! chain as the data, so the equalizer's arbitrary gain cancels: the shot
//! unit is the vacuum-minus-dark variance in equalized symbol units. In
//! calibrated units a heterodyne receiver sees t = √(ηT/2), hence
//! T̂ = 2t̂²/η and ξ̂ = (Var̂(z) − 1 − V_ele)/t̂² referred to the input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("calibration records give a non-positive shot unit ({0})")]
    ShotUnit(f64),
    #[error("need matching sent/received pairs, got {sent} and {received}")]
    Mismatch { sent: usize, received: usize },
    #[error("too few symbol pairs ({0})")]
    TooFew(usize),
    #[error("sent symbols carry no modulation")]
    NoModulation,
}

/// Raw-to-SNU conversion derived from vacuum and dark records that went
/// through the same frozen DSP chain as the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnuCalibration {
    /// Variance of one shot-noise unit in equalized symbol units.
    pub shot_unit: f64,
    pub vacuum_var: f64,
    pub dark_var: f64,
    /// Electronic noise per quadrature, SNU.
    pub v_ele_hat: f64,
}

fn quad_variance(symbols: &[(f64, f64)]) -> f64 {
    let n = symbols.len() as f64;
    let (mx, mp) = symbols
        .iter()
        .fold((0.0, 0.0), |(a, b), s| (a + s.0, b + s.1));
    let (mx, mp) = (mx / n, mp / n);
    symbols
        .iter()
        .map(|s| (s.0 - mx).powi(2) + (s.1 - mp).powi(2))
        .sum::<f64>()
        / (2.0 * n)
}

pub fn calibrate_snu(
    vacuum: &[(f64, f64)],
    dark: &[(f64, f64)],
) -> Result<SnuCalibration, EstimationError> {
    if vacuum.len() < 2 || dark.len() < 2 {
        return Err(EstimationError::TooFew(vacuum.len().min(dark.len())));
    }
    let vacuum_var = quad_variance(vacuum);
    let dark_var = quad_variance(dark);
    let shot_unit = vacuum_var - dark_var;
    if !(shot_unit > 0.0) {
        return Err(EstimationError::ShotUnit(shot_unit));
    }
    Ok(SnuCalibration {
        shot_unit,
        vacuum_var,
        dark_var,
        v_ele_hat: dark_var / shot_unit,
    })
}

impl SnuCalibration {
    /// Convert an equalized symbol to calibrated shot-noise units.
    pub fn to_snu(&self, s: (f64, f64)) -> (f64, f64) {
        let k = self.shot_unit.sqrt().recip();
        (s.0 * k, s.1 * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// Amplitude transfer t̂ = √(ηT/2) in SNU.
    pub t_hat: f64,
    pub transmittance_hat: f64,
    /// Excess noise referred to the channel input, SNU.
    pub excess_noise_hat: f64,
    pub var_z: f64,
    pub v_ele_hat: f64,
    pub n_pairs: usize,
    pub t_std_err: f64,
    pub excess_noise_std_err: f64,
}

/// Least-squares channel estimate from paired sent quadratures (variance
/// V_A) and received symbols in equalized units.
pub fn estimate_channel(
    sent: &[(f64, f64)],
    received: &[(f64, f64)],
    cal: &SnuCalibration,
    eta: f64,
) -> Result<EstimationResult, EstimationError> {
    if sent.len() != received.len() {
        return Err(EstimationError::Mismatch {
            sent: sent.len(),
            received: received.len(),
        });
    }
    if sent.len() < 10 {
        return Err(EstimationError::TooFew(sent.len()));
    }
    let k = cal.shot_unit.sqrt().recip();
    // both quadratures contribute one scalar pair each
    let n = 2 * sent.len();
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (s, r) in sent.iter().zip(received) {
        sxx += s.0 * s.0 + s.1 * s.1;
        sxy += s.0 * r.0 * k + s.1 * r.1 * k;
    }
    if !(sxx > 0.0) {
        return Err(EstimationError::NoModulation);
    }
    let t_hat = sxy / sxx;
    let mut sse = 0.0;
    for (s, r) in sent.iter().zip(received) {
        sse += (r.0 * k - t_hat * s.0).powi(2) + (r.1 * k - t_hat * s.1).powi(2);
    }
    let var_z = sse / (n - 1) as f64;
    let transmittance_hat = 2.0 * t_hat * t_hat / eta;
    let excess = (var_z - 1.0 - cal.v_ele_hat) / (t_hat * t_hat);

    let t_std_err = (var_z / sxx).sqrt();
    let var_z_std_err = var_z * (2.0 / (n - 1) as f64).sqrt();
    let excess_noise_std_err = ((var_z_std_err / (t_hat * t_hat)).powi(2)
        + (2.0 * (var_z - 1.0 - cal.v_ele_hat) / t_hat.powi(3) * t_std_err).powi(2))
    .sqrt();
    Ok(EstimationResult {
        t_hat,
        transmittance_hat,
        excess_noise_hat: excess,
        var_z,
        v_ele_hat: cal.v_ele_hat,
        n_pairs: sent.len(),
        t_std_err,
        excess_noise_std_err,
    })
}

/// Chunked excess-noise estimates for stability monitoring.
pub fn excess_noise_series(
    sent: &[(f64, f64)],
    received: &[(f64, f64)],
    cal: &SnuCalibration,
    eta: f64,
    n_chunks: usize,
) -> Result<Vec<f64>, EstimationError> {
    if n_chunks == 0 {
        return Ok(Vec::new());
    }
    let chunk = sent.len() / n_chunks;
    if chunk < 10 {
        return Err(EstimationError::TooFew(chunk));
    }
    (0..n_chunks)
        .map(|i| {
            let lo = i * chunk;
            let hi = lo + chunk;
            estimate_channel(&sent[lo..hi], &received[lo..hi], cal, eta)
                .map(|r| r.excess_noise_hat)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand_distr::{Distribution, Normal};

    fn synthetic(
        n: usize,
        v_a: f64,
        t: f64,
        var_z: f64,
        scale: f64,
        seed: u64,
    ) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let mut rng = crate::seed::rng(seed, "est-test", 0);
        let sx = Normal::new(0.0, v_a.sqrt()).unwrap();
        let nz = Normal::new(0.0, var_z.sqrt()).unwrap();
        let mut sent = Vec::with_capacity(n);
        let mut recv = Vec::with_capacity(n);
        for _ in 0..n {
            let s = (sx.sample(&mut rng), sx.sample(&mut rng));
            let r = (
                scale * (t * s.0 + nz.sample(&mut rng)),
                scale * (t * s.1 + nz.sample(&mut rng)),
            );
            sent.push(s);
            recv.push(r);
        }
        (sent, recv)
    }

    fn synthetic_cal(n: usize, v_ele: f64, scale: f64, seed: u64) -> SnuCalibration {
        let mut rng = crate::seed::rng(seed, "est-cal", 0);
        let shot = Normal::new(0.0, scale).unwrap();
        let dark = Normal::new(0.0, scale * v_ele.sqrt()).unwrap();
        let mut vac = Vec::with_capacity(n);
        let mut drk = Vec::with_capacity(n);
        for _ in 0..n {
            vac.push((
                shot.sample(&mut rng) + dark.sample(&mut rng),
                shot.sample(&mut rng) + dark.sample(&mut rng),
            ));
            drk.push((dark.sample(&mut rng), dark.sample(&mut rng)));
        }
        calibrate_snu(&vac, &drk).unwrap()
    }

    #[test]
    fn calibration_recovers_shot_unit_and_vele() {
        let cal = synthetic_cal(400_000, 0.15, 3.7, 1);
        assert_relative_eq!(cal.shot_unit, 3.7 * 3.7, max_relative = 0.02);
        assert_relative_eq!(cal.v_ele_hat, 0.15, max_relative = 0.05);
    }

    #[test]
    fn estimation_recovers_channel_parameters() {
        // 5 km link: T = 0.794, η = 0.56, ξ = 0.05, V_ele = 0.15,
        // all inside an arbitrary equalizer gain of 2.6
        let eta = 0.56;
        let t_lin = 10f64.powf(-0.1);
        let xi = 0.05;
        let v_ele = 0.15;
        let t = (eta * t_lin / 2.0).sqrt();
        let var_z = 1.0 + v_ele + (eta * t_lin / 2.0) * xi;
        let scale = 2.6;
        let (sent, recv) = synthetic(1_000_000, 6.0, t, var_z, scale, 2);
        let cal = synthetic_cal(1_000_000, v_ele, scale, 3);
        let r = estimate_channel(&sent, &recv, &cal, eta).unwrap();
        assert_relative_eq!(r.transmittance_hat, t_lin, max_relative = 0.01);
        // ~4σ including the calibration-record uncertainty
        assert_abs_diff_eq!(r.excess_noise_hat, xi, epsilon = 0.03);
        assert!(r.excess_noise_std_err < 0.02);
    }

    #[test]
    fn zero_excess_noise_unbiased() {
        // many independent trials: mean estimate of ξ = 0 within error
        let eta = 0.56;
        let t = (eta * 0.794 / 2.0f64).sqrt();
        let var_z = 1.15;
        let mut sum = 0.0;
        let trials = 30;
        for k in 0..trials {
            let (sent, recv) = synthetic(200_000, 5.0, t, var_z, 1.0, 100 + k);
            let cal = synthetic_cal(400_000, 0.15, 1.0, 200 + k);
            sum += estimate_channel(&sent, &recv, &cal, eta)
                .unwrap()
                .excess_noise_hat;
        }
        // ~4σ for the mean of 30 trials
        assert_abs_diff_eq!(sum / trials as f64, 0.0, epsilon = 0.01);
    }

    #[test]
    fn series_chunks_scatter_around_full_estimate() {
        let t = 0.3;
        let (sent, recv) = synthetic(200_000, 5.0, t, 1.2, 1.0, 9);
        let cal = synthetic_cal(200_000, 0.15, 1.0, 10);
        let full = estimate_channel(&sent, &recv, &cal, 0.56).unwrap();
        let series = excess_noise_series(&sent, &recv, &cal, 0.56, 10).unwrap();
        assert_eq!(series.len(), 10);
        let mean = series.iter().sum::<f64>() / 10.0;
        assert_abs_diff_eq!(mean, full.excess_noise_hat, epsilon = 0.02);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            calibrate_snu(&[(0.0, 0.0); 100], &[(0.0, 0.0); 100]),
            Err(EstimationError::ShotUnit(_))
        ));
        let cal = SnuCalibration {
            shot_unit: 1.0,
            vacuum_var: 1.15,
            dark_var: 0.15,
            v_ele_hat: 0.15,
        };
        assert!(matches!(
            estimate_channel(&[(1.0, 1.0); 20], &[(1.0, 1.0); 19], &cal, 0.56),
            Err(EstimationError::Mismatch { .. })
        ));
        assert!(matches!(
            estimate_channel(&[(1.0, 1.0); 5], &[(1.0, 1.0); 5], &cal, 0.56),
            Err(EstimationError::TooFew(5))
        ));
        assert!(matches!(
            estimate_channel(&[(0.0, 0.0); 20], &[(0.0, 0.0); 20], &cal, 0.56),
            Err(EstimationError::NoModulation)
        ));
    }
}
