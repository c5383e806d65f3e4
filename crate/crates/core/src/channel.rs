//! Fiber propagation and detection impairments.
//!
//! Unit bookkeeping: waveforms are kept in raw units in which shot noise
//! has variance 2 per quadrature. SNU calibration (vacuum minus dark,
//! normalized to 1) later divides variances by 2, which is exactly the
//! heterodyne 3 dB split: a signal quadrature x arrives with amplitude
//! gain √(ηT) raw, hence √(ηT/2) in calibrated shot-noise units.
//! Channel excess noise is injected white with raw variance T·ξ_A per
//! quadrature at the channel output (T·ξ_A/2 SNU).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::seed;
use crate::txchain::WaveformBuffer;

/// Raw-unit variance of one shot-noise quadrature (2 raw = 1 SNU).
pub const RAW_SHOT_VAR: f64 = 2.0;

/// Slow deterministic state-of-polarization rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolRotation {
    pub angle_rad: f64,
    pub rate_rad_per_s: f64,
}

impl Default for PolRotation {
    fn default() -> Self {
        PolRotation {
            angle_rad: 0.0,
            rate_rad_per_s: 1.0,
        }
    }
}

fn default_distance() -> f64 {
    5.0
}
fn default_atten() -> f64 {
    0.2
}
fn default_excess() -> f64 {
    0.037
}
fn default_linewidth() -> f64 {
    100.0
}
fn default_offset() -> f64 {
    750e6
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    #[serde(default = "default_distance")]
    pub distance_km: f64,
    #[serde(default = "default_atten")]
    pub atten_db_per_km: f64,
    /// ξ_A, referred to the channel input, SNU.
    #[serde(default = "default_excess")]
    pub excess_noise_snu: f64,
    #[serde(default = "default_linewidth")]
    pub tx_linewidth_hz: f64,
    #[serde(default = "default_linewidth")]
    pub lo_linewidth_hz: f64,
    /// Common LO frequency offset. Default 750 MHz, putting the quantum
    /// signal at a net 1.5 GHz IF and the pilot at 750 MHz.
    #[serde(default = "default_offset")]
    pub freq_offset_hz: f64,
    #[serde(default)]
    pub pol_rotation: PolRotation,
    /// Shot and excess noise injection; tests may switch it off to check
    /// the deterministic signal path.
    #[serde(default = "default_true")]
    pub noise: bool,
}

impl ChannelParams {
    pub fn ideal(distance_km: f64) -> ChannelParams {
        ChannelParams {
            distance_km,
            atten_db_per_km: 0.2,
            excess_noise_snu: 0.0,
            tx_linewidth_hz: 0.0,
            lo_linewidth_hz: 0.0,
            freq_offset_hz: 0.0,
            pol_rotation: PolRotation {
                angle_rad: 0.0,
                rate_rad_per_s: 0.0,
            },
            noise: true,
        }
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.atten_db_per_km * self.distance_km / 10.0)
    }
}

fn default_eta() -> f64 {
    0.56
}
fn default_vele() -> f64 {
    0.15
}
fn default_bpd() -> f64 {
    1.6e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Electronic noise per quadrature, SNU.
    #[serde(default = "default_vele")]
    pub v_ele_snu: f64,
    /// Single-pole 3 dB bandwidth; >= sample rate means no filtering.
    #[serde(default = "default_bpd")]
    pub bpd_bandwidth_hz: f64,
    #[serde(default = "default_true")]
    pub noise: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            eta: default_eta(),
            v_ele_snu: default_vele(),
            bpd_bandwidth_hz: default_bpd(),
            noise: true,
        }
    }
}

fn add_white_noise<R: Rng>(samples: &mut [Complex64], var_per_quadrature: f64, rng: &mut R) {
    if var_per_quadrature <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, var_per_quadrature.sqrt()).unwrap();
    for s in samples.iter_mut() {
        *s += Complex64::new(normal.sample(rng), normal.sample(rng));
    }
}

/// √T attenuation, common frequency offset, Wiener laser phase noise, a
/// slowly rotating Jones rotation, then shot plus excess noise.
pub fn apply_channel(w: &WaveformBuffer, ch: &ChannelParams, rng_seed: u64) -> WaveformBuffer {
    let t_lin = ch.transmittance();
    let amp = t_lin.sqrt();
    let fs = w.sample_rate;
    let mut rng = seed::rng(rng_seed, "channel", 0);

    // per-sample Wiener increment variance 2π(Δν_tx + Δν_lo)/f_s
    let phase_var = 2.0 * PI * (ch.tx_linewidth_hz + ch.lo_linewidth_hz) / fs;
    let phase_step = Normal::new(0.0, phase_var.max(0.0).sqrt()).unwrap();
    let dw = 2.0 * PI * ch.freq_offset_hz / fs;

    let mut pol_x = Vec::with_capacity(w.len());
    let mut pol_y = Vec::with_capacity(w.len());
    let mut phi = 0.0f64;
    for i in 0..w.len() {
        if phase_var > 0.0 {
            phi += phase_step.sample(&mut rng);
        }
        let rot = Complex64::from_polar(amp, dw * i as f64 + phi);
        let x = w.pol_x[i] * rot;
        let y = w.pol_y[i] * rot;
        let theta = ch.pol_rotation.angle_rad + ch.pol_rotation.rate_rad_per_s * i as f64 / fs;
        let (sin, cos) = theta.sin_cos();
        pol_x.push(cos * x - sin * y);
        pol_y.push(sin * x + cos * y);
    }
    if ch.noise {
        let excess_raw = t_lin * ch.excess_noise_snu;
        let mut noise_rng = seed::rng(rng_seed, "channel-noise", 0);
        add_white_noise(&mut pol_x, RAW_SHOT_VAR + excess_raw, &mut noise_rng);
        add_white_noise(&mut pol_y, RAW_SHOT_VAR + excess_raw, &mut noise_rng);
    }
    WaveformBuffer::new(fs, pol_x, pol_y)
}

/// Discrete single-pole low-pass used by the balanced detector model:
/// y[n] = (1−a)·x[n] + a·y[n−1] with a = exp(−2π·fc/fs).
fn single_pole(samples: &mut [Complex64], fc: f64, fs: f64) {
    let a = (-2.0 * PI * fc / fs).exp();
    let b = 1.0 - a;
    let mut state = Complex64::new(0.0, 0.0);
    for s in samples.iter_mut() {
        state = b * *s + a * state;
        *s = state;
    }
}

/// Frequency response of the detector low-pass on an n-point FFT grid.
/// Identity when the bandwidth reaches the sample rate.
pub fn bpd_response(det: &DetectorParams, sample_rate: f64, n: usize) -> Vec<Complex64> {
    if det.bpd_bandwidth_hz >= sample_rate {
        return vec![Complex64::new(1.0, 0.0); n];
    }
    let a = (-2.0 * PI * det.bpd_bandwidth_hz / sample_rate).exp();
    let b = 1.0 - a;
    (0..n)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / n as f64;
            b / (Complex64::new(1.0, 0.0) - a * Complex64::from_polar(1.0, -w))
        })
        .collect()
}

/// Polarization-diversity heterodyne receiver: √η field attenuation with
/// vacuum make-up noise, the single-pole bandwidth limit, then electronic
/// noise. Output is the digitized raw record of both branches.
pub fn detect(w: &WaveformBuffer, det: &DetectorParams, rng_seed: u64) -> WaveformBuffer {
    let amp = det.eta.sqrt();
    let mut pol_x: Vec<Complex64> = w.pol_x.iter().map(|s| s * amp).collect();
    let mut pol_y: Vec<Complex64> = w.pol_y.iter().map(|s| s * amp).collect();
    let mut rng = seed::rng(rng_seed, "detect", 0);
    if det.noise {
        let makeup = RAW_SHOT_VAR * (1.0 - det.eta);
        add_white_noise(&mut pol_x, makeup, &mut rng);
        add_white_noise(&mut pol_y, makeup, &mut rng);
    }
    if det.bpd_bandwidth_hz < w.sample_rate {
        single_pole(&mut pol_x, det.bpd_bandwidth_hz, w.sample_rate);
        single_pole(&mut pol_y, det.bpd_bandwidth_hz, w.sample_rate);
    }
    if det.noise {
        let ele = RAW_SHOT_VAR * det.v_ele_snu;
        add_white_noise(&mut pol_x, ele, &mut rng);
        add_white_noise(&mut pol_y, ele, &mut rng);
    }
    WaveformBuffer::new(w.sample_rate, pol_x, pol_y)
}

/// Shot-noise calibration record: LO on, signal off, run through the
/// detector. Used to pin the raw-to-SNU scale.
pub fn vacuum_record(
    n: usize,
    sample_rate: f64,
    det: &DetectorParams,
    rng_seed: u64,
) -> WaveformBuffer {
    let mut rng = seed::rng(rng_seed, "vacuum", 0);
    let mut pol_x = vec![Complex64::new(0.0, 0.0); n];
    let mut pol_y = vec![Complex64::new(0.0, 0.0); n];
    add_white_noise(&mut pol_x, RAW_SHOT_VAR, &mut rng);
    add_white_noise(&mut pol_y, RAW_SHOT_VAR, &mut rng);
    detect(
        &WaveformBuffer::new(sample_rate, pol_x, pol_y),
        det,
        seed::derive(rng_seed, "vacuum-detect", 0),
    )
}

/// Electronics-only record: LO off. White at the detector output.
pub fn dark_record(
    n: usize,
    sample_rate: f64,
    det: &DetectorParams,
    rng_seed: u64,
) -> WaveformBuffer {
    let mut rng = seed::rng(rng_seed, "dark", 0);
    let mut pol_x = vec![Complex64::new(0.0, 0.0); n];
    let mut pol_y = vec![Complex64::new(0.0, 0.0); n];
    let ele = RAW_SHOT_VAR * det.v_ele_snu;
    add_white_noise(&mut pol_x, ele, &mut rng);
    add_white_noise(&mut pol_y, ele, &mut rng);
    WaveformBuffer::new(sample_rate, pol_x, pol_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn tone(n: usize, amp: f64) -> WaveformBuffer {
        let pol_x = (0..n)
            .map(|i| Complex64::from_polar(amp, 0.01 * i as f64))
            .collect();
        WaveformBuffer::new(10e9, pol_x, vec![Complex64::new(0.0, 0.0); n])
    }

    fn quad_variance(samples: &[Complex64]) -> f64 {
        let n = samples.len() as f64;
        let mean: Complex64 = samples.iter().sum::<Complex64>() / n;
        samples
            .iter()
            .map(|s| {
                let d = s - mean;
                d.re * d.re + d.im * d.im
            })
            .sum::<f64>()
            / (2.0 * n)
    }

    #[test]
    fn fifty_km_attenuation() {
        let ch = ChannelParams {
            noise: false,
            ..ChannelParams::ideal(50.0)
        };
        assert_relative_eq!(ch.transmittance(), 0.1, max_relative = 1e-12);
        let w = tone(4096, 2.0);
        let out = apply_channel(&w, &ch, 1);
        assert_relative_eq!(
            out.mean_power_x() + out.mean_power_y(),
            0.1 * w.mean_power_x(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn identity_channel_adds_only_shot_noise() {
        let ch = ChannelParams::ideal(0.0);
        let w = tone(200_000, 1.5);
        let out = apply_channel(&w, &ch, 7);
        let noise: Vec<Complex64> = out
            .pol_x
            .iter()
            .zip(&w.pol_x)
            .map(|(a, b)| a - b)
            .collect();
        let var = quad_variance(&noise);
        // raw shot variance 2 per quadrature = 1 SNU after calibration
        assert_relative_eq!(var, RAW_SHOT_VAR, max_relative = 0.02);
    }

    #[test]
    fn excess_noise_magnitude() {
        let ch = ChannelParams {
            excess_noise_snu: 0.5,
            ..ChannelParams::ideal(50.0)
        };
        let w = tone(400_000, 0.0);
        let out = apply_channel(&w, &ch, 3);
        let expect = RAW_SHOT_VAR + 0.1 * 0.5;
        assert_relative_eq!(quad_variance(&out.pol_x), expect, max_relative = 0.02);
    }

    #[test]
    fn wiener_phase_increment_variance() {
        // 100 Hz each at 10 GSa/s: per-sample variance 2π·200/1e10
        let ch = ChannelParams {
            tx_linewidth_hz: 100.0,
            lo_linewidth_hz: 100.0,
            noise: false,
            ..ChannelParams::ideal(0.0)
        };
        let w = tone(2_000_000, 1.0);
        let out = apply_channel(&w, &ch, 11);
        let increments: Vec<f64> = (1..out.len())
            .map(|i| {
                let d = (out.pol_x[i] / w.pol_x[i]) * (out.pol_x[i - 1] / w.pol_x[i - 1]).conj();
                d.arg()
            })
            .collect();
        let var = increments.iter().map(|p| p * p).sum::<f64>() / increments.len() as f64;
        let expect = 2.0 * PI * 200.0 / 1e10;
        assert_abs_diff_eq!(var, expect, epsilon = 0.05 * expect);
    }

    #[test]
    fn determinism_bit_identical() {
        let ch = ChannelParams {
            excess_noise_snu: 0.03,
            tx_linewidth_hz: 100.0,
            lo_linewidth_hz: 100.0,
            freq_offset_hz: 750e6,
            ..ChannelParams::ideal(25.0)
        };
        let w = tone(10_000, 1.0);
        let a = apply_channel(&w, &ch, 42);
        let b = apply_channel(&w, &ch, 42);
        assert_eq!(a, b);
        let det = DetectorParams::default();
        assert_eq!(detect(&a, &det, 9), detect(&b, &det, 9));
        assert_ne!(apply_channel(&w, &ch, 43), a);
    }

    #[test]
    fn detect_identity_when_ideal() {
        let det = DetectorParams {
            eta: 1.0,
            v_ele_snu: 0.0,
            bpd_bandwidth_hz: f64::INFINITY,
            noise: true,
        };
        let w = tone(1000, 1.0);
        assert_eq!(detect(&w, &det, 1), w);
    }

    #[test]
    fn detect_scales_power_by_eta() {
        let det = DetectorParams {
            eta: 0.56,
            v_ele_snu: 0.0,
            bpd_bandwidth_hz: f64::INFINITY,
            noise: false,
        };
        let w = tone(1000, 2.0);
        let out = detect(&w, &det, 1);
        assert_relative_eq!(out.mean_power_x(), 0.56 * w.mean_power_x(), max_relative = 1e-12);
    }

    #[test]
    fn vacuum_through_detector_is_one_plus_vele() {
        // channel vacuum into the receiver: per-quadrature variance
        // 1 + V_ele SNU = 2(1 + V_ele) raw, independent of η
        let det = DetectorParams {
            eta: 0.56,
            v_ele_snu: 0.15,
            bpd_bandwidth_hz: f64::INFINITY,
            noise: true,
        };
        let rec = vacuum_record(400_000, 10e9, &det, 5);
        let expect = RAW_SHOT_VAR * (1.0 + 0.15);
        assert_relative_eq!(quad_variance(&rec.pol_x), expect, max_relative = 0.02);
        assert_relative_eq!(quad_variance(&rec.pol_y), expect, max_relative = 0.02);
    }

    #[test]
    fn dark_record_is_electronics_only() {
        let det = DetectorParams::default();
        let rec = dark_record(400_000, 10e9, &det, 5);
        assert_relative_eq!(
            quad_variance(&rec.pol_x),
            RAW_SHOT_VAR * 0.15,
            max_relative = 0.02
        );
    }

    #[test]
    fn energy_conservation_without_noise() {
        let ch = ChannelParams {
            noise: false,
            freq_offset_hz: 1.5e9,
            tx_linewidth_hz: 100.0,
            lo_linewidth_hz: 100.0,
            pol_rotation: PolRotation {
                angle_rad: 0.7,
                rate_rad_per_s: 1.0,
            },
            ..ChannelParams::ideal(25.0)
        };
        let det = DetectorParams {
            eta: 0.56,
            v_ele_snu: 0.0,
            bpd_bandwidth_hz: f64::INFINITY,
            noise: false,
        };
        let w = tone(5000, 1.3);
        let out = detect(&apply_channel(&w, &ch, 2), &det, 3);
        let in_energy: f64 = w.pol_x.iter().map(|s| s.norm_sqr()).sum();
        let out_energy: f64 = out
            .pol_x
            .iter()
            .chain(&out.pol_y)
            .map(|s| s.norm_sqr())
            .sum();
        let t = ch.transmittance();
        assert_relative_eq!(out_energy, 0.56 * t * in_energy, max_relative = 1e-9);
    }

    #[test]
    fn zero_transmittance_gives_pure_noise() {
        let ch = ChannelParams::ideal(10_000.0);
        let w = tone(1000, 1.0);
        let out = apply_channel(&w, &ch, 1);
        assert!(out.mean_power_x() < 10.0 * RAW_SHOT_VAR);
    }
}
