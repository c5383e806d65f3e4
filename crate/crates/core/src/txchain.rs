//! Transmit chain: frame layout, root-raised-cosine pulse shaping, the
//! frequency-shifted quantum signal on one polarization and the pilot tone
//! on the other.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TxError {
    #[error("invalid RRC parameter: {0}")]
    Parameter(String),
    #[error("signal band exceeds Nyquist: shift {shift_hz} Hz, bandwidth {bandwidth_hz} Hz at {sample_rate} Sa/s")]
    Bandwidth {
        shift_hz: f64,
        bandwidth_hz: f64,
        sample_rate: f64,
    },
    #[error("symbol count {got} does not match frame layout total {want}")]
    FrameSize { got: usize, want: usize },
}

/// Training/payload split of one frame. Training symbols are interleaved
/// at a fixed period so the equalizer sees them throughout the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayout {
    n_training: usize,
    n_payload: usize,
    period: usize,
}

impl FrameLayout {
    /// `p_ts` must be (approximately) 1/k for an integer period k, or 0 for
    /// a frame without training symbols.
    pub fn new(n_symbols: usize, p_ts: f64) -> Result<FrameLayout, TxError> {
        if !(0.0..1.0).contains(&p_ts) {
            return Err(TxError::Parameter(format!("training ratio {p_ts}")));
        }
        if p_ts == 0.0 {
            return Ok(FrameLayout {
                n_training: 0,
                n_payload: n_symbols,
                period: usize::MAX,
            });
        }
        let period = (1.0 / p_ts).round() as usize;
        if ((1.0 / period as f64) - p_ts).abs() > 1e-9 {
            return Err(TxError::Parameter(format!(
                "training ratio {p_ts} is not 1/k for integer k"
            )));
        }
        let n_training = n_symbols.div_ceil(period);
        Ok(FrameLayout {
            n_training,
            n_payload: n_symbols - n_training,
            period,
        })
    }

    pub fn n_training(&self) -> usize {
        self.n_training
    }

    pub fn n_payload(&self) -> usize {
        self.n_payload
    }

    pub fn total(&self) -> usize {
        self.n_training + self.n_payload
    }

    pub fn training_ratio(&self) -> f64 {
        self.n_training as f64 / self.total() as f64
    }

    pub fn is_training(&self, index: usize) -> bool {
        self.period != usize::MAX && index % self.period == 0
    }

    pub fn training_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.total()).filter(|&i| self.is_training(i))
    }

    pub fn payload_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.total()).filter(|&i| !self.is_training(i))
    }

    /// Interleave training and payload symbols into one frame sequence.
    pub fn assemble(
        &self,
        training: &[Complex64],
        payload: &[Complex64],
    ) -> Result<Vec<Complex64>, TxError> {
        if training.len() != self.n_training || payload.len() != self.n_payload {
            return Err(TxError::FrameSize {
                got: training.len() + payload.len(),
                want: self.total(),
            });
        }
        let mut t = training.iter();
        let mut p = payload.iter();
        Ok((0..self.total())
            .map(|i| {
                if self.is_training(i) {
                    *t.next().unwrap()
                } else {
                    *p.next().unwrap()
                }
            })
            .collect())
    }
}

/// Dual-polarization complex baseband-equivalent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformBuffer {
    pub sample_rate: f64,
    pub pol_x: Vec<Complex64>,
    pub pol_y: Vec<Complex64>,
}

impl WaveformBuffer {
    pub fn new(sample_rate: f64, pol_x: Vec<Complex64>, pol_y: Vec<Complex64>) -> WaveformBuffer {
        assert!(sample_rate > 0.0, "sample rate must be positive");
        assert_eq!(pol_x.len(), pol_y.len(), "polarizations must match");
        WaveformBuffer {
            sample_rate,
            pol_x,
            pol_y,
        }
    }

    pub fn len(&self) -> usize {
        self.pol_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pol_x.is_empty()
    }

    pub fn mean_power_x(&self) -> f64 {
        self.pol_x.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    pub fn mean_power_y(&self) -> f64 {
        self.pol_y.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// Root-raised-cosine impulse response, unit-energy normalized.
/// `span_symbols` is the two-sided span; taps = span·sps + 1.
pub fn rrc_taps(rolloff: f64, span_symbols: usize, sps: usize) -> Result<Vec<f64>, TxError> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(TxError::Parameter(format!("rolloff {rolloff}")));
    }
    if span_symbols < 4 {
        return Err(TxError::Parameter(format!("span {span_symbols}")));
    }
    if sps < 2 {
        return Err(TxError::Parameter(format!("sps {sps}")));
    }
    let b = rolloff;
    let n = span_symbols * sps;
    let mut taps = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (k as f64 - n as f64 / 2.0) / sps as f64; // symbol periods
        let h = if t.abs() < 1e-12 {
            1.0 - b + 4.0 * b / PI
        } else if (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
            (b / 2f64.sqrt())
                * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                    + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
        } else {
            ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
        };
        taps.push(h);
    }
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = energy.sqrt().recip();
    for h in &mut taps {
        *h *= scale;
    }
    Ok(taps)
}

/// Convolve a complex signal with a real FIR; output has the full length
/// `signal.len() + taps.len() - 1`.
pub(crate) fn convolve_real(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); signal.len() + taps.len() - 1];
    for (k, s) in signal.iter().enumerate() {
        if s.norm_sqr() == 0.0 {
            continue;
        }
        for (j, &h) in taps.iter().enumerate() {
            out[k + j] += s * h;
        }
    }
    out
}

/// Upsample, RRC-shape, and frequency-shift the symbol sequence onto pol_x.
/// pol_y is left empty for the pilot.
pub fn modulate(
    symbols: &[Complex64],
    layout: &FrameLayout,
    taps: &[f64],
    sps: usize,
    shift_hz: f64,
    sample_rate: f64,
) -> Result<WaveformBuffer, TxError> {
    if symbols.len() != layout.total() {
        return Err(TxError::FrameSize {
            got: symbols.len(),
            want: layout.total(),
        });
    }
    let symbol_rate = sample_rate / sps as f64;
    let bandwidth_edge = shift_hz.abs() + 0.5 * (1.0 + 1.0) * symbol_rate; // conservative: rolloff <= 1
    if bandwidth_edge >= sample_rate / 2.0 {
        return Err(TxError::Bandwidth {
            shift_hz,
            bandwidth_hz: symbol_rate,
            sample_rate,
        });
    }
    let mut upsampled = vec![Complex64::new(0.0, 0.0); symbols.len() * sps];
    for (k, s) in symbols.iter().enumerate() {
        upsampled[k * sps] = *s;
    }
    let mut pol_x = convolve_real(&upsampled, taps);
    if shift_hz != 0.0 {
        let w = 2.0 * PI * shift_hz / sample_rate;
        for (i, s) in pol_x.iter_mut().enumerate() {
            *s *= Complex64::from_polar(1.0, w * i as f64);
        }
    }
    let n = pol_x.len();
    Ok(WaveformBuffer::new(
        sample_rate,
        pol_x,
        vec![Complex64::new(0.0, 0.0); n],
    ))
}

/// Put a continuous tone on pol_y with mean power `pilot_power_ratio_db`
/// relative to the pol_x signal power.
pub fn add_pilot(
    w: &WaveformBuffer,
    pilot_power_ratio_db: f64,
    pilot_freq_hz: f64,
) -> Result<WaveformBuffer, TxError> {
    if pilot_freq_hz.abs() >= w.sample_rate / 2.0 {
        return Err(TxError::Bandwidth {
            shift_hz: pilot_freq_hz,
            bandwidth_hz: 0.0,
            sample_rate: w.sample_rate,
        });
    }
    let power = w.mean_power_x() * 10f64.powf(pilot_power_ratio_db / 10.0);
    let amp = power.sqrt();
    let wpil = 2.0 * PI * pilot_freq_hz / w.sample_rate;
    let pol_y = (0..w.len())
        .map(|i| Complex64::from_polar(amp, wpil * i as f64))
        .collect();
    Ok(WaveformBuffer::new(
        w.sample_rate,
        w.pol_x.clone(),
        pol_y,
    ))
}
