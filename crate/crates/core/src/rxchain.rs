//! Offline receiver DSP: bandpass filtering and frequency shift, pilot-aided
//! carrier recovery, matched filtering with training-based timing sync, and
//! a real-valued 4x2 MIMO LMS equalizer.
//!
//! A [`FrozenDsp`] snapshot of the converged chain can be replayed on
//! calibration records (vacuum, dark) so shot-noise units are defined in
//! the same symbol domain as the recovered data.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::channel::{bpd_response, DetectorParams};
use crate::txchain::{FrameLayout, WaveformBuffer};

#[derive(Debug, Error, PartialEq)]
pub enum RxError {
    #[error("invalid DSP parameter: {0}")]
    Parameter(String),
    #[error("filter band outside Nyquist: center {center} Hz width {width} Hz at {sample_rate} Sa/s")]
    Band {
        center: f64,
        width: f64,
        sample_rate: f64,
    },
    #[error("pilot power below threshold (power ratio {0:.2})")]
    PilotLost(f64),
    #[error("timing sync failed (best correlation {0:.3})")]
    SyncLost(f64),
    #[error("equalizer diverged; reduce the step size")]
    StepSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadMode {
    /// Taps trained on training symbols, then frozen over the payload.
    Frozen,
    /// Decision-directed updates over the payload after training.
    DecisionDirected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspConfig {
    pub rolloff: f64,
    pub span_symbols: usize,
    pub sps: usize,
    /// Nominal quantum-signal IF (tx shift plus planned LO offset).
    pub quantum_if_hz: f64,
    /// Nominal pilot IF (planned LO offset).
    pub pilot_if_hz: f64,
    pub quantum_bw_hz: f64,
    pub pilot_bw_hz: f64,
    /// Moving-average window on the pilot phasor, in samples.
    pub pilot_smooth: usize,
    /// Divide the filtered bands by the known detector response.
    pub compensate_bpd: bool,
    pub eq_taps: usize,
    pub eq_step: f64,
    pub train_passes: usize,
    pub payload_mode: PayloadMode,
    /// Timing search half-window around the nominal filter delay, samples.
    pub sync_window: usize,
    pub sync_threshold: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            rolloff: 0.3,
            span_symbols: 16,
            sps: 10,
            quantum_if_hz: 1.5e9,
            pilot_if_hz: 750e6,
            quantum_bw_hz: 1.3e9,
            pilot_bw_hz: 10e6,
            pilot_smooth: 16,
            compensate_bpd: true,
            eq_taps: 5,
            eq_step: 1e-3,
            train_passes: 3,
            payload_mode: PayloadMode::Frozen,
            sync_window: 30,
            sync_threshold: 0.05,
        }
    }
}

/// Output of the DSP chain for one frame.
#[derive(Debug, Clone)]
pub struct RecoveredBlock {
    /// (x, p) pairs in raw receiver units, one per frame symbol.
    pub symbols: Vec<(f64, f64)>,
    pub training_mask: Vec<bool>,
    pub residual_freq_hz: f64,
    pub equalizer_taps: EqTaps,
    pub timing_offset: usize,
}

// ---------------------------------------------------------------------------
// FFT helpers

fn fft_size(n: usize) -> usize {
    n.next_power_of_two()
}

fn forward(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

fn inverse(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_inverse(buf.len()).process(buf);
    let scale = 1.0 / buf.len() as f64;
    for s in buf.iter_mut() {
        *s *= scale;
    }
}

fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    if k < n / 2 {
        k as f64 * fs / n as f64
    } else {
        (k as f64 - n as f64) * fs / n as f64
    }
}

/// Ideal frequency-domain filter of `width` around `center`, optionally
/// divided by the known detector response over the pass band.
fn brick_filter(
    samples: &[Complex64],
    fs: f64,
    center: f64,
    width: f64,
    comp: Option<&DetectorParams>,
) -> Vec<Complex64> {
    let n0 = samples.len();
    let n = fft_size(n0);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..n0].copy_from_slice(samples);
    forward(&mut buf);
    let response = comp.map(|det| bpd_response(det, fs, n));
    for (k, s) in buf.iter_mut().enumerate() {
        let mut d = bin_freq(k, n, fs) - center;
        // wrap to the principal interval
        if d > fs / 2.0 {
            d -= fs;
        } else if d < -fs / 2.0 {
            d += fs;
        }
        if d.abs() <= width / 2.0 {
            if let Some(h) = &response {
                *s /= h[k];
            }
        } else {
            *s = Complex64::new(0.0, 0.0);
        }
    }
    inverse(&mut buf);
    buf.truncate(n0);
    buf
}

/// Full-length convolution with real taps via the FFT.
fn fft_convolve(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let out_len = signal.len() + taps.len() - 1;
    let n = fft_size(out_len);
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    a[..signal.len()].copy_from_slice(signal);
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    for (i, &t) in taps.iter().enumerate() {
        b[i] = Complex64::new(t, 0.0);
    }
    forward(&mut a);
    forward(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inverse(&mut a);
    a.truncate(out_len);
    a
}

fn shift_frequency(samples: &mut [Complex64], freq_hz: f64, fs: f64) {
    if freq_hz == 0.0 {
        return;
    }
    let w = 2.0 * PI * freq_hz / fs;
    for (i, s) in samples.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, w * i as f64);
    }
}

// ---------------------------------------------------------------------------
// DSP step 1: bandpass filtering and frequency shift

fn check_band(center: f64, width: f64, fs: f64) -> Result<(), RxError> {
    if center.abs() + width / 2.0 >= fs / 2.0 {
        return Err(RxError::Band {
            center,
            width,
            sample_rate: fs,
        });
    }
    Ok(())
}

/// Split the record into the quantum branch (1.3 GHz band at the quantum
/// IF) and the pilot branch (10 MHz band at the pilot IF, then shifted up
/// to the quantum band reference).
pub fn bandpass_and_shift(
    w: &WaveformBuffer,
    cfg: &DspConfig,
    det: &DetectorParams,
) -> Result<(WaveformBuffer, WaveformBuffer), RxError> {
    let fs = w.sample_rate;
    check_band(cfg.quantum_if_hz, cfg.quantum_bw_hz, fs)?;
    check_band(cfg.pilot_if_hz, cfg.pilot_bw_hz, fs)?;
    let comp = cfg.compensate_bpd.then_some(det);
    let quantum = WaveformBuffer::new(
        fs,
        brick_filter(&w.pol_x, fs, cfg.quantum_if_hz, cfg.quantum_bw_hz, comp),
        brick_filter(&w.pol_y, fs, cfg.quantum_if_hz, cfg.quantum_bw_hz, comp),
    );
    let mut px = brick_filter(&w.pol_x, fs, cfg.pilot_if_hz, cfg.pilot_bw_hz, comp);
    let mut py = brick_filter(&w.pol_y, fs, cfg.pilot_if_hz, cfg.pilot_bw_hz, comp);
    let shift = cfg.quantum_if_hz - cfg.pilot_if_hz;
    shift_frequency(&mut px, shift, fs);
    shift_frequency(&mut py, shift, fs);
    Ok((quantum, WaveformBuffer::new(fs, px, py)))
}

// ---------------------------------------------------------------------------
// DSP step 2: carrier recovery

fn moving_average(samples: &[Complex64], window: usize) -> Vec<Complex64> {
    if window <= 1 {
        return samples.to_vec();
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        acc += s;
        if i >= window {
            acc -= samples[i - window];
        }
        out.push(acc / window.min(i + 1) as f64);
    }
    out
}

pub struct CarrierRecovery {
    pub corrected: WaveformBuffer,
    /// Unit pilot phasor actually removed; kept for frozen replay.
    pub phasor: Vec<Complex64>,
    pub residual_freq_hz: f64,
}

/// Remove carrier offset and laser phase noise from the quantum branch
/// using the conjugate of the unit-magnitude pilot phasor. The residual
/// frequency is the slope of the unwrapped pilot phase.
pub fn carrier_recovery(
    quantum: &WaveformBuffer,
    pilot: &WaveformBuffer,
    cfg: &DspConfig,
) -> Result<CarrierRecovery, RxError> {
    let px = pilot.mean_power_x();
    let py = pilot.mean_power_y();
    let branch = if px >= py { &pilot.pol_x } else { &pilot.pol_y };

    // derotate by the nominal IF before smoothing so the moving average
    // only sees the slow residual offset and phase noise
    let fs = quantum.sample_rate;
    let wq = 2.0 * PI * cfg.quantum_if_hz / fs;
    let base: Vec<Complex64> = branch
        .iter()
        .enumerate()
        .map(|(i, s)| s * Complex64::from_polar(1.0, -wq * i as f64))
        .collect();
    let smoothed = moving_average(&base, cfg.pilot_smooth);

    let mut slow = Vec::with_capacity(smoothed.len());
    let mut last = Complex64::new(1.0, 0.0);
    for s in &smoothed {
        let m = s.norm();
        if m > 1e-12 {
            last = s / m;
        }
        slow.push(last);
    }
    // residual offset from the mean per-sample phase increment
    let mut acc = Complex64::new(0.0, 0.0);
    for w2 in slow.windows(2) {
        acc += w2[1] * w2[0].conj();
    }
    let residual_freq_hz = if slow.len() > 1 {
        acc.arg() * fs / (2.0 * PI)
    } else {
        0.0
    };
    let phasor: Vec<Complex64> = slow
        .iter()
        .enumerate()
        .map(|(i, v)| v * Complex64::from_polar(1.0, wq * i as f64))
        .collect();

    // pilot quality: coherent amplitude vs in-band noise
    let total_power = branch.iter().map(|s| s.norm_sqr()).sum::<f64>() / branch.len() as f64;
    let coherent = branch
        .iter()
        .zip(&phasor)
        .map(|(s, u)| (s * u.conj()).re)
        .sum::<f64>()
        / branch.len() as f64;
    let noise = (total_power - coherent * coherent).max(0.0);
    if !(coherent * coherent > 10.0 * noise) {
        return Err(RxError::PilotLost(if noise > 0.0 {
            coherent * coherent / noise
        } else {
            0.0
        }));
    }

    let corr = |samples: &[Complex64]| -> Vec<Complex64> {
        samples
            .iter()
            .zip(&phasor)
            .map(|(s, u)| s * u.conj())
            .collect()
    };
    Ok(CarrierRecovery {
        corrected: WaveformBuffer::new(
            quantum.sample_rate,
            corr(&quantum.pol_x),
            corr(&quantum.pol_y),
        ),
        phasor,
        residual_freq_hz,
    })
}

// ---------------------------------------------------------------------------
// DSP step 3a: matched filtering and timing

pub struct SymbolStreams {
    pub pol_x: Vec<Complex64>,
    pub pol_y: Vec<Complex64>,
    pub timing_offset: usize,
}

/// Matched-filter both polarizations and decimate at the integer timing
/// phase maximizing correlation with the known training sequence.
pub fn matched_filter_downsample(
    corrected: &WaveformBuffer,
    taps: &[f64],
    layout: &FrameLayout,
    training: &[Complex64],
    cfg: &DspConfig,
) -> Result<SymbolStreams, RxError> {
    let mx = fft_convolve(&corrected.pol_x, taps);
    let my = fft_convolve(&corrected.pol_y, taps);
    let nominal = taps.len() - 1;
    let lo = nominal.saturating_sub(cfg.sync_window);
    let hi = nominal + cfg.sync_window;

    let tr_idx: Vec<usize> = layout.training_indices().take(2000).collect();
    let t_energy: f64 = training
        .iter()
        .take(tr_idx.len())
        .map(|s| s.norm_sqr())
        .sum();

    let mut best = (0usize, -1.0f64);
    for d in lo..=hi {
        let mut cx = Complex64::new(0.0, 0.0);
        let mut cy = Complex64::new(0.0, 0.0);
        let mut r_energy = 0.0;
        for (j, &i) in tr_idx.iter().enumerate() {
            let k = d + i * cfg.sps;
            if k >= mx.len() {
                break;
            }
            let t = training[j].conj();
            cx += mx[k] * t;
            cy += my[k] * t;
            r_energy += mx[k].norm_sqr() + my[k].norm_sqr();
        }
        let norm = (t_energy * r_energy).sqrt();
        let c = if norm > 0.0 {
            (cx.norm_sqr() + cy.norm_sqr()).sqrt() / norm
        } else {
            0.0
        };
        if c > best.1 {
            best = (d, c);
        }
    }
    if best.1 < cfg.sync_threshold {
        return Err(RxError::SyncLost(best.1));
    }
    let d = best.0;
    let take = |m: &[Complex64]| -> Vec<Complex64> {
        (0..layout.total())
            .map(|i| {
                let k = d + i * cfg.sps;
                m.get(k).copied().unwrap_or_default()
            })
            .collect()
    };
    Ok(SymbolStreams {
        pol_x: take(&mx),
        pol_y: take(&my),
        timing_offset: d,
    })
}

// ---------------------------------------------------------------------------
// DSP step 3b: real-valued MIMO LMS equalizer

/// Real-valued 4-input/2-output FIR bank: w[out][in][tap].
#[derive(Debug, Clone, PartialEq)]
pub struct EqTaps {
    pub n_taps: usize,
    w: Vec<f64>, // 2 * 4 * n_taps
}

impl EqTaps {
    fn center_init(n_taps: usize) -> EqTaps {
        let mut w = vec![0.0; 2 * 4 * n_taps];
        let c = n_taps / 2;
        // out x <- input xX, out p <- input pX
        w[c] = 1.0;
        w[4 * n_taps + n_taps + c] = 1.0;
        EqTaps { n_taps, w }
    }

    #[inline]
    fn weights(&self, out: usize, input: usize) -> &[f64] {
        let base = (out * 4 + input) * self.n_taps;
        &self.w[base..base + self.n_taps]
    }

    #[inline]
    fn weights_mut(&mut self, out: usize, input: usize) -> &mut [f64] {
        let base = (out * 4 + input) * self.n_taps;
        &mut self.w[base..base + self.n_taps]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

struct EqInput {
    streams: [Vec<f64>; 4],
    n: usize,
}

impl EqInput {
    fn new(streams: &SymbolStreams) -> EqInput {
        let n = streams.pol_x.len();
        EqInput {
            streams: [
                streams.pol_x.iter().map(|s| s.re).collect(),
                streams.pol_x.iter().map(|s| s.im).collect(),
                streams.pol_y.iter().map(|s| s.re).collect(),
                streams.pol_y.iter().map(|s| s.im).collect(),
            ],
            n,
        }
    }

    /// Equalizer output at symbol index i (taps centered on i).
    fn output(&self, taps: &EqTaps, i: usize) -> (f64, f64) {
        let half = taps.n_taps / 2;
        let mut out = [0.0f64; 2];
        for (o, acc) in out.iter_mut().enumerate() {
            for input in 0..4 {
                let w = taps.weights(o, input);
                let s = &self.streams[input];
                for (j, wj) in w.iter().enumerate() {
                    let k = i + j;
                    if k >= half && k - half < self.n {
                        *acc += wj * s[k - half];
                    }
                }
            }
        }
        (out[0], out[1])
    }

    fn update(&self, taps: &mut EqTaps, i: usize, err: (f64, f64), step: f64) {
        let half = taps.n_taps / 2;
        for (o, e) in [err.0, err.1].into_iter().enumerate() {
            for input in 0..4 {
                let w = taps.weights_mut(o, input);
                let s = &self.streams[input];
                for (j, wj) in w.iter_mut().enumerate() {
                    let k = i + j;
                    if k >= half && k - half < self.n {
                        *wj += step * e * s[k - half];
                    }
                }
            }
        }
    }
}

/// Train the MIMO equalizer on the training symbols with a gear-shifted
/// LMS schedule, average the taps over a final pass, then produce the
/// frozen (or decision-directed) output for the whole frame.
pub fn lms_equalize(
    streams: &SymbolStreams,
    layout: &FrameLayout,
    training: &[Complex64],
    cfg: &DspConfig,
    slicer: Option<&dyn Fn(f64, f64) -> (f64, f64)>,
) -> Result<EqTaps, RxError> {
    if cfg.eq_taps % 2 == 0 {
        return Err(RxError::Parameter(format!(
            "equalizer taps {} must be odd",
            cfg.eq_taps
        )));
    }
    if !(cfg.eq_step > 0.0) {
        return Err(RxError::Parameter("step size must be positive".into()));
    }
    let input = EqInput::new(streams);
    let mut taps = EqTaps::center_init(cfg.eq_taps);
    let tr_idx: Vec<usize> = layout.training_indices().collect();

    let mut first_block_err: Option<f64> = None;
    for pass in 0..cfg.train_passes.max(1) {
        let step = cfg.eq_step / 4f64.powi(pass as i32);
        let mut block_err = 0.0;
        let mut block_n = 0usize;
        for (j, &i) in tr_idx.iter().enumerate() {
            let (x, p) = input.output(&taps, i);
            let e = (training[j].re - x, training[j].im - p);
            input.update(&mut taps, i, e, step);
            block_err += e.0 * e.0 + e.1 * e.1;
            block_n += 1;
            if block_n == 1000 || j + 1 == tr_idx.len() {
                let mse = block_err / block_n as f64;
                if !mse.is_finite() {
                    return Err(RxError::StepSize);
                }
                let first = *first_block_err.get_or_insert(mse);
                if mse > 100.0 * first.max(1e-30) {
                    return Err(RxError::StepSize);
                }
                block_err = 0.0;
                block_n = 0;
            }
        }
    }

    // final low-step pass with tap averaging
    let step = cfg.eq_step / 4f64.powi(cfg.train_passes.max(1) as i32);
    let mut avg = taps.w.clone();
    for (j, &i) in tr_idx.iter().enumerate() {
        let (x, p) = input.output(&taps, i);
        let e = (training[j].re - x, training[j].im - p);
        input.update(&mut taps, i, e, step);
        for (a, w) in avg.iter_mut().zip(&taps.w) {
            *a += (*w - *a) / (j + 2) as f64;
        }
    }
    taps.w = avg;

    // exact block Wiener refit on the training set: removes the residual
    // LMS misadjustment, which otherwise shows up as apparent excess noise
    // on the payload; the LMS passes above keep the divergence check and
    // warm-start the decision-directed mode
    let n_coef = 4 * cfg.eq_taps;
    let half = cfg.eq_taps / 2;
    let mut ata = nalgebra::DMatrix::<f64>::zeros(n_coef, n_coef);
    let mut atb = nalgebra::DMatrix::<f64>::zeros(n_coef, 2);
    let mut row = vec![0.0f64; n_coef];
    for (j, &i) in tr_idx.iter().enumerate() {
        for (ch, s) in input.streams.iter().enumerate() {
            for t in 0..cfg.eq_taps {
                let k = i + t;
                row[ch * cfg.eq_taps + t] = if k >= half && k - half < input.n {
                    s[k - half]
                } else {
                    0.0
                };
            }
        }
        for a in 0..n_coef {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..n_coef {
                ata[(a, b)] += ra * row[b];
            }
            atb[(a, 0)] += ra * training[j].re;
            atb[(a, 1)] += ra * training[j].im;
        }
    }
    for a in 0..n_coef {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
    }
    let ridge = 1e-9 * ata.trace().max(1e-30) / n_coef as f64;
    for a in 0..n_coef {
        ata[(a, a)] += ridge;
    }
    if let Some(chol) = ata.cholesky() {
        let sol = chol.solve(&atb);
        for o in 0..2 {
            for ch in 0..4 {
                let w = taps.weights_mut(o, ch);
                for t in 0..cfg.eq_taps {
                    w[t] = sol[(ch * cfg.eq_taps + t, o)];
                }
            }
        }
    }

    if cfg.payload_mode == PayloadMode::DecisionDirected {
        if let Some(slice) = slicer {
            let mut t = 0usize;
            for i in 0..layout.total() {
                let (x, p) = input.output(&taps, i);
                let d = if layout.is_training(i) {
                    let s = training[t];
                    t += 1;
                    (s.re, s.im)
                } else {
                    slice(x, p)
                };
                input.update(&mut taps, i, (d.0 - x, d.1 - p), step);
            }
        }
    }
    Ok(taps)
}

fn equalize_all(streams: &SymbolStreams, taps: &EqTaps) -> Vec<(f64, f64)> {
    let input = EqInput::new(streams);
    (0..input.n).map(|i| input.output(taps, i)).collect()
}

// ---------------------------------------------------------------------------
// Whole-chain driver and frozen replay

/// Converged state of the chain, replayable on calibration records.
pub struct FrozenDsp {
    pub cfg: DspConfig,
    pub det: DetectorParams,
    pub phasor: Vec<Complex64>,
    pub rrc: Vec<f64>,
    pub timing_offset: usize,
    pub taps: EqTaps,
    pub n_symbols: usize,
}

impl FrozenDsp {
    /// Run a record through the identical frozen chain: same filters, same
    /// carrier phasor, same timing, same equalizer taps.
    pub fn process(&self, record: &WaveformBuffer) -> Result<Vec<(f64, f64)>, RxError> {
        let fs = record.sample_rate;
        let comp = self.cfg.compensate_bpd.then_some(&self.det);
        let qx = brick_filter(
            &record.pol_x,
            fs,
            self.cfg.quantum_if_hz,
            self.cfg.quantum_bw_hz,
            comp,
        );
        let qy = brick_filter(
            &record.pol_y,
            fs,
            self.cfg.quantum_if_hz,
            self.cfg.quantum_bw_hz,
            comp,
        );
        let corr = |samples: Vec<Complex64>| -> Vec<Complex64> {
            samples
                .iter()
                .zip(&self.phasor)
                .map(|(s, u)| s * u.conj())
                .collect()
        };
        let mx = fft_convolve(&corr(qx), &self.rrc);
        let my = fft_convolve(&corr(qy), &self.rrc);
        let take = |m: &[Complex64]| -> Vec<Complex64> {
            (0..self.n_symbols)
                .map(|i| {
                    m.get(self.timing_offset + i * self.cfg.sps)
                        .copied()
                        .unwrap_or_default()
                })
                .collect()
        };
        let streams = SymbolStreams {
            pol_x: take(&mx),
            pol_y: take(&my),
            timing_offset: self.timing_offset,
        };
        Ok(equalize_all(&streams, &self.taps))
    }
}

/// Run the full four-step chain on a detected record.
pub fn demodulate(
    w: &WaveformBuffer,
    cfg: &DspConfig,
    det: &DetectorParams,
    layout: &FrameLayout,
    training: &[Complex64],
    slicer: Option<&dyn Fn(f64, f64) -> (f64, f64)>,
) -> Result<(RecoveredBlock, FrozenDsp), RxError> {
    let rrc = crate::txchain::rrc_taps(cfg.rolloff, cfg.span_symbols, cfg.sps)
        .map_err(|e| RxError::Parameter(e.to_string()))?;
    let (quantum, pilot) = bandpass_and_shift(w, cfg, det)?;
    let cr = carrier_recovery(&quantum, &pilot, cfg)?;
    let streams = matched_filter_downsample(&cr.corrected, &rrc, layout, training, cfg)?;
    let taps = lms_equalize(&streams, layout, training, cfg, slicer)?;
    let symbols = equalize_all(&streams, &taps);
    let training_mask: Vec<bool> = (0..layout.total()).map(|i| layout.is_training(i)).collect();
    let frozen = FrozenDsp {
        cfg: cfg.clone(),
        det: det.clone(),
        phasor: cr.phasor,
        rrc,
        timing_offset: streams.timing_offset,
        taps: taps.clone(),
        n_symbols: layout.total(),
    };
    Ok((
        RecoveredBlock {
            symbols,
            training_mask,
            residual_freq_hz: cr.residual_freq_hz,
            equalizer_taps: taps,
            timing_offset: frozen.timing_offset,
        },
        frozen,
    ))
}
