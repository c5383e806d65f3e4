//! Experiment orchestration: TOML-backed configuration, seeded end-to-end
//! runs (shape → modulate → channel → detect → DSP → estimate → rate),
//! per-test records, and Table-style report rendering.
//!
//! Alice's quadrature convention: a constellation point α is transmitted
//! as the waveform symbol 2α, so the per-quadrature variance of the sent
//! sequence equals V_A in shot-noise units and the calibrated receiver
//! sees the amplitude transfer t = √(ηT/2).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    apply_channel, dark_record, detect, vacuum_record, ChannelParams, DetectorParams,
};
use crate::constellation::{build_mb_constellation, Constellation, ConstellationError};
use crate::estimation::{calibrate_snu, estimate_channel, EstimationError, EstimationResult};
use crate::rate::{secret_key_rate, RateError, RateParams, RateReport, ZModel};
use crate::rxchain::{demodulate, DspConfig, RxError};
use crate::seed;
use crate::shaping::{rng_bits, shape_block, ShapingError};
use crate::txchain::{add_pilot, modulate, rrc_taps, FrameLayout, TxError, WaveformBuffer};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("shaping stage: {0}")]
    Shaping(#[from] ShapingError),
    #[error("constellation stage: {0}")]
    Constellation(#[from] ConstellationError),
    #[error("transmit stage: {0}")]
    Tx(#[from] TxError),
    #[error("dsp stage: {0}")]
    Dsp(#[from] RxError),
    #[error("estimation stage: {0}")]
    Estimation(#[from] EstimationError),
    #[error("rate stage: {0}")]
    Rate(#[from] RateError),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}

fn default_order() -> usize {
    256
}
fn default_nu() -> f64 {
    0.023
}
fn default_va() -> f64 {
    14.35
}
fn default_ccdm_block() -> usize {
    1024
}
fn default_source() -> SymbolSource {
    SymbolSource::Ccdm
}

/// Where payload and training symbols come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolSource {
    /// CCDM-shaped draws from the discrete constellation.
    Ccdm,
    /// Gaussian-modulation baseline: i.i.d. normal quadratures at V_A.
    Gaussian,
}

/// Constellation geometry plus the CCDM sub-block size: the frame payload
/// is shaped in independent constant-composition blocks of this length
/// (exact big-integer ranking stays cheap at fixed block size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Target modulation variance V_A, SNU.
    #[serde(default = "default_va")]
    pub target_va: f64,
    #[serde(default = "default_ccdm_block")]
    pub ccdm_block: usize,
    #[serde(default = "default_source")]
    pub source: SymbolSource,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        ModulationConfig {
            order: default_order(),
            nu: default_nu(),
            target_va: default_va(),
            ccdm_block: default_ccdm_block(),
            source: default_source(),
        }
    }
}

fn default_n_symbols() -> usize {
    100_000
}
fn default_training_ratio() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Symbols per frame. Desk-scale default; the paper-scale block is
    /// 2^22 and must be requested explicitly.
    #[serde(default = "default_n_symbols")]
    pub n_symbols: usize,
    #[serde(default = "default_training_ratio")]
    pub training_ratio: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            n_symbols: default_n_symbols(),
            training_ratio: default_training_ratio(),
        }
    }
}

fn default_beta() -> f64 {
    0.95
}
fn default_sample_rate() -> f64 {
    10e9
}
fn default_shift() -> f64 {
    750e6
}
fn default_pilot_db() -> f64 {
    20.0
}
fn default_seed() -> u64 {
    7
}
fn default_n_tests() -> usize {
    20
}
fn default_z_model() -> ZModel {
    ZModel::Gaussian
}
fn default_channel() -> ChannelParams {
    ChannelParams {
        distance_km: 5.0,
        atten_db_per_km: 0.2,
        excess_noise_snu: 0.037,
        tx_linewidth_hz: 100.0,
        lo_linewidth_hz: 100.0,
        freq_offset_hz: 750e6,
        pol_rotation: Default::default(),
        noise: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub modulation: ModulationConfig,
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default = "default_channel")]
    pub channel: ChannelParams,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub dsp: DspConfig,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_z_model")]
    pub z_model: ZModel,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    /// Transmit-side frequency shift of the quantum band.
    #[serde(default = "default_shift")]
    pub quantum_shift_hz: f64,
    #[serde(default = "default_pilot_db")]
    pub pilot_power_db: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_tests")]
    pub n_tests: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            modulation: ModulationConfig::default(),
            frame: FrameConfig::default(),
            channel: default_channel(),
            detector: DetectorParams::default(),
            dsp: DspConfig::default(),
            beta: default_beta(),
            z_model: default_z_model(),
            sample_rate_hz: default_sample_rate(),
            quantum_shift_hz: default_shift(),
            pilot_power_db: default_pilot_db(),
            seed: default_seed(),
            n_tests: default_n_tests(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<ExperimentConfig, HarnessError> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn symbol_rate_hz(&self) -> f64 {
        self.sample_rate_hz / self.dsp.sps as f64
    }

    /// Stable content hash recorded in every output artifact.
    pub fn hash(&self) -> u64 {
        seed::derive(0, &self.to_toml_string(), 0)
    }

    /// Receive-side filter plan: the quantum band lands at the transmit
    /// shift plus the LO offset, the pilot at the LO offset alone.
    pub fn dsp_for_link(&self) -> DspConfig {
        DspConfig {
            quantum_if_hz: self.quantum_shift_hz + self.channel.freq_offset_hz,
            pilot_if_hz: self.channel.freq_offset_hz,
            ..self.dsp.clone()
        }
    }

    pub fn rate_params(&self) -> RateParams {
        RateParams {
            v_a: self.modulation.target_va,
            transmittance: self.channel.transmittance(),
            excess_noise_snu: self.channel.excess_noise_snu,
            eta: self.detector.eta,
            v_ele_snu: self.detector.v_ele_snu,
            beta: self.beta,
            training_ratio: self.frame.training_ratio,
            symbol_rate_hz: self.symbol_rate_hz(),
            z_model: self.z_model,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.frame.n_symbols < 1000 {
            return Err(HarnessError::Config(format!(
                "frame too short for DSP convergence: {} symbols",
                self.frame.n_symbols
            )));
        }
        if self.modulation.ccdm_block < 16 {
            return Err(HarnessError::Config(format!(
                "ccdm block {} too small",
                self.modulation.ccdm_block
            )));
        }
        if self.n_tests == 0 {
            return Err(HarnessError::Config("n_tests must be positive".into()));
        }
        if self.modulation.source == SymbolSource::Gaussian && self.z_model == ZModel::DmDenys {
            return Err(HarnessError::Config(
                "discrete-modulation bound needs a discrete constellation; \
                 use the gaussian z-model with gaussian modulation"
                    .into(),
            ));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(HarnessError::Config(format!(
                "sample rate {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// One seeded end-to-end acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test_index: usize,
    pub seed: u64,
    pub t_hat: f64,
    pub transmittance_hat: f64,
    pub excess_noise_hat: f64,
    pub excess_noise_std_err: f64,
    pub v_ele_hat: f64,
    pub var_z: f64,
    pub residual_freq_hz: f64,
    pub n_pairs: usize,
    pub i_ab_bits: f64,
    pub chi_eb_bits: f64,
    pub secret_fraction_bits: f64,
    pub skr_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: u64,
    pub seed: u64,
    pub n_tests: usize,
    pub n_symbols: usize,
    pub mean_transmittance_hat: f64,
    pub std_transmittance_hat: f64,
    pub mean_excess_noise_hat: f64,
    pub std_excess_noise_hat: f64,
    pub mean_skr_bps: f64,
    pub std_skr_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub records: Vec<TestRecord>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Shape the payload as a sequence of constant-composition sub-blocks.
pub fn shape_payload(
    c: &Constellation,
    n: usize,
    block: usize,
    bits: &mut impl Iterator<Item = bool>,
) -> Result<Vec<Complex64>, ShapingError> {
    let mut out = Vec::with_capacity(n);
    let mut remaining = n;
    while remaining > 0 {
        let len = remaining.min(block);
        out.extend(shape_block(c, len, bits)?);
        remaining -= len;
    }
    Ok(out)
}

/// Training sequence known to both ends: uniform draws from the
/// constellation, in waveform units (2α).
fn training_sequence(c: &Constellation, n: usize, root: u64, test: u64) -> Vec<Complex64> {
    let points: Vec<Complex64> = c.points().collect();
    let mut rng = seed::rng(root, "training", test);
    (0..n)
        .map(|_| 2.0 * points[rng.random_range(0..points.len())])
        .collect()
}

/// Frame content for one seeded acquisition, in waveform units (2α).
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub constellation: Constellation,
    pub layout: FrameLayout,
    pub training: Vec<Complex64>,
    pub frame: Vec<Complex64>,
}

/// Shape and assemble the symbol frame for one seeded acquisition.
pub fn prepare_frame(
    cfg: &ExperimentConfig,
    test_index: usize,
) -> Result<PreparedFrame, HarnessError> {
    cfg.validate()?;
    let idx = test_index as u64;
    let root = cfg.seed;

    let c = build_mb_constellation(cfg.modulation.order, cfg.modulation.nu)?
        .scale_to_variance(cfg.modulation.target_va)?;
    let layout = FrameLayout::new(cfg.frame.n_symbols, cfg.frame.training_ratio)?;

    // shape → assemble frame in waveform units (2α)
    let (payload, training) = match cfg.modulation.source {
        SymbolSource::Ccdm => {
            let mut bits = rng_bits(seed::rng(root, "bits", idx));
            let payload: Vec<Complex64> =
                shape_payload(&c, layout.n_payload(), cfg.modulation.ccdm_block, &mut bits)?
                    .into_iter()
                    .map(|a| 2.0 * a)
                    .collect();
            (payload, training_sequence(&c, layout.n_training(), root, idx))
        }
        SymbolSource::Gaussian => {
            // per-quadrature variance V_A in waveform units
            let normal = Normal::new(0.0, cfg.modulation.target_va.sqrt())
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let draw = |label: &str, n: usize| -> Vec<Complex64> {
                let mut rng = seed::rng(root, label, idx);
                (0..n)
                    .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                    .collect()
            };
            (
                draw("gaussian-payload", layout.n_payload()),
                draw("gaussian-training", layout.n_training()),
            )
        }
    };
    let frame = layout.assemble(&training, &payload)?;
    Ok(PreparedFrame {
        constellation: c,
        layout,
        training,
        frame,
    })
}

/// Pulse-shape the frame, shift the quantum band, and add the pilot tone.
pub fn transmit(cfg: &ExperimentConfig, pf: &PreparedFrame) -> Result<WaveformBuffer, HarnessError> {
    let taps = rrc_taps(cfg.dsp.rolloff, cfg.dsp.span_symbols, cfg.dsp.sps)?;
    let tx = modulate(
        &pf.frame,
        &pf.layout,
        &taps,
        cfg.dsp.sps,
        cfg.quantum_shift_hz,
        cfg.sample_rate_hz,
    )?;
    Ok(add_pilot(&tx, cfg.pilot_power_db, 0.0)?)
}

/// Fiber propagation followed by balanced heterodyne detection, seeded per
/// test so repeat runs are bit-identical.
pub fn propagate_and_detect(
    cfg: &ExperimentConfig,
    tx: &WaveformBuffer,
    test_index: usize,
) -> WaveformBuffer {
    let idx = test_index as u64;
    let rx = apply_channel(tx, &cfg.channel, seed::derive(cfg.seed, "channel", idx));
    detect(&rx, &cfg.detector, seed::derive(cfg.seed, "detect", idx))
}

/// Demodulate a detected record, calibrate against the frozen DSP chain,
/// estimate channel parameters, and evaluate the rate.
pub fn analyze(
    cfg: &ExperimentConfig,
    pf: &PreparedFrame,
    rx: &WaveformBuffer,
    test_index: usize,
) -> Result<TestRecord, HarnessError> {
    let idx = test_index as u64;
    let root = cfg.seed;
    let fs = cfg.sample_rate_hz;
    let layout = &pf.layout;
    let frame = &pf.frame;

    // receive DSP, then replay the frozen chain on calibration records
    let dsp = cfg.dsp_for_link();
    let (block, frozen) = demodulate(rx, &dsp, &cfg.detector, layout, &pf.training, None)?;
    let n_cal = rx.len();
    let vacuum = frozen.process(&vacuum_record(
        n_cal,
        fs,
        &cfg.detector,
        seed::derive(root, "vacuum", idx),
    ))?;
    let dark = frozen.process(&dark_record(
        n_cal,
        fs,
        &cfg.detector,
        seed::derive(root, "dark", idx),
    ))?;
    let cal = calibrate_snu(&vacuum, &dark)?;

    // estimate over the interior payload (filter edges excluded)
    let guard = 2 * cfg.dsp.span_symbols;
    let interior = |i: &usize| *i >= guard && *i + guard < layout.total();
    let mut sent = Vec::with_capacity(layout.n_payload());
    let mut received = Vec::with_capacity(layout.n_payload());
    for i in layout.payload_indices().filter(interior) {
        sent.push((frame[i].re, frame[i].im));
        received.push(block.symbols[i]);
    }
    let est = estimate_channel(&sent, &received, &cal, cfg.detector.eta)?;
    let report = rate_from_estimate(cfg, &pf.constellation, &est)?;

    Ok(TestRecord {
        test_index,
        seed: root,
        t_hat: est.t_hat,
        transmittance_hat: est.transmittance_hat,
        excess_noise_hat: est.excess_noise_hat,
        excess_noise_std_err: est.excess_noise_std_err,
        v_ele_hat: est.v_ele_hat,
        var_z: est.var_z,
        residual_freq_hz: block.residual_freq_hz,
        n_pairs: est.n_pairs,
        i_ab_bits: report.i_ab_bits,
        chi_eb_bits: report.chi_eb_bits,
        secret_fraction_bits: report.secret_fraction_bits,
        skr_bps: report.skr_bps,
    })
}

/// Channel estimate and rate for one seeded acquisition.
pub fn run_single_test(
    cfg: &ExperimentConfig,
    test_index: usize,
) -> Result<TestRecord, HarnessError> {
    let pf = prepare_frame(cfg, test_index)?;
    let tx = transmit(cfg, &pf)?;
    let rx = propagate_and_detect(cfg, &tx, test_index);
    analyze(cfg, &pf, &rx, test_index)
}

/// Key rate from estimated channel parameters. ξ̂ is reported as-is in the
/// record but clamped at zero for the security bound; T̂ is clamped into
/// the physical interval.
pub fn rate_from_estimate(
    cfg: &ExperimentConfig,
    c: &Constellation,
    est: &EstimationResult,
) -> Result<RateReport, HarnessError> {
    let p = RateParams {
        transmittance: est.transmittance_hat.clamp(1e-9, 1.0),
        excess_noise_snu: est.excess_noise_hat.max(0.0),
        v_ele_snu: est.v_ele_hat.max(0.0),
        ..cfg.rate_params()
    };
    let constellation = match cfg.z_model {
        ZModel::Gaussian => None,
        ZModel::DmDenys => Some(c),
    };
    Ok(secret_key_rate(&p, constellation)?)
}

/// Run `n_tests` seeded acquisitions in parallel; records are ordered by
/// test index regardless of completion order.
pub fn run_end_to_end(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let records: Vec<TestRecord> = (0..cfg.n_tests)
        .into_par_iter()
        .map(|i| run_single_test(cfg, i))
        .collect::<Result<_, _>>()?;
    let (mean_t, std_t) = mean_std(records.iter().map(|r| r.transmittance_hat));
    let (mean_xi, std_xi) = mean_std(records.iter().map(|r| r.excess_noise_hat));
    let (mean_skr, std_skr) = mean_std(records.iter().map(|r| r.skr_bps));
    Ok(RunOutcome {
        summary: RunSummary {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            n_tests: cfg.n_tests,
            n_symbols: cfg.frame.n_symbols,
            mean_transmittance_hat: mean_t,
            std_transmittance_hat: std_t,
            mean_excess_noise_hat: mean_xi,
            std_excess_noise_hat: std_xi,
            mean_skr_bps: mean_skr,
            std_skr_bps: std_skr,
        },
        records,
    })
}

/// Per-test CSV; the first line records (config hash, seed) for provenance.
pub fn records_csv(config_hash: u64, seed: u64, records: &[TestRecord]) -> String {
    let mut out = format!("# config_hash={config_hash:016x} seed={seed}\n");
    out.push_str(
        "test,seed,t_hat,transmittance_hat,excess_noise_hat,excess_noise_std_err,v_ele_hat,var_z,residual_freq_hz,n_pairs,i_ab_bits,chi_eb_bits,secret_fraction_bits,skr_bps\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.test_index,
            r.seed,
            r.t_hat,
            r.transmittance_hat,
            r.excess_noise_hat,
            r.excess_noise_std_err,
            r.v_ele_hat,
            r.var_z,
            r.residual_freq_hz,
            r.n_pairs,
            r.i_ab_bits,
            r.chi_eb_bits,
            r.secret_fraction_bits,
            r.skr_bps
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Table-style reporting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub format: String,
    pub distance_km: f64,
    pub nu: f64,
    pub v_a: f64,
    pub excess_noise_hat: f64,
    pub skr_mbps: f64,
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("format,distance_km,nu,v_a,excess_noise_hat,skr_mbps\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.format, r.distance_km, r.nu, r.v_a, r.excess_noise_hat, r.skr_mbps
        ));
    }
    out
}

pub fn parse_report_csv(csv: &str) -> Result<Vec<ReportRow>, HarnessError> {
    let mut lines = csv.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config("empty report".into()))?;
    if header != "format,distance_km,nu,v_a,excess_noise_hat,skr_mbps" {
        return Err(HarnessError::Config(format!("bad report header: {header}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(HarnessError::Config(format!("bad report row: {l}")));
            }
            let num = |s: &str| -> Result<f64, HarnessError> {
                s.parse()
                    .map_err(|_| HarnessError::Config(format!("bad number {s}")))
            };
            Ok(ReportRow {
                format: f[0].to_string(),
                distance_km: num(f[1])?,
                nu: num(f[2])?,
                v_a: num(f[3])?,
                excess_noise_hat: num(f[4])?,
                skr_mbps: num(f[5])?,
            })
        })
        .collect()
}

/// Aligned text rendering of the same rows; header-only when empty.
pub fn report_text(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<10} {:>11} {:>8} {:>8} {:>10} {:>12}\n",
        "format", "distance_km", "nu", "v_a", "xi_hat", "skr_mbps"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>11.1} {:>8.4} {:>8.3} {:>10.4} {:>12.3}\n",
            r.format, r.distance_km, r.nu, r.v_a, r.excess_noise_hat, r.skr_mbps
        ));
    }
    out
}
