//! Command-line front end for the CV-QKD numerical laboratory: shaping,
//! waveform synthesis, demodulation, channel estimation, key-rate
//! evaluation, (ν, V_A) optimization, and report rendering.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use cvqkd_core::constellation::build_mb_constellation;
use cvqkd_core::cvqw;
use cvqkd_core::harness::{
    self, prepare_frame, propagate_and_detect, records_csv, report_csv, report_text,
    run_end_to_end, transmit, ExperimentConfig, ReportRow, RunSummary, SymbolSource,
};
use cvqkd_core::optimizer::{optimize, surface_csv, SearchGrid};
use cvqkd_core::rate::{fiber_transmittance, secret_key_rate, RateParams, ZModel};
use cvqkd_core::rxchain::demodulate;

/// Frames above this size must be requested explicitly: the paper-scale
/// block (2^22 symbols) takes minutes and gigabytes per test.
const DESK_SCALE_LIMIT: usize = 1_000_000;

#[derive(Parser, Debug)]
#[command(
    name = "cvqkd",
    about = "Discrete-modulated CV-QKD link simulator and security evaluator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Shape and assemble a symbol frame; writes symbols.csv.
    Shape(CommonOpts),
    /// Synthesize transmit and detected waveforms as CVQW files.
    Simulate {
        #[command(flatten)]
        opts: CommonOpts,
        /// Test index (selects the per-test derived seeds).
        #[arg(long, default_value_t = 0)]
        test: usize,
    },
    /// Demodulate a detected CVQW record back to symbols.
    Dsp {
        #[command(flatten)]
        opts: CommonOpts,
        /// Detected waveform to demodulate; defaults to OUT/rx.cvqw.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Test index the record was synthesized with.
        #[arg(long, default_value_t = 0)]
        test: usize,
    },
    /// Estimate channel parameters over seeded acquisitions.
    Estimate(CommonOpts),
    /// Evaluate the asymptotic secret-key rate; prints a JSON report.
    Rate {
        #[command(flatten)]
        opts: CommonOpts,
        /// Batch mode: CSV with header nu,v_a,distance_km,excess_noise_snu;
        /// appends i_ab_bits,chi_eb_bits,skr_bps columns.
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Maximize the rate over (nu, V_A); writes surface.csv and optimum.json.
    Optimize {
        #[command(flatten)]
        opts: CommonOpts,
        /// Grid refinement steps per zoom level.
        #[arg(long, default_value_t = 13)]
        steps: usize,
    },
    /// Full end-to-end run: records.csv, summary.json, resolved config.toml.
    Run(CommonOpts),
    /// Render run summaries (or an existing report CSV) as a table.
    Report {
        #[command(flatten)]
        opts: CommonOpts,
        /// Run output directories, or a report CSV to re-render; defaults
        /// to the --out directory itself.
        inputs: Vec<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FormatArg {
    /// 64-ary shaped QAM at the published 5 km operating point.
    Dg64,
    /// 256-ary shaped QAM at the published 5 km operating point.
    Dg256,
    /// Gaussian-modulation baseline (forces the gaussian z-model).
    Gaussian,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ZModelArg {
    Gaussian,
    DmDenys,
}

impl From<ZModelArg> for ZModel {
    fn from(z: ZModelArg) -> ZModel {
        match z {
            ZModelArg::Gaussian => ZModel::Gaussian,
            ZModelArg::DmDenys => ZModel::DmDenys,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Experiment config TOML; unset fields fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Symbols per frame (desk-scale default 100000).
    #[arg(long)]
    symbols: Option<usize>,
    /// Number of seeded tests.
    #[arg(long)]
    tests: Option<usize>,
    /// Modulation preset; replaces the config's modulation block.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Fiber length in km (overrides the config).
    #[arg(long)]
    distance: Option<f64>,
    /// Security-bound flavor (overrides the config).
    #[arg(long, value_enum)]
    z_model: Option<ZModelArg>,
    /// Allow paper-scale frames (more than 10^6 symbols, e.g. 2^22).
    #[arg(long)]
    paper_scale: bool,
}

impl CommonOpts {
    fn load(&self) -> Result<ExperimentConfig, Box<dyn Error>> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_str(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.symbols {
            cfg.frame.n_symbols = n;
        }
        if let Some(t) = self.tests {
            cfg.n_tests = t;
        }
        match self.format {
            Some(FormatArg::Dg64) => {
                cfg.modulation.order = 64;
                cfg.modulation.nu = 0.057;
                cfg.modulation.target_va = 7.618;
                cfg.modulation.source = SymbolSource::Ccdm;
            }
            Some(FormatArg::Dg256) => {
                cfg.modulation.order = 256;
                cfg.modulation.nu = 0.023;
                cfg.modulation.target_va = 14.35;
                cfg.modulation.source = SymbolSource::Ccdm;
            }
            Some(FormatArg::Gaussian) => {
                cfg.modulation.source = SymbolSource::Gaussian;
                cfg.z_model = ZModel::Gaussian;
            }
            None => {}
        }
        if let Some(d) = self.distance {
            cfg.channel.distance_km = d;
        }
        if let Some(z) = self.z_model {
            cfg.z_model = z.into();
        }
        if cfg.frame.n_symbols > DESK_SCALE_LIMIT && !self.paper_scale {
            return Err(format!(
                "{} symbols exceeds the desk-scale limit of {}; pass --paper-scale to confirm",
                cfg.frame.n_symbols, DESK_SCALE_LIMIT
            )
            .into());
        }
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<PathBuf, Box<dyn Error>> {
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

fn cmd_shape(opts: &CommonOpts) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let pf = prepare_frame(&cfg, 0)?;
    // waveform units: the sent quadratures (2α), per-quadrature variance V_A
    let mut csv = String::from("index,re,im,is_training\n");
    for (i, s) in pf.frame.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            i,
            s.re,
            s.im,
            pf.layout.is_training(i) as u8
        ));
    }
    let path = write_out(&opts.out, "symbols.csv", &csv)?;
    // payload only: training symbols are uniform draws and sit above V_A
    let va_meas = pf.layout.payload_indices().map(|i| pf.frame[i].re.powi(2)).sum::<f64>()
        / pf.layout.n_payload() as f64;
    println!(
        "shaped {} symbols ({}-ary, nu {}, V_A target {} measured {:.3}) -> {}",
        pf.frame.len(),
        cfg.modulation.order,
        cfg.modulation.nu,
        cfg.modulation.target_va,
        va_meas,
        path.display()
    );
    Ok(())
}

fn cmd_simulate(opts: &CommonOpts, test: usize) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let pf = prepare_frame(&cfg, test)?;
    let tx = transmit(&cfg, &pf)?;
    let rx = propagate_and_detect(&cfg, &tx, test);
    cvqw::write_file(opts.out.join("tx.cvqw"), &tx)?;
    cvqw::write_file(opts.out.join("rx.cvqw"), &rx)?;
    write_out(&opts.out, "config.toml", &cfg.to_toml_string())?;
    println!(
        "synthesized {} samples at {} GS/s (test {}) -> {}/{{tx,rx}}.cvqw",
        tx.len(),
        cfg.sample_rate_hz / 1e9,
        test,
        opts.out.display()
    );
    Ok(())
}

fn cmd_dsp(opts: &CommonOpts, input: &Option<PathBuf>, test: usize) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let path = input.clone().unwrap_or_else(|| opts.out.join("rx.cvqw"));
    let rx = cvqw::read_file(&path)?;
    // training regenerates deterministically from (config, seed, test)
    let pf = prepare_frame(&cfg, test)?;
    let (block, _) = demodulate(
        &rx,
        &cfg.dsp_for_link(),
        &cfg.detector,
        &pf.layout,
        &pf.training,
        None,
    )?;
    let mut csv = String::from("index,x,p,is_training\n");
    for (i, &(x, p)) in block.symbols.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}\n", i, x, p, block.training_mask[i] as u8));
    }
    write_out(&opts.out, "recovered.csv", &csv)?;
    let summary = serde_json::json!({
        "input": path.display().to_string(),
        "n_symbols": block.symbols.len(),
        "residual_freq_hz": block.residual_freq_hz,
        "timing_offset": block.timing_offset,
    });
    write_out(&opts.out, "dsp_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "recovered {} symbols, residual carrier {:.3} Hz, timing offset {} -> {}/recovered.csv",
        block.symbols.len(),
        block.residual_freq_hz,
        block.timing_offset,
        opts.out.display()
    );
    Ok(())
}

fn print_run_summary(s: &RunSummary) {
    println!(
        "{} tests x {} symbols: T_hat {:.4} +- {:.4}, xi_hat {:.4} +- {:.4} SNU, SKR {:.3} +- {:.3} Mb/s",
        s.n_tests,
        s.n_symbols,
        s.mean_transmittance_hat,
        s.std_transmittance_hat,
        s.mean_excess_noise_hat,
        s.std_excess_noise_hat,
        s.mean_skr_bps / 1e6,
        s.std_skr_bps / 1e6
    );
}

fn cmd_estimate(opts: &CommonOpts) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let outcome = run_end_to_end(&cfg)?;
    write_out(
        &opts.out,
        "records.csv",
        &records_csv(cfg.hash(), cfg.seed, &outcome.records),
    )?;
    write_out(
        &opts.out,
        "summary.json",
        &serde_json::to_string_pretty(&outcome.summary)?,
    )?;
    print_run_summary(&outcome.summary);
    Ok(())
}

fn cmd_rate(opts: &CommonOpts, batch: &Option<PathBuf>) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let constellation_for = |nu: f64| -> Result<_, Box<dyn Error>> {
        Ok(build_mb_constellation(cfg.modulation.order, nu)?
            .scale_to_variance(cfg.modulation.target_va)?)
    };
    match batch {
        None => {
            let params = cfg.rate_params();
            let c;
            let cref = match cfg.z_model {
                ZModel::Gaussian => None,
                ZModel::DmDenys => {
                    c = constellation_for(cfg.modulation.nu)?;
                    Some(&c)
                }
            };
            let report = secret_key_rate(&params, cref)?;
            let json = serde_json::to_string_pretty(&report)?;
            write_out(&opts.out, "rate.json", &json)?;
            println!("{json}");
        }
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let mut lines = text.lines();
            let header = lines.next().ok_or("empty batch file")?;
            if header != "nu,v_a,distance_km,excess_noise_snu" {
                return Err(format!("bad batch header: {header}").into());
            }
            let mut out = format!("{header},i_ab_bits,chi_eb_bits,skr_bps\n");
            for line in lines.filter(|l| !l.trim().is_empty()) {
                let f: Vec<f64> = line
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| format!("bad batch row: {line}"))?;
                if f.len() != 4 {
                    return Err(format!("bad batch row: {line}").into());
                }
                let params = RateParams {
                    v_a: f[1],
                    transmittance: fiber_transmittance(f[2], cfg.channel.atten_db_per_km),
                    excess_noise_snu: f[3],
                    ..cfg.rate_params()
                };
                let c;
                let cref = match cfg.z_model {
                    ZModel::Gaussian => None,
                    ZModel::DmDenys => {
                        c = build_mb_constellation(cfg.modulation.order, f[0])?
                            .scale_to_variance(f[1])?;
                        Some(&c)
                    }
                };
                let r = secret_key_rate(&params, cref)?;
                out.push_str(&format!(
                    "{line},{},{},{}\n",
                    r.i_ab_bits, r.chi_eb_bits, r.skr_bps
                ));
            }
            let path = write_out(&opts.out, "rate_batch.csv", &out)?;
            print!("{out}");
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_optimize(opts: &CommonOpts, steps: usize) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let grid = SearchGrid {
        steps,
        ..SearchGrid::default()
    };
    let opt = optimize(cfg.modulation.order, &cfg.rate_params(), &grid)?;
    write_out(&opts.out, "surface.csv", &surface_csv(&opt.surface))?;
    write_out(&opts.out, "optimum.json", &serde_json::to_string_pretty(&opt)?)?;
    println!(
        "{}-ary at {} km: optimum nu {:.4}, V_A {:.3}, SKR {:.3} Mb/s -> {}/optimum.json",
        opt.order,
        cfg.channel.distance_km,
        opt.nu,
        opt.v_a,
        opt.skr_bps / 1e6,
        opts.out.display()
    );
    Ok(())
}

fn cmd_run(opts: &CommonOpts) -> Result<(), Box<dyn Error>> {
    let cfg = opts.load()?;
    let outcome = run_end_to_end(&cfg)?;
    write_out(
        &opts.out,
        "records.csv",
        &records_csv(cfg.hash(), cfg.seed, &outcome.records),
    )?;
    write_out(
        &opts.out,
        "summary.json",
        &serde_json::to_string_pretty(&outcome.summary)?,
    )?;
    write_out(&opts.out, "config.toml", &cfg.to_toml_string())?;
    print_run_summary(&outcome.summary);
    Ok(())
}

/// Build a report row from a run directory holding summary.json + config.toml.
fn row_from_run_dir(dir: &Path) -> Result<ReportRow, Box<dyn Error>> {
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
    let cfg = ExperimentConfig::from_toml_str(&fs::read_to_string(dir.join("config.toml"))?)?;
    let format = match cfg.modulation.source {
        SymbolSource::Gaussian => "gaussian".to_string(),
        SymbolSource::Ccdm => format!("dg{}", cfg.modulation.order),
    };
    Ok(ReportRow {
        format,
        distance_km: cfg.channel.distance_km,
        nu: cfg.modulation.nu,
        v_a: cfg.modulation.target_va,
        excess_noise_hat: summary.mean_excess_noise_hat,
        skr_mbps: summary.mean_skr_bps / 1e6,
    })
}

fn cmd_report(opts: &CommonOpts, inputs: &[PathBuf]) -> Result<(), Box<dyn Error>> {
    fs::create_dir_all(&opts.out)?;
    let inputs = if inputs.is_empty() {
        vec![opts.out.clone()]
    } else {
        inputs.to_vec()
    };
    let mut rows = Vec::new();
    for p in &inputs {
        if p.is_dir() {
            rows.push(row_from_run_dir(p)?);
        } else {
            rows.extend(harness::parse_report_csv(&fs::read_to_string(p)?)?);
        }
    }
    write_out(&opts.out, "report.csv", &report_csv(&rows))?;
    print!("{}", report_text(&rows));
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Shape(opts) => cmd_shape(opts),
        Cmd::Simulate { opts, test } => cmd_simulate(opts, *test),
        Cmd::Dsp { opts, input, test } => cmd_dsp(opts, input, *test),
        Cmd::Estimate(opts) => cmd_estimate(opts),
        Cmd::Rate { opts, batch } => cmd_rate(opts, batch),
        Cmd::Optimize { opts, steps } => cmd_optimize(opts, *steps),
        Cmd::Run(opts) => cmd_run(opts),
        Cmd::Report { opts, inputs } => cmd_report(opts, inputs),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
