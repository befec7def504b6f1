use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use photon_stats::calibration::{fit_fano_line, EtaSeriesPoint};
use photon_stats::config::RunConfig;
use photon_stats::io;
use photon_stats::moments::MAX_ORDER;
use photon_stats::reconstruction::{rebin, subtract_offset};
use photon_stats::runner::{self, CalibrationDoc, PmMetricsDoc, Verdict};
use photon_stats::{Error, Result};

/// Photon statistics from linear detectors: simulate voltage ensembles,
/// self-calibrate the conversion factor and reconstruct P_m.
#[derive(Debug, Parser)]
#[command(name = "photon-stats", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate, calibrate and reconstruct; write every artifact.
    Run,
    /// Write the raw recordings of a configuration only.
    Simulate,
    /// Print the sample moments of an ensemble file as JSON.
    Moments {
        /// Ensemble CSV.
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
    },
    /// Fit μ₂(v)/⟨v⟩ against ⟨v⟩ and write calibration.json.
    Calibrate(CalibrateArgs),
    /// Rebin an ensemble into P_m and write pm.csv with a metrics sidecar.
    Reconstruct(ReconstructArgs),
    /// Re-derive and verify the results stored in an output directory.
    Check {
        /// Output directory of a `run` (defaults to --out).
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Directory of per-efficiency ensemble CSVs (recorded data).
    #[arg(long, requires = "dark")]
    ensembles: Option<PathBuf>,
    /// Light-free recording used to zero the scale and remove σ₀².
    #[arg(long)]
    dark: Option<PathBuf>,
    /// JSON list of precomputed sweep points.
    #[arg(long, conflicts_with_all = ["ensembles", "dark"])]
    points: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Ensemble CSV.
    input: PathBuf,
    /// Bin width in volts.
    #[arg(long, conflicts_with = "from_calibration", required_unless_present = "from_calibration")]
    gamma_bar: Option<f64>,
    /// Take the bin width from the intercept in a calibration.json.
    #[arg(long)]
    from_calibration: Option<PathBuf>,
    /// Subtract the mean of this light-free recording first.
    #[arg(long, conflicts_with = "dark_mean")]
    dark: Option<PathBuf>,
    /// Subtract this baseline first.
    #[arg(long)]
    dark_mean: Option<f64>,
}

fn load_config(global: &Global) -> Result<RunConfig> {
    let path = global.config.as_deref().ok_or_else(|| Error::Config {
        field: "--config".into(),
        reason: "this subcommand needs a configuration file".into(),
    })?;
    let mut config = RunConfig::from_json(&io::read_text(path)?)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(workers) = global.workers {
        config.workers = workers;
    }
    Ok(config)
}

fn out_dir(global: &Global, config: Option<&RunConfig>) -> PathBuf {
    global
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn print_verdicts(verdicts: &[Verdict]) -> bool {
    for v in verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    verdicts.iter().all(|v| v.pass)
}

fn ensembles_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn calibrate(global: &Global, args: &CalibrateArgs) -> Result<bool> {
    let doc = if let Some(points) = &args.points {
        let points: Vec<EtaSeriesPoint> = io::read_json(points)?;
        let fit = fit_fano_line(&points)?;
        CalibrationDoc {
            config_hash: None,
            mode: "points".into(),
            skipped: None,
            dark: photon_stats::calibration::DarkReference {
                mean: 0.0,
                mean_se: 0.0,
                variance: 0.0,
                variance_se: 0.0,
            },
            verdicts: vec![Verdict::new("fit_valid", fit.valid, format!("intercept {:.6} > 0", fit.intercept))],
            fit: Some(fit),
            expected: None,
            gain_scaling: None,
            mean_constancy: None,
        }
    } else if let Some(dir) = &args.ensembles {
        let dark_path = args.dark.as_deref().expect("clap enforces --dark with --ensembles");
        let dark = io::read_ensemble(dark_path)?;
        let series = ensembles_in(dir)?
            .iter()
            .map(|p| io::read_ensemble(p))
            .collect::<Result<Vec<_>>>()?;
        runner::calibrate_recordings(&series, &dark)?
    } else {
        runner::calibrate_config(&load_config(global)?)?
    };
    let out = out_dir(global, None);
    let path = out.join("calibration.json");
    io::write_json(&path, &doc)?;
    if let Some(fit) = &doc.fit {
        println!(
            "slope {:.6e} ± {:.6e}, intercept {:.6} ± {:.6}",
            fit.slope, fit.slope_se, fit.intercept, fit.intercept_se
        );
    }
    let ok = print_verdicts(&doc.verdicts);
    println!("wrote {}", path.display());
    Ok(ok)
}

fn reconstruct(global: &Global, args: &ReconstructArgs) -> Result<bool> {
    let (gamma_bar, source) = match (&args.gamma_bar, &args.from_calibration) {
        (Some(g), _) => (*g, "flag"),
        (None, Some(path)) => {
            let doc: CalibrationDoc = io::read_json(path)?;
            let fit = doc.fit.filter(|f| f.valid).ok_or_else(|| Error::Format {
                path: path.clone(),
                reason: "no valid fit to take γ̄ from".into(),
            })?;
            (fit.gamma_bar_est, "calibration")
        }
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let (ensemble, header) = io::read_ensemble_with_header(&args.input)?;
    let offset = match (&args.dark, args.dark_mean) {
        (Some(path), _) => photon_stats::calibration::DarkReference::from_samples(&io::read_ensemble(path)?.samples)?.mean,
        (None, Some(m)) => m,
        (None, None) => 0.0,
    };
    let result = rebin(&subtract_offset(ensemble, offset)?, gamma_bar)?;
    let hash = header.config_hash.as_deref();
    let out = out_dir(global, None);
    io::write_text(&out.join("pm.csv"), &io::pm_to_string(&result, hash))?;
    let metrics = PmMetricsDoc {
        config_hash: hash.map(str::to_string),
        eta: header.eta,
        gamma_bar_used: gamma_bar,
        gamma_bar_source: source.into(),
        dark_mean_subtracted: offset,
        n_samples: result.n_samples,
        underflow_fraction: result.underflow_fraction,
        mean_m_hat: result.mean_m_hat,
        comparison: None,
        self_consistency: None,
        verdicts: Vec::new(),
    };
    io::write_json(&out.join("pm_metrics.json"), &metrics)?;
    println!(
        "γ̄ = {gamma_bar}, ⟨m̂⟩ = {:.6}, underflow {:.3e}; wrote {}",
        result.mean_m_hat,
        result.underflow_fraction,
        out.join("pm.csv").display()
    );
    Ok(true)
}

fn execute(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::Run => {
            let config = load_config(g)?;
            let out = out_dir(g, Some(&config));
            let outcome = runner::run_experiment(&config, &out)?;
            print_verdicts(&outcome.verdicts);
            println!("config hash {}; wrote {}", outcome.config_hash, out.display());
            Ok(true)
        }
        Command::Simulate => {
            let config = load_config(g)?;
            let out = out_dir(g, Some(&config));
            let hash = runner::simulate_to_dir(&config, &out)?;
            println!("config hash {hash}; wrote {}", out.display());
            Ok(true)
        }
        Command::Moments { input, order } => {
            if !(2..=MAX_ORDER).contains(order) {
                return Err(Error::UnsupportedOrder(*order));
            }
            let e = io::read_ensemble(input)?;
            let m = photon_stats::moments::sample_moments(&e.samples, *order)?;
            print!("{}", io::to_json(&m)?);
            Ok(true)
        }
        Command::Calibrate(args) => calibrate(g, args),
        Command::Reconstruct(args) => reconstruct(g, args),
        Command::Check { dir } => {
            let dir = dir.clone().unwrap_or_else(|| out_dir(g, None));
            Ok(print_verdicts(&runner::check_output_dir(&dir)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
