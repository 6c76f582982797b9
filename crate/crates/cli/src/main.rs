use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use delayou::sde::SimConfig;
use delayou::stationary::LagGrid;
use delayou::{spectral_abscissa, AbscissaOptions, FundamentalTable};
use delayou_cli::stability::criteria;
use delayou_cli::tables::{
    covariance_rows, fundamental_rows, mode_rate, root_rows, simulate_rows, stationary_covariance,
    write_csv,
};
use delayou_cli::{load_scenario, run_verify, Scenario};

#[derive(Parser)]
#[command(name = "delayou", version, about = "Stability, covariance and simulation of stochastic delay equations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files (default: `outputs.dir` or the current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form criteria next to the computed spectral abscissa.
    Stability,
    /// Characteristic roots of every mode in a window.
    Roots {
        /// `lo,hi` for the real part.
        #[arg(long, allow_hyphen_values = true)]
        re_window: Option<String>,
        /// Cap on |Im λ| (default: `run.im_cap` or 50)
        #[arg(long)]
        im_cap: Option<f64>,
        #[arg(long, default_value = "roots.csv")]
        out: PathBuf,
    },
    /// Fundamental solutions g_k(t) on [0, T].
    Fundamental {
        /// Horizon (default: `run.T`)
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// Step, must divide r (default: `run.dt`)
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value = "fundamental.csv")]
        out: PathBuf,
    },
    /// Stationary covariance K_kj(t) on a lag grid.
    Covariance {
        /// `from:step:to`.
        #[arg(long, allow_hyphen_values = true)]
        lags: Option<String>,
        /// Step, must divide r (default: `run.dt`)
        #[arg(long)]
        dt: Option<f64>,
        /// Truncation horizon of the lag integrals.
        #[arg(long)]
        t_trunc: Option<f64>,
        #[arg(long, default_value = "covariance.csv")]
        out: PathBuf,
    },
    /// Euler-Maruyama ensemble statistics.
    Simulate {
        /// Ensemble size (default: `run.paths`)
        #[arg(long)]
        paths: Option<usize>,
        /// Step, must divide r (default: `run.dt`)
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon (default: `run.T`)
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// Burn in on a zero history and record from there
        #[arg(long)]
        stationary_start: bool,
        /// Burn-in length (default: from the decay rate)
        #[arg(long)]
        burn_in: Option<f64>,
        /// Keep every n-th grid point (default: about 200 records).
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, default_value = "stats.csv")]
        out: PathBuf,
    },
    /// Full cross-check pipeline; exits non-zero if any check fails.
    Verify {
        #[arg(long, default_value = "verify.json")]
        out: PathBuf,
    },
}

fn out_path(dir: &Path, file: &Path) -> PathBuf {
    dir.join(file)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let Some(path) = cli.global.scenario.as_deref() else {
        bail!("--scenario is required");
    };
    let mut s: Scenario = load_scenario(path)?;
    if let Some(seed) = cli.global.seed {
        s.run.seed = seed;
    }
    let dir = cli
        .global
        .out_dir
        .clone()
        .or_else(|| s.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let system = s.system().clone();
    let k = s.kernel.clone();

    match cli.command {
        Command::Stability => {
            let sa = spectral_abscissa(&system, &k, &AbscissaOptions::default())?;
            println!("{:<20} {:<8} {:<13} {:>12}  detail", "criterion", "applies", "verdict", "margin");
            for c in criteria(&system, &k) {
                let margin = c.margin.map(|m| format!("{m:.6}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:<20} {:<8} {:<13} {:>12}  {}",
                    c.criterion,
                    if c.applies { "yes" } else { "no" },
                    c.verdict.unwrap_or("-"),
                    margin,
                    c.detail
                );
            }
            println!(
                "spectral abscissa {:.10} ({:?}{}) -> {}",
                sa.value,
                sa.source,
                if sa.upper_bound_only { ", upper bound" } else { "" },
                if sa.is_stable() { "stable" } else { "unstable" }
            );
            Ok(true)
        }
        Command::Roots { re_window, im_cap, out } => {
            let window = match re_window {
                Some(w) => {
                    let parts: Vec<f64> = w
                        .split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .with_context(|| format!("--re-window expects lo,hi, got {w:?}"))?;
                    if parts.len() != 2 || parts[0] >= parts[1] {
                        bail!("--re-window expects lo,hi with lo < hi, got {w:?}");
                    }
                    (parts[0], parts[1])
                }
                None => s.run.re_window.unwrap_or_else(|| {
                    let top = system.modes().iter().map(|m| mode_rate(m, &k)).fold(0.0, f64::max);
                    (-20.0, top.min(20.0) + 1.0)
                }),
            };
            let im_cap = im_cap.or(s.run.im_cap).unwrap_or(50.0);
            let rows = root_rows(&system, &k, window, im_cap)?;
            let file = out_path(&dir, &out);
            write_csv(&file, &rows)?;
            eprintln!("{} roots -> {}", rows.len(), file.display());
            Ok(true)
        }
        Command::Fundamental { t_end, dt, out } => {
            let dt = dt.unwrap_or(s.run.dt);
            let table = FundamentalTable::compute(&system, &k, t_end.unwrap_or(s.run.t_end), dt)?;
            let file = out_path(&dir, &out);
            write_csv(&file, &fundamental_rows(&table, &system))?;
            eprintln!("{} modes x {} steps -> {}", table.rows.len(), table.steps() + 1, file.display());
            Ok(true)
        }
        Command::Covariance { lags, dt, t_trunc, out } => {
            let dt = dt.unwrap_or(s.run.dt);
            let grid = match lags {
                Some(l) => LagGrid::parse(&l)?,
                None => match s.run.lags {
                    Some(g) => g,
                    None => LagGrid::new(-k.r(), 5.0 * k.r(), dt)?,
                },
            };
            let cov = stationary_covariance(&system, &k, dt, &grid, t_trunc)?;
            let file = out_path(&dir, &out);
            write_csv(&file, &covariance_rows(&cov, &system))?;
            eprintln!(
                "{} lags, max tail bound {:.3e} -> {}",
                cov.lags.len(),
                cov.max_tail_bound(),
                file.display()
            );
            Ok(true)
        }
        Command::Simulate { paths, dt, t_end, stationary_start, burn_in, stride, out } => {
            let mut cfg = SimConfig::new(
                dt.unwrap_or(s.run.dt),
                t_end.unwrap_or(s.run.t_end),
                paths.unwrap_or(s.run.paths),
                s.run.seed,
            );
            if stationary_start || s.run.stationary_start {
                cfg = cfg.stationary();
            }
            cfg.burn_in = burn_in.or(s.run.burn_in);
            cfg.record_stride = stride.unwrap_or_else(|| (cfg.steps() / 200).max(1));
            let (rows, valid) = simulate_rows(&system, &k, &cfg)?;
            let file = out_path(&dir, &out);
            write_csv(&file, &rows)?;
            eprintln!("{valid} of {} paths finite -> {}", cfg.n_paths, file.display());
            Ok(true)
        }
        Command::Verify { out } => {
            let report = run_verify(&s);
            let text = report.to_json();
            let file = out_path(&dir, &out);
            if let Some(parent) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&file, &text).with_context(|| format!("writing {}", file.display()))?;
            print!("{text}");
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
