use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pulseforge::experiment::files::format_float;
use pulseforge::experiment::{
    continuous_reference, run_compare, run_continuous, run_discrete_campaign, run_lloyd_quantization, run_oracle_check,
    ExperimentConfig, InitStrategy,
};
use pulseforge::Result;

#[derive(Debug, Parser)]
#[command(name = "pulseforge", version, about = "Continuous and discrete phase-pulse optimization for spin ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Number of codebook values
    #[arg(long, global = true)]
    m: Option<usize>,

    /// Comma-separated codebook sizes
    #[arg(long = "m-list", global = true, value_delimiter = ',')]
    m_list: Vec<usize>,

    /// Number of realizations per campaign
    #[arg(long, global = true)]
    realizations: Option<usize>,

    /// Discrete initialization: random, uniform_forward or from_lloyd
    #[arg(long, global = true, value_parser = parse_init)]
    init: Option<InitStrategy>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Continuous GRAPE from the parabolic profile
    Continuous,
    /// Discrete GRAPE campaign for --m, or for every size in --m-list
    Discrete {
        /// Continuous reference for --init from_lloyd
        #[arg(long)]
        pulse: Option<PathBuf>,
    },
    /// Lloyd quantization of a continuous pulse
    Lloyd {
        /// Continuous pulse file (defaults to the `continuous` output)
        #[arg(long)]
        pulse: Option<PathBuf>,
    },
    /// Discrete GRAPE against Lloyd for every size in --m-list
    Compare {
        #[arg(long)]
        pulse: Option<PathBuf>,
    },
    /// Run the brute-force and finite-difference verifiers
    OracleCheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

fn parse_init(s: &str) -> std::result::Result<InitStrategy, String> {
    s.parse().map_err(|e: pulseforge::Error| e.to_string())
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(r) = self.realizations {
            cfg.n_realizations = r;
        }
        if let Some(init) = self.init {
            cfg.init = init;
        }
        cfg.workers = self.workers.or(cfg.workers);
        cfg.validate()?;
        Ok(cfg)
    }

    fn m_values(&self, cfg: &ExperimentConfig) -> Vec<usize> {
        if self.m_list.is_empty() {
            vec![cfg.m]
        } else {
            self.m_list.clone()
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = cli.config()?;
    match &cli.command {
        Command::Continuous => {
            let res = run_continuous(&cfg)?;
            println!(
                "phi={} iterations={} termination={} pulse={}",
                format_float(res.phi),
                res.trace.iterations,
                res.trace.termination.as_str(),
                res.pulse_path.display()
            );
        }
        Command::Discrete { pulse } => {
            let reference = match cfg.init {
                InitStrategy::FromLloyd => Some(continuous_reference(&cfg, pulse.as_deref())?),
                _ => None,
            };
            for m in cli.m_values(&cfg) {
                let cfg_m = ExperimentConfig { m, ..cfg.clone() };
                let res = run_discrete_campaign(&cfg_m, reference.as_ref())?;
                println!(
                    "M={m} init={} best_phi={} mean_phi={} iqr={} dir={}",
                    res.init,
                    format_float(res.best_phi()),
                    format_float(res.summary.mean),
                    format_float(res.summary.iqr()),
                    res.dir.display()
                );
            }
        }
        Command::Lloyd { pulse } => {
            let reference = continuous_reference(&cfg, pulse.as_deref())?;
            for m in cli.m_values(&cfg) {
                let res = run_lloyd_quantization(&ExperimentConfig { m, ..cfg.clone() }, &reference)?;
                println!(
                    "M={m} phi={} phi_continuous={} distortion={} dir={}",
                    format_float(res.phi),
                    format_float(res.phi_continuous),
                    format_float(res.outcome.codebook.distortion),
                    res.dir.display()
                );
            }
        }
        Command::Compare { pulse } => {
            if cli.m_list.is_empty() {
                return Err(pulseforge::Error::InvalidInput("compare needs --m-list".into()));
            }
            let reference = continuous_reference(&cfg, pulse.as_deref())?;
            println!("M,phi_discrete_grape,phi_lloyd,phi_continuous");
            for row in run_compare(&cfg, &cli.m_list, &reference)? {
                println!(
                    "{},{},{},{}",
                    row.m,
                    format_float(row.phi_discrete_grape),
                    format_float(row.phi_lloyd),
                    format_float(row.phi_continuous)
                );
            }
        }
        Command::OracleCheck { instances } => {
            let checks = run_oracle_check(&cfg, *instances)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in checks.iter().filter(|c| !c.passed) {
                println!(
                    "FAIL {} {} deviation={}",
                    c.report.oracle,
                    c.report.instance,
                    format_float(c.report.max_deviation)
                );
            }
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
