//! Experiment harness: benchmark runs, multi-start campaigns and result files.
//!
//! Every command writes into a subdirectory of the configured output
//! directory. Numeric outputs are a pure function of the configuration and
//! the master seed; wall-clock times live in separate `timing` files so the
//! CSVs and summaries can be compared byte for byte.

pub mod config;
pub mod files;
pub mod stats;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{ExperimentConfig, InitStrategy};
use files::{format_float, read_discrete_pulse, read_phase_pulse, write_csv, write_discrete_pulse, write_phase_pulse, write_summary};
pub use stats::{split_seed, Histogram, Summary};

use crate::discrete::{self, init_random, init_uniform_forward, optimize_discrete, DiscreteOptions, DiscretePulse};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, with_workers};
use crate::grape::{optimize_continuous, phase_gradient, GrapeOptions, OptimizeTrace, Termination};
use crate::lloyd::{self, run_lloyd, LloydOutcome};
use crate::oracles::{brute_force_mapping, exhaustive_quantizer, fd_gradient, OracleReport};
use crate::spin::{fidelity, uniform_offsets, BlochVector, EnsembleSpec, PhasePulse};

/// Largest accepted gap between a reported Φ and the Φ re-evaluated from the
/// exported pulse file.
pub const EXPORT_TOLERANCE: f64 = 1e-12;

fn ascent_options(cfg: &ExperimentConfig, default_iters: usize) -> GrapeOptions {
    GrapeOptions {
        max_iters: cfg.max_iters.unwrap_or(default_iters),
        tol_delta_phi: cfg.tol_delta_phi,
        ..GrapeOptions::default()
    }
}

pub fn continuous_options(cfg: &ExperimentConfig) -> GrapeOptions {
    ascent_options(cfg, config::CONTINUOUS_MAX_ITERS)
}

pub fn discrete_options(cfg: &ExperimentConfig) -> DiscreteOptions {
    DiscreteOptions {
        ascent: ascent_options(cfg, config::DISCRETE_MAX_ITERS),
        ..DiscreteOptions::default()
    }
}

fn check_export(path: &Path, reported: f64, recomputed: f64) -> Result<f64> {
    if (reported - recomputed).abs() > EXPORT_TOLERANCE {
        return Err(Error::File {
            path: path.to_path_buf(),
            message: format!("re-evaluated figure of merit {recomputed} differs from reported {reported}"),
        });
    }
    Ok(recomputed)
}

/// Write `pulse` and return Φ evaluated from the file just written.
pub fn export_phase_pulse(spec: &EnsembleSpec, path: &Path, pulse: &PhasePulse, phi: f64) -> Result<f64> {
    write_phase_pulse(path, pulse, spec.dt())?;
    let (back, _) = read_phase_pulse(path)?;
    let recomputed = fidelity(spec, &back)?;
    check_export(path, phi, recomputed)
}

/// Write `dp` and return Φ evaluated from the file just written.
pub fn export_discrete_pulse(spec: &EnsembleSpec, path: &Path, dp: &DiscretePulse, phi: f64) -> Result<f64> {
    write_discrete_pulse(path, dp)?;
    let back = read_discrete_pulse(path)?;
    // materialized through the continuous path so the check does not reuse the rotation table
    let recomputed = fidelity(spec, &back.materialize())?;
    check_export(path, phi, recomputed)
}

fn trace_rows(phi: &[f64]) -> Vec<Vec<String>> {
    phi.iter()
        .enumerate()
        .map(|(k, &p)| vec![k.to_string(), format_float(p)])
        .collect()
}

#[derive(Debug, Clone)]
pub struct ContinuousResult {
    pub trace: OptimizeTrace<PhasePulse>,
    /// Φ re-evaluated from the exported pulse.
    pub phi: f64,
    pub pulse_path: PathBuf,
    pub wall_s: f64,
}

/// Continuous GRAPE from the parabolic phase profile.
pub fn run_continuous(cfg: &ExperimentConfig) -> Result<ContinuousResult> {
    cfg.validate()?;
    let spec = cfg.ensemble()?;
    let options = continuous_options(cfg);
    let start = Instant::now();
    let trace = with_workers(cfg.workers, || {
        optimize_continuous(&spec, &PhasePulse::parabolic(spec.n_steps()), &options)
    })?;
    let wall_s = start.elapsed().as_secs_f64();

    let dir = cfg.out_dir.join("continuous");
    let pulse_path = dir.join("pulse.txt");
    let phi = export_phase_pulse(&spec, &pulse_path, &trace.pulse, trace.final_phi())?;
    write_csv(&dir.join("trace.csv"), &["iteration", "phi"], &trace_rows(&trace.phi))?;
    write_summary(
        &dir.join("summary.txt"),
        &[
            ("n_steps", spec.n_steps().to_string()),
            ("n_off", spec.n_off().to_string()),
            ("phi_initial", format_float(trace.phi[0])),
            ("phi_final", format_float(phi)),
            ("iterations", trace.iterations.to_string()),
            ("termination", trace.termination.as_str().to_string()),
        ],
    )?;
    write_summary(&dir.join("timing.txt"), &[("wall_s", format_float(wall_s))])?;
    Ok(ContinuousResult {
        trace,
        phi,
        pulse_path,
        wall_s,
    })
}

/// Continuous reference pulse: the given file if any, else the output of a
/// previous `continuous` run in the same output directory, else a fresh run.
pub fn continuous_reference(cfg: &ExperimentConfig, pulse_file: Option<&Path>) -> Result<PhasePulse> {
    let n = cfg.n_steps()?;
    let stored = cfg.out_dir.join("continuous").join("pulse.txt");
    let path = match pulse_file {
        Some(p) => p.to_path_buf(),
        None if stored.exists() => stored,
        None => return Ok(run_continuous(cfg)?.trace.pulse),
    };
    let (pulse, _) = read_phase_pulse(&path)?;
    if pulse.len() != n {
        return Err(Error::File {
            path,
            message: format!("pulse has {} slices, config needs {n}", pulse.len()),
        });
    }
    Ok(pulse)
}

#[derive(Debug, Clone)]
pub struct LloydResult {
    pub outcome: LloydOutcome,
    pub pulse: DiscretePulse,
    /// Φ of the quantized pulse, re-evaluated from the export.
    pub phi: f64,
    pub phi_continuous: f64,
    pub dir: PathBuf,
}

/// Quantize `reference` with `cfg.m` Lloyd levels.
pub fn run_lloyd_quantization(cfg: &ExperimentConfig, reference: &PhasePulse) -> Result<LloydResult> {
    cfg.validate()?;
    let spec = cfg.ensemble()?;
    spec.check_len(reference.len())?;
    let outcome = run_lloyd(reference.phases(), cfg.m, cfg.lloyd_epsilon, lloyd::DEFAULT_MAX_ITERS)?;
    let pulse = lloyd::to_discrete_pulse(&outcome.quantized, &outcome.codebook.centroids)?;
    let phi_continuous = fidelity(&spec, reference)?;

    let dir = cfg.out_dir.join(format!("lloyd_M{}", cfg.m));
    let phi = export_discrete_pulse(&spec, &dir.join("pulse.txt"), &pulse, discrete::fidelity(&spec, &pulse)?)?;
    let cb = &outcome.codebook;
    let rows: Vec<Vec<String>> = (0..cb.centroids.len())
        .map(|k| vec![(k + 1).to_string(), format_float(cb.centroids[k]), format_float(cb.boundaries[k])])
        .collect();
    write_csv(&dir.join("codebook.csv"), &["index", "centroid", "boundary"], &rows)?;
    let rows: Vec<Vec<String>> = outcome
        .distortion_history
        .iter()
        .enumerate()
        .map(|(k, &j)| vec![(k + 1).to_string(), format_float(j)])
        .collect();
    write_csv(&dir.join("distortion.csv"), &["iteration", "distortion"], &rows)?;
    write_summary(
        &dir.join("summary.txt"),
        &[
            ("m", cfg.m.to_string()),
            ("phi", format_float(phi)),
            ("phi_continuous", format_float(phi_continuous)),
            ("distortion", format_float(cb.distortion)),
            ("iterations", cb.iteration.to_string()),
            ("empty_bins", outcome.empty_bins.to_string()),
        ],
    )?;
    Ok(LloydResult {
        outcome,
        pulse,
        phi,
        phi_continuous,
        dir,
    })
}

#[derive(Debug, Clone)]
pub struct RealizationRecord {
    pub index: usize,
    pub seed: u64,
    pub phi_initial: f64,
    /// Φ re-evaluated from the exported pulse.
    pub phi: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub wall_s: f64,
    pub pulse_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub m: usize,
    pub init: InitStrategy,
    pub records: Vec<RealizationRecord>,
    /// Index of the first realization attaining the largest Φ.
    pub best: usize,
    pub best_pulse: DiscretePulse,
    pub histogram: Histogram,
    pub summary: Summary,
    pub dir: PathBuf,
}

impl CampaignResult {
    pub fn best_phi(&self) -> f64 {
        self.records[self.best].phi
    }

    pub fn phis(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.phi).collect()
    }
}

pub fn campaign_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(format!("discrete_M{}_{}", cfg.m, cfg.init))
}

/// `n_realizations` discrete GRAPE runs. `reference` seeds `from_lloyd`.
pub fn run_discrete_campaign(cfg: &ExperimentConfig, reference: Option<&PhasePulse>) -> Result<CampaignResult> {
    cfg.validate()?;
    let spec = cfg.ensemble()?;
    let n = spec.n_steps();
    let m = cfg.m;
    let options = discrete_options(cfg);
    let shared_init = match cfg.init {
        InitStrategy::Random => None,
        InitStrategy::UniformForward => Some(init_uniform_forward(&spec, m)?),
        InitStrategy::FromLloyd => {
            let reference = reference.ok_or_else(|| Error::invalid("from_lloyd needs a continuous reference pulse"))?;
            spec.check_len(reference.len())?;
            let q = run_lloyd(reference.phases(), m, cfg.lloyd_epsilon, lloyd::DEFAULT_MAX_ITERS)?;
            Some(lloyd::to_discrete_pulse(&q.quantized, &q.codebook.centroids)?)
        }
    };

    let runs = with_workers(cfg.workers, || {
        map_indexed(cfg.n_realizations, |r| {
            let seed = split_seed(cfg.seed, r as u64);
            let start = Instant::now();
            let initial = match &shared_init {
                Some(dp) => dp.clone(),
                None => init_random(n, m, seed)?,
            };
            let trace = optimize_discrete(&spec, &initial, &options)?;
            Ok((seed, trace, start.elapsed().as_secs_f64()))
        })
    });

    let dir = campaign_dir(cfg);
    let mut records = Vec::with_capacity(runs.len());
    let mut traces = Vec::with_capacity(runs.len());
    for (index, run) in runs.into_iter().enumerate() {
        let (seed, trace, wall_s) = run?;
        let pulse_path = dir.join("pulses").join(format!("r{index:03}.txt"));
        let phi = export_discrete_pulse(&spec, &pulse_path, &trace.pulse, trace.final_phi())?;
        records.push(RealizationRecord {
            index,
            seed,
            phi_initial: trace.phi[0],
            phi,
            iterations: trace.iterations,
            termination: trace.termination,
            wall_s,
            pulse_path,
        });
        traces.push(trace);
    }
    let phis: Vec<f64> = records.iter().map(|r| r.phi).collect();
    let best = (0..phis.len()).fold(0, |b, i| if phis[i] > phis[b] { i } else { b });
    let histogram = Histogram::from_values(&phis);
    let summary = Summary::of(&phis);
    let best_trace = traces.swap_remove(best);

    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                r.seed.to_string(),
                format_float(r.phi_initial),
                format_float(r.phi),
                r.iterations.to_string(),
                r.termination.as_str().to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("realizations.csv"),
        &["realization", "seed", "phi_initial", "phi_final", "iterations", "termination"],
        &rows,
    )?;
    let mut rows = vec![vec![
        "underflow".to_string(),
        format_float(f64::NEG_INFINITY),
        format_float(stats::HIST_LOW),
        histogram.underflow.to_string(),
    ]];
    rows.extend(histogram.counts.iter().enumerate().map(|(b, &c)| {
        let (lo, hi) = Histogram::bin_edges(b);
        vec![b.to_string(), format_float(lo), format_float(hi), c.to_string()]
    }));
    write_csv(&dir.join("histogram.csv"), &["bin", "lower", "upper", "count"], &rows)?;
    write_csv(&dir.join("best_trace.csv"), &["iteration", "phi"], &trace_rows(&best_trace.phi))?;
    write_discrete_pulse(&dir.join("best_pulse.txt"), &best_trace.pulse)?;
    write_summary(
        &dir.join("summary.txt"),
        &[
            ("m", m.to_string()),
            ("init", cfg.init.to_string()),
            ("n_realizations", cfg.n_realizations.to_string()),
            ("seed", cfg.seed.to_string()),
            ("best_realization", best.to_string()),
            ("best_phi", format_float(phis[best])),
            ("mean_phi", format_float(summary.mean)),
            ("max_phi", format_float(summary.max)),
            ("min_phi", format_float(summary.min)),
            ("q1_phi", format_float(summary.q1)),
            ("median_phi", format_float(summary.median)),
            ("q3_phi", format_float(summary.q3)),
            ("iqr_phi", format_float(summary.iqr())),
        ],
    )?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![r.index.to_string(), format_float(r.wall_s)])
        .collect();
    write_csv(&dir.join("timing.csv"), &["realization", "wall_s"], &rows)?;

    Ok(CampaignResult {
        m,
        init: cfg.init,
        records,
        best,
        best_pulse: best_trace.pulse,
        histogram,
        summary,
        dir,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub m: usize,
    pub phi_discrete_grape: f64,
    pub phi_lloyd: f64,
    pub phi_continuous: f64,
}

/// Best-of-campaign discrete GRAPE against Lloyd quantization of `reference`
/// for every `M` in `m_list`.
pub fn run_compare(cfg: &ExperimentConfig, m_list: &[usize], reference: &PhasePulse) -> Result<Vec<CompareRow>> {
    if m_list.is_empty() {
        return Err(Error::invalid("M list must not be empty"));
    }
    let spec = cfg.ensemble()?;
    spec.check_len(reference.len())?;
    let phi_continuous = fidelity(&spec, reference)?;
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let cfg_m = ExperimentConfig { m, ..cfg.clone() };
        let campaign = run_discrete_campaign(&cfg_m, Some(reference))?;
        let lloyd = run_lloyd_quantization(&cfg_m, reference)?;
        rows.push(CompareRow {
            m,
            phi_discrete_grape: campaign.best_phi(),
            phi_lloyd: lloyd.phi,
            phi_continuous,
        });
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                format_float(r.phi_discrete_grape),
                format_float(r.phi_lloyd),
                format_float(r.phi_continuous),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("compare.csv"),
        &["M", "phi_discrete_grape", "phi_lloyd", "phi_continuous"],
        &table,
    )?;
    Ok(rows)
}

/// Oracle comparison together with its verdict.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub report: OracleReport,
    pub passed: bool,
}

/// Relative error budget of the first-order gradient against finite differences.
pub const GRADIENT_REL_TOLERANCE: f64 = 0.07;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient against central differences on a tiny instance at the benchmark rates.
pub fn check_gradient(seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=16);
    let n_off = rng.gen_range(1..=5);
    let w = std::f64::consts::TAU * 1e4;
    let spec = EnsembleSpec::new(uniform_offsets(w, n_off), w, n as f64 * 0.5e-6, n, BlochVector::PLUS_Z, BlochVector::MINUS_Z)?;
    let pulse = PhasePulse::new((0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect());
    let g = phase_gradient(&spec, &pulse)?;
    let fd = fd_gradient(&spec, &pulse, 1e-6)?;
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let dot: f64 = g.iter().zip(&fd).map(|(a, b)| a * b).sum();
    let fd_norm = norm2(&fd);
    let passed = norm2(&diff) <= GRADIENT_REL_TOLERANCE * fd_norm + 1e-9 && (fd_norm <= 1e-8 || dot > 0.0);
    Ok(OracleCheck {
        report: OracleReport::new("fd_gradient", format!("N={n} n_off={n_off} seed={seed}"), fd, g),
        passed,
    })
}

/// A greedy sweep from a random mapping never beats the exhaustive optimum.
pub fn check_sweep(seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=3);
    let n_off = rng.gen_range(1..=3);
    let w = std::f64::consts::TAU * 1e4;
    let dt = rng.gen_range(2e-6..2e-5);
    let spec = EnsembleSpec::new(uniform_offsets(w, n_off), w, n as f64 * dt, n, BlochVector::PLUS_Z, BlochVector::MINUS_Z)?;
    let dp = init_random(n, m, rng.gen())?;
    let (_, best) = brute_force_mapping(&spec, dp.values())?;
    let swept = discrete::mapping_sweep(&spec, &dp)?;
    Ok(OracleCheck {
        report: OracleReport::new("brute_force_mapping", format!("N={n} M={m} n_off={n_off} seed={seed}"), vec![best], vec![swept.phi]),
        passed: swept.phi <= best + 1e-12,
    })
}

/// Lloyd distortion never falls below the exhaustive optimum.
pub fn check_quantizer(seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=12);
    let m = rng.gen_range(1..=4);
    let phases: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let (_, j_opt) = exhaustive_quantizer(&phases, m)?;
    let out = run_lloyd(&phases, m, lloyd::DEFAULT_EPSILON, lloyd::DEFAULT_MAX_ITERS)?;
    let j = out.codebook.distortion;
    Ok(OracleCheck {
        report: OracleReport::new("exhaustive_quantizer", format!("N={n} M={m} seed={seed}"), vec![j_opt], vec![j]),
        passed: j >= j_opt - 1e-12,
    })
}

/// Run every oracle on `count` instances derived from the master seed and
/// write `oracle_check.csv`.
pub fn run_oracle_check(cfg: &ExperimentConfig, count: usize) -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::with_capacity(3 * count);
    for r in 0..count as u64 {
        let seed = split_seed(cfg.seed, r);
        checks.push(check_gradient(seed)?);
        checks.push(check_sweep(seed)?);
        checks.push(check_quantizer(seed)?);
    }
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.report.oracle.clone(),
                c.report.instance.clone(),
                format_float(c.report.max_deviation),
                c.passed.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("oracle_check.csv"),
        &["oracle", "instance", "max_deviation", "passed"],
        &rows,
    )?;
    Ok(checks)
}
