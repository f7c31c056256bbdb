//! Discrete-pulse GRAPE: the phase may only take one of `M` codebook values.
//!
//! Every iteration first moves the codebook values along the aggregated
//! gradient with the mapping fixed, then sweeps the slices in time order and
//! reassigns each to the codebook entry that maximizes the figure of merit
//! with all other slices fixed. The sweep uses costates computed once from the
//! pre-sweep pulse: the costate after slice `j` only depends on slices not yet
//! visited, so every candidate score is the exact current figure of merit.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, pairwise_sum};
use crate::grape::{
    backtrack, phase_gradient_with, ConvergenceWindow, GradientForm, GrapeOptions, LineSearchOutcome,
    OptimizeTrace, Termination,
};
use crate::spin::{fidelity_with, wrap_angle, BlochVector, Drive, EnsembleSpec, PhasePulse, Rotation, SliceRotations};

/// Codebook of `M` phases plus the slice-to-codebook mapping.
///
/// Indices are zero-based in memory; the text file format writes them one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePulse {
    values: Vec<f64>,
    mapping: Vec<usize>,
}

impl DiscretePulse {
    pub fn new(values: Vec<f64>, mapping: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("codebook must hold at least one value"));
        }
        if let Some((j, &k)) = mapping.iter().enumerate().find(|(_, &k)| k >= values.len()) {
            return Err(Error::invalid(format!(
                "mapping[{j}] = {k} is outside a codebook of {} values",
                values.len()
            )));
        }
        Ok(DiscretePulse {
            values: values.into_iter().map(wrap_angle).collect(),
            mapping,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }
    pub fn m(&self) -> usize {
        self.values.len()
    }
    pub fn n_steps(&self) -> usize {
        self.mapping.len()
    }

    /// Realized phase sequence `θ_j = v[p(j)]`.
    pub fn materialize(&self) -> PhasePulse {
        PhasePulse::new(self.mapping.iter().map(|&k| self.values[k]).collect())
    }

    /// Relabel the codebook: new entry `perm[k]` holds old entry `k`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let m = self.m();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("relabel needs a permutation of the codebook indices"));
        }
        let mut values = vec![0.0; m];
        for (k, &p) in perm.iter().enumerate() {
            values[p] = self.values[k];
        }
        let mapping = self.mapping.iter().map(|&k| perm[k]).collect();
        DiscretePulse::new(values, mapping)
    }
}

/// Realized phase sequence of a discrete pulse.
pub fn materialize(dp: &DiscretePulse) -> PhasePulse {
    dp.materialize()
}

/// Slice rotations for every (codebook value, offset) pair.
pub(crate) struct RotationTable {
    n_off: usize,
    rots: Vec<Rotation>,
}

impl RotationTable {
    pub fn new(spec: &EnsembleSpec, values: &[f64]) -> Self {
        let n_off = spec.n_off();
        let mut rots = Vec::with_capacity(values.len() * n_off);
        for &v in values {
            let drive = Drive::new(v);
            rots.extend((0..n_off).map(|i| spec.rotation(drive, i)));
        }
        RotationTable { n_off, rots }
    }

    #[inline]
    pub fn get(&self, value: usize, offset: usize) -> &Rotation {
        &self.rots[value * self.n_off + offset]
    }
}

struct MappedRotations<'a> {
    table: &'a RotationTable,
    mapping: &'a [usize],
}

impl SliceRotations for MappedRotations<'_> {
    #[inline]
    fn rotation(&self, slice: usize, offset: usize) -> Rotation {
        *self.table.get(self.mapping[slice], offset)
    }
}

fn check(spec: &EnsembleSpec, dp: &DiscretePulse) -> Result<()> {
    spec.check_len(dp.n_steps())
}

fn discrete_fidelity(spec: &EnsembleSpec, values: &[f64], mapping: &[usize]) -> f64 {
    let table = RotationTable::new(spec, values);
    fidelity_with(spec, &MappedRotations { table: &table, mapping })
}

/// Figure of merit of a discrete pulse.
pub fn fidelity(spec: &EnsembleSpec, dp: &DiscretePulse) -> Result<f64> {
    check(spec, dp)?;
    Ok(discrete_fidelity(spec, dp.values(), dp.mapping()))
}

fn aggregate(m: usize, mapping: &[usize], slice_grad: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; m];
    for (&k, &gj) in mapping.iter().zip(slice_grad) {
        g[k] += gj;
    }
    g
}

fn value_gradient_with(
    spec: &EnsembleSpec,
    dp: &DiscretePulse,
    table: &RotationTable,
    form: GradientForm,
) -> Vec<f64> {
    let phases: Vec<f64> = dp.mapping.iter().map(|&k| dp.values[k]).collect();
    let slice_grad = phase_gradient_with(spec, &phases, &MappedRotations { table, mapping: &dp.mapping }, form);
    aggregate(dp.m(), &dp.mapping, &slice_grad)
}

/// `∂Φ/∂v_m = Σ_{j | p(j) = m} ∂Φ/∂θ_j`; unused codebook entries get 0.
pub fn value_gradient(spec: &EnsembleSpec, dp: &DiscretePulse) -> Result<Vec<f64>> {
    check(spec, dp)?;
    let table = RotationTable::new(spec, dp.values());
    Ok(value_gradient_with(spec, dp, &table, GradientForm::SliceStart))
}

/// One backtracking step on the codebook values with the mapping fixed.
pub fn update_values(
    spec: &EnsembleSpec,
    dp: &DiscretePulse,
    options: &GrapeOptions,
) -> Result<(DiscretePulse, LineSearchOutcome)> {
    check(spec, dp)?;
    let table = RotationTable::new(spec, dp.values());
    let phi0 = fidelity_with(spec, &MappedRotations { table: &table, mapping: dp.mapping() });
    Ok(update_values_from(spec, dp, &table, phi0, options, None))
}

fn update_values_from(
    spec: &EnsembleSpec,
    dp: &DiscretePulse,
    table: &RotationTable,
    phi0: f64,
    options: &GrapeOptions,
    previous_step: Option<f64>,
) -> (DiscretePulse, LineSearchOutcome) {
    let grad = value_gradient_with(spec, dp, table, options.gradient);
    let outcome = backtrack(dp.values(), &grad, phi0, options, previous_step, |v| {
        discrete_fidelity(spec, v, dp.mapping())
    });
    let next = DiscretePulse {
        values: outcome.params.clone(),
        mapping: dp.mapping.clone(),
    };
    (next, outcome)
}

/// Result of a greedy mapping sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub pulse: DiscretePulse,
    /// Exact figure of merit of the returned pulse.
    pub phi: f64,
    /// Figure of merit before the sweep.
    pub phi_before: f64,
    /// Figure of merit after each of the `N` slice decisions.
    pub choice_phi: Vec<f64>,
    pub changed: bool,
}

/// Time-ordered greedy reassignment of every slice to its best codebook value.
///
/// Ties keep the incumbent; other ties go to the lowest index.
pub fn mapping_sweep(spec: &EnsembleSpec, dp: &DiscretePulse) -> Result<SweepOutcome> {
    check(spec, dp)?;
    let table = RotationTable::new(spec, dp.values());
    Ok(sweep_with(spec, dp, &table))
}

/// Coefficients of `1, cos v, sin v, cos² v, sin² v, cos v sin v` in a slice score.
const SCORE_TERMS: usize = 6;

fn sweep_with(spec: &EnsembleSpec, dp: &DiscretePulse, table: &RotationTable) -> SweepOutcome {
    let n = spec.n_steps();
    let n_off = spec.n_off();
    let m = dp.m();
    let inv_n = 1.0 / n_off as f64;

    // costates[j * n_off + i]: target pulled back to t = j·dt under the pre-sweep pulse
    let per_offset: Vec<Vec<BlochVector>> = map_indexed(n_off, |i| {
        let mut out = vec![BlochVector::ZERO; n + 1];
        out[n] = spec.target();
        for j in (0..n).rev() {
            out[j] = table.get(dp.mapping[j], i).apply_inverse(out[j + 1]);
        }
        out
    });
    let mut costates = vec![BlochVector::ZERO; (n + 1) * n_off];
    for (i, traj) in per_offset.iter().enumerate() {
        for (j, &c) in traj.iter().enumerate() {
            costates[j * n_off + i] = c;
        }
    }
    drop(per_offset);

    let initial = spec.initial();
    let before: Vec<f64> = (0..n_off).map(|i| costates[i].dot(initial)).collect();
    let phi_before = pairwise_sum(&before) * inv_n;

    let value_trig: Vec<(f64, f64)> = dp.values.iter().map(|v| v.sin_cos()).collect();
    let axes: Vec<(f64, f64, f64, f64)> = (0..n_off).map(|i| spec.axis_terms(i)).collect();
    let mut states = vec![initial; n_off];
    let mut mapping = dp.mapping.clone();
    let mut choice_phi = Vec::with_capacity(n);
    let mut changed = false;
    for j in 0..n {
        let after = &costates[(j + 1) * n_off..(j + 2) * n_off];
        let incumbent = mapping[j];
        // a · R(v) s is a quadratic form in (cos v, sin v)
        let mut k_sum = [0.0; SCORE_TERMS];
        for i in 0..n_off {
            let (al, be, sn, c) = axes[i];
            let (a, st) = (after[i], states[i]);
            let q = st.cross(a);
            let w = 1.0 - c;
            let terms = [
                c * a.dot(st) + sn * be * q.z + w * be * be * st.z * a.z,
                sn * al * q.x + w * al * be * (st.x * a.z + st.z * a.x),
                sn * al * q.y + w * al * be * (st.y * a.z + st.z * a.y),
                w * al * al * st.x * a.x,
                w * al * al * st.y * a.y,
                w * al * al * (st.x * a.y + st.y * a.x),
            ];
            for (acc, t) in k_sum.iter_mut().zip(terms) {
                *acc += t;
            }
        }
        for acc in &mut k_sum {
            *acc *= inv_n;
        }
        let scores: Vec<f64> = value_trig
            .iter()
            .map(|&(sv, cv)| {
                k_sum[0] + k_sum[1] * cv + k_sum[2] * sv + k_sum[3] * cv * cv + k_sum[4] * sv * sv + k_sum[5] * cv * sv
            })
            .collect();
        let mut best = 0;
        for k in 1..m {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        if scores[incumbent] >= scores[best] {
            best = incumbent;
        }
        if best != incumbent {
            changed = true;
            mapping[j] = best;
        }
        choice_phi.push(scores[best]);
        for (i, s) in states.iter_mut().enumerate() {
            *s = table.get(best, i).apply(*s);
        }
    }

    let phi = fidelity_with(spec, &MappedRotations { table, mapping: &mapping });
    SweepOutcome {
        pulse: DiscretePulse {
            values: dp.values.clone(),
            mapping,
        },
        phi,
        phi_before,
        choice_phi,
        changed,
    }
}

/// Settings for [`optimize_discrete`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOptions {
    pub ascent: GrapeOptions,
    /// Run the mapping sweep after each value update.
    pub sweep: bool,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        DiscreteOptions {
            ascent: GrapeOptions {
                max_iters: 2000,
                ..GrapeOptions::default()
            },
            sweep: true,
        }
    }
}

/// Alternate value updates and mapping sweeps from `initial`.
pub fn optimize_discrete(
    spec: &EnsembleSpec,
    initial: &DiscretePulse,
    options: &DiscreteOptions,
) -> Result<OptimizeTrace<DiscretePulse>> {
    let opts = &options.ascent;
    opts.validate()?;
    check(spec, initial)?;
    let mut dp = initial.clone();
    let mut table = RotationTable::new(spec, dp.values());
    let mut phi = fidelity_with(spec, &MappedRotations { table: &table, mapping: dp.mapping() });
    let mut trace = vec![phi];
    let mut window = ConvergenceWindow::new(opts);
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;
    let mut last_step = None;
    while iterations < opts.max_iters {
        let phi_start = phi;
        let (next, outcome) = update_values_from(spec, &dp, &table, phi, opts, last_step);
        last_step = Some(outcome.step);
        let values_stalled = outcome.stalled;
        if !values_stalled {
            dp = next;
            phi = outcome.phi;
            table = RotationTable::new(spec, dp.values());
        }
        let mut mapping_changed = false;
        if options.sweep {
            let sweep = sweep_with(spec, &dp, &table);
            // a change that only wins by rounding is dropped to keep the trace monotone
            if sweep.changed && sweep.phi >= phi {
                mapping_changed = true;
                dp = sweep.pulse;
                phi = sweep.phi;
            }
        }
        if values_stalled && !mapping_changed {
            termination = Termination::Stalled;
            break;
        }
        iterations += 1;
        trace.push(phi);
        if window.push(phi - phi_start) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(OptimizeTrace {
        phi: trace,
        pulse: dp,
        iterations,
        termination,
    })
}

/// Codebook values i.i.d. uniform on `[0, 2π)`, mapping i.i.d. uniform on the
/// codebook, from a ChaCha8 stream seeded with `seed`.
pub fn init_random(n_steps: usize, m: usize, seed: u64) -> Result<DiscretePulse> {
    if m == 0 {
        return Err(Error::invalid("M must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..m).map(|_| rng.gen_range(0.0..TAU)).collect();
    let mapping = (0..n_steps).map(|_| rng.gen_range(0..m)).collect();
    DiscretePulse::new(values, mapping)
}

/// Equidistant codebook `v_m = 2π m / M`, mapping chosen by one greedy sweep
/// starting from the all-zero-phase pulse.
pub fn init_uniform_forward(spec: &EnsembleSpec, m: usize) -> Result<DiscretePulse> {
    if m == 0 {
        return Err(Error::invalid("M must be >= 1"));
    }
    let values = (0..m).map(|k| TAU * k as f64 / m as f64).collect();
    let start = DiscretePulse::new(values, vec![0; spec.n_steps()])?;
    Ok(mapping_sweep(spec, &start)?.pulse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grape::{optimize_continuous, phase_gradient};
    use crate::spin::{fidelity as phase_fidelity, uniform_offsets};
    use std::f64::consts::PI;

    fn small_spec(n_off: usize, n: usize) -> EnsembleSpec {
        let w = TAU * 1e4;
        EnsembleSpec::new(uniform_offsets(w, n_off), w, n as f64 * 2.5e-6, n, BlochVector::PLUS_Z, BlochVector::MINUS_Z)
            .unwrap()
    }

    #[test]
    fn materialize_examples() {
        let dp = DiscretePulse::new(vec![0.0, PI], vec![0, 0, 1]).unwrap();
        assert_eq!(dp.materialize().phases(), &[0.0, 0.0, PI]);
        let dp = DiscretePulse::new(vec![1.5], vec![0; 4]).unwrap();
        assert_eq!(dp.materialize().phases(), &[1.5; 4]);
        assert!(DiscretePulse::new(vec![0.0, 1.0], vec![0, 2]).is_err());
        assert!(DiscretePulse::new(vec![], vec![]).is_err());
    }

    #[test]
    fn relabel_rejects_non_permutations() {
        let dp = DiscretePulse::new(vec![0.0, 1.0], vec![0, 1]).unwrap();
        assert!(dp.relabel(&[0, 0]).is_err());
        assert_eq!(dp.relabel(&[1, 0]).unwrap().materialize(), dp.materialize());
    }

    #[test]
    fn identity_mapping_gradient_equals_phase_gradient() {
        let spec = small_spec(4, 6);
        let values = vec![0.4, 2.0, 3.1, 5.0, 1.1, 0.2];
        let dp = DiscretePulse::new(values.clone(), (0..6).collect()).unwrap();
        let gv = value_gradient(&spec, &dp).unwrap();
        let gp = phase_gradient(&spec, &PhasePulse::new(values)).unwrap();
        assert_eq!(gv, gp);
    }

    #[test]
    fn unused_codebook_entry_has_zero_gradient() {
        let spec = small_spec(3, 5);
        let dp = DiscretePulse::new(vec![0.4, 2.0, 3.1], vec![0, 0, 2, 2, 0]).unwrap();
        let g = value_gradient(&spec, &dp).unwrap();
        assert_eq!(g[1], 0.0);
        assert!(g[0] != 0.0);
    }

    #[test]
    fn single_value_codebook_cannot_be_remapped() {
        let spec = small_spec(3, 5);
        let dp = DiscretePulse::new(vec![1.0], vec![0; 5]).unwrap();
        let out = mapping_sweep(&spec, &dp).unwrap();
        assert!(!out.changed);
        assert_eq!(out.pulse, dp);
        assert_eq!(out.phi, fidelity(&spec, &dp).unwrap());
    }

    #[test]
    fn sweep_scores_are_exact_figures_of_merit() {
        let spec = small_spec(3, 7);
        let dp = init_random(7, 3, 11).unwrap();
        let out = mapping_sweep(&spec, &dp).unwrap();
        assert!((out.phi_before - fidelity(&spec, &dp).unwrap()).abs() < 1e-14);
        assert!((out.choice_phi[6] - out.phi).abs() < 1e-14);
        let mut prev = out.phi_before;
        for &p in &out.choice_phi {
            assert!(p >= prev - 1e-15);
            prev = p;
        }
    }

    #[test]
    fn zero_gradient_leaves_values() {
        let w0 = 1.0;
        let spec = EnsembleSpec::new(vec![0.0], w0, PI, 1, BlochVector::PLUS_Z, BlochVector::MINUS_Z).unwrap();
        let dp = DiscretePulse::new(vec![0.0], vec![0]).unwrap();
        let (next, out) = update_values(&spec, &dp, &GrapeOptions::default()).unwrap();
        assert!(out.stalled);
        assert_eq!(next, dp);
    }

    #[test]
    fn identity_mapping_without_sweep_is_continuous_grape() {
        let spec = small_spec(5, 12);
        let values: Vec<f64> = (0..12).map(|j| (j as f64 * 0.7).rem_euclid(TAU)).collect();
        let opts = DiscreteOptions {
            ascent: GrapeOptions {
                max_iters: 40,
                ..GrapeOptions::default()
            },
            sweep: false,
        };
        let dp = DiscretePulse::new(values.clone(), (0..12).collect()).unwrap();
        let d = optimize_discrete(&spec, &dp, &opts).unwrap();
        let c = optimize_continuous(&spec, &PhasePulse::new(values), &opts.ascent).unwrap();
        assert_eq!(d.phi, c.phi);
        assert_eq!(d.pulse.materialize(), c.pulse);
        assert_eq!(d.termination, c.termination);
    }

    #[test]
    fn random_init_is_deterministic() {
        let a = init_random(50, 4, 99).unwrap();
        let b = init_random(50, 4, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_random(50, 4, 100).unwrap());
        assert!(init_random(5, 0, 1).is_err());
    }

    #[test]
    fn uniform_forward_codebook() {
        let spec = small_spec(3, 8);
        let dp = init_uniform_forward(&spec, 4).unwrap();
        let expected = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (a, b) in dp.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(init_uniform_forward(&spec, 0).is_err());
    }

    #[test]
    fn discrete_fidelity_matches_materialized() {
        let spec = small_spec(6, 20);
        let dp = init_random(20, 5, 3).unwrap();
        assert_eq!(fidelity(&spec, &dp).unwrap(), phase_fidelity(&spec, &dp.materialize()).unwrap());
    }

    #[test]
    fn short_discrete_run_is_monotone() {
        let spec = small_spec(8, 30);
        let dp = init_random(30, 3, 5).unwrap();
        let opts = DiscreteOptions {
            ascent: GrapeOptions {
                max_iters: 30,
                ..GrapeOptions::default()
            },
            sweep: true,
        };
        let tr = optimize_discrete(&spec, &dp, &opts).unwrap();
        assert!(tr.phi.windows(2).all(|w| w[1] >= w[0]));
    }
}
