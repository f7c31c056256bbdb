//! Phase-only gradient ascent on the ensemble figure of merit.

use crate::error::{Error, Result};
use crate::exec::{map_indexed, pairwise_sum};
use crate::spin::{
    fidelity_with, wrap_angle, BlochVector, Drive, EnsembleSpec, PhasePulse, PulseRotations,
    Rotation, SliceRotations,
};

/// Settings of the ascent loop and its backtracking line search.
#[derive(Debug, Clone, PartialEq)]
pub struct GrapeOptions {
    pub max_iters: usize,
    /// Largest phase change (rad) of the first trial step; the trial step
    /// size is `max_phase_step / ‖g‖∞`.
    pub max_phase_step: f64,
    pub backtrack_factor: f64,
    /// Smallest step size tried before the search reports a stall.
    pub min_step: f64,
    pub tol_delta_phi: f64,
    /// Number of consecutive iterations below `tol_delta_phi` that count as converged.
    pub patience: usize,
    pub gradient: GradientForm,
    /// Start each search from twice the previously accepted step (capped at
    /// the `max_phase_step` trial) instead of from the cap itself.
    pub warm_start: bool,
}

/// How the per-slice derivative of the propagator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientForm {
    /// Control derivative applied at the start of the slice, first order in `Δt`.
    SliceStart,
    /// Exact derivative of the slice rotation.
    Exact,
}

impl Default for GrapeOptions {
    fn default() -> Self {
        GrapeOptions {
            max_iters: 5000,
            max_phase_step: 0.5,
            backtrack_factor: 0.5,
            min_step: 1e-12,
            tol_delta_phi: 1e-8,
            patience: 5,
            gradient: GradientForm::SliceStart,
            warm_start: false,
        }
    }
}

impl GrapeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid("backtrack_factor must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0) {
            return Err(Error::invalid("min_step must be > 0"));
        }
        if !(self.max_phase_step > 0.0) {
            return Err(Error::invalid("max_phase_step must be > 0"));
        }
        if !(self.tol_delta_phi >= 0.0) {
            return Err(Error::invalid("tol_delta_phi must be >= 0"));
        }
        Ok(())
    }
}

/// Why an optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    Stalled,
    Converged,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::MaxIters => "max_iters",
            Termination::Stalled => "stalled",
            Termination::Converged => "converged",
        }
    }
}

/// History of an optimization run. `phi[0]` is the figure of merit of the
/// initial pulse, `phi[k]` the value after iteration `k`.
#[derive(Debug, Clone)]
pub struct OptimizeTrace<P> {
    pub phi: Vec<f64>,
    pub pulse: P,
    pub iterations: usize,
    pub termination: Termination,
}

impl<P> OptimizeTrace<P> {
    pub fn final_phi(&self) -> f64 {
        *self.phi.last().expect("trace holds the initial value")
    }
}

/// `J_l(a) v`, the left Jacobian of the rotation exponential at `a` applied to `v`.
fn left_jacobian_apply(a: BlochVector, v: BlochVector) -> BlochVector {
    let phi2 = a.dot(a);
    let (c1, c2) = if phi2 < 1e-8 {
        (0.5 - phi2 / 24.0, 1.0 / 6.0 - phi2 / 120.0)
    } else {
        let phi = phi2.sqrt();
        let (s, c) = phi.sin_cos();
        ((1.0 - c) / phi2, (phi - s) / (phi2 * phi))
    };
    let av = a.cross(v);
    v + av * c1 + a.cross(av) * c2
}

/// Per-slice gradient accumulated from forward and adjoint trajectories.
pub(crate) fn phase_gradient_with<R: SliceRotations>(
    spec: &EnsembleSpec,
    phases: &[f64],
    rots: &R,
    form: GradientForm,
) -> Vec<f64> {
    let n = spec.n_steps();
    let n_off = spec.n_off();
    if n == 0 {
        return Vec::new();
    }
    let drives: Vec<Drive> = phases.iter().map(|&t| Drive::new(t)).collect();
    let derivs: Vec<BlochVector> = drives.iter().map(|d| d.field_derivative(spec.omega0())).collect();
    let target = spec.target();
    let initial = spec.initial();
    let dt = spec.dt();
    let per_offset: Vec<Vec<f64>> = map_indexed(n_off, |i| {
        let slice_rots: Vec<Rotation> = (0..n).map(|j| rots.rotation(j, i)).collect();
        let mut states = Vec::with_capacity(n + 1);
        let mut m = initial;
        states.push(m);
        for r in &slice_rots {
            m = r.apply(m);
            states.push(m);
        }
        let mut out = vec![0.0; n];
        let mut costate = target;
        match form {
            GradientForm::SliceStart => {
                for j in (0..n).rev() {
                    costate = slice_rots[j].apply_inverse(costate);
                    out[j] = costate.dot(derivs[j].cross(states[j]));
                }
            }
            GradientForm::Exact => {
                let offset = spec.offsets()[i];
                for j in (0..n).rev() {
                    let a = drives[j].field(offset, spec.omega0()) * dt;
                    let generator = left_jacobian_apply(a, derivs[j]);
                    out[j] = costate.dot(generator.cross(states[j + 1]));
                    costate = slice_rots[j].apply_inverse(costate);
                }
            }
        }
        out
    });
    let scale = dt / n_off as f64;
    let mut column = vec![0.0; n_off];
    (0..n)
        .map(|j| {
            for (c, row) in column.iter_mut().zip(&per_offset) {
                *c = row[j];
            }
            scale * pairwise_sum(&column)
        })
        .collect()
}

/// First-order adjoint gradient `∂Φ/∂θ_j ≈ (Δt/n_off) Σ_ω λ_j·(∂Ω_j/∂θ_j × M_j)`,
/// with the control derivative acting at the start of each slice.
pub fn phase_gradient(spec: &EnsembleSpec, pulse: &PhasePulse) -> Result<Vec<f64>> {
    spec.check_len(pulse.len())?;
    let rots = PulseRotations::new(spec, pulse.phases());
    Ok(phase_gradient_with(spec, pulse.phases(), &rots, GradientForm::SliceStart))
}

/// Exact gradient of the figure of merit of the piecewise-constant pulse.
pub fn phase_gradient_exact(spec: &EnsembleSpec, pulse: &PhasePulse) -> Result<Vec<f64>> {
    spec.check_len(pulse.len())?;
    let rots = PulseRotations::new(spec, pulse.phases());
    Ok(phase_gradient_with(spec, pulse.phases(), &rots, GradientForm::Exact))
}

/// Outcome of one backtracking search.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub params: Vec<f64>,
    pub phi: f64,
    pub stalled: bool,
}

/// Backtracking on angle parameters: tries `ε0, ε0β, ε0β², …` with
/// `ε0 = max_phase_step / ‖g‖∞` and accepts the first strict increase.
pub(crate) fn backtrack<F>(
    params: &[f64],
    gradient: &[f64],
    phi0: f64,
    options: &GrapeOptions,
    previous_step: Option<f64>,
    mut evaluate: F,
) -> LineSearchOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let gmax = gradient.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
    let stalled = || LineSearchOutcome {
        step: 0.0,
        params: params.to_vec(),
        phi: phi0,
        stalled: true,
    };
    if !(gmax > 0.0) || !gmax.is_finite() {
        return stalled();
    }
    let cap = options.max_phase_step / gmax;
    let mut step = match previous_step {
        Some(prev) if options.warm_start && prev > 0.0 => cap.min(2.0 * prev),
        _ => cap,
    };
    let mut trial = vec![0.0; params.len()];
    while step >= options.min_step {
        for ((t, &p), &g) in trial.iter_mut().zip(params).zip(gradient) {
            *t = wrap_angle(p + step * g);
        }
        let phi = evaluate(&trial);
        if phi > phi0 {
            return LineSearchOutcome {
                step,
                params: trial,
                phi,
                stalled: false,
            };
        }
        step *= options.backtrack_factor;
    }
    stalled()
}

/// One backtracking step along `gradient` from `pulse`.
pub fn line_search(
    spec: &EnsembleSpec,
    pulse: &PhasePulse,
    gradient: &[f64],
    options: &GrapeOptions,
) -> Result<(LineSearchOutcome, PhasePulse)> {
    spec.check_len(pulse.len())?;
    if gradient.len() != pulse.len() {
        return Err(Error::invalid("gradient length differs from pulse length"));
    }
    let phi0 = fidelity_with(spec, &PulseRotations::new(spec, pulse.phases()));
    let outcome = backtrack(pulse.phases(), gradient, phi0, options, None, |p| {
        fidelity_with(spec, &PulseRotations::new(spec, p))
    });
    let new_pulse = PhasePulse::new(outcome.params.clone());
    Ok((outcome, new_pulse))
}

/// Tracks the "ΔΦ below tolerance for k consecutive iterations" rule.
#[derive(Debug)]
pub(crate) struct ConvergenceWindow {
    tol: f64,
    patience: usize,
    run: usize,
}

impl ConvergenceWindow {
    pub fn new(options: &GrapeOptions) -> Self {
        ConvergenceWindow {
            tol: options.tol_delta_phi,
            patience: options.patience.max(1),
            run: 0,
        }
    }

    pub fn push(&mut self, delta: f64) -> bool {
        if delta < self.tol {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.run >= self.patience
    }
}

/// Continuous GRAPE from `initial`.
pub fn optimize_continuous(
    spec: &EnsembleSpec,
    initial: &PhasePulse,
    options: &GrapeOptions,
) -> Result<OptimizeTrace<PhasePulse>> {
    options.validate()?;
    spec.check_len(initial.len())?;
    let mut phases = initial.phases().to_vec();
    let mut phi = fidelity_with(spec, &PulseRotations::new(spec, &phases));
    let mut trace = vec![phi];
    let mut window = ConvergenceWindow::new(options);
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;
    let mut last_step = None;
    while iterations < options.max_iters {
        let rots = PulseRotations::new(spec, &phases);
        let grad = phase_gradient_with(spec, &phases, &rots, options.gradient);
        let outcome = backtrack(&phases, &grad, phi, options, last_step, |p| {
            fidelity_with(spec, &PulseRotations::new(spec, p))
        });
        last_step = Some(outcome.step);
        if outcome.stalled {
            termination = Termination::Stalled;
            break;
        }
        iterations += 1;
        let delta = outcome.phi - phi;
        phases = outcome.params;
        phi = outcome.phi;
        trace.push(phi);
        if window.push(delta) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(OptimizeTrace {
        phi: trace,
        pulse: PhasePulse::new(phases),
        iterations,
        termination,
    })
}
