//! Bloch-picture propagation of an inhomogeneous ensemble of uncoupled spins.
//!
//! Each isochromat with offset `ω` evolves as `dM/dt = Ω × M` with the
//! effective field `Ω = (ω0 cos θ, ω0 sin θ, ω)`. Over a slice of constant
//! phase the evolution is an exact rotation about `Ω` by `|Ω| dt`, so the
//! propagation carries no time-discretization error.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, pairwise_sum};

/// Below this rotation angle (rad) the Rodrigues coefficients are replaced by
/// their second-order Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Reduce an angle to `[0, 2π)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Magnetization of one isochromat.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector::new(0.0, 0.0, 0.0);
    pub const PLUS_Z: BlochVector = BlochVector::new(0.0, 0.0, 1.0);
    pub const MINUS_Z: BlochVector = BlochVector::new(0.0, 0.0, -1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: BlochVector) -> BlochVector {
        BlochVector::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs_diff(self, other: BlochVector) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl Add for BlochVector {
    type Output = BlochVector;
    fn add(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for BlochVector {
    type Output = BlochVector;
    fn sub(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for BlochVector {
    type Output = BlochVector;
    fn neg(self) -> BlochVector {
        BlochVector::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for BlochVector {
    type Output = BlochVector;
    fn mul(self, s: f64) -> BlochVector {
        BlochVector::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Proper rotation stored as a row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Propagator of `dM/dt = Ω × M` over `dt`: rotation about `Ω` by `|Ω| dt`.
    pub fn from_field(omega: BlochVector, dt: f64) -> Rotation {
        let a = omega * dt;
        let angle = a.norm();
        if angle == 0.0 {
            return Rotation::IDENTITY;
        }
        if angle < SMALL_ANGLE {
            // I + [a]x + [a]x^2 / 2, with [a]x^2 = a a^T - |a|^2 I
            let h = 0.5;
            let sq = angle * angle;
            return Rotation {
                m: [
                    [
                        1.0 + h * (a.x * a.x - sq),
                        -a.z + h * a.x * a.y,
                        a.y + h * a.x * a.z,
                    ],
                    [
                        a.z + h * a.y * a.x,
                        1.0 + h * (a.y * a.y - sq),
                        -a.x + h * a.y * a.z,
                    ],
                    [
                        -a.y + h * a.z * a.x,
                        a.x + h * a.z * a.y,
                        1.0 + h * (a.z * a.z - sq),
                    ],
                ],
            };
        }
        let (s, c) = angle.sin_cos();
        Rotation::from_unit_axis(a * (1.0 / angle), s, c)
    }

    /// Rodrigues matrix from a unit axis and the sine and cosine of the angle.
    #[inline]
    pub(crate) fn from_unit_axis(n: BlochVector, s: f64, c: f64) -> Rotation {
        let t = 1.0 - c;
        Rotation {
            m: [
                [c + t * n.x * n.x, t * n.x * n.y - s * n.z, t * n.x * n.z + s * n.y],
                [t * n.y * n.x + s * n.z, c + t * n.y * n.y, t * n.y * n.z - s * n.x],
                [t * n.z * n.x - s * n.y, t * n.z * n.y + s * n.x, c + t * n.z * n.z],
            ],
        }
    }

    #[inline]
    pub fn apply(&self, v: BlochVector) -> BlochVector {
        let m = &self.m;
        BlochVector::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Apply the inverse rotation (the transpose).
    #[inline]
    pub fn apply_inverse(&self, v: BlochVector) -> BlochVector {
        let m = &self.m;
        BlochVector::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }
}

/// Control phase `θ` with its cosine and sine evaluated once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Drive {
    pub cos: f64,
    pub sin: f64,
}

impl Drive {
    #[inline]
    pub fn new(theta: f64) -> Drive {
        let (sin, cos) = theta.sin_cos();
        Drive { cos, sin }
    }

    #[inline]
    pub fn field(self, offset: f64, omega0: f64) -> BlochVector {
        BlochVector::new(omega0 * self.cos, omega0 * self.sin, offset)
    }

    /// `∂Ω/∂θ`
    #[inline]
    pub fn field_derivative(self, omega0: f64) -> BlochVector {
        BlochVector::new(-omega0 * self.sin, omega0 * self.cos, 0.0)
    }
}

/// Effective rotating-frame field `(ω0 cos θ, ω0 sin θ, ω)` in rad/s.
pub fn effective_field(theta: f64, offset: f64, omega0: f64) -> BlochVector {
    Drive::new(theta).field(offset, omega0)
}

/// Exact propagation of one Bloch vector through a slice of constant field.
pub fn step_propagate(m: BlochVector, omega_eff: BlochVector, dt: f64) -> BlochVector {
    Rotation::from_field(omega_eff, dt).apply(m)
}

/// Offsets equally spaced over `[-ω_max, ω_max]`, both endpoints included.
/// A single offset sits at the center.
pub fn uniform_offsets(omega_max: f64, n_off: usize) -> Vec<f64> {
    match n_off {
        0 => Vec::new(),
        1 => vec![0.0],
        n => {
            let step = 2.0 * omega_max / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        omega_max
                    } else {
                        -omega_max + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// Physical definition of an ensemble control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    offsets: Vec<f64>,
    omega0: f64,
    tf: f64,
    n_steps: usize,
    dt: f64,
    initial: BlochVector,
    target: BlochVector,
    rotors: Vec<OffsetRotor>,
}

/// Per-offset rotation data that does not depend on the phase: with a
/// constant drive amplitude, `|Ω| = sqrt(ω0² + ω²)` is fixed for each offset.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OffsetRotor {
    inv_norm: f64,
    angle: f64,
    sin: f64,
    cos: f64,
}

impl OffsetRotor {
    fn new(omega0: f64, offset: f64, dt: f64) -> Self {
        let norm = omega0.hypot(offset);
        let angle = norm * dt;
        let (sin, cos) = angle.sin_cos();
        OffsetRotor {
            inv_norm: if norm > 0.0 { 1.0 / norm } else { 0.0 },
            angle,
            sin,
            cos,
        }
    }
}

impl EnsembleSpec {
    pub fn new(
        offsets: Vec<f64>,
        omega0: f64,
        tf: f64,
        n_steps: usize,
        initial: BlochVector,
        target: BlochVector,
    ) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::invalid("ensemble needs at least one offset"));
        }
        if offsets.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("offsets must be finite"));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("offsets must be sorted ascending"));
        }
        if !(omega0 >= 0.0 && omega0.is_finite()) {
            return Err(Error::invalid(format!("omega0 must be >= 0, got {omega0}")));
        }
        if !(tf >= 0.0 && tf.is_finite()) {
            return Err(Error::invalid(format!("tf must be >= 0, got {tf}")));
        }
        if n_steps > 0 && tf == 0.0 {
            return Err(Error::invalid("tf must be positive when n_steps > 0"));
        }
        let dt = if n_steps == 0 { 0.0 } else { tf / n_steps as f64 };
        let rotors = offsets.iter().map(|&w| OffsetRotor::new(omega0, w, dt)).collect();
        Ok(EnsembleSpec {
            rotors,
            offsets,
            omega0,
            tf,
            n_steps,
            dt,
            initial,
            target,
        })
    }

    /// Broadband inversion: `ω_max/2π = ω0/2π = 10 kHz`, 200 offsets,
    /// `t_f = 0.18 ms`, `Δt = 0.5 µs` (N = 360), `+z → -z`.
    pub fn broadband_inversion() -> Self {
        let two_pi = TAU;
        EnsembleSpec::new(
            uniform_offsets(two_pi * 1.0e4, 200),
            two_pi * 1.0e4,
            1.8e-4,
            360,
            BlochVector::PLUS_Z,
            BlochVector::MINUS_Z,
        )
        .expect("benchmark parameters are valid")
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
    pub fn n_off(&self) -> usize {
        self.offsets.len()
    }
    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn tf(&self) -> f64 {
        self.tf
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn initial(&self) -> BlochVector {
        self.initial
    }
    pub fn target(&self) -> BlochVector {
        self.target
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_steps {
            Err(Error::invalid(format!(
                "pulse has {len} slices, ensemble expects {}",
                self.n_steps
            )))
        } else {
            Ok(())
        }
    }

    /// Axis components `(α, β)` with `n = (α cos θ, α sin θ, β)`, and the sine
    /// and cosine of the rotation angle, for offset index `i`.
    #[inline]
    pub(crate) fn axis_terms(&self, i: usize) -> (f64, f64, f64, f64) {
        let r = &self.rotors[i];
        (self.omega0 * r.inv_norm, self.offsets[i] * r.inv_norm, r.sin, r.cos)
    }

    /// Rotation of a slice driven with phase `drive` for offset index `i`.
    #[inline]
    pub(crate) fn rotation(&self, drive: Drive, i: usize) -> Rotation {
        let rotor = &self.rotors[i];
        let field = drive.field(self.offsets[i], self.omega0);
        if rotor.angle < SMALL_ANGLE {
            return Rotation::from_field(field, self.dt);
        }
        Rotation::from_unit_axis(field * rotor.inv_norm, rotor.sin, rotor.cos)
    }
}

/// Piecewise-constant phase sequence, one angle in `[0, 2π)` per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePulse(Vec<f64>);

impl PhasePulse {
    pub fn new(theta: Vec<f64>) -> Self {
        PhasePulse(theta.into_iter().map(wrap_angle).collect())
    }

    pub fn constant(theta: f64, n: usize) -> Self {
        PhasePulse::new(vec![theta; n])
    }

    /// Adiabatic-like initial guess `θ(t) = (π/2)(2t/t_f - 1)^2` sampled at
    /// slice midpoints.
    pub fn parabolic(n: usize) -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        PhasePulse::new(
            (0..n)
                .map(|j| {
                    let s = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
                    half_pi * s * s
                })
                .collect(),
        )
    }

    pub fn phases(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Forward and adjoint trajectories of every isochromat.
///
/// Both are indexed by time point: `forward[i][j]` and `adjoint[i][j]` refer
/// to `t = j·dt` for offset `i`, so `forward[i][0]` is the initial state and
/// `adjoint[i][N]` is the target.
#[derive(Debug, Clone)]
pub struct PropagationRecord {
    pub forward: Vec<Vec<BlochVector>>,
    pub adjoint: Vec<Vec<BlochVector>>,
}

impl PropagationRecord {
    pub fn finals(&self) -> Vec<BlochVector> {
        self.forward
            .iter()
            .map(|traj| *traj.last().expect("trajectory has the initial state"))
            .collect()
    }
}

/// Source of the slice rotations for every `(slice, offset)` pair.
pub(crate) trait SliceRotations: Sync {
    fn rotation(&self, slice: usize, offset: usize) -> Rotation;
}

/// Rotations computed on the fly from a phase sequence.
pub(crate) struct PulseRotations<'a> {
    spec: &'a EnsembleSpec,
    drives: Vec<Drive>,
}

impl<'a> PulseRotations<'a> {
    pub fn new(spec: &'a EnsembleSpec, phases: &[f64]) -> Self {
        PulseRotations {
            spec,
            drives: phases.iter().map(|&t| Drive::new(t)).collect(),
        }
    }
}

impl SliceRotations for PulseRotations<'_> {
    #[inline]
    fn rotation(&self, slice: usize, offset: usize) -> Rotation {
        self.spec.rotation(self.drives[slice], offset)
    }
}

pub(crate) fn final_state_with<R: SliceRotations>(
    spec: &EnsembleSpec,
    rots: &R,
    offset: usize,
) -> BlochVector {
    let mut m = spec.initial;
    for j in 0..spec.n_steps {
        m = rots.rotation(j, offset).apply(m);
    }
    m
}

pub(crate) fn fidelity_with<R: SliceRotations>(spec: &EnsembleSpec, rots: &R) -> f64 {
    let target = spec.target;
    let contributions = map_indexed(spec.n_off(), |i| final_state_with(spec, rots, i).dot(target));
    pairwise_sum(&contributions) / spec.n_off() as f64
}

/// Final Bloch vectors of every isochromat.
pub fn final_states(spec: &EnsembleSpec, pulse: &PhasePulse) -> Result<Vec<BlochVector>> {
    spec.check_len(pulse.len())?;
    let rots = PulseRotations::new(spec, pulse.phases());
    Ok(map_indexed(spec.n_off(), |i| final_state_with(spec, &rots, i)))
}

/// Forward propagation storing every intermediate state together with the
/// adjoint trajectory.
pub fn propagate_ensemble(spec: &EnsembleSpec, pulse: &PhasePulse) -> Result<PropagationRecord> {
    spec.check_len(pulse.len())?;
    let rots = PulseRotations::new(spec, pulse.phases());
    let n = spec.n_steps;
    let pairs = map_indexed(spec.n_off(), |i| {
        let slice_rots: Vec<Rotation> = (0..n).map(|j| rots.rotation(j, i)).collect();
        let mut fwd = Vec::with_capacity(n + 1);
        let mut m = spec.initial;
        fwd.push(m);
        for r in &slice_rots {
            m = r.apply(m);
            fwd.push(m);
        }
        (fwd, backward_from(spec.target, &slice_rots))
    });
    let (forward, adjoint) = pairs.into_iter().unzip();
    Ok(PropagationRecord { forward, adjoint })
}

fn backward_from(target: BlochVector, slice_rots: &[Rotation]) -> Vec<BlochVector> {
    let n = slice_rots.len();
    let mut adj = vec![BlochVector::ZERO; n + 1];
    adj[n] = target;
    for j in (0..n).rev() {
        adj[j] = slice_rots[j].apply_inverse(adj[j + 1]);
    }
    adj
}

/// Target pulled back through the inverse propagators: `adjoint[i][j]` is the
/// costate at `t = j·dt`.
pub fn adjoint_propagate(spec: &EnsembleSpec, pulse: &PhasePulse) -> Result<Vec<Vec<BlochVector>>> {
    spec.check_len(pulse.len())?;
    let rots = PulseRotations::new(spec, pulse.phases());
    let n = spec.n_steps;
    Ok(map_indexed(spec.n_off(), |i| {
        let slice_rots: Vec<Rotation> = (0..n).map(|j| rots.rotation(j, i)).collect();
        backward_from(spec.target, &slice_rots)
    }))
}

/// `Φ = (1/n_off) Σ M_i(t_f)·F`
pub fn ensemble_fidelity(finals: &[BlochVector], target: BlochVector) -> Result<f64> {
    if finals.is_empty() {
        return Err(Error::invalid("fidelity of an empty ensemble"));
    }
    let dots: Vec<f64> = finals.iter().map(|m| m.dot(target)).collect();
    Ok(pairwise_sum(&dots) / finals.len() as f64)
}

/// Figure of merit of a phase pulse.
pub fn fidelity(spec: &EnsembleSpec, pulse: &PhasePulse) -> Result<f64> {
    spec.check_len(pulse.len())?;
    Ok(fidelity_with(spec, &PulseRotations::new(spec, pulse.phases())))
}
