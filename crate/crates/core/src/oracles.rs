//! Brute-force and finite-difference verifiers.
//!
//! Only the spin propagation primitives are shared with the optimizers; the
//! enumeration, finite differences and circular arithmetic here are written
//! independently so that they can check the fast paths.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::spin::{fidelity, EnsembleSpec, PhasePulse};

/// Comparison between an oracle and a candidate implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub oracle: String,
    pub instance: String,
    pub oracle_values: Vec<f64>,
    pub candidate_values: Vec<f64>,
    pub max_deviation: f64,
}

impl OracleReport {
    pub fn new(
        oracle: impl Into<String>,
        instance: impl Into<String>,
        oracle_values: Vec<f64>,
        candidate_values: Vec<f64>,
    ) -> Self {
        let max_deviation = oracle_values
            .iter()
            .zip(&candidate_values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        OracleReport {
            oracle: oracle.into(),
            instance: instance.into(),
            oracle_values,
            candidate_values,
            max_deviation,
        }
    }
}

/// Central differences of the exactly propagated figure of merit.
pub fn fd_gradient(spec: &EnsembleSpec, pulse: &PhasePulse, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be > 0"));
    }
    spec.check_len(pulse.len())?;
    let base = pulse.phases();
    (0..base.len())
        .map(|j| {
            let mut up = base.to_vec();
            up[j] += h;
            let mut down = base.to_vec();
            down[j] -= h;
            Ok((fidelity(spec, &PhasePulse::new(up))? - fidelity(spec, &PhasePulse::new(down))?) / (2.0 * h))
        })
        .collect()
}

/// Largest instance the mapping enumeration accepts.
pub const MAX_MAPPINGS: u64 = 1_000_000;

/// Exhaustive search over all `M^N` mappings of `values` onto the slices.
/// Returns the first optimum in lexicographic mapping order.
pub fn brute_force_mapping(spec: &EnsembleSpec, values: &[f64]) -> Result<(Vec<usize>, f64)> {
    let n = spec.n_steps();
    let m = values.len();
    if m == 0 {
        return Err(Error::invalid("codebook must hold at least one value"));
    }
    let count = (m as u64).checked_pow(n as u32).filter(|&c| c <= MAX_MAPPINGS);
    let Some(count) = count else {
        return Err(Error::TooLarge(format!("{m}^{n} mappings exceed {MAX_MAPPINGS}")));
    };
    let mut mapping = vec![0usize; n];
    let mut best = (mapping.clone(), f64::NEG_INFINITY);
    for _ in 0..count {
        let pulse = PhasePulse::new(mapping.iter().map(|&k| values[k]).collect());
        let phi = fidelity(spec, &pulse)?;
        if phi > best.1 {
            best = (mapping.clone(), phi);
        }
        // odometer increment, last slice fastest
        for digit in mapping.iter_mut().rev() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }
    Ok(best)
}

fn circle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > TAU / 2.0 {
        TAU - d
    } else {
        d
    }
}

fn nearest_sum(phases: &[f64], centroids: &[f64]) -> f64 {
    phases
        .iter()
        .map(|&u| centroids.iter().map(|&y| circle_gap(u, y)).fold(f64::INFINITY, f64::min))
        .sum()
}

fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, acc: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if acc.len() == k {
            f(acc);
            return;
        }
        for i in start..n {
            if n - i < k - acc.len() {
                break;
            }
            acc.push(i);
            rec(i + 1, n, k, acc, f);
            acc.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Global minimum of the nearest-centroid distortion over every partition of
/// the circularly sorted phases into at most `M` contiguous arcs, each
/// represented by its unwrapped arc mean.
///
/// Optimal cells of a one-dimensional quantizer are intervals, so on the
/// circle it suffices to enumerate the cut positions between neighbours.
pub fn exhaustive_quantizer(phases: &[f64], m: usize) -> Result<(Vec<f64>, f64)> {
    if phases.is_empty() || m == 0 {
        return Err(Error::invalid("need at least one phase and one centroid"));
    }
    if phases.len() > 12 || m > 4 {
        return Err(Error::TooLarge(format!(
            "exhaustive quantizer limited to N <= 12, M <= 4 (got N = {}, M = {m})",
            phases.len()
        )));
    }
    let mut u: Vec<f64> = phases.iter().map(|p| p.rem_euclid(TAU)).map(|p| if p >= TAU { 0.0 } else { p }).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len();
    let mut best: (Vec<f64>, f64) = (Vec::new(), f64::INFINITY);
    for k in 1..=m.min(n) {
        // a cut at c means an arc starts at sorted index c
        for_each_combination(n, k, &mut |cuts: &[usize]| {
            let centroids: Vec<f64> = (0..k)
                .map(|a| {
                    let start = cuts[a];
                    let end = if a + 1 < k { cuts[a + 1] } else { cuts[0] + n };
                    let first = u[start];
                    let len = end - start;
                    let mean_off: f64 =
                        (start..end).map(|i| (u[i % n] - first).rem_euclid(TAU)).sum::<f64>() / len as f64;
                    (first + mean_off).rem_euclid(TAU)
                })
                .collect();
            let j = nearest_sum(&u, &centroids);
            if j < best.1 {
                best = (centroids, j);
            }
        });
    }
    best.0.sort_by(f64::total_cmp);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{uniform_offsets, BlochVector};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn fd_of_empty_pulse_is_empty() {
        let spec = EnsembleSpec::new(vec![0.0], 1.0, 0.0, 0, BlochVector::MINUS_Z, BlochVector::MINUS_Z).unwrap();
        assert!(fd_gradient(&spec, &PhasePulse::new(vec![]), 1e-6).unwrap().is_empty());
    }

    #[test]
    fn fd_vanishes_without_drive() {
        let spec = EnsembleSpec::new(vec![0.0, 1.0], 0.0, 1.0, 4, BlochVector::MINUS_Z, BlochVector::MINUS_Z).unwrap();
        let g = fd_gradient(&spec, &PhasePulse::new(vec![0.3, 1.0, 2.0, 3.0]), 1e-5).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fd_richardson_consistency() {
        let w = TAU * 1e4;
        let spec =
            EnsembleSpec::new(uniform_offsets(w, 3), w, 6.0 * 0.5e-6, 6, BlochVector::PLUS_Z, BlochVector::MINUS_Z)
                .unwrap();
        let pulse = PhasePulse::new(vec![0.1, 2.0, 4.0, 1.0, 5.0, 3.0]);
        let a = fd_gradient(&spec, &pulse, 1e-3).unwrap();
        let b = fd_gradient(&spec, &pulse, 1e-4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn brute_force_single_value() {
        let spec = EnsembleSpec::new(vec![0.0], 1.0, 1.0, 5, BlochVector::PLUS_Z, BlochVector::MINUS_Z).unwrap();
        let (mapping, phi) = brute_force_mapping(&spec, &[0.0]).unwrap();
        assert_eq!(mapping, vec![0; 5]);
        assert!((phi - fidelity(&spec, &PhasePulse::constant(0.0, 5)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn two_quarter_turns_invert() {
        // ω0 Δt = π/2 per slice
        let w0 = 1.0;
        let spec = EnsembleSpec::new(vec![0.0], w0, PI / w0, 2, BlochVector::PLUS_Z, BlochVector::MINUS_Z).unwrap();
        let (mapping, phi) = brute_force_mapping(&spec, &[0.0, PI]).unwrap();
        assert!((phi - 1.0).abs() < 1e-12);
        assert_eq!(mapping[0], mapping[1]);

        let spec = EnsembleSpec::new(vec![0.0], w0, FRAC_PI_2 / w0, 1, BlochVector::PLUS_Z, BlochVector::MINUS_Z).unwrap();
        assert!(brute_force_mapping(&spec, &[0.0, PI]).unwrap().1.abs() < 1e-12);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let spec = EnsembleSpec::new(vec![0.0], 1.0, 1.0, 30, BlochVector::PLUS_Z, BlochVector::MINUS_Z).unwrap();
        assert!(matches!(brute_force_mapping(&spec, &[0.0, 1.0]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn exhaustive_quantizer_examples() {
        let phases = [0.3, 1.7, 4.0, 5.9];
        let (_, j) = exhaustive_quantizer(&phases, 4).unwrap();
        assert!(j.abs() < 1e-12);

        let (c, j) = exhaustive_quantizer(&[0.1, 0.2, 2.0, 2.1], 2).unwrap();
        assert!((j - 0.2).abs() < 1e-12);
        assert!((c[0] - 0.15).abs() < 1e-12 && (c[1] - 2.05).abs() < 1e-12);

        assert!(matches!(exhaustive_quantizer(&[0.0; 13], 2), Err(Error::TooLarge(_))));
        assert!(matches!(exhaustive_quantizer(&[0.0; 3], 5), Err(Error::TooLarge(_))));
    }

    #[test]
    fn combinations_are_counted() {
        let mut count = 0;
        for_each_combination(12, 4, &mut |_| count += 1);
        assert_eq!(count, 495);
    }
}
