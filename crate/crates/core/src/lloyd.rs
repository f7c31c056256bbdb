//! Lloyd quantization of phases on the circle.
//!
//! Works only with angles: the quantizer never looks at spin dynamics. Cells
//! are the arcs between consecutive boundaries, centroids are the arithmetic
//! means of the members after unwrapping them into the arc, and boundaries are
//! the circular midpoints of adjacent centroids. A cell left empty is reseeded
//! at the phase farthest from every other centroid.

use std::f64::consts::TAU;

use crate::discrete::DiscretePulse;
use crate::error::{Error, Result};
use crate::exec::pairwise_sum;
use crate::spin::wrap_angle;

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Symmetric distance on the circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    d.min(TAU - d)
}

/// Centroids and boundaries after some number of Lloyd iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularCodebook {
    pub centroids: Vec<f64>,
    pub boundaries: Vec<f64>,
    pub iteration: usize,
    pub distortion: f64,
}

/// Quantization of a phase sequence.
#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub codebook: CircularCodebook,
    /// Nearest centroid of every input phase.
    pub quantized: Vec<f64>,
    /// `J_1, J_2, …`
    pub distortion_history: Vec<f64>,
    /// Bins that were empty in the final centroid update.
    pub empty_bins: usize,
}

/// Bin means with per-bin emptiness flags.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMeans {
    /// Circular order of the bins, one entry per boundary.
    pub means: Vec<f64>,
    pub empty: Vec<bool>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Arc `j` runs from `b[j]` to `b[j+1]`, the last one to `b[0] + 2π`.
fn arc_end(b: &[f64], j: usize) -> f64 {
    if j + 1 < b.len() {
        b[j + 1]
    } else {
        b[0] + TAU
    }
}

/// Bin index of `u` and its representative unwrapped into `[b[0], b[0] + 2π)`.
fn locate(b: &[f64], u: f64) -> (usize, f64) {
    let u = wrap_angle(u);
    let unwrapped = if u >= b[0] { u } else { u + TAU };
    let j = b.partition_point(|&x| x <= unwrapped).saturating_sub(1);
    (j, unwrapped)
}

fn check_boundaries(b: &[f64]) -> Result<()> {
    if b.is_empty() {
        return Err(Error::invalid("need at least one boundary"));
    }
    if b.iter().any(|&x| !(0.0..TAU).contains(&x)) || b.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("boundaries must be sorted angles in [0, 2π)"));
    }
    Ok(())
}

fn means_with_fallback(phases: &[f64], b: &[f64], fallback: &[f64]) -> BinMeans {
    let m = b.len();
    // (wrapped, unwrapped) pairs per bin
    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); m];
    for &u in phases {
        let (j, unwrapped) = locate(b, u);
        members[j].push((wrap_angle(u), unwrapped));
    }
    let mut means = Vec::with_capacity(m);
    let mut empty = Vec::with_capacity(m);
    for (j, bin) in members.iter().enumerate() {
        let Some(&(anchor, first)) = bin.first() else {
            means.push(fallback[j]);
            empty.push(true);
            continue;
        };
        // averaged as offsets from the first member so singleton bins are exact
        let offsets: Vec<f64> = bin.iter().map(|&(_, x)| x - first).collect();
        means.push(wrap_angle(anchor + pairwise_sum(&offsets) / bin.len() as f64));
        empty.push(false);
    }
    BinMeans { means, empty }
}

fn arc_midpoints(b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|j| wrap_angle(0.5 * (b[j] + arc_end(b, j))))
        .collect()
}

/// Mean of the phases falling in each arc of `boundaries`. Empty arcs report
/// their midpoint and are flagged.
pub fn bin_means(phases: &[f64], boundaries: &[f64]) -> Result<BinMeans> {
    check_boundaries(boundaries)?;
    if phases.is_empty() {
        return Err(Error::invalid("need at least one phase"));
    }
    Ok(means_with_fallback(phases, boundaries, &arc_midpoints(boundaries)))
}

/// `J = Σ_i min_j d(u_i, Y_j)`
pub fn distortion(phases: &[f64], centroids: &[f64]) -> Result<f64> {
    if centroids.is_empty() {
        return Err(Error::invalid("need at least one centroid"));
    }
    let d: Vec<f64> = phases
        .iter()
        .map(|&u| circular_distance(u, centroids[project(u, centroids)]))
        .collect();
    Ok(pairwise_sum(&d))
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn project(u: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &y) in centroids.iter().enumerate() {
        let d = circular_distance(u, y);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Circular midpoints between adjacent centroids, reduced and sorted. The last
/// boundary bisects the arc from the largest centroid to the smallest + 2π.
pub fn update_boundaries(centroids: &[f64]) -> Result<Vec<f64>> {
    if centroids.is_empty() {
        return Err(Error::invalid("need at least one centroid"));
    }
    let y = sorted(centroids.iter().map(|&c| wrap_angle(c)).collect());
    Ok(sorted(arc_midpoints(&y)))
}

/// `M` boundaries equally spaced around the circle, offset by half a cell:
/// `B_j = 2π (j + 1/2) / M`.
pub fn initial_boundaries(m: usize) -> Vec<f64> {
    (0..m).map(|j| TAU * (j as f64 + 0.5) / m as f64).collect()
}

/// Lloyd iteration from the default equally spaced boundaries.
pub fn run_lloyd(phases: &[f64], m: usize, epsilon: f64, max_iters: usize) -> Result<LloydOutcome> {
    if m == 0 {
        return Err(Error::invalid("M must be >= 1"));
    }
    run_lloyd_from(phases, &initial_boundaries(m), epsilon, max_iters)
}

/// Lloyd iteration from explicit initial boundaries.
pub fn run_lloyd_from(
    phases: &[f64],
    initial: &[f64],
    epsilon: f64,
    max_iters: usize,
) -> Result<LloydOutcome> {
    if phases.is_empty() {
        return Err(Error::invalid("need at least one phase"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be > 0"));
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be >= 1"));
    }
    let b0 = sorted(initial.iter().map(|&b| wrap_angle(b)).collect());
    check_boundaries(&b0)?;
    let u: Vec<f64> = phases.iter().map(|&p| wrap_angle(p)).collect();

    let mut boundaries = b0;
    let mut previous: Option<Vec<f64>> = None;
    let mut j_prev = f64::INFINITY;
    let mut history = Vec::new();
    let mut k = 0;
    loop {
        k += 1;
        let fallback = match &previous {
            None => arc_midpoints(&boundaries),
            Some(prev) => stale_fallback(&boundaries, prev),
        };
        let mut bm = means_with_fallback(&u, &boundaries, &fallback);
        reseed_empty(&u, &mut bm);
        let empty_bins = bm.empty.iter().filter(|&&e| e).count();
        let centroids = sorted(bm.means);
        let j = distortion(&u, &centroids)?;
        history.push(j);
        let next = update_boundaries(&centroids)?;
        if (j - j_prev).abs() > epsilon && k < max_iters {
            boundaries = next;
            previous = Some(centroids);
            j_prev = j;
            continue;
        }
        let quantized = u.iter().map(|&x| centroids[project(x, &centroids)]).collect();
        return Ok(LloydOutcome {
            codebook: CircularCodebook {
                centroids,
                boundaries: next,
                iteration: k,
                distortion: j,
            },
            quantized,
            distortion_history: history,
            empty_bins,
        });
    }
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Moves empty bins onto the phases farthest from every live centroid, one at
/// a time. Each such phase replaces the empty bin whose fallback lies nearest
/// to it. Distances within `TIE_TOLERANCE` tie and go to the lowest index.
/// Bins keep their fallback once every phase sits on a centroid.
fn reseed_empty(u: &[f64], bm: &mut BinMeans) {
    let mut live: Vec<f64> = bm
        .means
        .iter()
        .zip(&bm.empty)
        .filter(|(_, &e)| !e)
        .map(|(&y, _)| y)
        .collect();
    let mut open: Vec<usize> = (0..bm.means.len()).filter(|&j| bm.empty[j]).collect();
    while !open.is_empty() {
        let mut worst = (0.0, None);
        for &x in u {
            let d = live.iter().map(|&y| circular_distance(x, y)).fold(f64::INFINITY, f64::min);
            if d > worst.0 + TIE_TOLERANCE {
                worst = (d, Some(x));
            }
        }
        let (_, Some(x)) = worst else { break };
        let mut pick = 0;
        for k in 1..open.len() {
            if circular_distance(bm.means[open[k]], x) < circular_distance(bm.means[open[pick]], x) {
                pick = k;
            }
        }
        bm.means[open.swap_remove(pick)] = x;
        live.push(x);
    }
}

/// For each arc, the previous centroid nearest its start, else the arc midpoint.
fn stale_fallback(b: &[f64], previous: &[f64]) -> Vec<f64> {
    let mut out: Vec<Option<(f64, f64)>> = vec![None; b.len()];
    for &y in previous {
        let (j, unwrapped) = locate(b, y);
        let offset = unwrapped - b[j];
        if out[j].is_none_or(|(best, _)| offset < best) {
            out[j] = Some((offset, y));
        }
    }
    let mids = arc_midpoints(b);
    out.into_iter()
        .zip(mids)
        .map(|(o, mid)| o.map_or(mid, |(_, y)| y))
        .collect()
}

/// Codebook `Y` with `mapping[j]` the index of `quantized[j]` in `Y`.
pub fn to_discrete_pulse(quantized: &[f64], centroids: &[f64]) -> Result<DiscretePulse> {
    let mapping = quantized
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            centroids.iter().position(|&y| y == w).ok_or_else(|| {
                Error::invalid(format!("quantized phase {j} ({w}) is not a codebook value"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DiscretePulse::new(centroids.to_vec(), mapping)
}
