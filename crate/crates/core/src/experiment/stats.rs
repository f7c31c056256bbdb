//! Seed derivation and campaign statistics.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed of realization `index`: the `index`-th output of a SplitMix64 stream
/// started at `master`. The finalizer is a bijection and the counter never
/// repeats, so distinct indices get distinct seeds.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const HIST_LOW: f64 = 0.9;
pub const HIST_BIN_WIDTH: f64 = 0.001;
pub const HIST_BINS: usize = 100;

/// Counts of final figures of merit: one underflow bin below `HIST_LOW`, then
/// `HIST_BINS` half-open bins of width `HIST_BIN_WIDTH`. The last bin also
/// takes `Φ = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub underflow: usize,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(values: &[f64]) -> Self {
        let mut h = Histogram {
            underflow: 0,
            counts: vec![0; HIST_BINS],
        };
        for &phi in values {
            match Self::bin_of(phi) {
                None => h.underflow += 1,
                Some(b) => h.counts[b] += 1,
            }
        }
        h
    }

    /// `None` is the underflow bin.
    pub fn bin_of(phi: f64) -> Option<usize> {
        if !(phi >= HIST_LOW) {
            return None;
        }
        let b = ((phi - HIST_LOW) / HIST_BIN_WIDTH).floor() as usize;
        Some(b.min(HIST_BINS - 1))
    }

    pub fn bin_edges(b: usize) -> (f64, f64) {
        (
            HIST_LOW + b as f64 * HIST_BIN_WIDTH,
            HIST_LOW + (b + 1) as f64 * HIST_BIN_WIDTH,
        )
    }

    pub fn total(&self) -> usize {
        self.underflow + self.counts.iter().sum::<usize>()
    }
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of SplitMix64 seeded with 0
        assert_eq!(split_seed(0, 0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(split_seed(0, 1), 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(split_seed(0, 2), 0x06c4_5d18_8009_454f);
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..10_000).map(|r| split_seed(7, r)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::from_values(&[0.5, 0.9, 0.9005, 0.9991, 1.0, -3.0, f64::NAN]);
        assert_eq!(h.underflow, 3);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[99], 2);
        assert_eq!(h.total(), 7);
        let (lo, hi) = Histogram::bin_edges(99);
        assert!((lo - 0.999).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.iqr(), 2.0);
        let one = Summary::of(&[0.25]);
        assert_eq!((one.mean, one.max, one.iqr()), (0.25, 0.25, 0.0));
        assert_eq!(quantile_sorted(&[0.0, 1.0], 0.25), 0.25);
    }
}
