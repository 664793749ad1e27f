//! Distribution summaries of per-hour profits.

use serde::{Deserialize, Serialize};

/// Histogram with `edges.len() == counts.len() + 1`. Bins are half-open
/// except the last, which includes its upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn empty() -> Self {
        Self {
            edges: Vec::new(),
            counts: Vec::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts `sample` into the given edges.
    pub fn with_edges(edges: &[f64], sample: &[f64]) -> Self {
        if edges.len() < 2 {
            return Self::empty();
        }
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        for &x in sample {
            // partition_point gives the number of edges <= x
            let idx = edges.partition_point(|e| *e <= x).saturating_sub(1).min(bins - 1);
            counts[idx] += 1;
        }
        Self {
            edges: edges.to_vec(),
            counts,
        }
    }
}

const MAX_BINS: usize = 1000;

/// Freedman–Diaconis bin edges for `sample`. Falls back to Sturges' rule when
/// the inter-quartile range is zero, and to a single bin when every value is
/// equal.
pub fn freedman_diaconis_edges(sample: &[f64]) -> Vec<f64> {
    if sample.is_empty() {
        return Vec::new();
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let range = hi - lo;
    if range == 0.0 {
        return vec![lo, hi];
    }
    let n = sorted.len() as f64;
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let bins = if iqr > 0.0 {
        let width = 2.0 * iqr / n.cbrt();
        (range / width).ceil() as usize
    } else {
        (n.log2().ceil() as usize) + 1
    }
    .clamp(1, MAX_BINS);
    let width = range / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    edges
}

/// Linear-interpolation quantile (the "type 7" estimator) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let i = h.floor() as usize;
            let frac = h - i as f64;
            if i + 1 < n {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            } else {
                sorted[n - 1]
            }
        }
    }
}

pub fn quantile(sample: &[f64], q: f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn mean(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        0.0
    } else {
        sample.iter().sum::<f64>() / sample.len() as f64
    }
}

/// Sample standard deviation (n - 1 denominator); zero below two values.
pub fn std_dev(sample: &[f64]) -> f64 {
    if sample.len() < 2 {
        return 0.0;
    }
    let m = mean(sample);
    let ss: f64 = sample.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (sample.len() - 1) as f64).sqrt()
}
