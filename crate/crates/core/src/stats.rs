//! Replicate statistics: means with normal-approximation 95% intervals and
//! Spearman rank correlation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// `z_{0.975}` for two-sided 95% normal intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Half-width of the 95% interval.
    pub ci: f64,
    pub count: usize,
}

impl MeanCi {
    pub fn lo(&self) -> f64 {
        self.mean - self.ci
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.ci
    }
}

/// Mean and 95% half-width; the half-width is 0 for fewer than two values.
pub fn mean_ci(values: &[f64]) -> MeanCi {
    let mut acc = Welford::default();
    for v in values {
        acc.push(*v);
    }
    acc.summary()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn summary(&self) -> MeanCi {
        let ci = if self.count >= 2 {
            Z95 * libm::sqrt(self.m2 / (self.count - 1) as f64 / self.count as f64)
        } else {
            0.0
        };
        MeanCi { mean: self.mean, ci, count: self.count }
    }
}

/// Per-index running statistics over equally long series, folded in the
/// order they are pushed.
#[derive(Clone, Debug, Default)]
pub struct SeriesAccumulator {
    cells: Vec<Welford>,
}

impl SeriesAccumulator {
    pub fn new(len: usize) -> Self {
        SeriesAccumulator { cells: vec![Welford::default(); len] }
    }

    pub fn push(&mut self, series: &[f64]) {
        debug_assert_eq!(series.len(), self.cells.len());
        for (c, x) in self.cells.iter_mut().zip(series) {
            c.push(*x);
        }
    }

    pub fn finish(&self) -> SeriesStats {
        let mut out = SeriesStats::default();
        for c in &self.cells {
            let s = c.summary();
            out.mean.push(s.mean);
            out.lo.push(s.lo());
            out.hi.push(s.hi());
        }
        out.replicates = self.cells.first().map_or(0, |c| c.count);
        out
    }
}

/// Mean and 95% band of a series across replicates, indexed by `t = 0..=T`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub replicates: usize,
}

impl SeriesStats {
    /// Half-width of the 95% interval at index `t`.
    pub fn ci(&self, t: usize) -> f64 {
        0.5 * (self.hi[t] - self.lo[t])
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman's ρ: Pearson correlation of the rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / libm::sqrt(sxx * syy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_ci_of_known_sample() {
        let s = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sd = sqrt(5/3)
        assert!((s.ci - Z95 * (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(mean_ci(&[7.0]).ci, 0.0);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
