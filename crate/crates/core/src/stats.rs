//! Sample statistics shared by the Monte-Carlo checks.

use serde::Serialize;

/// Running `(count, sum, sum of squares)` with an associative merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Accumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn std_err(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// `|mean - target| / SE`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean() - target).abs() / self.std_err()
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Mean, variance and the standard error of each, from raw samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanVar {
    pub mean: f64,
    pub mean_se: f64,
    pub var: f64,
    pub var_se: f64,
}

/// Sample mean and variance with their standard errors.
///
/// The variance SE uses the fourth central moment:
/// `Var(s^2) ~ (m4 - s^4) / n`.
pub fn mean_var(xs: &[f64]) -> MeanVar {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    MeanVar {
        mean,
        mean_se: (var / n).sqrt(),
        var,
        var_se: ((m4 - var * var).max(0.0) / n).sqrt(),
    }
}

/// Sample raw moment `E[X^n]` and its standard error.
pub fn raw_moment(xs: &[f64], n: i32) -> (f64, f64) {
    let acc: Accumulator = xs.iter().map(|x| x.powi(n)).collect();
    (acc.mean(), acc.std_err())
}

/// Kolmogorov-Smirnov distance of a sample from a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Equal-width histogram normalised to a density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
    /// Fraction of the sample that fell outside `[lo, hi)`.
    pub outside: f64,
}

impl Histogram {
    pub fn new(sample: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        let mut outside = 0u64;
        for &x in sample {
            if x >= lo && x < hi {
                let i = (((x - lo) / width) as usize).min(bins - 1);
                counts[i] += 1;
            } else {
                outside += 1;
            }
        }
        let n = sample.len() as f64;
        Self {
            lo,
            hi,
            density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
            outside: outside as f64 / n,
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    /// L1 distance to the probability mass a reference law puts in each bin.
    ///
    /// `bin_mass(lo, hi)` returns the reference probability of `[lo, hi)`;
    /// the mass the reference puts outside the histogram range counts in
    /// full against the sample's out-of-range fraction.
    pub fn l1_to<F: Fn(f64, f64) -> f64>(&self, bin_mass: F) -> f64 {
        let w = self.width();
        let mut inside_ref = 0.0;
        let mut l1 = 0.0;
        for (i, &d) in self.density.iter().enumerate() {
            let a = self.lo + i as f64 * w;
            let m = bin_mass(a, a + w);
            inside_ref += m;
            l1 += (d * w - m).abs();
        }
        l1 + ((1.0 - inside_ref) - self.outside).abs()
    }
}
