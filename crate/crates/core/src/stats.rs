//! Deterministic reductions for replicated Monte-Carlo output.

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate { mean: f64::NAN, std_error: f64::NAN, n };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n < 2 {
            return MeanEstimate { mean, std_error: 0.0, n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        MeanEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Standard error of the mean of the paired differences `a[i] - b[i]`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> MeanEstimate {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    MeanEstimate::from_samples(&d)
}
