//! Small statistical helpers shared by the simulator and the harness.

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Mean and standard error (`s / sqrt(n)`, unbiased `s`). Summation runs in
/// slice order so results are bit-stable. A single value has zero error.
pub fn mean_and_std_error(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Estimate { mean, std_error, n }
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and a reference CDF. Ties and atoms in the reference are
/// handled by comparing both one-sided limits at every distinct sample.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((cdf(v.next_down()) - below).abs());
        d = d.max((cdf(v) - at).abs());
        i = j;
    }
    d
}
