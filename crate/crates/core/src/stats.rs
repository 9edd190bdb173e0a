//! Small statistics helpers shared by the study harness and the tests.

/// Sample mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 points.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the sample mean.
pub fn se(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    sd(xs) / (xs.len() as f64).sqrt()
}

/// Linearly interpolated quantile (the "type 7" convention) of unsorted data.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "quantile level out of range");
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// P(Bin(n, 1/2) >= k), exactly.
pub fn binomial_upper_tail_half(k: u64, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // pmf(0) = 2^-n, pmf(j+1) = pmf(j) * (n-j)/(j+1)
    let mut pmf = (0.5f64).powi(n as i32);
    let mut tail = 0.0;
    for j in 0..=n {
        if j >= k {
            tail += pmf;
        }
        if j < n {
            pmf *= (n - j) as f64 / (j + 1) as f64;
        }
    }
    tail.min(1.0)
}

/// One-sided sign test for a decreasing trend over paired observations.
///
/// Counts pairs with `after < before`; ties are dropped. Returns
/// (wins, effective pairs, p-value) where the p-value is the exact binomial
/// upper tail under the null "decrease is a coin flip".
pub fn sign_test_decreasing(before: &[f64], after: &[f64]) -> (u64, u64, f64) {
    assert_eq!(before.len(), after.len(), "sign test needs paired samples");
    let mut wins = 0u64;
    let mut trials = 0u64;
    for (b, a) in before.iter().zip(after) {
        if a < b {
            wins += 1;
            trials += 1;
        } else if a > b {
            trials += 1;
        }
    }
    let p = if trials == 0 { 1.0 } else { binomial_upper_tail_half(wins, trials) };
    (wins, trials, p)
}
