//! Replication statistics.

/// Two-sided 95% Student-t quantiles for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, 2.2622, 2.2281, 2.2010,
    2.1788, 2.1604, 2.1448, 2.1314, 2.1199, 2.1098, 2.1009, 2.0930, 2.0860, 2.0796, 2.0739, 2.0687,
    2.0639, 2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423,
];

/// Sparse tail of the table; between entries the smaller df is used.
const T975_TAIL: [(u64, f64); 3] = [(40, 2.0211), (60, 2.0003), (120, 1.9799)];

const Z975: f64 = 1.9600;

/// 97.5% quantile of Student's t with `df` degrees of freedom (`df >= 1`).
pub fn t_quantile_975(df: u64) -> f64 {
    assert!(df >= 1, "Student-t needs at least one degree of freedom");
    if df <= 30 {
        return T975[df as usize - 1];
    }
    if df == u64::MAX {
        return Z975;
    }
    T975_TAIL
        .iter()
        .rev()
        .find(|&&(d, _)| d <= df)
        .map_or(T975[29], |&(_, q)| q)
}

/// Mean of `samples` and the half-width of its 95% confidence interval,
/// or `None` for fewer than two samples.
pub fn mean_ci95(samples: &[f64]) -> Option<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    Some((mean, t_quantile_975(n as u64 - 1) * sd / (n as f64).sqrt()))
}
