use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ScoreSeries, Stars};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub stars: Stars,
}

/// How the two-sided p-value of a rank correlation is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Student-t approximation with n − 2 degrees of freedom.
    #[default]
    TApprox,
    /// Full permutation distribution when n ≤ 10, t approximation otherwise.
    ExactSmallN,
}

const EXACT_MAX_N: usize = 10;

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn rank_average(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` if lengths differ, n < 2 or either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub(crate) fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

fn correlation_t_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    t_two_sided(t, df)
}

/// Fraction of all orderings of `ry` whose |ρ| is at least the observed |ρ|.
fn permutation_p(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let n = ry.len();
    let mut perm = ry.to_vec();
    let mut c = vec![0usize; n];
    let target = observed.abs() - 1e-12;
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut check = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).is_some_and(|r| r.abs() >= target) {
            hits += 1;
        }
    };
    check(&perm);
    // Heap's algorithm.
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            check(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Spearman rank correlation. Pairs where either side is non-finite are dropped.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    spearman_with(x, y, PValueMethod::TApprox)
}

pub fn spearman_with(x: &[f64], y: &[f64], method: PValueMethod) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!(
            "paired inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .unzip();
    let n = xs.len();
    if n < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 complete pairs, got {n}"
        )));
    }
    let (rx, ry) = (rank_average(&xs), rank_average(&ys));
    let rho = pearson(&rx, &ry)
        .ok_or_else(|| Error::UndefinedCorrelation("zero variance in a rank vector".into()))?;
    let p_value = match method {
        PValueMethod::ExactSmallN if n <= EXACT_MAX_N => permutation_p(&rx, &ry, rho),
        _ => correlation_t_p(rho, n),
    };
    Ok(CorrelationResult {
        rho,
        p_value,
        n,
        stars: Stars::from_p(p_value),
    })
}

/// Spearman over ids present in both series.
pub fn spearman_series(
    a: &ScoreSeries,
    b: &ScoreSeries,
    method: PValueMethod,
) -> Result<CorrelationResult> {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .values()
        .iter()
        .filter_map(|(k, &va)| b.get(k).map(|vb| (va, vb)))
        .unzip();
    spearman_with(&x, &y, method)
}
