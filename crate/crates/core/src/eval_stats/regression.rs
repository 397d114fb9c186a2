use log::warn;
use nalgebra::{DMatrix, DVector};

use super::correlation::t_two_sided;
use super::Stars;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub name: String,
    pub values: Vec<f64>,
}

impl Control {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Control {
            name: name.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    /// Standardized coefficient of the predictor.
    pub beta: f64,
    pub std_error: f64,
    pub t: f64,
    pub p_value: f64,
    pub n: usize,
    /// Controls actually used (zero-variance controls are dropped).
    pub controls: Vec<String>,
    pub stars: Stars,
}

fn zscore(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd.is_nan() || sd < 1e-12 * mean.abs().max(1.0) {
        return None;
    }
    Some(v.iter().map(|x| (x - mean) / sd).collect())
}

/// OLS of z(outcome) on an intercept, z(predictor) and z(controls).
///
/// Rows with any non-finite value are dropped. Classical standard errors,
/// two-sided t-test with n − k degrees of freedom.
pub fn ols_standardized(
    outcome: &[f64],
    predictor: &[f64],
    controls: &[Control],
) -> Result<RegressionResult> {
    let len = outcome.len();
    if predictor.len() != len {
        return Err(Error::Invalid(format!(
            "outcome and predictor differ in length ({len} vs {})",
            predictor.len()
        )));
    }
    if let Some(c) = controls.iter().find(|c| c.values.len() != len) {
        return Err(Error::Invalid(format!(
            "control {:?} has {} values, expected {len}",
            c.name,
            c.values.len()
        )));
    }
    let rows: Vec<usize> = (0..len)
        .filter(|&i| {
            outcome[i].is_finite()
                && predictor[i].is_finite()
                && controls.iter().all(|c| c.values[i].is_finite())
        })
        .collect();
    let n = rows.len();
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "regression needs more observations, got {n}"
        )));
    }

    let y =
        zscore(&pick(outcome)).ok_or_else(|| Error::Invalid("outcome has zero variance".into()))?;
    let x = zscore(&pick(predictor))
        .ok_or_else(|| Error::Invalid("predictor has zero variance".into()))?;
    let mut names = vec!["intercept".to_string(), "predictor".to_string()];
    let mut columns = vec![vec![1.0; n], x];
    let mut used = Vec::new();
    for c in controls {
        match zscore(&pick(&c.values)) {
            Some(z) => {
                names.push(c.name.clone());
                used.push(c.name.clone());
                columns.push(z);
            }
            None => warn!("control {:?} has zero variance and is dropped", c.name),
        }
    }
    let k = columns.len();
    if n <= k {
        return Err(Error::Invalid(format!(
            "regression with {} predictors needs more than {k} observations, got {n}",
            k - 1
        )));
    }

    let design = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..k {
        if r[(j, j)].abs() <= 1e-10 * scale.max(1.0) {
            let earlier = names[..j].join(", ");
            return Err(Error::Singular(format!(
                "design matrix is singular: column {:?} is collinear with [{earlier}]",
                names[j]
            )));
        }
    }
    let yv = DVector::from_vec(y);
    let qty = qr.q().transpose() * &yv;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("upper-triangular solve failed".into()))?;
    let resid = &yv - &design * &coef;
    let df = (n - k) as f64;
    let sigma2 = resid.norm_squared() / df;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("upper-triangular inverse failed".into()))?;
    // (RᵀR)⁻¹ = R⁻¹ R⁻ᵀ; diagonal entry 1 is the squared norm of row 1 of R⁻¹.
    let var_beta = sigma2 * r_inv.row(1).norm_squared();
    let beta = coef[1];
    let std_error = var_beta.sqrt();
    let t = if std_error > 1e-14 * beta.abs().max(1.0) {
        beta / std_error
    } else {
        f64::INFINITY.copysign(beta)
    };
    let p_value = t_two_sided(t, df);
    Ok(RegressionResult {
        beta,
        std_error,
        t,
        p_value,
        n,
        controls: used,
        stars: Stars::from_p(p_value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval_stats::pearson;

    #[test]
    fn perfect_linear_relation() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let r = ols_standardized(&y, &x, &[]).unwrap();
        assert!((r.beta - 1.0).abs() < 1e-12);
        assert!(r.p_value < 0.001);
        assert_eq!(r.n, 20);
    }

    #[test]
    fn no_control_equals_pearson() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0];
        let y = [2.0, 3.0, 1.0, 9.0, 4.0, 4.0, 5.0];
        let r = ols_standardized(&y, &x, &[]).unwrap();
        assert!((r.beta - pearson(&x, &y).unwrap()).abs() < 1e-12);
        assert!(r.beta.abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn zero_variance_control_dropped() {
        let x = [1.0, 2.0, 3.0, 4.0, 6.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let c = Control::new("flat", vec![7.0; 5]);
        let r = ols_standardized(&y, &x, &[c]).unwrap();
        assert!(r.controls.is_empty());
        assert!((r.beta - pearson(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn collinear_control_is_named() {
        let x = [1.0, 2.0, 3.0, 4.0, 6.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let c = Control::new("twice_x", x.iter().map(|v| 2.0 * v).collect());
        let err = ols_standardized(&y, &x, &[c]).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(err.to_string().contains("twice_x"), "{err}");
    }

    #[test]
    fn zero_variance_outcome_is_error() {
        assert!(ols_standardized(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &[]).is_err());
    }

    #[test]
    fn too_few_rows() {
        assert!(ols_standardized(&[1.0, 2.0], &[2.0, 1.0], &[]).is_err());
    }

    #[test]
    fn non_finite_rows_dropped() {
        let x = [1.0, 2.0, f64::NAN, 3.0, 4.0, 5.0];
        let y = [1.0, 2.5, 9.0, 2.8, 4.1, 5.3];
        let r = ols_standardized(&y, &x, &[]).unwrap();
        assert_eq!(r.n, 5);
    }

    #[test]
    fn hand_solved_two_regressor_system() {
        // Standardized regressors with correlation r12 give
        // beta1 = (r_y1 − r_y2·r12) / (1 − r12²).
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let c = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 9.0];
        let y = [1.5, 1.0, 3.9, 3.1, 5.5, 6.4, 7.2, 8.8];
        let (ry1, ry2, r12) = (
            pearson(&y, &x).unwrap(),
            pearson(&y, &c).unwrap(),
            pearson(&x, &c).unwrap(),
        );
        let expected = (ry1 - ry2 * r12) / (1.0 - r12 * r12);
        let r = ols_standardized(&y, &x, &[Control::new("c", c.to_vec())]).unwrap();
        assert!((r.beta - expected).abs() < 1e-9, "{} vs {expected}", r.beta);
        assert_eq!(r.controls, ["c"]);
    }
}
