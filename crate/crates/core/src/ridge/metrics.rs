use crate::error::{Error, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`; may be negative.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::shape(format!("{} labels vs {} predictions", y.len(), yhat.len())));
    }
    if y.len() < 2 {
        return Err(Error::invalid("R^2 needs at least 2 points"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::ZeroVariance("labels are constant".into()));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson correlation of two weight vectors (each standardized first).
pub fn weight_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("weight vectors differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::invalid("need at least 2 weights"));
    }
    let standardize = |v: &[f64]| -> Result<Vec<f64>> {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        if sd == 0.0 {
            return Err(Error::ZeroVariance("weight vector is constant".into()));
        }
        Ok(v.iter().map(|x| (x - m) / sd).collect())
    };
    let (za, zb) = (standardize(a)?, standardize(b)?);
    Ok(za.iter().zip(&zb).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_reference_points() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let m = 7.0 / 3.0;
        assert!(r_squared(&y, &[m, m, m]).unwrap().abs() < 1e-15);
        // anti-correlated with offset: yhat = 5 - y gives residuals (-3, -1, 3)
        // SS_res = 9 + 1 + 9 = 19, SS_tot = 14/3 => 1 - 57/14
        let r = r_squared(&y, &[4.0, 3.0, 1.0]).unwrap();
        assert!((r - (1.0 - 57.0 / 14.0)).abs() < 1e-14);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn similarity_extremes() {
        let a = [0.3, -1.0, 2.0, 0.1];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((weight_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((weight_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(weight_similarity(&a, &[1.0; 4]).is_err());
    }
}
