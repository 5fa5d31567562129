use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Sample mean with the half-width of its two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Two-sided 97.5% quantile of Student's t with `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("dof >= 1")
        .inverse_cdf(0.975)
}

pub fn summarize(samples: &[f64]) -> Result<MeanCi> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::OutOfRange {
            name: "sample count",
            value: n as f64,
            expected: ">= 2",
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sample"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_width = t_quantile_975(n - 1) * (var / n as f64).sqrt();
    Ok(MeanCi { mean, half_width, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_width() {
        let s = summarize(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.half_width, 0.0);
    }

    #[test]
    fn two_samples_use_one_dof() {
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        // t(0.975, 1) = 12.706 from standard tables
        assert!(
            (s.half_width - 12.706 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 2e-3,
            "{}",
            s.half_width
        );
    }

    #[test]
    fn textbook_sample() {
        let s = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(s.mean, 5.0);
        // sd = 2.138, t(0.975, 7) = 2.365
        assert!((s.half_width - 1.787).abs() < 2e-3, "{}", s.half_width);
    }

    #[test]
    fn rejects_short_input() {
        assert!(summarize(&[1.0]).is_err());
        assert!(summarize(&[]).is_err());
    }
}
