//! Observational datasets.

use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

/// Covariates, binary treatments and factual outcomes, plus optional ground
/// truth that is only ever used for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub t: Vec<bool>,
    /// Factual outcome `Y(T)`.
    pub y: Vec<f64>,
    /// Counterfactual outcome `Y(1 - T)`.
    pub y_cf: Option<Vec<f64>>,
    pub mu0: Option<Vec<f64>>,
    pub mu1: Option<Vec<f64>>,
    /// True propensity `P(T = 1 | x)`, when the generating process is known.
    pub e_true: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: DenseMatrix, t: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        let d = Self {
            x,
            t,
            y,
            y_cf: None,
            mu0: None,
            mu1: None,
            e_true: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_potential_means(mut self, mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        self.mu0 = Some(mu0);
        self.mu1 = Some(mu1);
        self.validate()?;
        Ok(self)
    }

    pub fn with_counterfactual(mut self, y_cf: Vec<f64>) -> Result<Self> {
        self.y_cf = Some(y_cf);
        self.validate()?;
        Ok(self)
    }

    pub fn with_true_propensity(mut self, e: Vec<f64>) -> Result<Self> {
        self.e_true = Some(e);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        let check = |name: &str, len: usize| {
            if len != n {
                Err(Error::Shape(format!("{name} has {len} entries, covariates have {n} rows")))
            } else {
                Ok(())
            }
        };
        check("t", self.t.len())?;
        check("y", self.y.len())?;
        for (name, v) in [
            ("y_cf", &self.y_cf),
            ("mu0", &self.mu0),
            ("mu1", &self.mu1),
            ("e_true", &self.e_true),
        ] {
            if let Some(v) = v {
                check(name, v.len())?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.len() - self.n_treated()
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.t[i]).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.t[i]).collect()
    }

    /// Fails unless both arms are non-empty.
    pub fn require_both_arms(&self) -> Result<()> {
        let (treated, control) = (self.n_treated(), self.n_control());
        if treated == 0 || control == 0 {
            return Err(Error::SingleArm { treated, control });
        }
        Ok(())
    }

    /// True ITE `mu1 - mu0`, when available.
    pub fn tau_true(&self) -> Option<Vec<f64>> {
        match (&self.mu0, &self.mu1) {
            (Some(m0), Some(m1)) => Some(m1.iter().zip(m0).map(|(a, b)| a - b).collect()),
            _ => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: pick(&self.y),
            y_cf: self.y_cf.as_ref().map(pick),
            mu0: self.mu0.as_ref().map(pick),
            mu1: self.mu1.as_ref().map(pick),
            e_true: self.e_true.as_ref().map(pick),
        }
    }

    pub fn t_as_f64(&self) -> Vec<f64> {
        self.t.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_are_checked() {
        let x = DenseMatrix::zeros(3, 2);
        assert!(Dataset::new(x.clone(), vec![true, false], vec![0.0; 3]).is_err());
        let d = Dataset::new(x, vec![true, false, true], vec![0.0; 3]).unwrap();
        assert!(d.clone().with_potential_means(vec![0.0; 2], vec![0.0; 3]).is_err());
        assert_eq!(d.n_treated(), 2);
        assert_eq!(d.control_indices(), vec![1]);
    }

    #[test]
    fn single_arm_detected() {
        let d = Dataset::new(DenseMatrix::zeros(2, 1), vec![true, true], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            d.require_both_arms(),
            Err(Error::SingleArm { treated: 2, control: 0 })
        ));
    }

    #[test]
    fn subset_carries_ground_truth() {
        let d = Dataset::new(
            DenseMatrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap(),
            vec![true, false, true],
            vec![10.0, 20.0, 30.0],
        )
        .unwrap()
        .with_potential_means(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 5.0])
        .unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.y, vec![30.0, 10.0]);
        assert_eq!(s.tau_true().unwrap(), vec![3.0, 1.0]);
    }
}
