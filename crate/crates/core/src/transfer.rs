//! Online transfer between an environment's native units and the standard
//! environment: observations scale by `beta`, standardized actions in
//! `(-1, 1)` scale by the environment's steering range.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::env::Observation;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TransferProfile {
    scale_label: String,
    beta: f64,
    max_action: f64,
    is_standard: bool,
}

/// Default ratio for the small-scale car environments.
pub const DEFAULT_CAR_BETA: f64 = 6.67;

impl TransferProfile {
    pub fn new(scale_label: impl Into<String>, beta: f64, max_action: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Validation(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(max_action > 0.0 && max_action.is_finite()) {
            return Err(Error::Validation(format!(
                "max_action must be positive, got {max_action}"
            )));
        }
        Ok(Self {
            scale_label: scale_label.into(),
            beta,
            max_action,
            is_standard: false,
        })
    }

    /// Profile of the reference environment (`beta = 1`).
    pub fn standard(scale_label: impl Into<String>, max_action: f64) -> Result<Self> {
        let mut p = Self::new(scale_label, 1.0, max_action)?;
        p.is_standard = true;
        Ok(p)
    }

    pub fn scale_label(&self) -> &str {
        &self.scale_label
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_action(&self) -> f64 {
        self.max_action
    }

    pub fn is_standard(&self) -> bool {
        self.is_standard
    }

    /// Profile mapping standard observations back to this environment.
    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.scale_label.clone(), 1.0 / self.beta, self.max_action)
    }

    pub fn transfer_observation(&self, native: &[f64]) -> Result<Vec<f64>> {
        if let Some((i, v)) = native.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Validation(format!(
                "native observation entry {i} is not positive: {v}"
            )));
        }
        Ok(native.iter().map(|v| v * self.beta).collect())
    }

    /// Standard-scale [`Observation`] from a native scan.
    pub fn standardize(&self, native: &Observation) -> Observation {
        native.scaled(self.beta)
    }

    pub fn transfer_action(&self, standard_action: f64) -> Result<f64> {
        if !(standard_action.abs() < 1.0) {
            return Err(Error::Validation(format!(
                "standardized action must lie in (-1, 1), got {standard_action}"
            )));
        }
        Ok(standard_action * self.max_action)
    }
}

/// Checks a federation roster: at most one standard profile, and it must
/// have `beta = 1`.
pub fn validate_roster(profiles: &[&TransferProfile]) -> Result<()> {
    let standard: Vec<_> = profiles.iter().filter(|p| p.is_standard).collect();
    if standard.len() > 1 {
        return Err(Error::Validation(format!(
            "{} profiles claim to be the standard environment",
            standard.len()
        )));
    }
    if let Some(p) = standard.first() {
        if p.beta != 1.0 {
            return Err(Error::Validation(format!(
                "standard profile `{}` has beta {} instead of 1",
                p.scale_label, p.beta
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn car_ratio_example() {
        let p = TransferProfile::new("car", 6.67, 0.5).unwrap();
        let out = p.transfer_observation(&[1.0; 60]).unwrap();
        assert!(out.iter().all(|&v| v == 6.67));
    }

    #[test]
    fn standard_is_identity() {
        let p = TransferProfile::standard("sim", 0.5).unwrap();
        let x = [0.3, 4.0, 11.9];
        assert_eq!(p.transfer_observation(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn scalar_multiply() {
        let p = TransferProfile::new("x", 2.0, 1.0).unwrap();
        assert_eq!(p.transfer_observation(&[0.5, 3.0]).unwrap(), vec![1.0, 6.0]);
    }

    #[test]
    fn non_positive_observation_rejected() {
        let p = TransferProfile::new("x", 2.0, 1.0).unwrap();
        assert!(p.transfer_observation(&[1.0, 0.0]).is_err());
        assert!(p.transfer_observation(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn action_examples() {
        assert_eq!(
            TransferProfile::new("a", 1.0, 0.6)
                .unwrap()
                .transfer_action(0.5)
                .unwrap(),
            0.3
        );
        assert_eq!(
            TransferProfile::new("a", 1.0, 0.6)
                .unwrap()
                .transfer_action(0.0)
                .unwrap(),
            0.0
        );
        let r = TransferProfile::new("a", 1.0, 0.4)
            .unwrap()
            .transfer_action(-0.9)
            .unwrap();
        assert!((r + 0.36).abs() < 1e-15);
    }

    #[test]
    fn saturated_action_rejected() {
        let p = TransferProfile::new("a", 1.0, 0.6).unwrap();
        assert!(p.transfer_action(1.0).is_err());
        assert!(p.transfer_action(-1.5).is_err());
        assert!(p.transfer_action(f64::NAN).is_err());
    }

    #[test]
    fn invalid_profiles() {
        assert!(TransferProfile::new("a", 0.0, 0.5).is_err());
        assert!(TransferProfile::new("a", 1.0, -0.5).is_err());
    }

    #[test]
    fn roster_rules() {
        let s = TransferProfile::standard("sim", 0.5).unwrap();
        let s2 = TransferProfile::standard("sim2", 0.5).unwrap();
        let c = TransferProfile::new("car", 6.67, 0.5).unwrap();
        assert!(validate_roster(&[&s, &c]).is_ok());
        assert!(validate_roster(&[&c, &c]).is_ok());
        assert!(validate_roster(&[&s, &s2, &c]).is_err());
    }
}
