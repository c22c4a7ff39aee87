//! Threshold reject option on classifier certainty.

use crate::error::{GwinError, Result};
use serde::{Deserialize, Serialize};

/// Thresholds swept by default in evaluations.
pub const DEFAULT_TAUS: [f32; 8] = [0.10, 0.30, 0.50, 0.70, 0.80, 0.90, 0.95, 0.99];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "label", rename_all = "snake_case")]
pub enum Outcome {
    Accept(u8),
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionDecision {
    pub outcome: Outcome,
    pub certainty: f32,
    pub threshold: f32,
}

impl RejectionDecision {
    pub fn is_accepted(&self) -> bool {
        matches!(self.outcome, Outcome::Accept(_))
    }
}

fn check_unit(name: &'static str, value: f32) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(GwinError::OutOfRange { name, value })
    }
}

/// Accepts `y_prime` when `c >= tau`.
pub fn reject(c: f32, y_prime: u8, tau: f32) -> Result<RejectionDecision> {
    check_unit("certainty", c)?;
    check_unit("tau", tau)?;
    let outcome = if c >= tau { Outcome::Accept(y_prime) } else { Outcome::Reject };
    Ok(RejectionDecision { outcome, certainty: c, threshold: tau })
}

/// Fraction of certainties strictly below `tau`.
pub fn reject_rate(certainties: &[f32], tau: f32) -> f64 {
    if certainties.is_empty() {
        return 0.0;
    }
    certainties.iter().filter(|&&c| c < tau).count() as f64 / certainties.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(reject(0.85, 3, 0.80).unwrap().outcome, Outcome::Accept(3));
        assert_eq!(reject(0.999, 5, 1.0).unwrap().outcome, Outcome::Reject);
        assert_eq!(reject(1.0, 5, 1.0).unwrap().outcome, Outcome::Accept(5));
        assert_eq!(reject(0.0, 2, 0.0).unwrap().outcome, Outcome::Accept(2));
        assert_eq!(reject(0.4, 2, 0.4).unwrap().outcome, Outcome::Accept(2));
    }

    #[test]
    fn out_of_range_inputs_error() {
        assert!(matches!(reject(1.01, 0, 0.5), Err(GwinError::OutOfRange { name: "certainty", .. })));
        assert!(matches!(reject(0.5, 0, -0.1), Err(GwinError::OutOfRange { name: "tau", .. })));
        assert!(reject(f32::NAN, 0, 0.5).is_err());
    }

    #[test]
    fn decision_serializes_with_tagged_outcome() {
        let d = reject(0.9, 7, 0.5).unwrap();
        let v = serde_json::to_value(d).unwrap();
        assert_eq!(v["outcome"]["outcome"], "accept");
        assert_eq!(v["outcome"]["label"], 7);
    }
}
