//! Poisoning attacks and per-client behaviours.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rflpa_protocol::Fault;
use serde::{Deserialize, Serialize};

use crate::SimError;

pub const MANIPULATION_STD: f64 = 200.0;

/// I.i.d. `N(0, 200^2)` coordinates.
pub fn gradient_manipulation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let n = Normal::new(0.0, MANIPULATION_STD).expect("finite std");
    (0..m).map(|_| n.sample(rng)).collect()
}

/// `l -> classes - l - 1`.
pub fn label_flip(label: usize, classes: usize) -> Result<usize, SimError> {
    if label >= classes {
        return Err(SimError::Config(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    Ok(classes - label - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientBehavior {
    #[default]
    Honest,
    GradientManipulation,
    LabelFlip,
    /// Deals shares from two polynomials in round 1.
    InvalidShares,
    /// Re-shares wrong partial products in round 2.
    WrongComputation,
    /// Silent from the given round on.
    Dropout {
        round: u8,
    },
}

impl ClientBehavior {
    /// Poisons the data or the update, as opposed to the protocol.
    pub fn is_poisoning(self) -> bool {
        matches!(
            self,
            ClientBehavior::GradientManipulation | ClientBehavior::LabelFlip
        )
    }

    pub fn is_malicious(self) -> bool {
        !matches!(
            self,
            ClientBehavior::Honest | ClientBehavior::Dropout { .. }
        )
    }

    pub fn fault(self) -> Fault {
        match self {
            ClientBehavior::InvalidShares => Fault::InvalidShares,
            ClientBehavior::WrongComputation => Fault::WrongPartial,
            _ => Fault::Honest,
        }
    }

    pub fn dropout_round(self) -> Option<u8> {
        match self {
            ClientBehavior::Dropout { round } => Some(round),
            _ => None,
        }
    }
}
