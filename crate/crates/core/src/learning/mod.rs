//! Learning rules that turn a pattern set into network weights.
//!
//! Classical rules (Hebbian, Storkey, pseudo-inverse) are closed-form and
//! know nothing about faults; a fault mask is applied to their weights after
//! training. The adaptive rules train around the mask so that stuck weights
//! never move from zero.

mod adaptive;
mod classical;
mod mask;
mod optim;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use adaptive::{
    adaptive_loss_multilayer, adaptive_loss_single, grad_loss_multilayer, grad_loss_single,
    train_adaptive_multilayer, train_adaptive_single, LayerMasks, MultilayerGrad, TrainingConfig,
    TrainingReport,
};
pub use classical::{train_hebbian, train_pseudo_inverse, train_storkey};
pub use mask::FaultMask;
pub use optim::OptimizerKind;

use crate::{seed, HopfieldNet, MultilayerNet, PatternSet, Recurrent, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum LearningRule {
    Hebbian,
    Storkey,
    PseudoInverse,
    AdaptiveSingle(TrainingConfig),
    AdaptiveMultilayer { hidden: usize, config: TrainingConfig },
}

impl LearningRule {
    pub fn adaptive_single() -> Self {
        Self::AdaptiveSingle(TrainingConfig::single_layer())
    }

    pub fn adaptive_multilayer(hidden: usize) -> Self {
        Self::AdaptiveMultilayer {
            hidden,
            config: TrainingConfig::multilayer(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Hebbian => "hebbian",
            Self::Storkey => "storkey",
            Self::PseudoInverse => "pseudo-inverse",
            Self::AdaptiveSingle(_) => "adaptive-single",
            Self::AdaptiveMultilayer { .. } => "adaptive-multilayer",
        }
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        match self {
            Self::AdaptiveMultilayer { hidden, .. } => Some(*hidden),
            _ => None,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Self::AdaptiveSingle(_) | Self::AdaptiveMultilayer { .. })
    }

    /// Trains on `patterns`. When `fault_fraction` is set, a random stuck mask
    /// of that density is drawn for every weight matrix from `seed`; the init
    /// of adaptive rules is drawn from `seed` as well.
    pub fn train(
        &self,
        patterns: &PatternSet,
        fault_fraction: Option<f64>,
        seed: u64,
    ) -> Result<Trained> {
        let n = patterns.dim();
        let mask_for = |rows, cols, key: &str| -> Result<FaultMask> {
            match fault_fraction {
                Some(f) => FaultMask::random(rows, cols, f, seed::derive(seed, key)),
                None => Ok(FaultMask::none(rows, cols)),
            }
        };
        let init_seed = seed::derive(seed, "init");
        match self {
            Self::Hebbian | Self::Storkey | Self::PseudoInverse => {
                let mut net = match self {
                    Self::Hebbian => train_hebbian(patterns)?,
                    Self::Storkey => train_storkey(patterns)?,
                    _ => train_pseudo_inverse(patterns)?,
                };
                let mask = mask_for(n, n, "mask/weights")?;
                mask.apply(net.parts_mut().0);
                Ok(Trained {
                    net: TrainedNet::Single(net),
                    masks: vec![mask],
                    report: None,
                })
            }
            Self::AdaptiveSingle(cfg) => {
                let mask = mask_for(n, n, "mask/weights")?;
                let cfg = cfg.clone().with_seed(init_seed);
                let (net, report) = train_adaptive_single(patterns, &cfg, Some(&mask))?;
                Ok(Trained {
                    net: TrainedNet::Single(net),
                    masks: vec![mask],
                    report: Some(report),
                })
            }
            Self::AdaptiveMultilayer { hidden, config } => {
                let masks = LayerMasks {
                    encoder: mask_for(*hidden, n, "mask/encoder")?,
                    decoder: mask_for(n, *hidden, "mask/decoder")?,
                };
                let cfg = config.clone().with_seed(init_seed);
                let (net, report) = train_adaptive_multilayer(patterns, *hidden, &cfg, Some(&masks))?;
                Ok(Trained {
                    net: TrainedNet::Multi(net),
                    masks: vec![masks.encoder, masks.decoder],
                    report: Some(report),
                })
            }
        }
    }
}

/// Output of [`LearningRule::train`]. `masks` holds one mask per weight
/// matrix in forward order.
#[derive(Debug, Clone)]
pub struct Trained {
    pub net: TrainedNet,
    pub masks: Vec<FaultMask>,
    pub report: Option<TrainingReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedNet {
    Single(HopfieldNet),
    Multi(MultilayerNet),
}

impl Recurrent for TrainedNet {
    fn dim(&self) -> usize {
        match self {
            Self::Single(n) => n.dim(),
            Self::Multi(n) => n.input_dim(),
        }
    }

    fn field(&self, state: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Single(n) => n.field(state),
            Self::Multi(n) => n.field(state),
        }
    }

    fn field_at(&self, state: &DVector<f64>, i: usize) -> f64 {
        match self {
            Self::Single(n) => n.field_at(state, i),
            Self::Multi(n) => n.field_at(state, i),
        }
    }

    fn steepness(&self) -> f64 {
        match self {
            Self::Single(n) => n.steepness(),
            Self::Multi(n) => n.steepness(),
        }
    }

    fn energy_of(&self, state: &DVector<f64>) -> Option<f64> {
        match self {
            Self::Single(n) => n.energy_of(state),
            Self::Multi(n) => n.energy_of(state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Pattern;

    fn set() -> PatternSet {
        PatternSet::new(vec![
            Pattern::binary(vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0]).unwrap(),
            Pattern::binary(vec![1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn classical_rules_get_mask_after_training() {
        let t = LearningRule::Hebbian.train(&set(), Some(0.5), 9).unwrap();
        let TrainedNet::Single(net) = &t.net else { panic!() };
        assert_eq!(t.masks[0].count(), 32);
        assert!(t.masks[0].all_zero_in(net.weights()));
        assert!(t.report.is_none());
    }

    #[test]
    fn multilayer_gets_one_mask_per_layer() {
        let mut rule = LearningRule::adaptive_multilayer(3);
        if let LearningRule::AdaptiveMultilayer { config, .. } = &mut rule {
            config.max_steps = 10;
        }
        let t = rule.train(&set(), Some(0.25), 1).unwrap();
        assert_eq!(t.masks.len(), 2);
        assert_eq!(t.masks[0].shape(), (3, 8));
        assert_eq!(t.masks[1].shape(), (8, 3));
        assert_eq!(t.report.unwrap().steps_used, 10);
        assert_eq!(rule.hidden_dim(), Some(3));
    }

    #[test]
    fn rule_round_trips_through_json() {
        let rule = LearningRule::adaptive_multilayer(32);
        let s = serde_json::to_string(&rule).unwrap();
        assert!(s.contains("adaptive-multilayer"));
        assert_eq!(serde_json::from_str::<LearningRule>(&s).unwrap(), rule);
    }
}
