use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An action as chosen by an agent: an index into a discrete space or a
/// real vector for a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}

/// Discrete or box action space.
///
/// A discrete space keeps, for each of its own indices, the index of the
/// underlying base action it maps to. The unrestricted space maps `i -> i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { base_indices: Vec<usize> },
    Box { low: Vec<f64>, high: Vec<f64> },
}

/// How to shrink an action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Restriction {
    /// Keep these indices of the current discrete space, in this order.
    Keep { indices: Vec<usize> },
    /// Drop these indices of the current discrete space.
    Remove { indices: Vec<usize> },
    /// Replace the box with a sub-box; actions are clipped into it.
    SubBox { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn discrete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidRestriction("discrete space needs at least one action".into()));
        }
        Ok(ActionSpace::Discrete {
            base_indices: (0..n).collect(),
        })
    }

    pub fn boxed(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let space = ActionSpace::Box { low, high };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSpace::Discrete { base_indices } => {
                if base_indices.is_empty() {
                    return Err(Error::InvalidRestriction("discrete space is empty".into()));
                }
            }
            ActionSpace::Box { low, high } => {
                if low.is_empty() || low.len() != high.len() {
                    return Err(Error::InvalidRestriction("box bounds must be non-empty and equal length".into()));
                }
                if low.iter().chain(high).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidRestriction("box bounds must be finite".into()));
                }
                if low.iter().zip(high).any(|(l, h)| l > h) {
                    return Err(Error::InvalidRestriction("box low exceeds high".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Number of discrete actions, or the box dimension.
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { base_indices } => base_indices.len(),
            ActionSpace::Box { low, .. } => low.len(),
        }
    }

    /// Base action behind a discrete index.
    pub fn base_index(&self, index: usize) -> Result<usize> {
        match self {
            ActionSpace::Discrete { base_indices } => base_indices.get(index).copied().ok_or_else(|| {
                Error::InvalidAction(format!("index {index} outside Discrete({})", base_indices.len()))
            }),
            ActionSpace::Box { .. } => Err(Error::InvalidAction("box space has no indices".into())),
        }
    }

    /// Inverse of [`base_index`](Self::base_index).
    pub fn index_of_base(&self, base: usize) -> Option<usize> {
        match self {
            ActionSpace::Discrete { base_indices } => base_indices.iter().position(|&b| b == base),
            ActionSpace::Box { .. } => None,
        }
    }

    /// Clips each component into the box. Non-finite input is rejected.
    pub fn clip(&self, action: &[f64]) -> Result<Vec<f64>> {
        let ActionSpace::Box { low, high } = self else {
            return Err(Error::InvalidAction("cannot clip into a discrete space".into()));
        };
        if action.len() != low.len() {
            return Err(Error::shape(low.len(), action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidAction(format!("non-finite action {action:?}")));
        }
        Ok(action
            .iter()
            .zip(low.iter().zip(high))
            .map(|(a, (l, h))| a.clamp(*l, *h))
            .collect())
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete { base_indices }, Action::Discrete(i)) => *i < base_indices.len(),
            (ActionSpace::Box { low, high }, Action::Continuous(v)) => {
                v.len() == low.len() && v.iter().zip(low.iter().zip(high)).all(|(a, (l, h))| l <= a && a <= h)
            }
            _ => false,
        }
    }

    pub fn restrict(&self, restriction: &Restriction) -> Result<ActionSpace> {
        match (self, restriction) {
            (ActionSpace::Discrete { base_indices }, Restriction::Keep { indices }) => {
                if indices.is_empty() {
                    return Err(Error::InvalidRestriction("restriction keeps no actions".into()));
                }
                let mut seen = vec![false; base_indices.len()];
                let mut kept = Vec::with_capacity(indices.len());
                for &i in indices {
                    let base = *base_indices.get(i).ok_or_else(|| {
                        Error::InvalidRestriction(format!("index {i} outside Discrete({})", base_indices.len()))
                    })?;
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(Error::InvalidRestriction(format!("index {i} kept twice")));
                    }
                    kept.push(base);
                }
                Ok(ActionSpace::Discrete { base_indices: kept })
            }
            (ActionSpace::Discrete { base_indices }, Restriction::Remove { indices }) => {
                if let Some(i) = indices.iter().find(|&&i| i >= base_indices.len()) {
                    return Err(Error::InvalidRestriction(format!(
                        "index {i} outside Discrete({})",
                        base_indices.len()
                    )));
                }
                let keep: Vec<usize> = (0..base_indices.len()).filter(|i| !indices.contains(i)).collect();
                self.restrict(&Restriction::Keep { indices: keep })
            }
            (ActionSpace::Box { low, high }, Restriction::SubBox { low: l2, high: h2 }) => {
                if l2.len() != low.len() || h2.len() != high.len() {
                    return Err(Error::InvalidRestriction("sub-box dimension differs".into()));
                }
                if l2.iter().zip(h2).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidRestriction("sub-box is empty".into()));
                }
                let inside = l2.iter().zip(low).all(|(a, b)| a >= b) && h2.iter().zip(high).all(|(a, b)| a <= b);
                if !inside {
                    return Err(Error::InvalidRestriction("sub-box leaves the original box".into()));
                }
                ActionSpace::boxed(l2.clone(), h2.clone())
            }
            _ => Err(Error::InvalidRestriction("restriction does not match the space type".into())),
        }
    }
}
