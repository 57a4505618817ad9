//! Greedy goal-similarity policy, the stand-in for a cross-modal policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Embedding;
use crate::view::ViewSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Stop,
    /// Move toward the neighbour seen in this (1-based) view.
    Move(usize),
}

/// Picks the navigable view most similar to the goal (lowest index on
/// ties); returns STOP instead when that similarity exceeds
/// `stop_threshold`, i.e. the goal is in sight from a neighbouring node.
pub fn greedy_policy(
    embeddings: &[Embedding],
    goal: &Embedding,
    navigable: ViewSet,
    stop_threshold: f64,
) -> Result<Action> {
    if navigable.is_empty() {
        return Err(Error::NoNavigableViews);
    }
    let mut best: Option<(usize, f64)> = None;
    for i in navigable.iter() {
        let e = embeddings.get(i - 1).ok_or(Error::InvalidViewIndex(i))?;
        if e.is_masked() {
            continue;
        }
        let s = e.cosine(goal)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    match best {
        None => Err(Error::PolicyDegenerate),
        Some((_, s)) if s > stop_threshold => Ok(Action::Stop),
        Some((i, _)) => Ok(Action::Move(i)),
    }
}
