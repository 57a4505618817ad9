//! k-extension view selection and view ranks.
//!
//! For each navigable view `i`, the views `max(1, i - k) ..= min(i + k, 36)`
//! are processed; everything else is masked. The rank of a processed,
//! non-navigable view is its index distance to the closest navigable view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::view::{check_index, ViewSet, VIEW_COUNT};

/// How index distance is measured across the panorama ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Clamped at 1 and 36, no wraparound.
    #[default]
    Linear,
    /// View 36 neighbours view 1.
    Circular,
}

impl Topology {
    pub fn distance(self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        match self {
            Topology::Linear => d,
            Topology::Circular => d.min(VIEW_COUNT - d),
        }
    }
}

pub fn k_extension(navigable: ViewSet, k: usize) -> Result<ViewSet> {
    k_extension_with(navigable, k, Topology::Linear)
}

pub fn k_extension_with(navigable: ViewSet, k: usize, topology: Topology) -> Result<ViewSet> {
    if navigable.is_empty() {
        return Err(Error::NoNavigableViews);
    }
    let mut out = ViewSet::EMPTY;
    for i in navigable.iter() {
        match topology {
            Topology::Linear => {
                let lo = i.saturating_sub(k).max(1);
                let hi = (i + k).min(VIEW_COUNT);
                for j in lo..=hi {
                    out.insert(j)?;
                }
            }
            Topology::Circular => {
                for j in 1..=VIEW_COUNT {
                    if topology.distance(i, j) <= k {
                        out.insert(j)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Rank of view `j` and the closest navigable view (ties go to the smaller
/// index).
pub fn rank(j: usize, navigable: ViewSet) -> Result<(usize, usize)> {
    rank_with(j, navigable, Topology::Linear)
}

pub fn rank_with(j: usize, navigable: ViewSet, topology: Topology) -> Result<(usize, usize)> {
    check_index(j)?;
    navigable
        .iter()
        .map(|i| (topology.distance(i, j), i))
        .min()
        .ok_or(Error::NoNavigableViews)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum ViewClass {
    Navigable,
    Extended { rank: usize, anchor: usize },
    Masked,
}

/// Total classification of the 36 views for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionPlan {
    classes: [ViewClass; VIEW_COUNT],
    k: usize,
    navigable: ViewSet,
}

impl SelectionPlan {
    pub fn class(&self, j: usize) -> ViewClass {
        self.classes[j - 1]
    }

    /// `(index, class)` pairs in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, ViewClass)> + '_ {
        self.classes.iter().enumerate().map(|(i, c)| (i + 1, *c))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn navigable(&self) -> ViewSet {
        self.navigable
    }

    pub fn extended(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.iter().filter_map(|(j, c)| match c {
            ViewClass::Extended { rank, .. } => Some((j, rank)),
            _ => None,
        })
    }

    pub fn masked_count(&self) -> usize {
        self.classes.iter().filter(|c| matches!(c, ViewClass::Masked)).count()
    }
}

pub fn build_plan(navigable: ViewSet, k: usize) -> Result<SelectionPlan> {
    build_plan_with(navigable, k, Topology::Linear)
}

pub fn build_plan_with(navigable: ViewSet, k: usize, topology: Topology) -> Result<SelectionPlan> {
    let processed = k_extension_with(navigable, k, topology)?;
    let mut classes = [ViewClass::Masked; VIEW_COUNT];
    for (idx, class) in classes.iter_mut().enumerate() {
        let j = idx + 1;
        if navigable.contains(j) {
            *class = ViewClass::Navigable;
        } else if processed.contains(j) {
            let (rank, anchor) = rank_with(j, navigable, topology)?;
            *class = ViewClass::Extended { rank, anchor };
        }
    }
    Ok(SelectionPlan { classes, k, navigable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn set(ix: &[usize]) -> ViewSet {
        ViewSet::from_indices(ix.iter().copied()).unwrap()
    }

    /// Independent oracle: scan every j against the clamped interval of
    /// every navigable i.
    fn brute_extension(nav: &[usize], k: usize) -> Vec<usize> {
        (1..=36usize)
            .filter(|&j| {
                nav.iter().any(|&i| {
                    let lo = if i > k { i - k } else { 1 };
                    let hi = if i + k < 36 { i + k } else { 36 };
                    lo <= j && j <= hi
                })
            })
            .collect()
    }

    #[test]
    fn extension_examples() {
        assert_eq!(k_extension(set(&[18]), 2).unwrap(), set(&[16, 17, 18, 19, 20]));
        assert_eq!(k_extension(set(&[1]), 3).unwrap(), set(&[1, 2, 3, 4]));
        assert_eq!(k_extension(set(&[5, 7]), 0).unwrap(), set(&[5, 7]));
        assert_eq!(brute_extension(&[18], 2), [16, 17, 18, 19, 20]);
        assert_eq!(brute_extension(&[1], 3), [1, 2, 3, 4]);
        assert_eq!(k_extension(ViewSet::EMPTY, 2), Err(Error::NoNavigableViews));
    }

    #[test]
    fn circular_wraps() {
        let ext = k_extension_with(set(&[1]), 2, Topology::Circular).unwrap();
        assert_eq!(ext, set(&[35, 36, 1, 2, 3]));
        assert_eq!(rank_with(35, set(&[1]), Topology::Circular).unwrap(), (2, 1));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(13, set(&[10])).unwrap(), (3, 10));
        assert_eq!(rank(6, set(&[4, 8])).unwrap(), (2, 4));
        assert_eq!(rank(4, set(&[4])).unwrap(), (0, 4));
        assert_eq!(rank(4, ViewSet::EMPTY), Err(Error::NoNavigableViews));
    }

    #[test]
    fn plan_examples() {
        let plan = build_plan(set(&[10]), 1).unwrap();
        for (j, class) in plan.iter() {
            let expected = match j {
                10 => ViewClass::Navigable,
                9 | 11 => ViewClass::Extended { rank: 1, anchor: 10 },
                _ => ViewClass::Masked,
            };
            assert_eq!(class, expected, "view {j}");
        }
        let all = build_plan(ViewSet::all(), 3).unwrap();
        assert!(all.iter().all(|(_, c)| c == ViewClass::Navigable));
        assert_eq!(all.masked_count(), 0);
    }

    fn nav_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..=36, 1..8)
    }

    proptest! {
        #[test]
        fn matches_brute_force(nav in nav_strategy(), k in 0usize..40) {
            let v = set(&nav);
            let ext = k_extension(v, k).unwrap();
            prop_assert_eq!(ext.iter().collect::<Vec<_>>(), brute_extension(&nav, k));
            prop_assert!(ext.len() <= 36.min(v.len() * (2 * k + 1)));
            let plan = build_plan(v, k).unwrap();
            prop_assert_eq!(plan.masked_count(), 36 - ext.len());
            for (j, class) in plan.iter() {
                if let ViewClass::Extended { rank, anchor } = class {
                    let brute = nav.iter().map(|&i| i.abs_diff(j)).min().unwrap();
                    prop_assert_eq!(rank, brute);
                    prop_assert!(rank >= 1 && rank <= k);
                    prop_assert_eq!(anchor.abs_diff(j), rank);
                }
                prop_assert_eq!(class == ViewClass::Navigable, v.contains(j));
            }
        }

        #[test]
        fn monotone(nav in nav_strategy(), extra in nav_strategy(), k1 in 0usize..20, dk in 0usize..20) {
            let v1 = set(&nav);
            let v2 = v1.union(set(&extra));
            let a = k_extension(v1, k1).unwrap();
            prop_assert!(a.is_subset(&k_extension(v1, k1 + dk).unwrap()));
            prop_assert!(a.is_subset(&k_extension(v2, k1).unwrap()));
        }
    }
}
