//! View index sets and panoramas. All public APIs speak 1-based view indices.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ViewImage;

/// Number of views in a panorama.
pub const VIEW_COUNT: usize = 36;

/// A subset of view indices `1..=36`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct ViewSet(u64);

impl ViewSet {
    pub const EMPTY: ViewSet = ViewSet(0);

    pub fn all() -> Self {
        ViewSet((1u64 << VIEW_COUNT) - 1)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = ViewSet::EMPTY;
        for j in indices {
            set.insert(j)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, j: usize) -> Result<()> {
        check_index(j)?;
        self.0 |= 1 << (j - 1);
        Ok(())
    }

    pub fn contains(&self, j: usize) -> bool {
        (1..=VIEW_COUNT).contains(&j) && self.0 & (1 << (j - 1)) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ViewSet) -> ViewSet {
        ViewSet(self.0 | other.0)
    }

    pub fn difference(self, other: ViewSet) -> ViewSet {
        ViewSet(self.0 & !other.0)
    }

    pub fn is_subset(&self, other: &ViewSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Ascending 1-based indices.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=VIEW_COUNT).filter(move |&j| self.contains(j))
    }
}

impl core::fmt::Debug for ViewSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl From<ViewSet> for Vec<usize> {
    fn from(set: ViewSet) -> Self {
        set.iter().collect()
    }
}

impl TryFrom<Vec<usize>> for ViewSet {
    type Error = Error;

    fn try_from(indices: Vec<usize>) -> Result<Self> {
        ViewSet::from_indices(indices)
    }
}

pub(crate) fn check_index(j: usize) -> Result<()> {
    if (1..=VIEW_COUNT).contains(&j) {
        Ok(())
    } else {
        Err(Error::InvalidViewIndex(j))
    }
}

/// The per-step observation: 36 views plus the navigable index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    views: Vec<ViewImage>,
    navigable: ViewSet,
}

impl Panorama {
    pub fn new(views: Vec<ViewImage>, navigable: ViewSet) -> Result<Self> {
        if views.len() != VIEW_COUNT {
            return Err(Error::InvalidPanorama(format!(
                "expected {VIEW_COUNT} views, got {}",
                views.len()
            )));
        }
        let (h, w) = (views[0].height(), views[0].width());
        if views.iter().any(|v| v.height() != h || v.width() != w) {
            return Err(Error::InvalidPanorama("views differ in size".into()));
        }
        Ok(Self { views, navigable })
    }

    /// View `j` (1-based).
    pub fn view(&self, j: usize) -> &ViewImage {
        &self.views[j - 1]
    }

    pub fn views(&self) -> &[ViewImage] {
        &self.views
    }

    pub fn navigable(&self) -> ViewSet {
        self.navigable
    }

    pub fn map_views(&self, f: impl FnMut(&ViewImage) -> Result<ViewImage>) -> Result<Panorama> {
        let views = self.views.iter().map(f).collect::<Result<Vec<_>>>()?;
        Panorama::new(views, self.navigable)
    }

    pub fn with_navigable(mut self, navigable: ViewSet) -> Panorama {
        self.navigable = navigable;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn set_basics() {
        let s = ViewSet::from_indices([36, 1, 5, 5]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![1, 5, 36]);
        assert!(!s.contains(0) && !s.contains(37));
        assert_eq!(ViewSet::from_indices([0]), Err(Error::InvalidViewIndex(0)));
        assert_eq!(ViewSet::all().len(), 36);
    }

    #[test]
    fn panorama_needs_36_views() {
        let img = ViewImage::filled(2, 2, 0.5).unwrap();
        assert!(Panorama::new(vec![img.clone(); 35], ViewSet::EMPTY).is_err());
        assert!(Panorama::new(vec![img; 36], ViewSet::EMPTY).is_ok());
    }
}
