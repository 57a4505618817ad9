//! SimHash cache of (view, embedding) pairs.
//!
//! A view is hashed to an `n`-bit key by the signs of its dot products with
//! `n` random Gaussian hyperplanes. Pairs are stored in the bucket of their
//! key; a lookup returns the embedding of the most similar stored view in the
//! query's bucket when that similarity strictly exceeds the threshold.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ViewImage;
use crate::math::{cosine_similarity, Embedding};
use crate::rng::Stream;

/// Bytes per stored value (single-precision floats).
pub const BYTES_PER_VALUE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    dim: usize,
    planes: Vec<Vec<f32>>,
}

impl HashFamily {
    /// Draws `n` standard-normal hyperplanes of dimension `dim`.
    pub fn new(n: usize, dim: usize, stream: &mut Stream) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::InvalidCacheConfig(format!(
                "hyperplane count {n} outside 1..=64"
            )));
        }
        let planes = (0..n)
            .map(|_| (0..dim).map(|_| stream.normal() as f32).collect())
            .collect();
        Ok(Self { dim, planes })
    }

    pub fn from_planes(planes: Vec<Vec<f32>>) -> Result<Self> {
        let dim = planes.first().map_or(0, Vec::len);
        if planes.is_empty() || planes.len() > 64 || planes.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidCacheConfig("ragged or empty hyperplane set".into()));
        }
        Ok(Self { dim, planes })
    }

    pub fn bits(&self) -> usize {
        self.planes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bit `i` is 1 iff `hyperplane_i · v > 0`; an exact zero maps to 0.
    pub fn hash_slice(&self, v: &[f32]) -> Result<HashKey> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut bits = 0u64;
        for (i, plane) in self.planes.iter().enumerate() {
            let dot: f64 = plane.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            if dot > 0.0 {
                bits |= 1 << i;
            }
        }
        Ok(HashKey {
            bits,
            len: self.planes.len() as u8,
        })
    }

    pub fn hash(&self, view: &ViewImage) -> Result<HashKey> {
        self.hash_slice(view.data())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashKey {
    bits: u64,
    len: u8,
}

impl HashKey {
    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    pub fn hamming(&self, other: &HashKey) -> u32 {
        (self.bits ^ other.bits).count_ones()
    }
}

impl core::fmt::Display for HashKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Similarity between a query view and a stored view.
pub trait ViewComparator {
    fn similarity(&self, a: &ViewImage, b: &ViewImage) -> Result<f64>;
}

/// Cosine similarity of the raw flattened views.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RawCosine;

impl ViewComparator for RawCosine {
    fn similarity(&self, a: &ViewImage, b: &ViewImage) -> Result<f64> {
        cosine_similarity(a.data(), b.data())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub hyperplanes: usize,
    pub similarity_threshold: f64,
    /// Reject inserts once this many pairs are stored.
    pub max_pairs: Option<usize>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl CacheConfig {
    pub fn standard() -> Self {
        Self {
            hyperplanes: 10,
            similarity_threshold: 0.85,
            max_pairs: None,
        }
    }

    pub fn continuous() -> Self {
        Self {
            similarity_threshold: 0.95,
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hyperplanes == 0 || self.hyperplanes > 64 {
            return Err(Error::InvalidCacheConfig(format!(
                "hyperplanes {} outside 1..=64",
                self.hyperplanes
            )));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidCacheConfig(format!(
                "similarity threshold {} outside [-1, 1]",
                self.similarity_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub view: ViewImage,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub inserted: u64,
    pub rejected: u64,
    pub comparisons: u64,
    pub bytes: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let lookups = self.hits + self.misses;
        if lookups == 0 {
            0.0
        } else {
            self.hits as f64 / lookups as f64
        }
    }

    pub fn merge(&mut self, other: &CacheStats) {
        self.hits += other.hits;
        self.misses += other.misses;
        self.inserted += other.inserted;
        self.rejected += other.rejected;
        self.comparisons += other.comparisons;
        self.bytes += other.bytes;
    }
}

/// Best candidate of a bucket scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketMatch {
    pub position: usize,
    pub similarity: f64,
    pub comparisons: usize,
}

#[derive(Debug, Clone)]
pub struct CacheTable<C = RawCosine> {
    family: HashFamily,
    comparator: C,
    similarity_threshold: f64,
    max_pairs: Option<usize>,
    buckets: BTreeMap<HashKey, Vec<CacheEntry>>,
    stats: CacheStats,
}

impl CacheTable<RawCosine> {
    pub fn new(family: HashFamily, config: &CacheConfig) -> Result<Self> {
        Self::with_comparator(family, config, RawCosine)
    }
}

impl<C: ViewComparator> CacheTable<C> {
    pub fn with_comparator(family: HashFamily, config: &CacheConfig, comparator: C) -> Result<Self> {
        config.validate()?;
        if family.bits() != config.hyperplanes {
            return Err(Error::InvalidCacheConfig(format!(
                "family has {} hyperplanes, config asks for {}",
                family.bits(),
                config.hyperplanes
            )));
        }
        Ok(Self {
            family,
            comparator,
            similarity_threshold: config.similarity_threshold,
            max_pairs: config.max_pairs,
            buckets: BTreeMap::new(),
            stats: CacheStats::default(),
        })
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn comparator(&self) -> &C {
        &self.comparator
    }

    pub fn similarity_threshold(&self) -> f64 {
        self.similarity_threshold
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn hash(&self, view: &ViewImage) -> Result<HashKey> {
        self.family.hash(view)
    }

    pub fn bucket(&self, key: HashKey) -> &[CacheEntry] {
        self.buckets.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&HashKey, &[CacheEntry])> {
        self.buckets.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Appends the pair to the bucket of `hash(view)`; duplicates are kept.
    /// Returns `false` if the size cap rejected it.
    pub fn insert(&mut self, view: ViewImage, embedding: Embedding) -> Result<bool> {
        let key = self.hash(&view)?;
        Ok(self.insert_keyed(key, view, embedding))
    }

    /// Whether `extra` more pairs would fit under the size cap.
    pub fn has_room_for(&self, extra: usize) -> bool {
        self.max_pairs.is_none_or(|cap| self.len() + extra <= cap)
    }

    /// Insert with a key the caller already computed for this view.
    pub fn insert_keyed(&mut self, key: HashKey, view: ViewImage, embedding: Embedding) -> bool {
        if self.max_pairs.is_some_and(|cap| self.len() >= cap) {
            self.stats.rejected += 1;
            return false;
        }
        self.stats.bytes += ((view.len() + embedding.len()) * BYTES_PER_VALUE) as u64;
        self.stats.inserted += 1;
        self.buckets
            .entry(key)
            .or_default()
            .push(CacheEntry { view, embedding });
        true
    }

    /// Most similar entry of the bucket (first one on ties), without
    /// touching the hit/miss counters.
    pub fn best_in_bucket(&self, key: HashKey, view: &ViewImage) -> Result<Option<BucketMatch>> {
        let mut best: Option<BucketMatch> = None;
        let bucket = self.bucket(key);
        for (position, entry) in bucket.iter().enumerate() {
            let similarity = self.comparator.similarity(view, &entry.view)?;
            if best.is_none_or(|b| similarity > b.similarity) {
                best = Some(BucketMatch {
                    position,
                    similarity,
                    comparisons: 0,
                });
            }
        }
        Ok(best.map(|b| BucketMatch {
            comparisons: bucket.len(),
            ..b
        }))
    }

    pub fn record_lookup(&mut self, hit: bool, comparisons: usize) {
        if hit {
            self.stats.hits += 1;
        } else {
            self.stats.misses += 1;
        }
        self.stats.comparisons += comparisons as u64;
    }

    /// Embedding of the most similar stored view in the query's bucket, if
    /// that similarity is strictly above the threshold.
    pub fn find_similar(&mut self, view: &ViewImage) -> Result<Option<Embedding>> {
        let key = self.hash(view)?;
        let best = self.best_in_bucket(key, view)?;
        let hit = best.filter(|b| b.similarity > self.similarity_threshold);
        self.record_lookup(hit.is_some(), best.map_or(0, |b| b.comparisons));
        Ok(hit.map(|b| self.bucket(key)[b.position].embedding.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use alloc::string::ToString;
    use alloc::vec;

    fn table(threshold: f64) -> CacheTable {
        let mut s = Stream::new(Seed(1)).fork("hash");
        let family = HashFamily::new(10, 12, &mut s).unwrap();
        let cfg = CacheConfig {
            similarity_threshold: threshold,
            ..CacheConfig::standard()
        };
        CacheTable::new(family, &cfg).unwrap()
    }

    fn img(values: [f32; 12]) -> ViewImage {
        ViewImage::new(2, 2, values.to_vec()).unwrap()
    }

    #[test]
    fn key_is_sign_pattern() {
        let planes = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, -1.0]];
        let fam = HashFamily::from_planes(planes).unwrap();
        let k = fam.hash_slice(&[1.0, 1.0]).unwrap();
        // Last plane is orthogonal: exact zero maps to bit 0.
        assert_eq!(k.to_string(), "1110");
        assert_eq!(fam.hash_slice(&[-1.0, -2.0]).unwrap().to_string(), "0001");
        let all_pos = HashFamily::from_planes(vec![vec![1.0, 2.0]; 5]).unwrap();
        assert_eq!(all_pos.hash_slice(&[0.5, 0.5]).unwrap().to_string(), "11111");
        assert!(matches!(fam.hash_slice(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn negated_vector_gives_complement() {
        let mut s = Stream::new(Seed(9));
        let fam = HashFamily::new(16, 8, &mut s).unwrap();
        let v: Vec<f32> = (0..8).map(|_| s.normal() as f32).collect();
        let neg: Vec<f32> = v.iter().map(|x| -x).collect();
        let (a, b) = (fam.hash_slice(&v).unwrap(), fam.hash_slice(&neg).unwrap());
        assert_eq!(a.bits() ^ b.bits(), (1 << 16) - 1);
        assert_eq!(fam.hash_slice(&v).unwrap(), a);
    }

    #[test]
    fn insert_then_find() {
        let mut t = table(0.85);
        let v = img([0.1, 0.9, 0.3, 0.5, 0.2, 0.7, 0.4, 0.8, 0.6, 0.1, 0.3, 0.2]);
        let e = Embedding::new(vec![1.0, 2.0]);
        assert_eq!(t.find_similar(&v).unwrap(), None);
        assert!(t.insert(v.clone(), e.clone()).unwrap());
        let key = t.hash(&v).unwrap();
        assert_eq!(t.bucket(key).len(), 1);
        assert_eq!(t.stats().bytes, ((12 + 2) * 4) as u64);
        assert_eq!(t.find_similar(&v).unwrap(), Some(e.clone()));
        t.insert(v.clone(), e).unwrap();
        assert_eq!(t.bucket(key).len(), 2);
        assert_eq!(t.stats().hits, 1);
        assert_eq!(t.stats().misses, 1);
    }

    #[test]
    fn below_threshold_is_absent() {
        // Stored view and query with cosine 0.5, forced into one bucket by a
        // single all-positive hyperplane.
        let fam = HashFamily::from_planes(vec![vec![1.0; 12]]).unwrap();
        let cfg = CacheConfig {
            hyperplanes: 1,
            ..CacheConfig::standard()
        };
        let mut t = CacheTable::new(fam, &cfg).unwrap();
        let mut a = [0.0f32; 12];
        a[0] = 0.5;
        let mut b = [0.0f32; 12];
        b[0] = 0.5;
        b[1] = 0.5 * 3f32.sqrt();
        let (a, b) = (img(a), img(b));
        let c = RawCosine.similarity(&a, &b).unwrap();
        assert!((c - 0.5).abs() < 1e-6);
        t.insert(a, Embedding::new(vec![1.0])).unwrap();
        assert_eq!(t.find_similar(&b).unwrap(), None);
    }

    #[test]
    fn cap_rejects_when_full() {
        let mut s = Stream::new(Seed(1));
        let fam = HashFamily::new(10, 12, &mut s).unwrap();
        let cfg = CacheConfig {
            max_pairs: Some(1),
            ..CacheConfig::standard()
        };
        let mut t = CacheTable::new(fam, &cfg).unwrap();
        let v = img([0.5; 12]);
        assert!(t.insert(v.clone(), Embedding::new(vec![1.0])).unwrap());
        assert!(!t.insert(v, Embedding::new(vec![1.0])).unwrap());
        assert_eq!(t.stats().rejected, 1);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn reference_storage_per_pair() {
        // 3x224x224 view plus a 197x768 embedding at 4 bytes per value.
        let view = ViewImage::filled(224, 224, 0.5).unwrap();
        let emb = Embedding::masked(197 * 768);
        let mut s = Stream::new(Seed(0));
        let fam = HashFamily::new(10, view.len(), &mut s).unwrap();
        let mut t = CacheTable::new(fam, &CacheConfig::standard()).unwrap();
        t.insert(view, emb).unwrap();
        assert_eq!(t.stats().bytes, (150_528 + 151_296) * 4);
        assert_eq!(t.stats().bytes, 1_207_296);
    }
}
