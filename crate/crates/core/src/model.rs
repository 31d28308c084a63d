//! Domain types: model identities, performance profiles, model sets and
//! configurations.
//!
//! A [`ModelSet`] keeps its profiles sorted by [`ModelId`], so model index `i`
//! is also the `i`-th name in byte order. Subsets are carried internally as a
//! [`Subset`] bitmask over those indices; [`Configuration`] is the name-based
//! view used at API boundaries.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ChemError, Result};

/// Hard upper bound on the number of models in a set (bitmask width).
pub const MAX_MODELS: usize = 64;

pub const DEFAULT_EMPTY_COST: f64 = 1.0;
pub const DEFAULT_USED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(String);

impl ModelId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(ChemError::InvalidModelSet("model name must not be empty".into()));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    /// Panics on an empty name; use [`ModelId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        Self::new(s).expect("model name must not be empty")
    }
}

/// Per-model (quality, accuracy) pair: quality is the consensus grade on
/// `[0, 10]`, accuracy the combined reliability on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model: ModelId,
    pub quality: f64,
    pub accuracy: f64,
}

impl ModelProfile {
    pub fn new(model: impl Into<ModelId>, quality: f64, accuracy: f64) -> Result<Self> {
        let model = model.into();
        if !quality.is_finite() || !(0.0..=10.0).contains(&quality) {
            return Err(ChemError::Domain(format!(
                "quality {quality} of {model} outside [0, 10]"
            )));
        }
        if !accuracy.is_finite() || !(0.0..=1.0).contains(&accuracy) {
            return Err(ChemError::Domain(format!(
                "accuracy {accuracy} of {model} outside [0, 1]"
            )));
        }
        Ok(Self { model, quality, accuracy })
    }

    pub fn quality_norm(&self) -> f64 {
        self.quality / 10.0
    }
}

/// Bitmask over the model indices of a [`ModelSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Subset(pub u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_MODELS);
        if n == MAX_MODELS {
            Subset(u64::MAX)
        } else {
            Subset((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        Subset(1u64 << i)
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        Subset(self.0 | (1u64 << i))
    }

    pub fn without(self, i: usize) -> Self {
        Subset(self.0 & !(1u64 << i))
    }

    pub fn union(self, other: Subset) -> Self {
        Subset(self.0 | other.0)
    }

    pub fn minus(self, other: Subset) -> Self {
        Subset(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: Subset) -> bool {
        self.0 & other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Lexicographic comparison of the ascending member-index sequences.
    pub fn key_cmp(self, other: Subset) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

/// All subsets of `universe` with exactly `k` members, in lexicographic order
/// of their member sequences.
pub fn subsets_of_size(universe: Subset, k: usize) -> Vec<Subset> {
    fn rec(items: &[usize], k: usize, acc: Subset, out: &mut Vec<Subset>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for (pos, &i) in items.iter().enumerate() {
            if items.len() - pos < k {
                break;
            }
            rec(&items[pos + 1..], k - 1, acc.with(i), out);
        }
    }
    let items: Vec<usize> = universe.iter().collect();
    let mut out = Vec::new();
    if k <= items.len() {
        rec(&items, k, Subset::EMPTY, &mut out);
    }
    out
}

/// Every subset of `universe`, by size and then lexicographically.
pub fn all_subsets(universe: Subset) -> Vec<Subset> {
    (0..=universe.len())
        .flat_map(|k| subsets_of_size(universe, k))
        .collect()
}

/// A named subset of models.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    members: BTreeSet<ModelId>,
}

impl Configuration {
    pub fn new<I, M>(members: I) -> Self
    where
        I: IntoIterator<Item = M>,
        M: Into<ModelId>,
    {
        Self {
            members: members.into_iter().map(Into::into).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn members(&self) -> impl Iterator<Item = &ModelId> {
        self.members.iter()
    }

    pub fn contains(&self, id: &ModelId) -> bool {
        self.members.contains(id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Comma-joined member names in byte order.
    pub fn key(&self) -> String {
        self.members
            .iter()
            .map(ModelId::as_str)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

/// The candidate set `S` together with the knobs that define `used(X)` and
/// the cost of a configuration that produced no usable output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    profiles: Vec<ModelProfile>,
    empty_cost: f64,
    used_threshold: f64,
}

impl ModelSet {
    pub fn new(profiles: impl IntoIterator<Item = ModelProfile>) -> Result<Self> {
        let mut profiles: Vec<ModelProfile> = profiles.into_iter().collect();
        if profiles.is_empty() {
            return Err(ChemError::InvalidModelSet("a model set needs at least one model".into()));
        }
        if profiles.len() > MAX_MODELS {
            return Err(ChemError::SizeLimit { size: profiles.len(), limit: MAX_MODELS });
        }
        profiles.sort_by(|a, b| a.model.cmp(&b.model));
        if let Some(w) = profiles.windows(2).find(|w| w[0].model == w[1].model) {
            return Err(ChemError::InvalidModelSet(format!("duplicate model {}", w[0].model)));
        }
        for p in &profiles {
            // re-validate in case the struct was built literally
            ModelProfile::new(p.model.clone(), p.quality, p.accuracy)?;
        }
        Ok(Self {
            profiles,
            empty_cost: DEFAULT_EMPTY_COST,
            used_threshold: DEFAULT_USED_THRESHOLD,
        })
    }

    pub fn with_empty_cost(mut self, empty_cost: f64) -> Result<Self> {
        if !empty_cost.is_finite() || empty_cost < 0.0 {
            return Err(ChemError::Domain(format!("empty_cost {empty_cost} must be finite and >= 0")));
        }
        self.empty_cost = empty_cost;
        Ok(self)
    }

    pub fn with_used_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ChemError::Domain(format!("used_threshold {threshold} outside [0, 1]")));
        }
        self.used_threshold = threshold;
        Ok(self)
    }

    pub fn profiles(&self) -> &[ModelProfile] {
        &self.profiles
    }

    pub fn profile(&self, i: usize) -> &ModelProfile {
        &self.profiles[i]
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn empty_cost(&self) -> f64 {
        self.empty_cost
    }

    pub fn used_threshold(&self) -> f64 {
        self.used_threshold
    }

    pub fn ids(&self) -> impl Iterator<Item = &ModelId> {
        self.profiles.iter().map(|p| &p.model)
    }

    pub fn all(&self) -> Subset {
        Subset::full(self.len())
    }

    pub fn index_of(&self, id: &ModelId) -> Option<usize> {
        self.profiles.binary_search_by(|p| p.model.cmp(id)).ok()
    }

    pub fn require_index(&self, id: &ModelId) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| ChemError::InvalidConfiguration(format!("unknown model {id}")))
    }

    pub fn subset_of(&self, config: &Configuration) -> Result<Subset> {
        config
            .members()
            .try_fold(Subset::EMPTY, |acc, id| Ok(acc.with(self.require_index(id)?)))
    }

    pub fn configuration_of(&self, subset: Subset) -> Configuration {
        Configuration::new(subset.iter().map(|i| self.profiles[i].model.clone()))
    }

    pub fn subset_key(&self, subset: Subset) -> String {
        subset
            .iter()
            .map(|i| self.profiles[i].model.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Members of `subset` whose accuracy reaches the used threshold.
    pub fn used_mask(&self, subset: Subset) -> Subset {
        subset
            .iter()
            .filter(|&i| self.profiles[i].accuracy >= self.used_threshold)
            .fold(Subset::EMPTY, Subset::with)
    }

    /// SHA-256 over the sorted profiles and the set's knobs, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.profiles {
            hasher.update(p.model.as_str().as_bytes());
            hasher.update([0u8]);
            hasher.update(p.quality.to_le_bytes());
            hasher.update(p.accuracy.to_le_bytes());
        }
        hasher.update(self.empty_cost.to_le_bytes());
        hasher.update(self.used_threshold.to_le_bytes());
        hex::encode(hasher.finalize())
    }

    /// A set with the same knobs restricted to the models in `subset`.
    pub fn restrict(&self, subset: Subset) -> Result<Self> {
        let mut set = Self::new(subset.iter().map(|i| self.profiles[i].clone()))?;
        set.empty_cost = self.empty_cost;
        set.used_threshold = self.used_threshold;
        Ok(set)
    }
}

/// Hex SHA-256 of raw bytes, used to fingerprint input files.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(&str, f64, f64)]) -> ModelSet {
        ModelSet::new(items.iter().map(|&(n, q, a)| ModelProfile::new(n, q, a).unwrap())).unwrap()
    }

    #[test]
    fn profiles_are_sorted_and_unique() {
        let s = set(&[("c", 1.0, 0.1), ("a", 2.0, 0.2), ("b", 3.0, 0.3)]);
        let names: Vec<_> = s.ids().map(|m| m.as_str().to_string()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        let dup = ModelSet::new(vec![
            ModelProfile::new("a", 1.0, 0.5).unwrap(),
            ModelProfile::new("a", 2.0, 0.5).unwrap(),
        ]);
        assert!(matches!(dup, Err(ChemError::InvalidModelSet(_))));
        assert!(ModelSet::new(Vec::new()).is_err());
    }

    #[test]
    fn names_compare_case_sensitively() {
        let s = set(&[("A", 1.0, 0.1), ("a", 2.0, 0.2)]);
        assert_eq!(s.len(), 2);
        assert!(s.index_of(&ModelId::from("B")).is_none());
    }

    #[test]
    fn profile_ranges_are_enforced() {
        assert!(ModelProfile::new("a", 10.5, 0.5).is_err());
        assert!(ModelProfile::new("a", 5.0, -0.1).is_err());
        assert!(ModelProfile::new("a", f64::NAN, 0.5).is_err());
        assert!(ModelId::new("").is_err());
    }

    #[test]
    fn subsets_enumerate_in_lexicographic_order() {
        let got = subsets_of_size(Subset::full(4), 2);
        let keys: Vec<Vec<usize>> = got.iter().map(|s| s.iter().collect()).collect();
        assert_eq!(
            keys,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(all_subsets(Subset::full(5)).len(), 32);
        assert_eq!(subsets_of_size(Subset::full(3), 4).len(), 0);
    }

    #[test]
    fn key_cmp_is_lexicographic_on_members() {
        let ab = Subset::EMPTY.with(0).with(1);
        let ac = Subset::EMPTY.with(0).with(2);
        let b = Subset::singleton(1);
        assert_eq!(ab.key_cmp(ac), Ordering::Less);
        assert_eq!(ac.key_cmp(b), Ordering::Less);
    }

    #[test]
    fn configuration_maps_to_masks() {
        let s = set(&[("a", 1.0, 0.9), ("b", 2.0, 0.4), ("c", 3.0, 0.5)]);
        let cfg = Configuration::new(["c", "a"]);
        let mask = s.subset_of(&cfg).unwrap();
        assert_eq!(s.configuration_of(mask), cfg);
        assert_eq!(s.subset_key(mask), "a,c");
        assert!(s.subset_of(&Configuration::new(["z"])).is_err());
    }

    #[test]
    fn fingerprint_ignores_input_order() {
        let a = set(&[("a", 1.0, 0.9), ("b", 2.0, 0.4)]);
        let b = set(&[("b", 2.0, 0.4), ("a", 1.0, 0.9)]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = set(&[("b", 2.0, 0.41), ("a", 1.0, 0.9)]);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
