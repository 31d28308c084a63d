//! Rank-weighted penalty cost of a configuration and the derived benefit.
//!
//! The used members of a configuration are ranked best first (quality
//! descending, then accuracy descending, then name ascending) and output `i`
//! contributes `(1/i) * (1 - q_i/10) * (1 - a_i)`. A configuration with no
//! used member costs the set's `empty_cost`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ChemError, Result};
use crate::model::{all_subsets, Configuration, ModelId, ModelProfile, ModelSet, Subset};

/// One used output after ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOutput {
    pub model: ModelId,
    pub rank: usize,
    pub quality_norm: f64,
    pub accuracy: f64,
    pub weight: f64,
}

pub fn penalty(quality_norm: f64, accuracy: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&quality_norm) || !(0.0..=1.0).contains(&accuracy) {
        return Err(ChemError::Domain(format!(
            "penalty arguments ({quality_norm}, {accuracy}) must lie in [0, 1]"
        )));
    }
    Ok(raw_penalty(quality_norm, accuracy))
}

#[inline]
fn raw_penalty(quality_norm: f64, accuracy: f64) -> f64 {
    (1.0 - quality_norm) * (1.0 - accuracy)
}

pub fn used_subset(set: &ModelSet, config: &Configuration) -> Result<Configuration> {
    let mask = set.subset_of(config)?;
    Ok(set.configuration_of(set.used_mask(mask)))
}

fn rank_order(set: &ModelSet, used: Subset) -> Vec<usize> {
    let mut idx: Vec<usize> = used.iter().collect();
    idx.sort_by(|&x, &y| {
        let (px, py) = (set.profile(x), set.profile(y));
        py.quality
            .total_cmp(&px.quality)
            .then(py.accuracy.total_cmp(&px.accuracy))
            .then(x.cmp(&y))
    });
    idx
}

/// Ranked outputs of the used members of `subset`, with exact `1/rank` weights.
pub fn ranked_outputs_mask(set: &ModelSet, subset: Subset) -> Vec<RankedOutput> {
    rank_order(set, set.used_mask(subset))
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            let p = set.profile(i);
            RankedOutput {
                model: p.model.clone(),
                rank: pos + 1,
                quality_norm: p.quality_norm(),
                accuracy: p.accuracy,
                weight: 1.0 / (pos + 1) as f64,
            }
        })
        .collect()
}

pub fn ranked_outputs(set: &ModelSet, config: &Configuration) -> Result<Vec<RankedOutput>> {
    Ok(ranked_outputs_mask(set, set.subset_of(config)?))
}

/// Weighted penalty sum over already ranked outputs, with the weight of each
/// output taken from `weight(rank)`.
pub fn weighted_cost(outputs: &[RankedOutput], weight: impl Fn(usize) -> f64) -> f64 {
    outputs
        .iter()
        .map(|o| weight(o.rank) * raw_penalty(o.quality_norm, o.accuracy))
        .sum()
}

pub fn cost_mask(set: &ModelSet, subset: Subset) -> f64 {
    let used = set.used_mask(subset);
    if used.is_empty() {
        return set.empty_cost();
    }
    rank_order(set, used)
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            let p = set.profile(i);
            raw_penalty(p.quality_norm(), p.accuracy) / (pos + 1) as f64
        })
        .sum()
}

pub fn cost(set: &ModelSet, config: &Configuration) -> Result<f64> {
    Ok(cost_mask(set, set.subset_of(config)?))
}

/// `cost(y) - cost(x ∪ y)`. Intended for disjoint `x` and `y`, but computed
/// as written for any pair.
pub fn benefit(set: &ModelSet, x: &Configuration, y: &Configuration) -> Result<f64> {
    let (xm, ym) = (set.subset_of(x)?, set.subset_of(y)?);
    Ok(cost_mask(set, ym) - cost_mask(set, xm.union(ym)))
}

/// Explicitly supplied per-subset costs, optionally with per-subset `used`
/// overrides. Used to replay hand-built examples that cannot be derived from
/// profiles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostTable {
    costs: HashMap<Subset, f64>,
    used: HashMap<Subset, Subset>,
}

impl CostTable {
    pub fn new<'a, I>(set: &ModelSet, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Configuration, f64)>,
    {
        let mut costs = HashMap::new();
        for (cfg, c) in entries {
            if !c.is_finite() || c < 0.0 {
                return Err(ChemError::Domain(format!("table cost {c} for {cfg} must be finite and >= 0")));
            }
            costs.insert(set.subset_of(cfg)?, c);
        }
        Ok(Self { costs, used: HashMap::new() })
    }

    pub fn with_used(mut self, set: &ModelSet, subset: &Configuration, used: &Configuration) -> Result<Self> {
        let (s, u) = (set.subset_of(subset)?, set.subset_of(used)?);
        if !u.is_subset_of(s) {
            return Err(ChemError::InvalidConfiguration(format!("used {used} is not within {subset}")));
        }
        self.used.insert(s, u);
        Ok(self)
    }

    pub fn get(&self, subset: Subset) -> Option<f64> {
        self.costs.get(&subset).copied()
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }
}

/// Where subset costs and `used` sets come from.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum CostBackend {
    #[default]
    Profiles,
    Table(CostTable),
}

impl CostBackend {
    pub fn cost(&self, set: &ModelSet, subset: Subset) -> Result<f64> {
        match self {
            CostBackend::Profiles => Ok(cost_mask(set, subset)),
            CostBackend::Table(t) => t
                .get(subset)
                .ok_or_else(|| ChemError::MissingCost(set.subset_key(subset))),
        }
    }

    pub fn used(&self, set: &ModelSet, subset: Subset) -> Subset {
        match self {
            CostBackend::Table(t) => t
                .used
                .get(&subset)
                .copied()
                .unwrap_or_else(|| set.used_mask(subset)),
            CostBackend::Profiles => set.used_mask(subset),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSection {
    pub probes: usize,
    pub violations: usize,
    /// Largest amount by which a probe missed its inequality (or the largest
    /// residual, for the linearity section).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyAuditReport {
    /// Raising one output's quality or accuracy with its rank held fixed.
    pub monotonicity: AuditSection,
    /// Same probes, but re-ranking after the change. Diagnostic only: moving
    /// an output up the ranking can raise the total.
    pub monotonicity_reranked: AuditSection,
    pub linearity: AuditSection,
    /// Diagnostic: sampled `X ⊆ Y`, `a ∉ Y` chains.
    pub submodularity: AuditSection,
    /// Diagnostic: every chain, when the set has at most 12 models.
    pub submodularity_exhaustive: Option<AuditSection>,
}

impl PropertyAuditReport {
    /// Monotonicity and linearity are the asserted sections.
    pub fn passed(&self) -> bool {
        self.monotonicity.violations == 0 && self.linearity.violations == 0
    }
}

const LINEARITY_TOL: f64 = 1e-12;
const SUBMODULAR_TOL: f64 = 1e-12;

/// Per-output recomputation of the cost used as the linearity reference: each
/// used member's rank is counted directly rather than obtained by sorting.
fn cost_by_terms(set: &ModelSet, subset: Subset) -> f64 {
    let used: Vec<&ModelProfile> = set
        .used_mask(subset)
        .iter()
        .map(|i| set.profile(i))
        .collect();
    if used.is_empty() {
        return set.empty_cost();
    }
    let ahead = |p: &ModelProfile, o: &ModelProfile| {
        o.quality > p.quality
            || (o.quality == p.quality
                && (o.accuracy > p.accuracy || (o.accuracy == p.accuracy && o.model < p.model)))
    };
    let mut terms: Vec<(usize, f64)> = used
        .iter()
        .map(|p| {
            let rank = 1 + used.iter().filter(|o| ahead(p, o)).count();
            (rank, (1.0 - p.quality / 10.0) * (1.0 - p.accuracy) / rank as f64)
        })
        .collect();
    terms.sort_by_key(|t| t.0);
    terms.iter().map(|t| t.1).sum()
}

fn random_subset(rng: &mut ChaCha8Rng, universe: Subset) -> Subset {
    universe
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .fold(Subset::EMPTY, Subset::with)
}

fn raised(set: &ModelSet, i: usize, quality: f64, accuracy: f64) -> ModelSet {
    let mut profiles = set.profiles().to_vec();
    profiles[i].quality = quality;
    profiles[i].accuracy = accuracy;
    ModelSet::new(profiles)
        .and_then(|s| s.with_empty_cost(set.empty_cost()))
        .and_then(|s| s.with_used_threshold(set.used_threshold()))
        .expect("raised profile stays in range")
}

/// Runs `trials` random probes per section against the cost function.
pub fn audit_cost_properties(set: &ModelSet, trials: usize, seed: u64) -> PropertyAuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = set.len();
    let all = set.all();

    let mut mono = AuditSection::default();
    let mut mono_rr = AuditSection::default();
    // Probes need at least one used output; resample until `trials` of them
    // have run, unless nothing in the set is ever used.
    let probeable = !set.used_mask(all).is_empty();
    while probeable && mono.probes < trials {
        let x = random_subset(&mut rng, all);
        let outputs = ranked_outputs_mask(set, x);
        if outputs.is_empty() {
            continue;
        }
        let j = rng.gen_range(0..outputs.len());
        let raise_quality = rng.gen_bool(0.5);
        let mut moved = outputs.clone();
        let o = &mut moved[j];
        if raise_quality {
            o.quality_norm += rng.gen::<f64>() * (1.0 - o.quality_norm);
        } else {
            o.accuracy += rng.gen::<f64>() * (1.0 - o.accuracy);
        }
        let (qn, acc) = (o.quality_norm.min(1.0), o.accuracy.min(1.0));
        o.quality_norm = qn;
        o.accuracy = acc;

        let before = weighted_cost(&outputs, |r| 1.0 / r as f64);
        let after = weighted_cost(&moved, |r| 1.0 / r as f64);
        mono.probes += 1;
        if after > before {
            mono.violations += 1;
            mono.worst = mono.worst.max(after - before);
        }

        let i = set.index_of(&outputs[j].model).expect("ranked output is in set");
        let reranked = raised(set, i, (qn * 10.0).min(10.0), acc);
        let after_rr = cost_mask(&reranked, x);
        mono_rr.probes += 1;
        if after_rr > before {
            mono_rr.violations += 1;
            mono_rr.worst = mono_rr.worst.max(after_rr - before);
        }
    }

    let mut lin = AuditSection::default();
    for _ in 0..trials {
        let x = random_subset(&mut rng, all);
        let residual = (cost_mask(set, x) - cost_by_terms(set, x)).abs();
        lin.probes += 1;
        lin.worst = lin.worst.max(residual);
        if residual > LINEARITY_TOL {
            lin.violations += 1;
        }
    }

    let mut sub = AuditSection::default();
    if n >= 2 {
        for _ in 0..trials {
            let a = rng.gen_range(0..n);
            let y = random_subset(&mut rng, all.without(a));
            let x = random_subset(&mut rng, y);
            check_chain(&mut sub, |s| cost_mask(set, s), x, y, a);
        }
    }

    let submodularity_exhaustive = (n <= 12).then(|| {
        let costs: Vec<f64> = (0..1u64 << n).map(|m| cost_mask(set, Subset(m))).collect();
        let mut section = AuditSection::default();
        for y in all_subsets(all) {
            for a in all.minus(y).iter() {
                for x in all_subsets(y) {
                    check_chain(&mut section, |s| costs[s.0 as usize], x, y, a);
                }
            }
        }
        section
    });

    PropertyAuditReport {
        monotonicity: mono,
        monotonicity_reranked: mono_rr,
        linearity: lin,
        submodularity: sub,
        submodularity_exhaustive,
    }
}

fn check_chain(section: &mut AuditSection, cost: impl Fn(Subset) -> f64, x: Subset, y: Subset, a: usize) {
    let gain_x = cost(x) - cost(x.with(a));
    let gain_y = cost(y) - cost(y.with(a));
    section.probes += 1;
    if gain_x + SUBMODULAR_TOL < gain_y {
        section.violations += 1;
        section.worst = section.worst.max(gain_y - gain_x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(&str, f64, f64)]) -> ModelSet {
        ModelSet::new(items.iter().map(|&(n, q, a)| ModelProfile::new(n, q, a).unwrap())).unwrap()
    }

    fn cfg(names: &[&str]) -> Configuration {
        Configuration::new(names.iter().copied())
    }

    #[test]
    fn used_subset_threshold_is_inclusive() {
        let s = set(&[("a", 5.0, 0.9), ("b", 5.0, 0.4), ("c", 5.0, 0.5)]);
        assert_eq!(used_subset(&s, &cfg(&["a", "b", "c"])).unwrap(), cfg(&["a", "c"]));
        assert_eq!(used_subset(&s, &cfg(&[])).unwrap(), cfg(&[]));
        let perfect = set(&[("a", 5.0, 1.0), ("b", 5.0, 1.0)]);
        assert_eq!(used_subset(&perfect, &cfg(&["a", "b"])).unwrap(), cfg(&["a", "b"]));
        assert!(matches!(
            used_subset(&s, &cfg(&["zz"])),
            Err(ChemError::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn penalty_values() {
        assert_eq!(penalty(1.0, 1.0).unwrap(), 0.0);
        assert!((penalty(0.9, 0.9).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(penalty(0.0, 0.0).unwrap(), 1.0);
        assert!(penalty(1.1, 0.5).is_err());
        assert!(penalty(0.5, -0.01).is_err());
    }

    #[test]
    fn worked_cost_example() {
        let s = set(&[("x", 9.0, 0.9), ("y", 8.0, 0.8), ("z", 7.0, 0.7)]);
        let all = cfg(&["x", "y", "z"]);
        let outputs = ranked_outputs(&s, &all).unwrap();
        let ranks: Vec<_> = outputs.iter().map(|o| (o.model.as_str(), o.rank)).collect();
        assert_eq!(ranks, [("x", 1), ("y", 2), ("z", 3)]);
        let rounded = weighted_cost(&outputs, |r| [1.0, 0.5, 0.33][r - 1]);
        assert!((rounded - 0.0597).abs() < 1e-12);
        assert!((cost(&s, &all).unwrap() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn empty_used_subset_costs_sentinel() {
        let s = set(&[("a", 9.0, 0.2), ("b", 9.0, 0.1)]);
        assert_eq!(cost(&s, &cfg(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(cost(&s, &cfg(&[])).unwrap(), 1.0);
        let s = s.with_empty_cost(0.3).unwrap();
        assert_eq!(cost(&s, &cfg(&["a"])).unwrap(), 0.3);
    }

    #[test]
    fn ranking_ties_break_on_accuracy_then_name() {
        let s = set(&[("b", 7.0, 0.6), ("a", 7.0, 0.6), ("c", 7.0, 0.9)]);
        let order: Vec<_> = ranked_outputs(&s, &cfg(&["a", "b", "c"]))
            .unwrap()
            .into_iter()
            .map(|o| o.model.as_str().to_string())
            .collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    #[test]
    fn benefit_of_empty_is_zero() {
        let s = set(&[("a", 6.0, 0.7), ("b", 3.0, 0.9), ("c", 8.0, 0.55)]);
        for y in [cfg(&[]), cfg(&["a"]), cfg(&["b", "c"])] {
            assert_eq!(benefit(&s, &cfg(&[]), &y).unwrap(), 0.0);
        }
    }

    #[test]
    fn benefit_from_injected_costs() {
        let s = set(&[("a", 5.0, 0.9), ("b", 5.0, 0.9), ("c", 5.0, 0.9)]);
        let (c, ac) = (cfg(&["c"]), cfg(&["a", "c"]));
        let table = CostTable::new(&s, [(&c, 0.15), (&ac, 0.07)]).unwrap();
        let backend = CostBackend::Table(table);
        let y = s.subset_of(&c).unwrap();
        let xy = s.subset_of(&ac).unwrap();
        let b = backend.cost(&s, y).unwrap() - backend.cost(&s, xy).unwrap();
        assert!((b - 0.08).abs() < 1e-15);
        assert!(matches!(backend.cost(&s, Subset::EMPTY), Err(ChemError::MissingCost(_))));
    }

    #[test]
    fn homogeneous_cost_is_harmonic() {
        let s = set(&[("a", 6.0, 0.7), ("b", 6.0, 0.7), ("c", 6.0, 0.7), ("d", 6.0, 0.7)]);
        let p = 0.4 * 0.3;
        for k in 1..=4 {
            let x = Subset::full(k);
            let h: f64 = (1..=k).map(|i| 1.0 / i as f64).sum();
            assert!((cost_mask(&s, x) - p * h).abs() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_marginals_depend_only_on_size() {
        let s = set(&[("a", 6.0, 0.7), ("b", 6.0, 0.7), ("c", 6.0, 0.7)]);
        let p = 0.4 * 0.3;
        for x in all_subsets(s.all()).into_iter().filter(|x| !x.is_empty()) {
            for a in s.all().minus(x).iter() {
                let gain = cost_mask(&s, x) - cost_mask(&s, x.with(a));
                assert!((gain + p / (x.len() + 1) as f64).abs() < 1e-12);
            }
        }
        // Adding a used model to a non-empty set raises the cost, and raises it
        // more for smaller sets, so every strict chain ∅ ≠ X ⊂ Y is reported.
        let report = audit_cost_properties(&s, 200, 3);
        let exhaustive = report.submodularity_exhaustive.unwrap();
        assert_eq!(exhaustive.probes, 27);
        assert_eq!(exhaustive.violations, 6);
    }

    #[test]
    fn audit_reports_zero_asserted_violations() {
        let s = set(&[
            ("a", 9.1, 0.95),
            ("b", 2.5, 0.6),
            ("c", 6.0, 0.3),
            ("d", 4.4, 0.81),
            ("e", 7.7, 0.52),
        ]);
        let r = audit_cost_properties(&s, 1000, 11);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.linearity.probes, 1000);
        assert!(r.linearity.worst <= 1e-12);
        assert_eq!(r.submodularity.probes, 1000);
        assert!(r.submodularity_exhaustive.is_some());
    }

    #[test]
    fn audit_is_deterministic() {
        let s = set(&[("a", 9.1, 0.95), ("b", 2.5, 0.6), ("c", 6.0, 0.7)]);
        assert_eq!(audit_cost_properties(&s, 50, 5), audit_cost_properties(&s, 50, 5));
    }
}
