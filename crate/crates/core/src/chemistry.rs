//! Pairwise chemistry.
//!
//! The chemistry of `a` and `b` is the largest normalized interaction
//!
//! ```text
//!   |benefit({a}, X) - benefit({a}, X ∪ {b})| / cost(X ∪ {a, b})
//! ```
//!
//! over `X ⊆ S \ {a, b}`. [`chem_pair_bruteforce`] enumerates every `X`
//! directly; [`cheme`] walks subsets by size and answers each cost through a
//! memoized cover lookup on the [`Mig`]. When the MIG is the full lattice the
//! two agree bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complementarity::spearman_rho;
use crate::cost::CostBackend;
use crate::error::{ChemError, Result};
use crate::mig::{CoverLookup, Mig};
use crate::model::{all_subsets, subsets_of_size, ModelId, ModelProfile, ModelSet, Subset};

/// Exponential-enumeration guard for the brute-force oracle.
pub const BRUTE_FORCE_GUARD: usize = 16;
pub const TABLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChemMethod {
    MigCheme,
    BruteForce,
    /// Loaded from a CSV file that does not record how it was produced.
    Imported,
}

/// Symmetric pair → chemistry map over one model set. Every unordered pair is
/// present; pairs are keyed by ascending model index.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemistryTable {
    set: ModelSet,
    method: ChemMethod,
    scores: BTreeMap<(usize, usize), f64>,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl ChemistryTable {
    fn zeroed(set: &ModelSet, method: ChemMethod) -> Self {
        let n = set.len();
        let scores = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| ((i, j), 0.0)))
            .collect();
        Self { set: set.clone(), method, scores }
    }

    /// Builds a table from explicit scores; pairs not mentioned are rejected
    /// by [`ChemistryTable::require_complete`] later, not here.
    pub fn from_scores<'a, I>(set: &ModelSet, method: ChemMethod, scores: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a ModelId, &'a ModelId, f64)>,
    {
        let mut map = BTreeMap::new();
        for (a, b, s) in scores {
            let (i, j) = (set.require_index(a)?, set.require_index(b)?);
            if i == j {
                return Err(ChemError::InvalidPair(format!("{a} paired with itself")));
            }
            if !s.is_finite() || s < 0.0 {
                return Err(ChemError::Domain(format!("chemistry ({a}, {b}) = {s} must be finite and >= 0")));
            }
            if map.insert(ordered(i, j), s).is_some() {
                return Err(ChemError::InvalidPair(format!("pair ({a}, {b}) given twice")));
            }
        }
        Ok(Self { set: set.clone(), method, scores: map })
    }

    pub fn set(&self) -> &ModelSet {
        &self.set
    }

    pub fn method(&self) -> ChemMethod {
        self.method
    }

    pub fn get_index(&self, i: usize, j: usize) -> Option<f64> {
        self.scores.get(&ordered(i, j)).copied()
    }

    pub fn get(&self, a: &ModelId, b: &ModelId) -> Option<f64> {
        let (i, j) = (self.set.index_of(a)?, self.set.index_of(b)?);
        self.get_index(i, j)
    }

    /// Pairs in ascending (model_a, model_b) order with model_a < model_b.
    pub fn pairs(&self) -> impl Iterator<Item = (&ModelId, &ModelId, f64)> {
        self.scores
            .iter()
            .map(|(&(i, j), &s)| (&self.set.profile(i).model, &self.set.profile(j).model, s))
    }

    pub fn max_score(&self) -> f64 {
        self.scores.values().copied().fold(0.0, f64::max)
    }

    pub fn require_complete(&self) -> Result<()> {
        let n = self.set.len();
        for i in 0..n {
            for j in i + 1..n {
                if !self.scores.contains_key(&(i, j)) {
                    return Err(ChemError::MissingPair(
                        self.set.profile(i).model.to_string(),
                        self.set.profile(j).model.to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model_a", "model_b", "chemistry"])?;
        for (a, b, s) in self.pairs() {
            w.write_record([a.as_str(), b.as_str(), &format!("{s:?}")])?;
        }
        let bytes = w.into_inner().map_err(|e| ChemError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    /// Reads `model_a,model_b,chemistry` CSV against `set`.
    pub fn read_csv(path: impl AsRef<Path>, set: &ModelSet) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            model_a: String,
            model_b: String,
            chemistry: f64,
        }
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for (i, r) in rdr.deserialize::<Row>().enumerate() {
            let r = r.map_err(|e| ChemError::Parse {
                path: path.display().to_string(),
                row: i + 2,
                field: "row".into(),
                message: e.to_string(),
            })?;
            rows.push((ModelId::new(r.model_a)?, ModelId::new(r.model_b)?, r.chemistry));
        }
        Self::from_scores(set, ChemMethod::Imported, rows.iter().map(|(a, b, s)| (a, b, *s)))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let scores: Vec<_> = self
            .pairs()
            .map(|(a, b, s)| serde_json::json!({"model_a": a, "model_b": b, "chemistry": s}))
            .collect();
        serde_json::json!({
            "schema_version": TABLE_SCHEMA_VERSION,
            "method": self.method,
            "model_set_fingerprint": self.set.fingerprint(),
            "models": self.set.ids().collect::<Vec<_>>(),
            "scores": scores,
        })
    }

    /// Parses [`ChemistryTable::to_json`] output, rejecting tables computed
    /// for a different model set.
    pub fn from_json(value: &serde_json::Value, set: &ModelSet) -> Result<Self> {
        #[derive(Deserialize)]
        struct Score {
            model_a: ModelId,
            model_b: ModelId,
            chemistry: f64,
        }
        #[derive(Deserialize)]
        struct Doc {
            schema_version: u32,
            method: ChemMethod,
            model_set_fingerprint: String,
            scores: Vec<Score>,
        }
        let doc: Doc = serde_json::from_value(value.clone())?;
        if doc.schema_version != TABLE_SCHEMA_VERSION {
            return Err(ChemError::Migration { found: doc.schema_version, expected: TABLE_SCHEMA_VERSION });
        }
        if doc.model_set_fingerprint != set.fingerprint() {
            return Err(ChemError::Mismatch("chemistry table was computed for a different model set".into()));
        }
        Self::from_scores(set, doc.method, doc.scores.iter().map(|s| (&s.model_a, &s.model_b, s.chemistry)))
    }
}

/// `|(c(X) - c(X+a)) - (c(X+b) - c(X+a+b))| / c(X+a+b)`, or `None` when the
/// denominator is not positive.
#[inline]
fn interaction(c_x: f64, c_xa: f64, c_xb: f64, c_xab: f64) -> Option<f64> {
    if !(c_xab > 0.0) {
        return None;
    }
    let d = ((c_x - c_xa) - (c_xb - c_xab)).abs() / c_xab;
    d.is_finite().then_some(d)
}

fn check_pair(set: &ModelSet, a: &ModelId, b: &ModelId) -> Result<(usize, usize)> {
    if set.len() > BRUTE_FORCE_GUARD {
        return Err(ChemError::SizeLimit { size: set.len(), limit: BRUTE_FORCE_GUARD });
    }
    if a == b {
        return Err(ChemError::InvalidPair(format!("{a} paired with itself")));
    }
    Ok(ordered(set.require_index(a)?, set.require_index(b)?))
}

fn pair_max(set: &ModelSet, i: usize, j: usize, cost: &mut impl FnMut(Subset) -> Result<f64>) -> Result<f64> {
    let rest = set.all().without(i).without(j);
    let mut best = 0.0;
    for x in all_subsets(rest) {
        let c_xab = cost(x.with(i).with(j))?;
        if let Some(d) = interaction(cost(x)?, cost(x.with(i))?, cost(x.with(j))?, c_xab) {
            if d > best {
                best = d;
            }
        }
    }
    Ok(best)
}

/// Exact chemistry of one pair from profile-derived costs.
pub fn chem_pair_bruteforce(set: &ModelSet, a: &ModelId, b: &ModelId) -> Result<f64> {
    chem_pair_bruteforce_with(set, &CostBackend::Profiles, a, b)
}

pub fn chem_pair_bruteforce_with(set: &ModelSet, backend: &CostBackend, a: &ModelId, b: &ModelId) -> Result<f64> {
    let (i, j) = check_pair(set, a, b)?;
    pair_max(set, i, j, &mut |s| backend.cost(set, s))
}

/// Brute-force chemistry for every pair.
pub fn chem_table_bruteforce(set: &ModelSet) -> Result<ChemistryTable> {
    chem_table_bruteforce_with(set, &CostBackend::Profiles)
}

pub fn chem_table_bruteforce_with(set: &ModelSet, backend: &CostBackend) -> Result<ChemistryTable> {
    let n = set.len();
    if n > BRUTE_FORCE_GUARD {
        return Err(ChemError::SizeLimit { size: n, limit: BRUTE_FORCE_GUARD });
    }
    let costs: Vec<f64> = (0..1u64 << n)
        .map(|m| backend.cost(set, Subset(m)))
        .collect::<Result<_>>()?;
    let mut table = ChemistryTable::zeroed(set, ChemMethod::BruteForce);
    for (&(i, j), score) in table.scores.iter_mut() {
        *score = pair_max(set, i, j, &mut |s| Ok(costs[s.0 as usize]))?;
    }
    Ok(table)
}

/// All-pairs chemistry through memoized cover lookups on `mig`.
///
/// For each subset `X` (by size, then lexicographically) the costs of `X`,
/// `X+a`, `X+b` and `X+a+b` are read from their smallest covering nodes. A
/// subset is skipped for a pair when a cover is missing, or when a cover
/// reintroduces `a` or `b` where they must be absent.
pub fn cheme(set: &ModelSet, mig: &Mig) -> Result<ChemistryTable> {
    if mig.set() != set {
        return Err(ChemError::Mismatch("MIG was built over a different model set".into()));
    }
    let n = set.len();
    let all = set.all();
    let mut memo = CoverLookup::new(mig);
    let mut table = ChemistryTable::zeroed(set, ChemMethod::MigCheme);

    for k in 0..=n {
        for x in subsets_of_size(all, k) {
            let Some(y) = memo.cover(x) else { continue };
            let (y_subset, c_y) = (y.subset, y.cost);
            let free: Vec<usize> = all.minus(x).iter().collect();
            for (p, &i) in free.iter().enumerate() {
                for &j in &free[p + 1..] {
                    if y_subset.contains(i) || y_subset.contains(j) {
                        continue;
                    }
                    let Some(ya) = memo.cover(x.with(i)) else { continue };
                    let Some(yb) = memo.cover(x.with(j)) else { continue };
                    let Some(yab) = memo.cover(x.with(i).with(j)) else { continue };
                    if ya.subset.contains(j) || yb.subset.contains(i) {
                        continue;
                    }
                    if let Some(d) = interaction(c_y, ya.cost, yb.cost, yab.cost) {
                        let slot = table.scores.get_mut(&(i, j)).expect("pair initialized");
                        if d > *slot {
                            *slot = d;
                        }
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Pairs whose chemistry strictly exceeds `tau`, strongest first.
pub fn llmcp_filter(t: &ChemistryTable, tau: f64) -> Result<Vec<((ModelId, ModelId), f64)>> {
    if !(tau >= 0.0) {
        return Err(ChemError::Domain(format!("tau {tau} must be >= 0")));
    }
    let mut hits: Vec<((ModelId, ModelId), f64)> = t
        .pairs()
        .filter(|&(_, _, s)| s > tau)
        .map(|(a, b, s)| ((a.clone(), b.clone()), s))
        .collect();
    hits.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    Ok(hits)
}

/// A seeded family of models scattered around one base profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityFamily {
    pub base_profile: ModelProfile,
    pub spread: f64,
    pub size: usize,
    pub seed: u64,
}

impl DiversityFamily {
    /// Profiles at the given spread. The same seed draws the same offsets for
    /// every spread, so spreads only rescale the scatter. Quality moves by up
    /// to `10 * spread`, accuracy by up to `spread`, clamped to range.
    pub fn model_set(&self, spread: f64) -> Result<ModelSet> {
        if !spread.is_finite() || spread < 0.0 {
            return Err(ChemError::Domain(format!("spread {spread} must be finite and >= 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let base = &self.base_profile;
        let profiles = (0..self.size)
            .map(|i| {
                let dq: f64 = rng.gen_range(-1.0..=1.0);
                let da: f64 = rng.gen_range(-1.0..=1.0);
                ModelProfile::new(
                    ModelId::new(format!("m{i:02}"))?,
                    (base.quality + 10.0 * spread * dq).clamp(0.0, 10.0),
                    (base.accuracy + spread * da).clamp(0.0, 1.0),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ModelSet::new(profiles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub points: Vec<(f64, f64)>,
    /// Rank correlation of max chemistry against spread; `None` when either
    /// sequence is constant or there are fewer than two points.
    pub spearman_rho: Option<f64>,
    pub trend: Trend,
    /// Whether the sequence is monotone (non-strictly) in the trend's direction.
    pub monotone: bool,
}

/// Maximum pairwise chemistry of a [`DiversityFamily`] at each spread.
pub fn heterogeneity_diagnostic(family: &DiversityFamily, spreads: &[f64]) -> Result<HeterogeneityReport> {
    if family.size > BRUTE_FORCE_GUARD {
        return Err(ChemError::SizeLimit { size: family.size, limit: BRUTE_FORCE_GUARD });
    }
    if let Some(s) = spreads.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(ChemError::Domain(format!("spread {s} must be finite and >= 0")));
    }
    if spreads.windows(2).any(|w| w[0] > w[1]) {
        return Err(ChemError::Domain("spreads must be sorted ascending".into()));
    }
    let points = spreads
        .iter()
        .map(|&spread| Ok((spread, chem_table_bruteforce(&family.model_set(spread)?)?.max_score())))
        .collect::<Result<Vec<_>>>()?;

    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let rho = spearman_rho(&xs, &ys).ok();
    let trend = match rho {
        Some(r) if r > 0.0 => Trend::Increasing,
        Some(r) if r < 0.0 => Trend::Decreasing,
        _ => Trend::Flat,
    };
    let monotone = match trend {
        Trend::Increasing => ys.windows(2).all(|w| w[0] <= w[1]),
        Trend::Decreasing => ys.windows(2).all(|w| w[0] >= w[1]),
        Trend::Flat => ys.windows(2).all(|w| w[0] == w[1]),
    };
    Ok(HeterogeneityReport { points, spearman_rho: rho, trend, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{cost_mask, CostTable};
    use crate::mig::{build_mig, build_mig_with, DEFAULT_SIZE_GUARD};
    use crate::model::Configuration;

    fn set(items: &[(&str, f64, f64)]) -> ModelSet {
        ModelSet::new(items.iter().map(|&(n, q, a)| ModelProfile::new(n, q, a).unwrap())).unwrap()
    }

    fn cfg(names: &[&str]) -> Configuration {
        Configuration::new(names.iter().copied())
    }

    fn id(s: &str) -> ModelId {
        ModelId::from(s)
    }

    fn worked_example() -> (ModelSet, CostBackend) {
        let s = set(&[("a", 5.0, 0.9), ("b", 5.0, 0.4), ("c", 5.0, 0.9)]);
        let entries = [
            (cfg(&["a", "b", "c"]), 0.05),
            (cfg(&["a", "b"]), 0.08),
            (cfg(&["a", "c"]), 0.07),
            (cfg(&["b", "c"]), 0.006),
            (cfg(&["a"]), 0.010),
            (cfg(&["b"]), 0.012),
            (cfg(&["c"]), 0.15),
            (cfg(&[]), 0.20),
        ];
        let table = CostTable::new(&s, entries.iter().map(|(c, v)| (c, *v))).unwrap();
        (s, CostBackend::Table(table))
    }

    #[test]
    fn worked_example_golden() {
        // X = ∅:   |(0.20 - 0.010) - (0.012 - 0.08)| / 0.08 = 0.258 / 0.08 = 3.225
        // X = {c}: |(0.15 - 0.07) - (0.006 - 0.05)| / 0.05 = 0.124 / 0.05 = 2.48
        let (s, backend) = worked_example();
        let got = chem_pair_bruteforce_with(&s, &backend, &id("a"), &id("b")).unwrap();
        assert!((got - 3.225).abs() < 1e-12, "{got}");
        let c = chem_table_bruteforce_with(&s, &backend).unwrap();
        assert_eq!(c.get(&id("b"), &id("a")), Some(got));
    }

    #[test]
    fn two_model_set_uses_only_empty_x() {
        let s = set(&[("a", 8.0, 0.9), ("b", 3.0, 0.6)]);
        let expected = {
            let (e, a, b, ab) = (
                cost_mask(&s, Subset::EMPTY),
                cost_mask(&s, Subset::singleton(0)),
                cost_mask(&s, Subset::singleton(1)),
                cost_mask(&s, Subset::full(2)),
            );
            ((e - a) - (b - ab)).abs() / ab
        };
        assert_eq!(chem_pair_bruteforce(&s, &id("a"), &id("b")).unwrap(), expected);
    }

    #[test]
    fn pair_errors() {
        let s = set(&[("a", 8.0, 0.9), ("b", 3.0, 0.6)]);
        assert!(matches!(chem_pair_bruteforce(&s, &id("a"), &id("a")), Err(ChemError::InvalidPair(_))));
        assert!(chem_pair_bruteforce(&s, &id("a"), &id("z")).is_err());
        let big = ModelSet::new((0..17).map(|i| ModelProfile::new(format!("m{i}").as_str(), 5.0, 0.6).unwrap())).unwrap();
        assert!(matches!(
            chem_pair_bruteforce(&big, &id("m0"), &id("m1")),
            Err(ChemError::SizeLimit { size: 17, limit: 16 })
        ));
    }

    #[test]
    fn homogeneous_used_set_has_uniform_chemistry() {
        // Identical penalties p: a non-empty used set of size k costs p·H_k, so
        // for |X| = k ≥ 1 the interaction is 1/((k+1)(k+2)·H_{k+2}). At X = ∅
        // the empty-set cost e enters: |(e - p) + p/2| / (1.5·p). That term
        // dominates and is the same for every pair.
        let s = set(&[("a", 6.0, 0.7), ("b", 6.0, 0.7), ("c", 6.0, 0.7), ("d", 6.0, 0.7)]);
        let p = 0.4 * (1.0 - 0.7);
        let expected = (1.0 - p / 2.0) / (1.5 * p);
        let t = chem_table_bruteforce(&s).unwrap();
        for (_, _, v) in t.pairs() {
            assert!((v - expected).abs() < 1e-12, "{v}");
        }
        let g = build_mig(&s).unwrap();
        assert_eq!(cheme(&s, &g).unwrap().scores, t.scores);

        // With a zero empty cost the X = ∅ term becomes 1/3, still the max.
        let s0 = s.clone().with_empty_cost(0.0).unwrap();
        for (_, _, v) in chem_table_bruteforce(&s0).unwrap().pairs() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn homogeneous_degenerate_sets_have_zero_chemistry() {
        // All perfect: every used cost is 0, so every denominator is skipped.
        let perfect = set(&[("a", 10.0, 1.0), ("b", 10.0, 1.0), ("c", 10.0, 1.0)]);
        assert_eq!(chem_table_bruteforce(&perfect).unwrap().max_score(), 0.0);
        // Nobody used: every cost is empty_cost.
        let unused = set(&[("a", 4.0, 0.2), ("b", 4.0, 0.2), ("c", 4.0, 0.2)]);
        assert_eq!(chem_table_bruteforce(&unused).unwrap().max_score(), 0.0);
        let g = build_mig(&unused).unwrap();
        assert_eq!(cheme(&unused, &g).unwrap().max_score(), 0.0);
    }

    #[test]
    fn cheme_matches_oracle_on_full_lattice() {
        let s = set(&[("a", 9.1, 0.95), ("b", 2.5, 0.6), ("c", 6.0, 0.7), ("d", 4.4, 0.81), ("e", 7.7, 0.52)]);
        let g = build_mig(&s).unwrap();
        assert!(g.is_full_lattice());
        let fast = cheme(&s, &g).unwrap();
        let slow = chem_table_bruteforce(&s).unwrap();
        assert_eq!(fast.scores, slow.scores);
        for (a, b, v) in fast.pairs() {
            assert_eq!(chem_pair_bruteforce(&s, a, b).unwrap(), v);
            assert!(v >= 0.0);
            assert_eq!(fast.get(a, b), fast.get(b, a));
        }
        assert_eq!(fast.method(), ChemMethod::MigCheme);
    }

    #[test]
    fn cheme_on_worked_graph() {
        let (s, backend) = worked_example();
        let backend = match backend {
            CostBackend::Table(t) => CostBackend::Table(
                t.with_used(&s, &cfg(&["a", "b", "c"]), &cfg(&["a", "c"]))
                    .unwrap()
                    .with_used(&s, &cfg(&["a", "b"]), &cfg(&["a"]))
                    .unwrap()
                    .with_used(&s, &cfg(&["b", "c"]), &cfg(&["b"]))
                    .unwrap()
                    .with_used(&s, &cfg(&["c"]), &cfg(&[]))
                    .unwrap(),
            ),
            _ => unreachable!(),
        };
        let g = build_mig_with(&s, backend, DEFAULT_SIZE_GUARD).unwrap();
        let keys: Vec<String> = g.nodes().iter().map(|n| s.subset_key(n.subset)).collect();
        assert_eq!(keys, ["a,b,c", "b,c", "a,b", "c", "b"]);
        let t = cheme(&s, &g).unwrap();
        // Nodes are abc, bc, ab, c, b. cover(∅) = {b} and cover({a}) = {a,b},
        // so (b, c) never has a usable X, and (a, b) fails at X = {c} because
        // cover({a,c}) is the root. (a, c) at X = ∅ reads {b}, {a,b}, {c}, abc:
        // |(0.012 - 0.08) - (0.15 - 0.05)| / 0.05 = 3.36; at X = {b} it is 0.48.
        assert_eq!(t.get(&id("a"), &id("b")), Some(0.0));
        assert!((t.get(&id("a"), &id("c")).unwrap() - 3.36).abs() < 1e-12);
        assert_eq!(t.get(&id("b"), &id("c")), Some(0.0));
    }

    #[test]
    fn cheme_rejects_other_sets_mig() {
        let s1 = set(&[("a", 8.0, 0.9), ("b", 3.0, 0.6)]);
        let s2 = set(&[("a", 8.0, 0.9), ("b", 3.0, 0.7)]);
        let g = build_mig(&s1).unwrap();
        assert!(matches!(cheme(&s2, &g), Err(ChemError::Mismatch(_))));
    }

    #[test]
    fn unused_newcomer_leaves_brute_force_unchanged() {
        let s = set(&[("a", 9.1, 0.95), ("b", 2.5, 0.6), ("c", 6.0, 0.7), ("d", 4.4, 0.81)]);
        let mut bigger = s.profiles().to_vec();
        bigger.push(ModelProfile::new("z", 9.9, 0.1).unwrap());
        let s2 = ModelSet::new(bigger).unwrap();
        let (t1, t2) = (chem_table_bruteforce(&s).unwrap(), chem_table_bruteforce(&s2).unwrap());
        for (a, b, v) in t1.pairs() {
            assert_eq!(t2.get(a, b), Some(v));
        }
    }

    #[test]
    fn llmcp_threshold() {
        let s = set(&[("a", 8.0, 0.9), ("b", 3.0, 0.6), ("c", 5.0, 0.6)]);
        let t = ChemistryTable::from_scores(
            &s,
            ChemMethod::Imported,
            [(&id("a"), &id("b"), 0.4), (&id("c"), &id("a"), 0.9), (&id("b"), &id("c"), 0.0)],
        )
        .unwrap();
        let all = llmcp_filter(&t, 0.0).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0], ((id("a"), id("c")), 0.9));
        assert!(llmcp_filter(&t, 0.9).unwrap().is_empty());
        assert_eq!(llmcp_filter(&t, 0.8999).unwrap().len(), 1);
        assert!(llmcp_filter(&t, -0.1).is_err());
    }

    #[test]
    fn table_validation() {
        let s = set(&[("a", 8.0, 0.9), ("b", 3.0, 0.6), ("c", 5.0, 0.6)]);
        let partial = ChemistryTable::from_scores(&s, ChemMethod::Imported, [(&id("a"), &id("b"), 0.4)]).unwrap();
        assert!(matches!(partial.require_complete(), Err(ChemError::MissingPair(_, _))));
        assert!(ChemistryTable::from_scores(&s, ChemMethod::Imported, [(&id("a"), &id("b"), -0.4)]).is_err());
        assert!(ChemistryTable::from_scores(&s, ChemMethod::Imported, [(&id("a"), &id("a"), 0.4)]).is_err());
        assert!(ChemistryTable::from_scores(
            &s,
            ChemMethod::Imported,
            [(&id("a"), &id("b"), 0.4), (&id("b"), &id("a"), 0.4)]
        )
        .is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let s = set(&[("b", 8.0, 0.9), ("a", 3.0, 0.6), ("c", 5.0, 0.55)]);
        let t = chem_table_bruteforce(&s).unwrap();
        let text = t.to_csv_string().unwrap();
        assert!(text.starts_with("model_a,model_b,chemistry\na,b,"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chem.csv");
        t.write_csv(&path).unwrap();
        let back = ChemistryTable::read_csv(&path, &s).unwrap();
        assert_eq!(back.scores, t.scores);
        assert_eq!(back.method(), ChemMethod::Imported);

        let json = t.to_json();
        assert_eq!(ChemistryTable::from_json(&json, &s).unwrap(), t);
        let other = set(&[("b", 8.0, 0.9), ("a", 3.0, 0.6), ("c", 5.0, 0.56)]);
        assert!(matches!(ChemistryTable::from_json(&json, &other), Err(ChemError::Mismatch(_))));
    }

    #[test]
    fn diversity_family_spread_zero_is_homogeneous() {
        let fam = DiversityFamily {
            base_profile: ModelProfile::new("base", 6.0, 0.7).unwrap(),
            spread: 0.2,
            size: 5,
            seed: 9,
        };
        let s = fam.model_set(0.0).unwrap();
        assert!(s.profiles().iter().all(|p| p.quality == 6.0 && p.accuracy == 0.7));
        let s = fam.model_set(0.2).unwrap();
        assert!(s.profiles().iter().any(|p| p.quality != 6.0));
        assert!(fam.model_set(-0.1).is_err());
    }

    #[test]
    fn diagnostic_reports_points() {
        let fam = DiversityFamily {
            base_profile: ModelProfile::new("base", 6.0, 0.7).unwrap(),
            spread: 0.0,
            size: 5,
            seed: 1,
        };
        let r = heterogeneity_diagnostic(&fam, &[0.0, 0.1, 0.2, 0.4]).unwrap();
        assert_eq!(r.points.len(), 4);
        assert!(r.points.iter().all(|p| p.1 >= 0.0));
        let p = 0.4 * 0.3;
        assert!((r.points[0].1 - (1.0 - p / 2.0) / (1.5 * p)).abs() < 1e-12);
        assert!(heterogeneity_diagnostic(&fam, &[0.2, 0.1]).is_err());
        assert!(heterogeneity_diagnostic(&fam, &[-0.2]).is_err());
        let one = heterogeneity_diagnostic(&fam, &[0.0]).unwrap();
        assert_eq!(one.trend, Trend::Flat);
        assert_eq!(one.spearman_rho, None);
    }
}
