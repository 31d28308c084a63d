//! Subset recommendation by hill climbing on a chemistry-based loss.
//!
//! For a subset `x` of `S`:
//!
//! ```text
//!   intra = Σ_{a<b ∈ x} chem(a, b)
//!   inter = Σ_{a ∈ x, b ∈ S∖x} chem(a, b)
//!   loss  = α·(maxI − inter) + (1 − α)·(maxT − intra) + β·|x|
//! ```
//!
//! where `maxT` sums every unordered pair of `S` once and `maxI` sums every
//! ordered pair.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chemistry::ChemistryTable;
use crate::error::{ChemError, Result};
use crate::model::{all_subsets, Configuration, ModelSet, Subset};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_SIZE_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub size_cap: Option<usize>,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            max_iters: DEFAULT_MAX_ITERS,
            size_cap: Some(DEFAULT_SIZE_CAP),
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ChemError::Domain(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(ChemError::Domain(format!("beta {} must be positive", self.beta)));
        }
        if self.size_cap == Some(0) {
            return Err(ChemError::Domain("size_cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Historical subsets used as hill-climbing seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_context: String,
    pub subsets: Vec<Configuration>,
}

impl CandidatePool {
    /// Drops repeated subsets, keeping first occurrences in order.
    pub fn new(query_context: impl Into<String>, subsets: impl IntoIterator<Item = Configuration>) -> Result<Self> {
        let mut out: Vec<Configuration> = Vec::new();
        for s in subsets {
            if s.is_empty() {
                return Err(ChemError::InvalidConfiguration("candidate subsets must be non-empty".into()));
            }
            if !out.contains(&s) {
                out.push(s);
            }
        }
        Ok(Self { query_context: query_context.into(), subsets: out })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: CandidatePool = serde_json::from_str(text)?;
        Self::new(raw.query_context, raw.subsets)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    /// Every non-empty subset of `set`, smallest first.
    pub fn exhaustive(query_context: impl Into<String>, set: &ModelSet) -> Self {
        let subsets = all_subsets(set.all())
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|s| set.configuration_of(s))
            .collect();
        Self { query_context: query_context.into(), subsets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub subset: Configuration,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub subset: Configuration,
    pub loss: f64,
    /// Accepted steps of the winning seed's climb, starting with the seed.
    pub trace: Vec<TraceStep>,
    pub seed_subset: Configuration,
    /// Set when no pair inside the recommended subset has positive chemistry.
    pub zero_chemistry: bool,
}

/// `(maxT, maxI)`.
pub fn chem_totals(t: &ChemistryTable) -> Result<(f64, f64)> {
    t.require_complete()?;
    let n = t.set().len();
    let mut max_t = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            max_t += t.get_index(i, j).expect("complete table");
        }
    }
    // Both orientations of each pair, accumulated in the same order as maxT.
    let mut max_i = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            max_i += t.get_index(i, j).expect("complete table") + t.get_index(j, i).expect("complete table");
        }
    }
    Ok((max_t, max_i))
}

fn loss_mask(x: Subset, t: &ChemistryTable, (max_t, max_i): (f64, f64), p: &LossParams) -> f64 {
    let all = t.set().all();
    let outside = all.minus(x);
    let mut intra = 0.0;
    let mut inter = 0.0;
    for a in x.iter() {
        for b in x.iter().filter(|&b| b > a) {
            intra += t.get_index(a, b).unwrap_or(0.0);
        }
        for b in outside.iter() {
            inter += t.get_index(a, b).unwrap_or(0.0);
        }
    }
    p.alpha * (max_i - inter) + (1.0 - p.alpha) * (max_t - intra) + p.beta * x.len() as f64
}

pub fn subset_loss(x: &Configuration, t: &ChemistryTable, totals: (f64, f64), p: &LossParams) -> Result<f64> {
    if x.is_empty() {
        return Err(ChemError::Domain("loss of an empty subset".into()));
    }
    let mask = t.set().subset_of(x)?;
    Ok(loss_mask(mask, t, totals, p))
}

fn neighbors_mask(x: Subset, n: usize, size_cap: Option<usize>) -> Vec<Subset> {
    let all = Subset::full(n);
    let outside: Vec<usize> = all.minus(x).iter().collect();
    let mut out = Vec::new();
    if size_cap.map_or(true, |c| x.len() < c) {
        out.extend(outside.iter().map(|&b| x.with(b)));
    }
    if x.len() > 1 {
        out.extend(x.iter().map(|a| x.without(a)));
    }
    for a in x.iter() {
        for &b in &outside {
            out.push(x.without(a).with(b));
        }
    }
    out
}

/// Adds, then removals, then swaps, each in model order.
pub fn neighbors(x: &Configuration, set: &ModelSet, size_cap: Option<usize>) -> Result<Vec<Configuration>> {
    if x.is_empty() {
        return Err(ChemError::Domain("neighbors of an empty subset".into()));
    }
    let mask = set.subset_of(x)?;
    Ok(neighbors_mask(mask, set.len(), size_cap)
        .into_iter()
        .map(|s| set.configuration_of(s))
        .collect())
}

struct Climb {
    seed: Subset,
    best: Subset,
    loss: f64,
    trace: Vec<(usize, Subset, f64)>,
}

fn climb(seed: Subset, t: &ChemistryTable, totals: (f64, f64), p: &LossParams) -> Climb {
    let n = t.set().len();
    let mut cur = seed;
    let mut cur_loss = loss_mask(seed, t, totals, p);
    let mut trace = vec![(0, cur, cur_loss)];
    for iter in 1..=p.max_iters {
        let mut best: Option<(Subset, f64)> = None;
        for nb in neighbors_mask(cur, n, p.size_cap) {
            let l = loss_mask(nb, t, totals, p);
            if best.map_or(true, |(_, bl)| l < bl) {
                best = Some((nb, l));
            }
        }
        match best {
            Some((nb, l)) if l < cur_loss => {
                cur = nb;
                cur_loss = l;
                trace.push((iter, cur, cur_loss));
            }
            _ => break,
        }
    }
    Climb { seed, best: cur, loss: cur_loss, trace }
}

/// Hill-climbs from every pool subset and returns the lowest-loss result
/// (ties go to the smaller subset key).
pub fn recommend(pool: &CandidatePool, set: &ModelSet, t: &ChemistryTable, p: &LossParams) -> Result<Recommendation> {
    p.validate()?;
    if pool.subsets.is_empty() {
        return Err(ChemError::NoCandidates);
    }
    if t.set() != set {
        return Err(ChemError::Mismatch("chemistry table was computed for a different model set".into()));
    }
    let totals = chem_totals(t)?;
    let seeds = pool
        .subsets
        .iter()
        .map(|c| {
            if c.is_empty() {
                return Err(ChemError::InvalidConfiguration("candidate subsets must be non-empty".into()));
            }
            set.subset_of(c)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut winner: Option<Climb> = None;
    for seed in seeds {
        let c = climb(seed, t, totals, p);
        let better = match &winner {
            None => true,
            Some(w) => match c.loss.total_cmp(&w.loss) {
                Ordering::Less => true,
                Ordering::Equal => c.best.key_cmp(w.best) == Ordering::Less,
                Ordering::Greater => false,
            },
        };
        if better {
            winner = Some(c);
        }
    }
    let w = winner.expect("non-empty pool");
    let members: Vec<usize> = w.best.iter().collect();
    let zero_chemistry = members
        .iter()
        .enumerate()
        .all(|(k, &a)| members[k + 1..].iter().all(|&b| t.get_index(a, b).unwrap_or(0.0) <= 0.0));
    if zero_chemistry {
        log::warn!("recommended subset has no positive pairwise chemistry");
    }
    Ok(Recommendation {
        subset: set.configuration_of(w.best),
        loss: w.loss,
        trace: w
            .trace
            .into_iter()
            .map(|(iteration, s, loss)| TraceStep { iteration, subset: set.configuration_of(s), loss })
            .collect(),
        seed_subset: set.configuration_of(w.seed),
        zero_chemistry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemistry::{chem_table_bruteforce, ChemMethod};
    use crate::model::{ModelId, ModelProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(n: usize) -> ModelSet {
        ModelSet::new((0..n).map(|i| {
            let name = ((b'a' + i as u8) as char).to_string();
            ModelProfile::new(name.as_str(), 5.0, 0.7).unwrap()
        }))
        .unwrap()
    }

    fn random_table(s: &ModelSet, seed: u64) -> ChemistryTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<ModelId> = s.ids().cloned().collect();
        let mut rows = Vec::new();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                rows.push((i, j, rng.gen_range(0.0..2.0)));
            }
        }
        ChemistryTable::from_scores(s, ChemMethod::Imported, rows.iter().map(|&(i, j, v)| (&ids[i], &ids[j], v))).unwrap()
    }

    fn zero_table(s: &ModelSet) -> ChemistryTable {
        let ids: Vec<ModelId> = s.ids().cloned().collect();
        let mut rows = Vec::new();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                rows.push((&ids[i], &ids[j], 0.0));
            }
        }
        ChemistryTable::from_scores(s, ChemMethod::Imported, rows).unwrap()
    }

    fn cfg(names: &[&str]) -> Configuration {
        Configuration::new(names.iter().copied())
    }

    #[test]
    fn totals() {
        let s = set(3);
        assert_eq!(chem_totals(&zero_table(&s)).unwrap(), (0.0, 0.0));
        let one = ChemistryTable::from_scores(
            &s,
            ChemMethod::Imported,
            [(&"a".into(), &"b".into(), 0.5), (&"a".into(), &"c".into(), 0.0), (&"b".into(), &"c".into(), 0.0)],
        )
        .unwrap();
        assert_eq!(chem_totals(&one).unwrap(), (0.5, 1.0));
        for seed in 0..20 {
            let (t, i) = chem_totals(&random_table(&set(7), seed)).unwrap();
            assert_eq!(i, 2.0 * t);
        }
        let partial = ChemistryTable::from_scores(&s, ChemMethod::Imported, [(&"a".into(), &"b".into(), 0.5)]).unwrap();
        assert!(chem_totals(&partial).is_err());
    }

    #[test]
    fn loss_formula() {
        let s = set(5);
        let t = random_table(&s, 3);
        let totals = chem_totals(&t).unwrap();
        let p = LossParams::default();
        let full = Configuration::new(s.ids().cloned());
        let got = subset_loss(&full, &t, totals, &p).unwrap();
        assert_eq!(got, p.alpha * totals.1 + (1.0 - p.alpha) * 0.0 + p.beta * 5.0);

        let x = cfg(&["b", "d"]);
        let c = |a: &str, b: &str| t.get(&a.into(), &b.into()).unwrap();
        let intra = c("b", "d");
        let inter = c("b", "a") + c("b", "c") + c("b", "e") + c("d", "a") + c("d", "c") + c("d", "e");
        let expected = 0.5 * (totals.1 - inter) + 0.5 * (totals.0 - intra) + 0.5 * 2.0;
        assert!((subset_loss(&x, &t, totals, &p).unwrap() - expected).abs() < 1e-12);

        let z = zero_table(&s);
        assert_eq!(subset_loss(&cfg(&["a", "b", "c"]), &z, (0.0, 0.0), &p).unwrap(), 1.5);
        assert!(subset_loss(&Configuration::empty(), &z, (0.0, 0.0), &p).is_err());
        assert!(subset_loss(&cfg(&["q"]), &z, (0.0, 0.0), &p).is_err());
    }

    #[test]
    fn neighbor_enumeration() {
        let s = set(3);
        let n = neighbors(&cfg(&["a"]), &s, None).unwrap();
        assert_eq!(n, vec![cfg(&["a", "b"]), cfg(&["a", "c"]), cfg(&["b"]), cfg(&["c"])]);
        let n = neighbors(&cfg(&["a", "b", "c"]), &s, None).unwrap();
        assert_eq!(n, vec![cfg(&["b", "c"]), cfg(&["a", "c"]), cfg(&["a", "b"])]);
        let n = neighbors(&cfg(&["a", "b"]), &s, Some(2)).unwrap();
        assert_eq!(n, vec![cfg(&["b"]), cfg(&["a"]), cfg(&["b", "c"]), cfg(&["a", "c"])]);
        assert!(neighbors(&Configuration::empty(), &s, None).is_err());
    }

    #[test]
    fn neighbor_count_bound() {
        let s = set(8);
        for m in 1..(1u64 << 8) {
            let x = s.configuration_of(Subset(m));
            let n = neighbors(&x, &s, None).unwrap();
            assert!(n.len() <= 8 * 8 + 8);
            let mut dedup = n.clone();
            dedup.sort_by_key(|c| c.key());
            dedup.dedup();
            assert_eq!(dedup.len(), n.len());
        }
    }

    #[test]
    fn zero_table_descends_to_singleton() {
        let s = set(4);
        let t = zero_table(&s);
        let pool = CandidatePool::new("q", [Configuration::new(s.ids().cloned())]).unwrap();
        let r = recommend(&pool, &s, &t, &LossParams::default()).unwrap();
        assert_eq!(r.subset.len(), 1);
        assert_eq!(r.loss, 0.5);
        assert!(r.zero_chemistry);
        // exhaustive check: nothing beats a singleton on the zero table
        let totals = chem_totals(&t).unwrap();
        for m in 1..16u64 {
            let l = subset_loss(&s.configuration_of(Subset(m)), &t, totals, &LossParams::default()).unwrap();
            assert!(l >= r.loss);
        }
    }

    #[test]
    fn local_minimum_seed_stays() {
        let s = set(4);
        let t = zero_table(&s);
        let pool = CandidatePool::new("q", [cfg(&["c"])]).unwrap();
        let r = recommend(&pool, &s, &t, &LossParams::default()).unwrap();
        assert_eq!(r.subset, cfg(&["c"]));
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.seed_subset, cfg(&["c"]));
    }

    #[test]
    fn exhaustive_pool_finds_global_minimum() {
        for seed in 0..10 {
            let s = set(6 + (seed as usize % 3));
            let t = random_table(&s, seed);
            let p = LossParams::default();
            let totals = chem_totals(&t).unwrap();
            let best = (1..(1u64 << s.len()))
                .map(|m| loss_mask(Subset(m), &t, totals, &p))
                .fold(f64::INFINITY, f64::min);
            let r = recommend(&CandidatePool::exhaustive("q", &s), &s, &t, &p).unwrap();
            assert_eq!(r.loss, best);
        }
    }

    #[test]
    fn trace_strictly_decreasing_and_bounded() {
        for seed in 0..10 {
            let s = set(8);
            let t = random_table(&s, 100 + seed);
            let p = LossParams { max_iters: 3, ..LossParams::default() };
            let pool = CandidatePool::new("q", [cfg(&["a"]), cfg(&["b", "c", "d", "e"])]).unwrap();
            let r = recommend(&pool, &s, &t, &p).unwrap();
            assert!(r.trace.windows(2).all(|w| w[1].loss < w[0].loss));
            assert!(r.trace.len() <= p.max_iters + 1);
            let last = r.trace.last().unwrap();
            assert_eq!((&last.subset, last.loss), (&r.subset, r.loss));
            let totals = chem_totals(&t).unwrap();
            for seed in &pool.subsets {
                assert!(r.loss <= subset_loss(seed, &t, totals, &p).unwrap());
            }
            assert_eq!(recommend(&pool, &s, &t, &p).unwrap(), r);
        }
    }

    #[test]
    fn errors() {
        let s = set(3);
        let t = zero_table(&s);
        let empty = CandidatePool { query_context: "q".into(), subsets: vec![] };
        assert!(matches!(recommend(&empty, &s, &t, &LossParams::default()), Err(ChemError::NoCandidates)));
        assert!(CandidatePool::new("q", [Configuration::empty()]).is_err());
        let bad = LossParams { beta: 0.0, ..LossParams::default() };
        let pool = CandidatePool::new("q", [cfg(&["a"])]).unwrap();
        assert!(recommend(&pool, &s, &t, &bad).is_err());
        let pool = CandidatePool::new("q", [cfg(&["zz"])]).unwrap();
        assert!(recommend(&pool, &s, &t, &LossParams::default()).is_err());
    }

    #[test]
    fn pool_json() {
        let p = CandidatePool::from_json_str(r#"{"query_context":"liar","subsets":[["b","a"],["a","b"],["c"]]}"#).unwrap();
        assert_eq!(p.query_context, "liar");
        assert_eq!(p.subsets, vec![cfg(&["a", "b"]), cfg(&["c"])]);
        assert!(CandidatePool::from_json_str(r#"{"query_context":"x","subsets":[[]]}"#).is_err());
    }

    #[test]
    fn chemistry_driven_recommendation() {
        let s = ModelSet::new([
            ModelProfile::new("a", 9.0, 0.95).unwrap(),
            ModelProfile::new("b", 3.0, 0.55).unwrap(),
            ModelProfile::new("c", 6.5, 0.8).unwrap(),
            ModelProfile::new("d", 2.0, 0.9).unwrap(),
        ])
        .unwrap();
        let t = chem_table_bruteforce(&s).unwrap();
        let r = recommend(&CandidatePool::exhaustive("q", &s), &s, &t, &LossParams::default()).unwrap();
        assert!(!r.subset.is_empty());
        assert!(!r.zero_chemistry || r.subset.len() == 1);
    }
}
