//! Reference implementations used as test oracles. Each one is written
//! directly from the defining formula and shares no code with the library.
#![allow(dead_code)]

use llm_chemistry::{ModelProfile, ModelSet};
use rand::Rng;

/// Cost from raw (quality, accuracy) pairs: keep outputs with accuracy at or
/// above `threshold`, sort by quality then accuracy descending (stable, so
/// input order breaks remaining ties), weight rank i by 1/i.
pub fn cost_oracle(outputs: &[(f64, f64)], threshold: f64, empty_cost: f64) -> f64 {
    let mut used: Vec<(f64, f64)> = outputs.iter().copied().filter(|o| o.1 >= threshold).collect();
    if used.is_empty() {
        return empty_cost;
    }
    used.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(y.1.partial_cmp(&x.1).unwrap()));
    let mut total = 0.0;
    for (i, (q, a)) in used.iter().enumerate() {
        total += (1.0 / (i as f64 + 1.0)) * (1.0 - q / 10.0) * (1.0 - a);
    }
    total
}

/// Dense re-implementation of the inverse-variance consensus iteration.
/// `grades[g][o]` is grader g's grade for output o (every cell present).
pub struct ConsensusOracle {
    pub consensus: Vec<f64>,
    pub variance: Vec<f64>,
    pub iterations: usize,
}

pub fn consensus_oracle(grades: &[Vec<f64>], max_iters: usize, tol: f64) -> ConsensusOracle {
    let g_n = grades.len();
    let o_n = grades[0].len();
    let mut var = vec![1.0; g_n];
    let mut prev: Vec<f64> = Vec::new();
    let mut cons = vec![0.0; o_n];
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        for o in 0..o_n {
            let w: f64 = (0..g_n).map(|g| 1.0 / var[g]).sum();
            let s: f64 = (0..g_n).map(|g| grades[g][o] / var[g]).sum();
            cons[o] = s / w;
        }
        if !prev.is_empty() {
            let mut d: f64 = 0.0;
            for o in 0..o_n {
                d = d.max((cons[o] - prev[o]).abs());
            }
            if d < tol {
                break;
            }
        }
        if it == max_iters {
            break;
        }
        let mut next = vec![0.0; g_n];
        for g in 0..g_n {
            let mut acc = 0.0;
            for o in 0..o_n {
                let mut w = 0.0;
                let mut s = 0.0;
                for h in 0..g_n {
                    if h != g {
                        w += 1.0 / var[h];
                        s += grades[h][o] / var[h];
                    }
                }
                acc += (grades[g][o] - s / w).powi(2);
            }
            next[g] = f64::max(acc / o_n as f64, 1e-10);
        }
        var = next;
        prev = cons.clone();
    }
    ConsensusOracle { consensus: cons, variance: var, iterations }
}

/// Monte Carlo estimate of the area dominated by `points` above the origin.
pub fn hypervolume_mc<R: Rng>(points: &[(f64, f64)], samples: usize, rng: &mut R) -> f64 {
    let mut hits = 0usize;
    for _ in 0..samples {
        let (x, y): (f64, f64) = (rng.gen(), rng.gen());
        if points.iter().any(|&(px, py)| x <= px && y <= py) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

pub fn random_set<R: Rng>(rng: &mut R, n: usize, acc_lo: f64) -> ModelSet {
    ModelSet::new((0..n).map(|i| {
        ModelProfile::new(
            format!("m{i:02}").as_str(),
            rng.gen_range(0.0..=10.0),
            rng.gen_range(acc_lo..=1.0),
        )
        .unwrap()
    }))
    .unwrap()
}

pub fn homogeneous_set(n: usize, quality: f64, accuracy: f64) -> ModelSet {
    ModelSet::new((0..n).map(|i| ModelProfile::new(format!("m{i:02}").as_str(), quality, accuracy).unwrap())).unwrap()
}
