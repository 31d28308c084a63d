//! Evaluation metrics for ensembles: complementarity index, ΔCI maps,
//! soft-vote effectiveness and correlation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ChemError, Result};
use crate::model::{ModelId, ModelProfile};

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_GRID_SIZE: usize = 50;
pub const SATURATION_THRESHOLD: f64 = 0.01;

/// One ensemble member as a point in (accuracy, quality / 10) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    pub model: ModelId,
    pub accuracy: f64,
    pub quality_norm: f64,
}

impl EnsemblePoint {
    pub fn new(model: impl Into<ModelId>, accuracy: f64, quality_norm: f64) -> Result<Self> {
        for (name, v) in [("accuracy", accuracy), ("quality_norm", quality_norm)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ChemError::Domain(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(Self { model: model.into(), accuracy, quality_norm })
    }

    pub fn from_profile(p: &ModelProfile) -> Self {
        Self { model: p.model.clone(), accuracy: p.accuracy, quality_norm: p.quality_norm() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIParams {
    pub lambda: f64,
    pub reference_point: (f64, f64),
    pub distance_norm: f64,
}

impl Default for CIParams {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, reference_point: (0.0, 0.0), distance_norm: std::f64::consts::SQRT_2 }
    }
}

impl CIParams {
    pub fn with_lambda(lambda: f64) -> Result<Self> {
        let p = Self { lambda, ..Self::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ChemError::Domain(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.distance_norm > 0.0) || !self.distance_norm.is_finite() {
            return Err(ChemError::Domain(format!("distance_norm {} must be positive", self.distance_norm)));
        }
        Ok(())
    }
}

/// Area dominated by `points` relative to `reference`. Points that do not
/// strictly dominate the reference in both coordinates are ignored.
pub fn hypervolume2d(points: &[EnsemblePoint], reference: (f64, f64)) -> f64 {
    let (rx, ry) = reference;
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.accuracy, p.quality_norm))
        .filter(|&(x, y)| x > rx && y > ry)
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut top = ry;
    for (x, y) in pts {
        if y > top {
            area += (x - rx) * (y - top);
            top = y;
        }
    }
    area
}

fn distance(a: &EnsemblePoint, b: &EnsemblePoint) -> f64 {
    (a.accuracy - b.accuracy).hypot(a.quality_norm - b.quality_norm)
}

/// Rao's quadratic entropy with uniform weights and Euclidean distance
/// divided by `distance_norm`.
pub fn rao_entropy_with(points: &[EnsemblePoint], distance_norm: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(ChemError::Domain("rao entropy of an empty ensemble".into()));
    }
    let n = points.len() as f64;
    let w = 1.0 / (n * n);
    let mut q = 0.0;
    for a in points {
        for b in points {
            q += w * distance(a, b) / distance_norm;
        }
    }
    Ok(q)
}

pub fn rao_entropy(points: &[EnsemblePoint]) -> Result<f64> {
    rao_entropy_with(points, std::f64::consts::SQRT_2)
}

/// `λ·HV + (1 − λ)·Rao`.
pub fn complementarity_index(points: &[EnsemblePoint], p: &CIParams) -> Result<f64> {
    p.validate()?;
    let rao = rao_entropy_with(points, p.distance_norm)?;
    let hv = hypervolume2d(points, p.reference_point);
    Ok(p.lambda * hv + (1.0 - p.lambda) * rao)
}

/// ΔCI of adding a hypothetical model at each grid cell center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemistryMap {
    pub grid_size: usize,
    /// `cells[i][j]`: accuracy bin `i`, quality bin `j`.
    pub cells: Vec<Vec<f64>>,
    pub ensemble: Vec<EnsemblePoint>,
    pub base_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub grid_size: usize,
    pub base_ci: f64,
    pub max_delta_ci: f64,
    pub min_delta_ci: f64,
    pub max_abs_delta_ci: f64,
    /// Cell center `(accuracy, quality_norm)` of the largest ΔCI.
    pub argmax: (f64, f64),
    pub saturated: bool,
}

/// Center of bin `i` on an `n`-bin unit axis.
pub fn cell_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

impl ChemistryMap {
    pub fn max_abs(&self) -> f64 {
        self.cells.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_saturated(&self, threshold: f64) -> bool {
        self.max_abs() < threshold
    }

    pub fn summary(&self, threshold: f64) -> MapSummary {
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        let mut argmax = (0, 0);
        for (i, row) in self.cells.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > max {
                    max = v;
                    argmax = (i, j);
                }
                min = min.min(v);
            }
        }
        let n = self.grid_size;
        MapSummary {
            grid_size: n,
            base_ci: self.base_ci,
            max_delta_ci: max,
            min_delta_ci: min,
            max_abs_delta_ci: self.max_abs(),
            argmax: (cell_center(argmax.0, n), cell_center(argmax.1, n)),
            saturated: self.is_saturated(threshold),
        }
    }

    /// `accuracy_bin,quality_bin,delta_ci`, one row per cell.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("accuracy_bin,quality_bin,delta_ci\n");
        for (i, row) in self.cells.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writeln!(out, "{i},{j},{v:?}").expect("write to string");
            }
        }
        out
    }
}

pub fn delta_ci_map(ensemble: &[EnsemblePoint], p: &CIParams, grid_size: usize) -> Result<ChemistryMap> {
    if grid_size < 2 {
        return Err(ChemError::Domain(format!("grid_size {grid_size} must be >= 2")));
    }
    let base_ci = complementarity_index(ensemble, p)?;
    let probe_id = ModelId::from("__probe__");
    let mut pts = ensemble.to_vec();
    pts.push(EnsemblePoint { model: probe_id, accuracy: 0.0, quality_norm: 0.0 });
    let last = pts.len() - 1;
    let mut cells = vec![vec![0.0; grid_size]; grid_size];
    for (i, row) in cells.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            pts[last].accuracy = cell_center(i, grid_size);
            pts[last].quality_norm = cell_center(j, grid_size);
            *cell = complementarity_index(&pts, p)? - base_ci;
        }
    }
    Ok(ChemistryMap { grid_size, cells, ensemble: ensemble.to_vec(), base_ci })
}

/// Fraction of tasks whose mean member accuracy is strictly above 0.5.
pub fn effectiveness_soft_vote(per_task: &[Vec<f64>]) -> Result<f64> {
    if per_task.is_empty() {
        return Err(ChemError::Domain("no tasks".into()));
    }
    let mut correct = 0usize;
    for (t, row) in per_task.iter().enumerate() {
        if row.is_empty() {
            return Err(ChemError::Domain(format!("task {t} has no members")));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ChemError::Domain(format!("task {t} accuracy {v} outside [0, 1]")));
        }
        if row.iter().sum::<f64>() / row.len() as f64 > 0.5 {
            correct += 1;
        }
    }
    Ok(correct as f64 / per_task.len() as f64)
}

/// Pearson product-moment correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(ChemError::UndefinedCorrelation(format!("lengths differ: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(ChemError::UndefinedCorrelation("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ChemError::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson_r(&average_ranks(xs), &average_ranks(ys))
}
