//! Consensus grading.
//!
//! Each output's quality is the inverse-variance weighted mean of the grades
//! it received; each grader's variance is the mean squared deviation of its
//! grades from the consensus of the *other* graders on the same outputs. The
//! two steps alternate until the consensus stops moving. A grader's review
//! accuracy is `1 / (1 + variance)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ChemError, Result};
use crate::model::ModelId;

pub const VARIANCE_FLOOR: f64 = 1e-10;
pub const PRIOR_VARIANCE: f64 = 1.0;
pub const DEFAULT_MAX_ITERS: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Sparse grader × output grade matrix. Graders and outputs are kept sorted by
/// name so results do not depend on input order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeMatrix {
    outputs: Vec<String>,
    graders: Vec<ModelId>,
    /// Per output: (grader index, grade), grader indices ascending.
    by_output: Vec<Vec<(usize, f64)>>,
}

impl GradeMatrix {
    pub fn new<I, G, O>(grades: I) -> Result<Self>
    where
        I: IntoIterator<Item = (G, O, f64)>,
        G: Into<ModelId>,
        O: Into<String>,
    {
        let mut cells: BTreeMap<(String, ModelId), f64> = BTreeMap::new();
        for (g, o, grade) in grades {
            let (g, o) = (g.into(), o.into());
            if !grade.is_finite() || !(0.0..=10.0).contains(&grade) {
                return Err(ChemError::Domain(format!(
                    "grade {grade} by {g} on {o} outside [0, 10]"
                )));
            }
            if cells.insert((o.clone(), g.clone()), grade).is_some() {
                return Err(ChemError::MalformedMatrix(format!("duplicate grade by {g} on {o}")));
            }
        }
        let graders: Vec<ModelId> = cells
            .keys()
            .map(|(_, g)| g.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let grader_index: HashMap<&ModelId, usize> =
            graders.iter().enumerate().map(|(i, g)| (g, i)).collect();
        let mut outputs = Vec::new();
        let mut by_output: Vec<Vec<(usize, f64)>> = Vec::new();
        for ((o, g), grade) in &cells {
            if outputs.last() != Some(o) {
                outputs.push(o.clone());
                by_output.push(Vec::new());
            }
            by_output.last_mut().unwrap().push((grader_index[g], *grade));
        }
        for row in &mut by_output {
            row.sort_by_key(|c| c.0);
        }
        if outputs.is_empty() {
            return Err(ChemError::MalformedMatrix("no grades".into()));
        }
        Ok(Self { outputs, graders, by_output })
    }

    /// Like [`GradeMatrix::new`] but also declares outputs that must be
    /// graded; any declared output without a grade is rejected.
    pub fn with_outputs<I, G, O>(outputs: &[String], grades: I) -> Result<Self>
    where
        I: IntoIterator<Item = (G, O, f64)>,
        G: Into<ModelId>,
        O: Into<String>,
    {
        let m = Self::new(grades)?;
        if let Some(missing) = outputs.iter().find(|o| m.outputs.binary_search(o).is_err()) {
            return Err(ChemError::MalformedMatrix(format!("output {missing} has no grades")));
        }
        Ok(m)
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn graders(&self) -> &[ModelId] {
        &self.graders
    }

    /// Reads `grader,output_id,grade` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            grader: String,
            output_id: String,
            grade: f64,
        }
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut grades = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| parse_error(path, i + 2, "row", e))?;
            let grader = ModelId::new(row.grader)
                .map_err(|e| parse_error(path, i + 2, "grader", e))?;
            grades.push((grader, row.output_id, row.grade));
        }
        Self::new(grades)
    }
}

fn parse_error(path: &Path, row: usize, field: &str, e: impl std::fmt::Display) -> ChemError {
    ChemError::Parse {
        path: path.display().to_string(),
        row,
        field: field.to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub consensus: BTreeMap<String, f64>,
    pub variance: BTreeMap<ModelId, f64>,
    pub review_accuracy: BTreeMap<ModelId, f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn review_accuracy_from_variance(v: f64) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return Err(ChemError::Domain(format!("variance {v} must be finite and >= 0")));
    }
    Ok(1.0 / (1.0 + v))
}

fn weighted_mean(cells: impl Iterator<Item = (usize, f64)>, variance: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (g, grade) in cells {
        let w = 1.0 / variance[g];
        num += w * grade;
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// Alternating inverse-variance consensus / leave-one-out variance iteration.
pub fn vancouver_consensus(m: &GradeMatrix, max_iters: usize, tol: f64) -> Result<ConsensusResult> {
    if max_iters == 0 {
        return Err(ChemError::Domain("max_iters must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(ChemError::Domain(format!("tol {tol} must be > 0")));
    }
    if let Some(i) = m.by_output.iter().position(Vec::is_empty) {
        return Err(ChemError::MalformedMatrix(format!("output {} has no grades", m.outputs[i])));
    }

    let n_graders = m.graders.len();
    let mut variance = vec![PRIOR_VARIANCE; n_graders];
    let mut previous: Option<Vec<f64>> = None;
    let mut consensus = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=max_iters {
        iterations = it;
        consensus = m
            .by_output
            .iter()
            .map(|row| weighted_mean(row.iter().copied(), &variance).expect("non-empty row"))
            .collect();
        if let Some(prev) = &previous {
            let change = consensus
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change < tol {
                converged = true;
                break;
            }
        }
        if it == max_iters {
            break;
        }

        let mut sq_dev = vec![0.0; n_graders];
        let mut counts = vec![0usize; n_graders];
        for row in &m.by_output {
            if row.len() < 2 {
                continue;
            }
            for &(g, grade) in row {
                let others = row.iter().copied().filter(|&(h, _)| h != g);
                let loo = weighted_mean(others, &variance).expect("at least one other grader");
                sq_dev[g] += (grade - loo).powi(2);
                counts[g] += 1;
            }
        }
        variance = sq_dev
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                if c == 0 {
                    PRIOR_VARIANCE
                } else {
                    (s / c as f64).max(VARIANCE_FLOOR)
                }
            })
            .collect();
        previous = Some(consensus.clone());
    }

    let variance_map: BTreeMap<ModelId, f64> =
        m.graders.iter().cloned().zip(variance.iter().copied()).collect();
    let review_accuracy = variance_map
        .iter()
        .map(|(g, &v)| Ok((g.clone(), review_accuracy_from_variance(v)?)))
        .collect::<Result<_>>()?;
    Ok(ConsensusResult {
        consensus: m.outputs.iter().cloned().zip(consensus).collect(),
        variance: variance_map,
        review_accuracy,
        iterations,
        converged,
    })
}

/// Generation/review weights with and without ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBlend {
    pub gen_weight_with_gt: f64,
    pub review_weight_with_gt: f64,
    pub gen_weight_without_gt: f64,
    pub review_weight_without_gt: f64,
}

impl Default for AccuracyBlend {
    fn default() -> Self {
        Self {
            gen_weight_with_gt: 0.75,
            review_weight_with_gt: 0.25,
            gen_weight_without_gt: 0.25,
            review_weight_without_gt: 0.75,
        }
    }
}

impl AccuracyBlend {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            (self.gen_weight_with_gt, self.review_weight_with_gt),
            (self.gen_weight_without_gt, self.review_weight_without_gt),
        ];
        for (g, r) in pairs {
            if g < 0.0 || r < 0.0 || (g + r - 1.0).abs() > 1e-12 {
                return Err(ChemError::Domain(format!("blend weights ({g}, {r}) must be >= 0 and sum to 1")));
            }
        }
        Ok(())
    }
}

/// Comparator scoring a result against a reference, returning a value in `[0, 1]`.
pub type Comparator = dyn Fn(&str, &str) -> f64;

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Exact match after whitespace collapsing and lowercasing.
pub fn exact_match(result: &str, reference: &str) -> f64 {
    if normalize(result) == normalize(reference) {
        1.0
    } else {
        0.0
    }
}

pub fn generation_accuracy(result: &str, ground_truth: Option<&str>, comparator: &Comparator) -> Result<f64> {
    match ground_truth {
        None => Ok(0.0),
        Some(reference) => {
            let score = comparator(result, reference);
            if !(0.0..=1.0).contains(&score) {
                return Err(ChemError::Comparator(score));
            }
            Ok(score)
        }
    }
}

pub fn combined_accuracy(gen: f64, review: f64, has_ground_truth: bool, blend: &AccuracyBlend) -> Result<f64> {
    if !(0.0..=1.0).contains(&gen) || !(0.0..=1.0).contains(&review) {
        return Err(ChemError::Domain(format!("accuracies ({gen}, {review}) must lie in [0, 1]")));
    }
    blend.validate()?;
    let (wg, wr) = if has_ground_truth {
        (blend.gen_weight_with_gt, blend.review_weight_with_gt)
    } else {
        (blend.gen_weight_without_gt, blend.review_weight_without_gt)
    };
    Ok((wg * gen + wr * review).clamp(0.0, 1.0))
}

/// Reads `output_id,reference` CSV.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        output_id: String,
        reference: String,
    }
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| parse_error(path, i + 2, "row", e))?;
        out.insert(row.output_id, row.reference);
    }
    Ok(out)
}

/// One generated output: who produced it and what it said.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedOutput {
    pub output_id: String,
    pub model: ModelId,
    pub result: String,
}

/// Reads `output_id,model,result` CSV.
pub fn load_outputs(path: impl AsRef<Path>) -> Result<Vec<GeneratedOutput>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<GeneratedOutput>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| parse_error(path, i + 2, "row", e)))
        .collect()
}

/// Per-model scores derived from a consensus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: ModelId,
    /// Mean consensus grade of the model's outputs, if it generated any.
    pub quality: Option<f64>,
    pub gen_accuracy: f64,
    /// 0 for models that never graded.
    pub review_accuracy: f64,
    pub has_ground_truth: bool,
    pub accuracy: f64,
}

/// Combines consensus, generation results and ground truth into per-model
/// scores. Generator and grader roles are matched by model name only.
pub fn score_models(
    result: &ConsensusResult,
    outputs: &[GeneratedOutput],
    ground_truth: &BTreeMap<String, String>,
    comparator: &Comparator,
    blend: &AccuracyBlend,
) -> Result<Vec<ModelScore>> {
    let mut models: BTreeSet<ModelId> = result.review_accuracy.keys().cloned().collect();
    models.extend(outputs.iter().map(|o| o.model.clone()));
    models
        .into_iter()
        .map(|model| {
            let mine: Vec<&GeneratedOutput> = outputs.iter().filter(|o| o.model == model).collect();
            let grades: Vec<f64> = mine
                .iter()
                .filter_map(|o| result.consensus.get(&o.output_id).copied())
                .collect();
            let quality = (!grades.is_empty()).then(|| grades.iter().sum::<f64>() / grades.len() as f64);
            let with_gt: Vec<&&GeneratedOutput> =
                mine.iter().filter(|o| ground_truth.contains_key(&o.output_id)).collect();
            let has_ground_truth = !with_gt.is_empty();
            let gen_accuracy = if has_ground_truth {
                let mut total = 0.0;
                for o in &with_gt {
                    total += generation_accuracy(
                        &o.result,
                        ground_truth.get(&o.output_id).map(String::as_str),
                        comparator,
                    )?;
                }
                total / with_gt.len() as f64
            } else {
                0.0
            };
            let review_accuracy = result.review_accuracy.get(&model).copied().unwrap_or(0.0);
            let accuracy = combined_accuracy(gen_accuracy, review_accuracy, has_ground_truth, blend)?;
            Ok(ModelScore { model, quality, gen_accuracy, review_accuracy, has_ground_truth, accuracy })
        })
        .collect()
}
