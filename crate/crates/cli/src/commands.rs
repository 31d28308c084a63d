use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use llm_chemistry::chemistry::{chem_table_bruteforce, cheme, llmcp_filter, ChemistryTable};
use llm_chemistry::complementarity::{
    complementarity_index, delta_ci_map, effectiveness_soft_vote, pearson_r, CIParams, EnsemblePoint,
    SATURATION_THRESHOLD,
};
use llm_chemistry::consensus::{
    exact_match, load_ground_truth, load_outputs, score_models, vancouver_consensus, AccuracyBlend, GradeMatrix,
};
use llm_chemistry::cost::audit_cost_properties;
use llm_chemistry::history::{
    build_profiles, parse_history_csv, read_profiles, select_store, write_profiles, Aggregation, Grouping,
    HistoryRecord, ProfileStore,
};
use llm_chemistry::mig::{build_mig_with, DEFAULT_SIZE_GUARD};
use llm_chemistry::recommend::{recommend as run_recommend, CandidatePool, LossParams, DEFAULT_SIZE_CAP};
use llm_chemistry::{sha256_hex, Configuration, CostBackend, ModelId, ModelProfile, ModelSet, Subset};

use crate::config::RunConfig;
use crate::Outcome;

/// Writes `<out>.meta.json` next to an output file: the command, the
/// effective config and a SHA-256 of every input.
fn write_meta(out: &Path, command: &str, cfg: &RunConfig, inputs: &[&Path], extra: serde_json::Value) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(json!({"path": p.display().to_string(), "sha256": sha256_hex(&bytes)}))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = json!({
        "tool": "llmchem",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
        "inputs": inputs,
        "details": extra,
    });
    let path = PathBuf::from(format!("{}.meta.json", out.display()));
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Profile store written by `ingest`
    #[arg(long)]
    pub store: PathBuf,
    /// Context key of the store to use when the file holds several
    #[arg(long)]
    pub context: Option<String>,
}

fn load_set(a: &StoreArgs, cfg: &RunConfig) -> Result<(ProfileStore, ModelSet)> {
    let stores = read_profiles(&a.store).with_context(|| format!("reading store {}", a.store.display()))?;
    let store = select_store(&stores, a.context.as_deref())?.clone();
    let set = store
        .model_set()?
        .with_empty_cost(cfg.empty_cost)?
        .with_used_threshold(cfg.used_threshold)?;
    Ok((store, set))
}

fn parse_members(text: &str) -> Result<Configuration> {
    let names: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        bail!("empty ensemble {text:?}");
    }
    Ok(Configuration::new(names.iter().map(|n| ModelId::new(*n)).collect::<Result<Vec<_>, _>>()?))
}

fn points(set: &ModelSet, members: &Configuration) -> Result<Vec<EnsemblePoint>> {
    let mask = set.subset_of(members)?;
    Ok(mask.iter().map(|i| EnsemblePoint::from_profile(set.profile(i))).collect())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupArg {
    Trial,
    Task,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregateArg {
    Mean,
    Median,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// History CSV files
    #[arg(required = true)]
    pub csv: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Records sharing this key form one store
    #[arg(long, value_enum, default_value = "trial")]
    pub group: GroupArg,
    /// How several records of one model collapse into a profile
    #[arg(long, value_enum, default_value = "mean")]
    pub aggregate: AggregateArg,
}

pub fn ingest(a: &IngestArgs, cfg: &RunConfig) -> Result<Outcome> {
    let files = a.csv.iter().map(parse_history_csv).collect::<Result<Vec<_>, _>>()?;
    let grouping = match a.group {
        GroupArg::Trial => Grouping::Trial,
        GroupArg::Task => Grouping::Task,
        GroupArg::All => Grouping::All,
    };
    let how = match a.aggregate {
        AggregateArg::Mean => Aggregation::Mean,
        AggregateArg::Median => Aggregation::Median,
    };
    let stores = build_profiles(&files, grouping, how)?;
    write_profiles(&stores, &a.out)?;
    for s in &stores {
        println!("store {}: {} models", s.context_key, s.profiles.len());
    }
    let inputs: Vec<&Path> = a.csv.iter().map(PathBuf::as_path).collect();
    let rows: usize = files.iter().map(|f| f.records.len()).sum();
    write_meta(&a.out, "ingest", cfg, &inputs, json!({"records": rows, "stores": stores.len()}))?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// `grader,output_id,grade` CSV
    #[arg(long)]
    pub grades: PathBuf,
    /// `output_id,reference` CSV
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// `output_id,model,result` CSV; enables per-model scores
    #[arg(long)]
    pub outputs: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Consensus iteration limit
    #[arg(long, default_value_t = llm_chemistry::consensus::DEFAULT_MAX_ITERS)]
    pub consensus_iters: usize,
    /// Consensus convergence tolerance
    #[arg(long, default_value_t = llm_chemistry::consensus::DEFAULT_TOL)]
    pub tol: f64,
}

pub fn score(a: &ScoreArgs, cfg: &RunConfig) -> Result<Outcome> {
    if a.ground_truth.is_some() && a.outputs.is_none() {
        bail!("--ground-truth needs --outputs to know which model produced each output");
    }
    let m = GradeMatrix::from_csv(&a.grades)?;
    let result = vancouver_consensus(&m, a.consensus_iters, a.tol)?;
    println!(
        "consensus over {} outputs and {} graders: {} iterations, converged {}",
        m.outputs().len(),
        m.graders().len(),
        result.iterations,
        result.converged
    );
    let mut inputs: Vec<&Path> = vec![&a.grades];
    let models = match &a.outputs {
        Some(path) => {
            inputs.push(path);
            let outputs = load_outputs(path)?;
            let gt = match &a.ground_truth {
                Some(p) => {
                    inputs.push(p);
                    load_ground_truth(p)?
                }
                None => BTreeMap::new(),
            };
            let scores = score_models(&result, &outputs, &gt, &exact_match, &AccuracyBlend::default())?;
            for s in &scores {
                println!("{}: quality {:?} accuracy {}", s.model, s.quality, s.accuracy);
            }
            Some(scores)
        }
        None => None,
    };
    write_json(&a.out, &json!({"consensus": result, "models": models}))?;
    write_meta(&a.out, "score", cfg, &inputs, json!({"iterations": result.iterations}))?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct ChemArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Enumerate every subset directly instead of walking the interaction graph
    #[arg(long)]
    pub brute_force: bool,
    /// Chemistry CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the table as JSON with a model-set fingerprint
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn chem(a: &ChemArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (_, set) = load_set(&a.store, cfg)?;
    let (table, details) = if a.brute_force {
        (chem_table_bruteforce(&set)?, json!({"method": "brute-force"}))
    } else {
        let mig = build_mig_with(&set, CostBackend::Profiles, DEFAULT_SIZE_GUARD)?;
        if !mig.is_full_lattice() {
            log::warn!("interaction graph covers {} of {} subsets; scores use covering nodes", mig.node_count(), 1u64 << set.len());
        }
        let d = json!({"method": "mig-cheme", "nodes": mig.node_count(), "edges": mig.edge_count()});
        (cheme(&set, &mig)?, d)
    };
    table.write_csv(&a.out)?;
    if let Some(p) = &a.json {
        write_json(p, &table.to_json())?;
    }
    let hits = llmcp_filter(&table, cfg.tau)?;
    println!("{} pairs, {} above tau {}", table.pairs().count(), hits.len(), cfg.tau);
    for ((x, y), s) in &hits {
        println!("  {x} {y} {s}");
    }
    write_meta(&a.out, "chem", cfg, &[&a.store.store], details)?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Chemistry CSV from `chem`
    #[arg(long)]
    pub chem: PathBuf,
    /// `{"query_context": ..., "subsets": [[model, ...], ...]}`
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Largest subset the search may grow to; 0 removes the cap
    #[arg(long, default_value_t = DEFAULT_SIZE_CAP)]
    pub size_cap: usize,
}

pub fn recommend(a: &RecommendArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (_, set) = load_set(&a.store, cfg)?;
    let table = ChemistryTable::read_csv(&a.chem, &set)?;
    let pool = CandidatePool::read(&a.pool)?;
    let params = LossParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        max_iters: cfg.max_iters,
        size_cap: (a.size_cap > 0).then_some(a.size_cap),
    };
    let rec = run_recommend(&pool, &set, &table, &params)?;
    println!("recommended {} with loss {:?}", rec.subset, rec.loss);
    if rec.zero_chemistry {
        println!("warning: no positive chemistry inside the recommended subset");
    }
    write_json(&a.out, &json!({"query_context": pool.query_context, "recommendation": rec}))?;
    write_meta(&a.out, "recommend", cfg, &[&a.store.store, &a.chem, &a.pool], json!({"params": params}))?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Comma-separated ensemble members
    #[arg(long)]
    pub ensemble: String,
    /// Grid CSV `accuracy_bin,quality_bin,delta_ci`
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON [default: <out>.summary.json]
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn map(a: &MapArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (_, set) = load_set(&a.store, cfg)?;
    let members = parse_members(&a.ensemble)?;
    let pts = points(&set, &members)?;
    let params = CIParams::with_lambda(cfg.lambda)?;
    let m = delta_ci_map(&pts, &params, cfg.grid_size)?;
    fs::write(&a.out, m.to_csv_string()).with_context(|| format!("writing {}", a.out.display()))?;
    let summary = m.summary(SATURATION_THRESHOLD);
    let summary_path = a.summary.clone().unwrap_or_else(|| PathBuf::from(format!("{}.summary.json", a.out.display())));
    write_json(&summary_path, &summary)?;
    println!(
        "base CI {:?}, max ΔCI {:?} at {:?}, saturated {}",
        summary.base_ci, summary.max_delta_ci, summary.argmax, summary.saturated
    );
    write_meta(&a.out, "map", cfg, &[&a.store.store], json!({"ensemble": members, "summary": summary}))?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum Metric {
    Effectiveness,
    Ci,
    Correlation,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// One ensemble per line, members comma-separated; `#` starts a comment
    #[arg(long)]
    pub ensembles: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// History CSVs with per-task accuracies (effectiveness)
    #[arg(long, num_args = 1..)]
    pub history: Vec<PathBuf>,
    /// Chemistry CSV (correlation)
    #[arg(long)]
    pub chem: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_ensembles(path: &Path) -> Result<Vec<Configuration>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let list: Vec<Configuration> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(parse_members)
        .collect::<Result<_>>()?;
    if list.is_empty() {
        bail!("{} lists no ensembles", path.display());
    }
    Ok(list)
}

/// Task → model → accuracies, restricted to the records of the chosen store.
fn task_accuracies(records: &[HistoryRecord], store: &ProfileStore) -> BTreeMap<String, BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let key = match store.grouping {
            Grouping::Trial => &r.trial,
            Grouping::Task => &r.task,
            Grouping::All => &store.context_key,
        };
        if key == &store.context_key {
            out.entry(r.task.clone()).or_default().entry(r.model.clone()).or_default().push(r.accuracy);
        }
    }
    out
}

pub fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (store, set) = load_set(&a.store, cfg)?;
    let ensembles = read_ensembles(&a.ensembles)?;
    let params = CIParams::with_lambda(cfg.lambda)?;
    let mut inputs: Vec<&Path> = vec![&a.store.store, &a.ensembles];
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut details = json!({"metric": format!("{:?}", a.metric).to_lowercase()});

    match a.metric {
        Metric::Ci => {
            w.write_record(["ensemble", "ci"])?;
            for e in &ensembles {
                let ci = complementarity_index(&points(&set, e)?, &params)?;
                w.write_record([e.key(), format!("{ci:?}")])?;
                println!("{e}: CI {ci:?}");
            }
        }
        Metric::Effectiveness => {
            if a.history.is_empty() {
                bail!("--metric effectiveness needs --history");
            }
            let mut records = Vec::new();
            for p in &a.history {
                records.extend(parse_history_csv(p)?.records);
                inputs.push(p);
            }
            let by_task = task_accuracies(&records, &store);
            w.write_record(["ensemble", "effectiveness", "tasks"])?;
            for e in &ensembles {
                set.subset_of(e)?;
                let matrix: Vec<Vec<f64>> = by_task
                    .values()
                    .map(|models| {
                        e.members()
                            .filter_map(|m| models.get(m.as_str()))
                            .map(|acc| acc.iter().sum::<f64>() / acc.len() as f64)
                            .collect::<Vec<f64>>()
                    })
                    .filter(|row| !row.is_empty())
                    .collect();
                if matrix.is_empty() {
                    bail!("ensemble {e} has no task records in context {}", store.context_key);
                }
                let eff = effectiveness_soft_vote(&matrix)?;
                w.write_record([e.key(), format!("{eff:?}"), matrix.len().to_string()])?;
                println!("{e}: effectiveness {eff:?} over {} tasks", matrix.len());
            }
        }
        Metric::Correlation => {
            let Some(chem_path) = &a.chem else { bail!("--metric correlation needs --chem") };
            inputs.push(chem_path);
            let table = ChemistryTable::read_csv(chem_path, &set)?;
            w.write_record(["ensemble", "chemistry", "ci"])?;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for e in &ensembles {
                let mask = set.subset_of(e)?;
                let members: Vec<usize> = mask.iter().collect();
                let mut chem = 0.0;
                for (k, &i) in members.iter().enumerate() {
                    for &j in &members[k + 1..] {
                        chem += table.get_index(i, j).unwrap_or(0.0);
                    }
                }
                let ci = complementarity_index(&points(&set, e)?, &params)?;
                w.write_record([e.key(), format!("{chem:?}"), format!("{ci:?}")])?;
                xs.push(chem);
                ys.push(ci);
            }
            match pearson_r(&xs, &ys) {
                Ok(r) => {
                    println!("pearson r (chemistry, CI) = {r:?} over {} ensembles", xs.len());
                    details["pearson_r"] = json!(r);
                }
                Err(e) => {
                    println!("pearson r undefined: {e}");
                    details["pearson_r"] = serde_json::Value::Null;
                }
            }
        }
    }
    w.flush()?;
    write_meta(&a.out, "eval", cfg, &inputs, details)?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Probes per audit section
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// JSON report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const ORACLE_SAMPLE: usize = 6;

pub fn check(a: &CheckArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (_, set) = load_set(&a.store, cfg)?;
    let mut ok = true;

    let audit = audit_cost_properties(&set, a.trials, cfg.seed);
    let pass = audit.passed();
    ok &= pass;
    println!(
        "{} cost audit: monotonicity {}/{} violations, linearity {}/{} violations, submodularity {}/{} violations (diagnostic)",
        verdict(pass),
        audit.monotonicity.violations,
        audit.monotonicity.probes,
        audit.linearity.violations,
        audit.linearity.probes,
        audit.submodularity.violations,
        audit.submodularity.probes
    );

    // Homogeneity probe: copies of one profile must give the same chemistry
    // for every pair.
    let base = set.profile(0);
    let k = set.len().clamp(2, ORACLE_SAMPLE);
    let copies = (0..k)
        .map(|i| ModelProfile::new(format!("h{i}").as_str(), base.quality, base.accuracy))
        .collect::<Result<Vec<_>, _>>()?;
    let homo = ModelSet::new(copies)?
        .with_empty_cost(set.empty_cost())?
        .with_used_threshold(set.used_threshold())?;
    let ht = chem_table_bruteforce(&homo)?;
    let values: Vec<f64> = ht.pairs().map(|p| p.2).collect();
    let first = values[0];
    let uniform = values.iter().all(|v| (v - first).abs() <= 1e-12);
    ok &= uniform;
    println!(
        "{} homogeneity probe: {k} copies of ({}, {}) give chemistry {first:?} on every pair{}",
        verdict(uniform),
        base.quality,
        base.accuracy,
        if first == 0.0 { " (all zero)" } else { "" }
    );
    let store_homogeneous = set
        .profiles()
        .iter()
        .all(|p| p.quality == base.quality && p.accuracy == base.accuracy);
    let mut store_max = None;
    if store_homogeneous && set.len() <= llm_chemistry::chemistry::BRUTE_FORCE_GUARD {
        let max = chem_table_bruteforce(&set)?.max_score();
        store_max = Some(max);
        println!("     store is homogeneous: max pairwise chemistry {max:?}{}", if max == 0.0 { " (all zero)" } else { "" });
    }

    // ChemE against brute force on a seeded subsample.
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    idx.truncate(ORACLE_SAMPLE);
    let sample = set.restrict(idx.iter().fold(Subset::EMPTY, |s, &i| s.with(i)))?;
    let mig = build_mig_with(&sample, CostBackend::Profiles, DEFAULT_SIZE_GUARD)?;
    let fast = cheme(&sample, &mig)?;
    let slow = chem_table_bruteforce(&sample)?;
    let differing = fast.pairs().zip(slow.pairs()).filter(|(x, y)| x.2.to_bits() != y.2.to_bits()).count();
    let full = mig.is_full_lattice();
    let oracle_pass = !full || differing == 0;
    ok &= oracle_pass;
    println!(
        "{} ChemE vs brute force on {} models ({}): {differing} of {} pairs differ{}",
        verdict(oracle_pass),
        sample.len(),
        sample.ids().map(ModelId::as_str).collect::<Vec<_>>().join(","),
        fast.pairs().count(),
        if full { "" } else { " (partial graph, gap reported only)" }
    );

    println!("check: {}", if ok { "all passed" } else { "FAILED" });
    if let Some(out) = &a.out {
        let report = json!({
            "passed": ok,
            "cost_audit": audit,
            "homogeneity": {"models": k, "chemistry": first, "uniform": uniform, "store_homogeneous": store_homogeneous, "store_max_chemistry": store_max},
            "cheme_oracle": {"models": sample.ids().collect::<Vec<_>>(), "full_lattice": full, "differing_pairs": differing},
        });
        write_json(out, &report)?;
        write_meta(out, "check", cfg, &[&a.store.store], json!({"trials": a.trials}))?;
    }
    Ok(if ok { Outcome::Ok } else { Outcome::InvariantFailed })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
