//! Subcommand implementations. Each takes resolved inputs and writes its
//! outputs under the given paths; `main` only parses flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use symxrl_core::explain::{
    action_distribution, compare_distributions, decision_effect_density, effect_distribution, export_kg,
    project_terms, projected_kg, ExportFormat, FrequencyTable, Normalization, SubjectFilter,
};
use symxrl_core::model::validate_trajectory;
use symxrl_core::steering::{EpisodeOutcome, Reason, SteeringConfig, SteeringMode};
use symxrl_core::store::ExperienceStore;
use symxrl_core::symbolizer::{symbolize_trajectory, SymbolicRecord, SymbolizerState, Tolerance};
use symxrl_core::{Schema, SchemaA1, Step};

use crate::agent::{self, moving_average, TdAgent};
use crate::config::{RunConfig, SchemaKind};
use crate::experiment::{compare_seeds, for_seeds, median, run_episode, summarize, EvalPolicy, SeedSummary};
use crate::io::{self, csv_table, num};
use crate::synth::synth_trace_a1;

pub const REASONS: [Reason; 6] = [
    Reason::Inactive,
    Reason::NoRecord,
    Reason::NoBetter,
    Reason::BetterKnown,
    Reason::Constraint,
    Reason::FallbackForced,
];

pub fn reason_name(r: Reason) -> String {
    serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).expect("unit variant")
}

pub fn schema_of(cfg: &RunConfig) -> Schema {
    match cfg.schema {
        SchemaKind::A1 => Schema::A1(SchemaA1),
        SchemaKind::A2 => Schema::A2(cfg.env.schema()),
    }
}

fn seed_file(dir: &Path, prefix: &str, seed: u64) -> PathBuf {
    dir.join(format!("{prefix}seed-{seed}.jsonl"))
}

/// One trace per seed in `out/seed-<s>.jsonl`. A2 traces come from the
/// playground driven by `agent` (uniformly random without one), A1 traces
/// from the synthetic generator.
pub fn simulate(cfg: &RunConfig, agent: Option<&TdAgent>, out: &Path) -> Result<Vec<PathBuf>> {
    let traces: Vec<Vec<Step>> = match cfg.schema {
        SchemaKind::A1 => cfg.seeds.iter().map(|&s| synth_trace_a1(s, cfg.env.horizon)).collect(),
        SchemaKind::A2 => {
            let random = TdAgent::new();
            let (agent, policy) = match agent {
                Some(a) => (a, cfg.eval_policy()),
                None => (&random, EvalPolicy { epsilon: 1.0 }),
            };
            let off = SteeringConfig { mode: SteeringMode::Off, ..SteeringConfig::default() };
            let empty = ExperienceStore::new();
            let tol = cfg.symbolizer.tolerance();
            for_seeds(&cfg.seeds, |seed| {
                Ok(run_episode(&cfg.env, seed, agent, policy, &empty, &off, tol)?.0.steps)
            })?
        }
    };
    let mut paths = Vec::new();
    for (&seed, steps) in cfg.seeds.iter().zip(&traces) {
        let path = seed_file(out, "", seed);
        io::write_trace(&path, steps)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Trains and writes `checkpoint-<n>.json`, `training.csv` and the training
/// store `store.json` under `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<agent::TrainOutcome> {
    let outcome = agent::train(&cfg.env, &cfg.train, cfg.symbolizer.tolerance())?;
    for ck in &outcome.checkpoints {
        io::save_checkpoint(&out.join(format!("checkpoint-{}.json", ck.episodes)), ck)?;
    }
    let rows = outcome.returns.iter().enumerate().map(|(i, r)| {
        [(i + 1).to_string(), num(*r), num(moving_average(&outcome.returns, i, 20))]
    });
    io::write_atomic(&out.join("training.csv"), csv_table(&["episode", "return", "moving_avg_20"], rows).as_bytes())?;
    io::save_store(&out.join("store.json"), &outcome.store)?;
    Ok(outcome)
}

/// Symbolizes one trace as one sequence. With `store`, tracker state is
/// resumed from the file (when it exists) and the experiences are appended.
pub fn symbolize(
    schema: &Schema,
    input: &Path,
    output: &Path,
    store: Option<&Path>,
    tolerance: Tolerance,
) -> Result<Vec<SymbolicRecord>> {
    let steps = io::read_trace(input)?;
    let trajectory = validate_trajectory(steps, schema).with_context(|| format!("{}", input.display()))?;
    let mut db = match store {
        Some(p) if p.exists() => io::load_store(p)?,
        _ => ExperienceStore::new(),
    };
    let mut state = SymbolizerState::from_trackers(schema.clone(), tolerance, db.trackers().clone());
    let records = symbolize_trajectory(&trajectory, &mut state)?;
    io::write_symbolic(output, &records)?;
    if let Some(path) = store {
        db.begin_sequence();
        for (rec, step) in records.iter().zip(trajectory.steps()) {
            db.record_step(&rec.state, &rec.action, step.action.clone(), step.reward, step.t, false)?;
        }
        db.set_trackers(state.trackers().clone());
        io::save_store(path, &db)?;
    }
    Ok(records)
}

#[derive(Debug, Clone, Default)]
pub struct ExplainOutputs {
    pub kg: Option<PathBuf>,
    /// Effect distribution.
    pub dist: Option<PathBuf>,
    pub actions: Option<PathBuf>,
    pub density: Option<PathBuf>,
}

/// `--group 0` selects `g0`; anything non-numeric is used as the scope
/// itself (e.g. a slice name).
pub fn group_filter(group: Option<&str>) -> SubjectFilter {
    match group {
        None => SubjectFilter::all(),
        Some(g) if g.parse::<u32>().is_ok() => SubjectFilter::scope(format!("g{g}")),
        Some(g) => SubjectFilter::scope(g),
    }
}

pub fn explain(input: &Path, outputs: &ExplainOutputs, normalization: Normalization, group: Option<&str>) -> Result<()> {
    let records = io::read_symbolic(input)?;
    let filter = group_filter(group);
    if let Some(path) = &outputs.kg {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ExportFormat::Json,
            _ => ExportFormat::Dot,
        };
        let kg = projected_kg(&[&records], &filter);
        io::write_atomic(path, export_kg(&kg, format).as_bytes())?;
    }
    if let Some(path) = &outputs.dist {
        io::write_atomic(path, effect_distribution(&records, &filter).to_csv().as_bytes())?;
    }
    if let Some(path) = &outputs.actions {
        io::write_atomic(path, action_distribution(&records, &filter).to_csv().as_bytes())?;
    }
    if let Some(path) = &outputs.density {
        let map = decision_effect_density(
            &records,
            project_terms(filter.clone()),
            project_terms(filter.clone()),
            normalization,
        );
        io::write_atomic(path, map.to_csv().as_bytes())?;
    }
    Ok(())
}

fn write_run(dir: &Path, seeds: &[u64], outcomes: &[&EpisodeOutcome]) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(seeds.iter().map(|s| format!("seed-{s}")));
    let horizon = outcomes.iter().map(|o| o.steps.len()).max().unwrap_or(0);
    let mut running = vec![0.0; outcomes.len()];
    let mut rows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut row = vec![t.to_string()];
        for (acc, o) in running.iter_mut().zip(outcomes) {
            *acc += o.steps.get(t).map_or(0.0, |s| s.reward);
            row.push(num(*acc));
        }
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_atomic(&dir.join("cumulative.csv"), csv_table(&header, rows).as_bytes())?;
    for (&seed, o) in seeds.iter().zip(outcomes) {
        io::write_trace(&seed_file(dir, "", seed), &o.steps)?;
        let keys: Vec<String> = o.symbolic_actions.iter().map(|a| a.key()).collect();
        io::write_atomic(&seed_file(dir, "actions-", seed), io::to_jsonl(&keys).as_bytes())?;
    }
    Ok(())
}

/// Steered and unsteered episode per seed. Writes `baseline/` and
/// `steered/` run directories, per-seed decision logs under `decisions/`
/// and `summary.csv`.
pub fn steer(
    cfg: &RunConfig,
    agent: &TdAgent,
    store: &ExperienceStore,
    steering: &SteeringConfig,
    out: &Path,
) -> Result<Vec<SeedSummary>> {
    if cfg.schema != SchemaKind::A2 {
        bail!("steering runs on the a2 playground only");
    }
    steering.validate()?;
    let pairs = compare_seeds(&cfg.env, &cfg.seeds, agent, cfg.eval_policy(), store, steering, cfg.symbolizer.tolerance())?;
    let summaries: Vec<SeedSummary> =
        cfg.seeds.iter().zip(&pairs).map(|(&s, (b, st))| summarize(s, b, st, steering)).collect();
    for (&seed, (_, steered)) in cfg.seeds.iter().zip(&pairs) {
        io::write_decisions(&seed_file(&out.join("decisions"), "", seed), &steered.decisions)?;
    }
    write_run(&out.join("baseline"), &cfg.seeds, &pairs.iter().map(|p| &p.0).collect::<Vec<_>>())?;
    write_run(&out.join("steered"), &cfg.seeds, &pairs.iter().map(|p| &p.1).collect::<Vec<_>>())?;
    io::write_atomic(&out.join("summary.csv"), summary_csv(&summaries).as_bytes())?;
    Ok(summaries)
}

pub fn summary_csv(summaries: &[SeedSummary]) -> String {
    let mut header = vec!["seed", "baseline", "steered", "improvement", "replaced"];
    let names: Vec<String> = REASONS.iter().map(|&r| reason_name(r)).collect();
    header.extend(names.iter().map(String::as_str));
    header.push("violations");
    let mut rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            let mut row = vec![s.seed.to_string(), num(s.baseline), num(s.steered), num(s.improvement()), s.replaced.to_string()];
            row.extend(REASONS.iter().map(|r| s.reasons.get(r).copied().unwrap_or(0).to_string()));
            row.push(s.violations.to_string());
            row
        })
        .collect();
    if !summaries.is_empty() {
        let imps: Vec<f64> = summaries.iter().map(SeedSummary::improvement).collect();
        let mut row = vec![String::from("median"), String::new(), String::new(), num(median(&imps))];
        row.resize(header.len(), String::new());
        rows.push(row);
    }
    csv_table(&header, rows)
}

/// Term frequencies over every `actions-seed-*.jsonl` of a run directory.
fn run_terms(dir: &Path) -> Result<FrequencyTable> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("{}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("actions-seed-")))
        .collect();
    files.sort();
    let mut table = FrequencyTable::new();
    for path in files {
        let keys: Vec<String> = io::read_jsonl(&path)?;
        for key in keys {
            for term in key.split('&').filter(|t| !t.is_empty()) {
                table.add(term);
            }
        }
    }
    Ok(table)
}

fn cumulative(dir: &Path) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
    let path = dir.join("cumulative.csv");
    let (header, rows) = io::read_csv(&path)?;
    let mut series: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for row in rows {
        for (col, cell) in header.iter().zip(&row).skip(1) {
            let v: f64 = cell.parse().with_context(|| format!("{}: bad number `{cell}`", path.display()))?;
            series.entry(col.clone()).or_default().push((row[0].clone(), v));
        }
    }
    Ok(series)
}

/// Joins two run directories: `deltas.csv` holds per-term probability
/// changes (b - a), `relative.csv` the relative cumulative reward of b
/// against a per shared seed column.
pub fn compare(run_a: &Path, run_b: &Path, out: &Path) -> Result<()> {
    let (ta, tb) = (run_terms(run_a)?, run_terms(run_b)?);
    let rows = compare_distributions(&ta, &tb)
        .into_iter()
        .map(|(k, d)| {
            let (a, b) = (ta.probability(&k), tb.probability(&k));
            vec![k, num(a), num(b), num(d)]
        });
    io::write_atomic(&out.join("deltas.csv"), csv_table(&["term", "prob_a", "prob_b", "delta"], rows).as_bytes())?;

    let (ca, cb) = (cumulative(run_a)?, cumulative(run_b)?);
    let shared: Vec<&String> = ca.keys().filter(|k| cb.contains_key(*k)).collect();
    let mut header = vec!["t"];
    header.extend(shared.iter().map(|s| s.as_str()));
    let len = shared.iter().map(|k| ca[*k].len().min(cb[*k].len())).min().unwrap_or(0);
    let rows = (0..len).map(|i| {
        let mut row = vec![shared.first().map_or(String::new(), |k| ca[*k][i].0.clone())];
        for k in &shared {
            let (a, b) = (ca[*k][i].1, cb[*k][i].1);
            row.push(num(crate::experiment::relative(a, b)));
        }
        row
    });
    io::write_atomic(&out.join("relative.csv"), csv_table(&header, rows).as_bytes())?;
    Ok(())
}
