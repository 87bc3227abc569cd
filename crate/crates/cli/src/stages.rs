//! Stage implementations: each command reads the previous stage's artifacts,
//! writes its own plus a manifest, and is byte-reproducible.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use wkm_core::env::{generate_suite, load_suite, save_suite, SuiteTask, TaskSuite};
use wkm_core::kb::KnowledgeBase;
use wkm_core::pipeline::{
    annotate_trajectory, build_kb_records, collect_explored, emit_training, replay_expert,
    summarize_states, synthesize_all_task_knowledge, write_training, StageReport,
};
use wkm_core::planner::{
    aggregate_metrics, run_episode, write_metrics, write_traces, EpisodeTrace, MetricsReport,
    PlannerConfig, PlannerMode, TaskMetrics,
};
use wkm_core::provider::{PromptTemplate, Provider, ProviderRole};
use wkm_core::trajectory::{
    pair_preferences, read_corpus, write_corpus, Split, StateKnowledge, TaskKnowledge, Trajectory,
};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};
use crate::manifest::{require_input, Manifest};
use crate::providers::make_provider;

pub const SUITE_FILE: &str = "suite.json";
pub const EXPLORED_FILE: &str = "explored.jsonl";
pub const EXPERTS_FILE: &str = "experts.jsonl";
pub const TASK_KNOWLEDGE_FILE: &str = "task_knowledge.json";
pub const STATES_FILE: &str = "states.json";
pub const KB_FILE: &str = "kb.jsonl";
pub const AGENT_CORPUS_FILE: &str = "agent_corpus.jsonl";
pub const WKM_CORPUS_FILE: &str = "wkm_corpus.jsonl";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const METRICS_CSV_FILE: &str = "metrics.csv";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";

fn ensure_out_dir(config: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(config.out_dir()).map_err(|e| {
        CliError::Config(format!("cannot create {}: {e}", config.out_dir().display()))
    })
}

fn load_suite_artifact(config: &RunConfig) -> CliResult<Arc<TaskSuite>> {
    require_input(config.out_dir(), SUITE_FILE, "gen-suite")?;
    Ok(Arc::new(load_suite(&config.out_dir().join(SUITE_FILE))?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    body.push('\n');
    std::fs::write(path, body)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::Config(format!("malformed {}: {e}", path.display())))
}

fn carry_notes(manifest: &mut Manifest, report: &StageReport) {
    manifest.notes.extend(report.notes.iter().cloned());
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

pub fn gen_suite(config: &RunConfig) -> CliResult<()> {
    ensure_out_dir(config)?;
    let suite = generate_suite(
        &config.env_config(),
        config.env.train,
        config.env.test_seen,
        config.env.test_unseen,
    )?;
    save_suite(&suite, &config.out_dir().join(SUITE_FILE))?;
    let mut manifest = Manifest::new("gen-suite", config.config_hash());
    manifest.record_output(config.out_dir(), SUITE_FILE)?;
    manifest.write(config.out_dir())?;
    println!("gen-suite: {} tasks -> {SUITE_FILE}", suite.tasks.len());
    Ok(())
}

pub fn explore(config: &RunConfig) -> CliResult<()> {
    ensure_out_dir(config)?;
    let suite = load_suite_artifact(config)?;
    let agent = make_provider(&config.provider.agent, ProviderRole::Agent, &suite);
    let train = suite.split(Split::Train);
    let (explored, report) = collect_explored(&config.env_config(), &train, agent.as_ref());
    if explored.is_empty() {
        return Err(CliError::Transport(format!(
            "exploration produced no trajectories: {}",
            report.notes.first().cloned().unwrap_or_default()
        )));
    }
    write_corpus(&config.out_dir().join(EXPLORED_FILE), &explored)?;
    let mut manifest = Manifest::new("explore", config.config_hash());
    manifest.record_input(config.out_dir(), SUITE_FILE)?;
    manifest.record_output(config.out_dir(), EXPLORED_FILE)?;
    carry_notes(&mut manifest, &report);
    manifest.write(config.out_dir())?;
    println!("explore: {} trajectories -> {EXPLORED_FILE}", explored.len());
    Ok(())
}

/// Expert replay, preference pairing, task-knowledge synthesis, and per-step
/// state summarization in one stage: these all consume the same trajectories
/// and their outputs are only useful together.
pub fn synthesize(config: &RunConfig) -> CliResult<()> {
    ensure_out_dir(config)?;
    let suite = load_suite_artifact(config)?;
    require_input(config.out_dir(), EXPLORED_FILE, "explore")?;
    let explored = read_corpus(&config.out_dir().join(EXPLORED_FILE))?;
    let env_config = config.env_config();
    let experts: Vec<Trajectory> = suite
        .split(Split::Train)
        .into_iter()
        .map(|t| replay_expert(&env_config, t))
        .collect::<Result<_, _>>()?;

    let agent = make_provider(&config.provider.agent, ProviderRole::Agent, &suite);
    let wkm = make_provider(&config.provider.wkm, ProviderRole::Wkm, &suite);
    let (pairs, _) = pair_preferences(&experts, &explored)?;
    let (knowledge, synth_report) = synthesize_all_task_knowledge(
        &pairs,
        agent.as_ref(),
        &PromptTemplate::default_task_know(),
        false,
    );

    let mut states: Vec<StateKnowledge> = Vec::new();
    let mut manifest = Manifest::new("synthesize", config.config_hash());
    for expert in &experts {
        let (s, report) =
            summarize_states(expert, wkm.as_ref(), &PromptTemplate::default_state_know());
        carry_notes(&mut manifest, &report);
        states.extend(s);
    }
    carry_notes(&mut manifest, &synth_report);

    write_corpus(&config.out_dir().join(EXPERTS_FILE), &experts)?;
    write_json(&config.out_dir().join(TASK_KNOWLEDGE_FILE), &knowledge)?;
    write_json(&config.out_dir().join(STATES_FILE), &states)?;
    manifest.record_input(config.out_dir(), SUITE_FILE)?;
    manifest.record_input(config.out_dir(), EXPLORED_FILE)?;
    manifest.record_output(config.out_dir(), EXPERTS_FILE)?;
    manifest.record_output(config.out_dir(), TASK_KNOWLEDGE_FILE)?;
    manifest.record_output(config.out_dir(), STATES_FILE)?;
    manifest.write(config.out_dir())?;
    println!(
        "synthesize: {} experts, {} task knowledge, {} state summaries",
        experts.len(),
        knowledge.len(),
        states.len()
    );
    Ok(())
}

pub fn build_kb(config: &RunConfig) -> CliResult<()> {
    ensure_out_dir(config)?;
    let suite = load_suite_artifact(config)?;
    require_input(config.out_dir(), EXPERTS_FILE, "synthesize")?;
    require_input(config.out_dir(), STATES_FILE, "synthesize")?;
    let experts = read_corpus(&config.out_dir().join(EXPERTS_FILE))?;
    let states: Vec<StateKnowledge> = read_json(&config.out_dir().join(STATES_FILE))?;
    let wkm = make_provider(&config.provider.wkm, ProviderRole::Wkm, &suite);

    let mut records = Vec::new();
    let mut manifest = Manifest::new("build-kb", config.config_hash());
    for expert in &experts {
        let (recs, report) = build_kb_records(expert, &states, wkm.as_ref());
        carry_notes(&mut manifest, &report);
        records.extend(recs);
    }
    KnowledgeBase::save(&records, &config.out_dir().join(KB_FILE))?;
    manifest.record_input(config.out_dir(), EXPERTS_FILE)?;
    manifest.record_input(config.out_dir(), STATES_FILE)?;
    manifest.record_output(config.out_dir(), KB_FILE)?;
    manifest.write(config.out_dir())?;
    println!("build-kb: {} records -> {KB_FILE}", records.len());
    Ok(())
}

pub fn emit_train(config: &RunConfig) -> CliResult<()> {
    ensure_out_dir(config)?;
    require_input(config.out_dir(), EXPERTS_FILE, "synthesize")?;
    require_input(config.out_dir(), STATES_FILE, "synthesize")?;
    require_input(config.out_dir(), TASK_KNOWLEDGE_FILE, "synthesize")?;
    let experts = read_corpus(&config.out_dir().join(EXPERTS_FILE))?;
    let states: Vec<StateKnowledge> = read_json(&config.out_dir().join(STATES_FILE))?;
    let knowledge: BTreeMap<String, TaskKnowledge> =
        read_json(&config.out_dir().join(TASK_KNOWLEDGE_FILE))?;

    let annotated: Vec<Trajectory> = experts
        .iter()
        .map(|e| annotate_trajectory(e, &states))
        .collect();
    let (agent_corpus, wkm_corpus) = emit_training(&annotated, &knowledge)?;
    write_training(&config.out_dir().join(AGENT_CORPUS_FILE), &agent_corpus)?;
    write_training(&config.out_dir().join(WKM_CORPUS_FILE), &wkm_corpus)?;

    let mut manifest = Manifest::new("emit-train", config.config_hash());
    manifest.record_input(config.out_dir(), EXPERTS_FILE)?;
    manifest.record_input(config.out_dir(), STATES_FILE)?;
    manifest.record_input(config.out_dir(), TASK_KNOWLEDGE_FILE)?;
    manifest.record_output(config.out_dir(), AGENT_CORPUS_FILE)?;
    manifest.record_output(config.out_dir(), WKM_CORPUS_FILE)?;
    manifest.write(config.out_dir())?;
    println!(
        "emit-train: {} agent + {} wkm records",
        agent_corpus.len(),
        wkm_corpus.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Planning and evaluation
// ---------------------------------------------------------------------------

/// Run the split's episodes, optionally across a bounded worker pool. Results
/// are assembled in task order, so output bytes do not depend on `jobs`.
fn run_split(
    config: &RunConfig,
    tasks: &[&SuiteTask],
    agent: &dyn Provider,
    wkm: &dyn Provider,
    kb: Option<&KnowledgeBase>,
    pcfg: &PlannerConfig,
    jobs: usize,
) -> CliResult<(MetricsReport, Vec<EpisodeTrace>)> {
    if tasks.is_empty() {
        return Err(CliError::Config("evaluation split is empty".into()));
    }
    let env_config = config.env_config();
    let slots: Mutex<Vec<Option<wkm_core::Result<EpisodeTrace>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let workers = jobs.max(1).min(tasks.len());
    std::thread::scope(|scope| {
        for w in 0..workers {
            let slots = &slots;
            let env_config = &env_config;
            scope.spawn(move || {
                for i in (w..tasks.len()).step_by(workers) {
                    let result = run_episode(env_config, tasks[i], agent, wkm, kb, pcfg);
                    slots.lock().expect("worker poisoned")[i] = Some(result);
                }
            });
        }
    });
    let mut traces = Vec::with_capacity(tasks.len());
    for slot in slots.into_inner().expect("worker poisoned") {
        traces.push(slot.expect("all slots filled")?);
    }
    let per_task = traces
        .iter()
        .map(|t| TaskMetrics {
            task_id: t.task.id.clone(),
            reward: if t.aborted { 0.0 } else { t.reward },
            steps: t.step_count,
            invalid_steps: t.invalid_steps(),
            aborted: t.aborted,
        })
        .collect();
    Ok((aggregate_metrics(per_task), traces))
}

fn planning_inputs(
    config: &RunConfig,
) -> CliResult<(Arc<TaskSuite>, Option<KnowledgeBase>, PlannerConfig)> {
    let suite = load_suite_artifact(config)?;
    let pcfg = config.planner_config()?;
    let kb = if pcfg.mode.uses_retrieval() {
        require_input(config.out_dir(), KB_FILE, "build-kb")?;
        Some(KnowledgeBase::load(&config.out_dir().join(KB_FILE))?)
    } else {
        None
    };
    Ok((suite, kb, pcfg))
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::TestSeen => "test-seen",
        Split::TestUnseen => "test-unseen",
    }
}

fn mode_name(mode: PlannerMode) -> &'static str {
    match mode {
        PlannerMode::Full => "full",
        PlannerMode::NoState => "no_state",
        PlannerMode::NoTask => "no_task",
        PlannerMode::ExplicitState => "explicit_state",
    }
}

const CSV_HEADER: &str = "split,gamma,mode,avg_reward,avg_steps,halluc_rate\n";

fn csv_row(split: Split, gamma: f64, mode: PlannerMode, report: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        split_name(split),
        gamma,
        mode_name(mode),
        report.avg_reward,
        report.avg_steps,
        report.hallucinatory_rate
    )
}

pub fn plan(config: &RunConfig, jobs: usize) -> CliResult<()> {
    ensure_out_dir(config)?;
    let (suite, kb, pcfg) = planning_inputs(config)?;
    let agent = make_provider(&config.provider.agent, ProviderRole::Agent, &suite);
    let wkm = make_provider(&config.provider.wkm, ProviderRole::Wkm, &suite);
    let tasks = suite.split(config.eval.split);
    let (report, traces) = run_split(
        config,
        &tasks,
        agent.as_ref(),
        wkm.as_ref(),
        kb.as_ref(),
        &pcfg,
        jobs,
    )?;
    write_traces(&config.out_dir().join(TRACES_FILE), &traces)?;
    write_metrics(&config.out_dir().join(METRICS_FILE), &report)?;
    let mut manifest = Manifest::new("plan", config.config_hash());
    manifest.record_input(config.out_dir(), SUITE_FILE)?;
    if pcfg.mode.uses_retrieval() {
        manifest.record_input(config.out_dir(), KB_FILE)?;
    }
    manifest.record_output(config.out_dir(), TRACES_FILE)?;
    manifest.record_output(config.out_dir(), METRICS_FILE)?;
    manifest.write(config.out_dir())?;
    println!(
        "plan: {} episodes, avg reward {}, avg steps {}",
        report.n_tasks, report.avg_reward, report.avg_steps
    );
    Ok(())
}

pub fn eval(config: &RunConfig, jobs: usize) -> CliResult<()> {
    ensure_out_dir(config)?;
    let (suite, kb, pcfg) = planning_inputs(config)?;
    let agent = make_provider(&config.provider.agent, ProviderRole::Agent, &suite);
    let wkm = make_provider(&config.provider.wkm, ProviderRole::Wkm, &suite);
    let tasks = suite.split(config.eval.split);
    let (report, traces) = run_split(
        config,
        &tasks,
        agent.as_ref(),
        wkm.as_ref(),
        kb.as_ref(),
        &pcfg,
        jobs,
    )?;
    write_traces(&config.out_dir().join(TRACES_FILE), &traces)?;
    write_metrics(&config.out_dir().join(METRICS_FILE), &report)?;
    let csv = format!(
        "{CSV_HEADER}{}",
        csv_row(config.eval.split, pcfg.fusion.gamma, pcfg.mode, &report)
    );
    std::fs::write(config.out_dir().join(METRICS_CSV_FILE), csv)
        .map_err(|e| CliError::Config(format!("cannot write metrics csv: {e}")))?;
    let mut manifest = Manifest::new("eval", config.config_hash());
    manifest.record_input(config.out_dir(), SUITE_FILE)?;
    if pcfg.mode.uses_retrieval() {
        manifest.record_input(config.out_dir(), KB_FILE)?;
    }
    manifest.record_output(config.out_dir(), TRACES_FILE)?;
    manifest.record_output(config.out_dir(), METRICS_FILE)?;
    manifest.record_output(config.out_dir(), METRICS_CSV_FILE)?;
    manifest.write(config.out_dir())?;
    println!(
        "eval: split {} gamma {} -> reward {}, steps {}, halluc {}",
        split_name(config.eval.split),
        pcfg.fusion.gamma,
        report.avg_reward,
        report.avg_steps,
        report.hallucinatory_rate
    );
    Ok(())
}

pub fn sweep(config: &RunConfig, jobs: usize) -> CliResult<()> {
    ensure_out_dir(config)?;
    let (suite, kb, base) = planning_inputs(config)?;
    let agent = make_provider(&config.provider.agent, ProviderRole::Agent, &suite);
    let wkm = make_provider(&config.provider.wkm, ProviderRole::Wkm, &suite);
    let tasks = suite.split(config.eval.split);
    let mut csv = String::from(CSV_HEADER);
    for &gamma in &config.eval.gammas {
        let pcfg = PlannerConfig::new(base.mode, gamma, base.retrieval_n)?;
        let (report, _) = run_split(
            config,
            &tasks,
            agent.as_ref(),
            wkm.as_ref(),
            kb.as_ref(),
            &pcfg,
            jobs,
        )?;
        csv.push_str(&csv_row(config.eval.split, gamma, pcfg.mode, &report));
    }
    std::fs::write(config.out_dir().join(SWEEP_CSV_FILE), csv)
        .map_err(|e| CliError::Config(format!("cannot write sweep csv: {e}")))?;
    let mut manifest = Manifest::new("sweep", config.config_hash());
    manifest.record_input(config.out_dir(), SUITE_FILE)?;
    if base.mode.uses_retrieval() {
        manifest.record_input(config.out_dir(), KB_FILE)?;
    }
    manifest.record_output(config.out_dir(), SWEEP_CSV_FILE)?;
    manifest.write(config.out_dir())?;
    println!("sweep: {} gammas -> {SWEEP_CSV_FILE}", config.eval.gammas.len());
    Ok(())
}
