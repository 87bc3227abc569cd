//! Online planning loop: generate task knowledge once per task, then per
//! step summarize state, retrieve from the knowledge base, fuse with the
//! agent distribution, act, observe; with full episode traces and metrics.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Episode, EnvConfig, SuiteTask};
use crate::error::{Error, Result};
use crate::fusion::{fuse_argmax, normalize_agent_scores, ActionDistribution, FusionConfig};
use crate::kb::{next_action_distribution, KnowledgeBase};
use crate::provider::{
    generate_state_knowledge, generate_task_knowledge_for_task, score_actions, PromptTemplate,
    Provider,
};
use crate::trajectory::{
    render_history, ActionRecord, EnvKind, Source, StateKnowledge, Step, TaskInstruction,
    Trajectory,
};

pub const DEFAULT_RETRIEVAL_N: usize = 3000;

/// Per-environment default fusion weight.
pub fn default_gamma(kind: EnvKind) -> f64 {
    match kind {
        EnvKind::Household => 0.4,
        EnvKind::Shopping => 0.5,
        EnvKind::Science => 0.7,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    Full,
    NoState,
    NoTask,
    ExplicitState,
}

impl PlannerMode {
    pub fn uses_retrieval(self) -> bool {
        matches!(self, PlannerMode::Full | PlannerMode::NoTask)
    }

    pub fn uses_state_calls(self) -> bool {
        !matches!(self, PlannerMode::NoState)
    }

    pub fn uses_task_knowledge(self) -> bool {
        !matches!(self, PlannerMode::NoTask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    pub fusion: FusionConfig,
    pub retrieval_n: usize,
}

impl PlannerConfig {
    /// `no_state` forces gamma to 1 (pure agent argmax, no retrieval).
    pub fn new(mode: PlannerMode, gamma: f64, retrieval_n: usize) -> Result<Self> {
        if retrieval_n == 0 {
            return Err(Error::InvalidInput("retrieval_n must be positive".into()));
        }
        let gamma = if mode == PlannerMode::NoState { 1.0 } else { gamma };
        Ok(PlannerConfig {
            mode,
            fusion: FusionConfig::new(gamma)?,
            retrieval_n,
        })
    }
}

// ---------------------------------------------------------------------------
// Single fused decision
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Decision {
    pub action_id: String,
    pub p_agent: ActionDistribution,
    pub p_know: Option<ActionDistribution>,
    pub fused: Vec<f64>,
}

/// Score the available actions with the agent, normalize, and fuse with an
/// optional knowledge distribution.
pub fn decide(
    agent: &dyn Provider,
    history: &str,
    available: &[String],
    p_know: Option<&ActionDistribution>,
    fusion: &FusionConfig,
) -> Result<Decision> {
    let scores = score_actions(agent, history, available)?;
    let p_agent = normalize_agent_scores(&scores)?;
    let (action_id, fused) = fuse_argmax(&p_agent, p_know, fusion)?;
    Ok(Decision {
        action_id,
        p_agent,
        p_know: p_know.cloned(),
        fused,
    })
}

// ---------------------------------------------------------------------------
// Episode trace
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub matched: usize,
    pub top_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub history_hash: String,
    pub state_knowledge: Option<String>,
    pub retrieval: Option<RetrievalSummary>,
    pub kb_silent: bool,
    pub p_agent: Vec<f64>,
    pub p_know: Option<Vec<f64>>,
    pub fused: Vec<f64>,
    pub action: String,
    pub observation: String,
    pub was_valid: bool,
}

/// Wall-clock per phase, milliseconds. Kept in memory only: trace files must
/// be byte-identical across reruns, so timings never reach disk.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseMillis {
    pub knowledge: f64,
    pub scoring: f64,
    pub retrieval: f64,
    pub env: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub task: TaskInstruction,
    pub mode: PlannerMode,
    pub gamma: f64,
    pub retrieval_n: usize,
    pub task_knowledge: Option<String>,
    pub steps: Vec<TraceStep>,
    pub reward: f64,
    pub step_count: u32,
    pub aborted: bool,
    pub phase_millis: PhaseMillis,
}

impl EpisodeTrace {
    pub fn invalid_steps(&self) -> usize {
        self.steps.iter().filter(|s| !s.was_valid).count()
    }
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

// ---------------------------------------------------------------------------
// Planning loop
// ---------------------------------------------------------------------------

pub fn run_episode(
    env_config: &EnvConfig,
    task: &SuiteTask,
    agent: &dyn Provider,
    wkm: &dyn Provider,
    kb: Option<&KnowledgeBase>,
    config: &PlannerConfig,
) -> Result<EpisodeTrace> {
    if config.mode.uses_retrieval() && kb.is_none() {
        return Err(Error::MissingInput(format!(
            "mode {:?} requires a knowledge base",
            config.mode
        )));
    }
    let mut ep = Episode::reset_with_split(env_config, task.index, task.instruction.split)?;
    let state_template = PromptTemplate::default_state_know();
    let mut trace = EpisodeTrace {
        task: task.instruction.clone(),
        mode: config.mode,
        gamma: config.fusion.gamma,
        retrieval_n: config.retrieval_n,
        task_knowledge: None,
        steps: Vec::new(),
        reward: 0.0,
        step_count: 0,
        aborted: false,
        phase_millis: PhaseMillis::default(),
    };

    let t0 = std::time::Instant::now();
    let kappa = if config.mode.uses_task_knowledge() {
        match generate_task_knowledge_for_task(wkm, &task.instruction) {
            Ok(k) => Some(k),
            Err(_) => {
                trace.aborted = true;
                return Ok(trace);
            }
        }
    } else {
        None
    };
    trace.phase_millis.knowledge += t0.elapsed().as_secs_f64() * 1e3;
    trace.task_knowledge = kappa.as_ref().map(|k| k.text.clone());

    // Working trajectory used only for history rendering; state knowledge is
    // attached to its steps only in explicit_state mode.
    let mut traj = Trajectory {
        task: task.instruction.clone(),
        steps: Vec::new(),
        reward: 0.0,
        source: Source::Planned,
    };

    while !ep.is_done() {
        let step_index = traj.steps.len();
        let history = render_history(&traj, step_index, kappa.as_ref())?;
        let available = ep.available_actions();

        let t0 = std::time::Instant::now();
        let state_knowledge = if config.mode.uses_state_calls() {
            match generate_state_knowledge(wkm, &history, &state_template) {
                Ok((text, _)) => Some(text),
                Err(_) => {
                    trace.aborted = true;
                    trace.reward = 0.0;
                    return Ok(trace);
                }
            }
        } else {
            None
        };
        trace.phase_millis.knowledge += t0.elapsed().as_secs_f64() * 1e3;

        let t0 = std::time::Instant::now();
        let mut retrieval = None;
        let mut p_know = None;
        if config.mode.uses_retrieval() && step_index >= 1 {
            let kb = kb.expect("checked above");
            let prev = traj.steps[step_index - 1].action.action_id.clone();
            let state_text = state_knowledge.as_deref().expect("retrieval modes summarize");
            let query = match wkm.embed(state_text) {
                Ok(v) => v,
                Err(_) => {
                    trace.aborted = true;
                    trace.reward = 0.0;
                    return Ok(trace);
                }
            };
            let result = kb.knn(&query, &prev, config.retrieval_n)?;
            retrieval = Some(RetrievalSummary {
                matched: result.matched(),
                top_similarity: result.top_similarity(),
            });
            p_know = match next_action_distribution(&result, kb, &available) {
                Ok(d) => Some(d),
                Err(Error::KbSilent) => None,
                Err(e) => return Err(e),
            };
        }
        trace.phase_millis.retrieval += t0.elapsed().as_secs_f64() * 1e3;

        let t0 = std::time::Instant::now();
        let decision = match decide(agent, &history, &available, p_know.as_ref(), &config.fusion) {
            Ok(d) => d,
            Err(Error::Transport(_)) => {
                trace.aborted = true;
                trace.reward = 0.0;
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        trace.phase_millis.scoring += t0.elapsed().as_secs_f64() * 1e3;

        let t0 = std::time::Instant::now();
        let action = ActionRecord::new("", decision.action_id.as_str());
        let outcome = ep.step(&action)?;
        trace.phase_millis.env += t0.elapsed().as_secs_f64() * 1e3;

        trace.steps.push(TraceStep {
            step: step_index,
            history_hash: sha256_hex(&history),
            state_knowledge: state_knowledge.clone(),
            retrieval,
            kb_silent: config.mode.uses_retrieval() && p_know.is_none(),
            p_agent: decision.p_agent.probs.clone(),
            p_know: decision.p_know.as_ref().map(|d| d.probs.clone()),
            fused: decision.fused.clone(),
            action: action.action_id.clone(),
            observation: outcome.observation.clone(),
            was_valid: outcome.was_valid,
        });

        let attach = if config.mode == PlannerMode::ExplicitState {
            state_knowledge.map(|text| StateKnowledge {
                task_id: task.instruction.id.clone(),
                step_index,
                text,
            })
        } else {
            None
        };
        traj.steps.push(Step {
            action,
            observation: outcome.observation,
            state_knowledge: attach,
        });
        trace.reward = outcome.reward_so_far;
    }
    trace.step_count = ep.steps_taken();
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: String,
    pub reward: f64,
    pub steps: u32,
    pub invalid_steps: usize,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_reward: f64,
    pub avg_steps: f64,
    pub hallucinatory_rate: f64,
    pub n_tasks: usize,
    pub per_task: Vec<TaskMetrics>,
}

/// Hallucinatory rate counts trajectories with at least one invalid step.
pub fn aggregate_metrics(per_task: Vec<TaskMetrics>) -> MetricsReport {
    let n = per_task.len();
    let avg = |f: &dyn Fn(&TaskMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_task.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MetricsReport {
        avg_reward: avg(&|t| t.reward),
        avg_steps: avg(&|t| t.steps as f64),
        hallucinatory_rate: avg(&|t| f64::from(t.invalid_steps > 0)),
        n_tasks: n,
        per_task,
    }
}

/// Two-decimal percentage formatting for report output.
pub fn format_percent(rate: f64) -> String {
    format!("{:.2}%", rate * 100.0)
}

pub fn evaluate(
    env_config: &EnvConfig,
    tasks: &[&SuiteTask],
    agent: &dyn Provider,
    wkm: &dyn Provider,
    kb: Option<&KnowledgeBase>,
    config: &PlannerConfig,
) -> Result<(MetricsReport, Vec<EpisodeTrace>)> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("empty evaluation split".into()));
    }
    let mut traces = Vec::new();
    let mut per_task = Vec::new();
    for task in tasks {
        let trace = run_episode(env_config, task, agent, wkm, kb, config)?;
        per_task.push(TaskMetrics {
            task_id: trace.task.id.clone(),
            reward: if trace.aborted { 0.0 } else { trace.reward },
            steps: trace.step_count,
            invalid_steps: trace.invalid_steps(),
            aborted: trace.aborted,
        });
        traces.push(trace);
    }
    Ok((aggregate_metrics(per_task), traces))
}

/// One evaluation per gamma on identical seeds.
pub fn sweep_gamma(
    values: &[f64],
    env_config: &EnvConfig,
    tasks: &[&SuiteTask],
    agent: &dyn Provider,
    wkm: &dyn Provider,
    kb: Option<&KnowledgeBase>,
    base: &PlannerConfig,
) -> Result<Vec<(f64, MetricsReport)>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty gamma list".into()));
    }
    let mut out = Vec::new();
    for &gamma in values {
        let config = PlannerConfig::new(base.mode, gamma, base.retrieval_n)?;
        let (report, _) = evaluate(env_config, tasks, agent, wkm, kb, &config)?;
        out.push((gamma, report));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trace and metrics files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TraceLine {
    Header {
        task_id: String,
        task_text: String,
        mode: PlannerMode,
        gamma: f64,
        retrieval_n: usize,
        task_knowledge: Option<String>,
    },
    Step(TraceStep),
    Footer {
        reward: f64,
        steps: u32,
        invalid_steps: usize,
        aborted: bool,
    },
}

pub fn write_traces(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in traces {
        let lines = std::iter::once(TraceLine::Header {
            task_id: t.task.id.clone(),
            task_text: t.task.text.clone(),
            mode: t.mode,
            gamma: t.gamma,
            retrieval_n: t.retrieval_n,
            task_knowledge: t.task_knowledge.clone(),
        })
        .chain(t.steps.iter().cloned().map(TraceLine::Step))
        .chain(std::iter::once(TraceLine::Footer {
            reward: t.reward,
            steps: t.step_count,
            invalid_steps: t.invalid_steps(),
            aborted: t.aborted,
        }));
        for line in lines {
            serde_json::to_writer(&mut f, &line)?;
            f.write_all(b"\n")?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn write_metrics(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
