//! Offline stages: expert replay, explored-trajectory collection, task and
//! state knowledge synthesis, knowledge-base record production, and training
//! corpus emission with loss-mask spans.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Episode, EnvConfig, SuiteTask};
use crate::error::{Error, Result};
use crate::kb::KBRecord;
use crate::provider::{
    generate_state_knowledge, generate_task_knowledge, propose_action, PromptTemplate, Provider,
    TEMP_DETERMINISTIC,
};
use crate::trajectory::{
    render_history, render_history_blocks, ActionRecord, BlockKind, PreferencePair, Source,
    StateKnowledge, Step, TaskKnowledge, Trajectory,
};

/// Non-fatal problems accumulated by a stage (skipped tasks, dropped steps).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub notes: Vec<String>,
}

impl StageReport {
    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn is_clean(&self) -> bool {
        self.notes.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Trajectory collection
// ---------------------------------------------------------------------------

/// Replay a task's oracle plan into an expert trajectory.
pub fn replay_expert(config: &EnvConfig, task: &SuiteTask) -> Result<Trajectory> {
    let mut ep = Episode::reset_with_split(config, task.index, task.instruction.split)?;
    let mut steps = Vec::new();
    let mut reward = 0.0;
    for a in &task.oracle_plan {
        let action = ActionRecord::new("", a.as_str());
        let outcome = ep.step(&action)?;
        reward = outcome.reward_so_far;
        steps.push(Step {
            action,
            observation: outcome.observation,
            state_knowledge: None,
        });
        if outcome.done {
            break;
        }
    }
    if reward != 1.0 {
        return Err(Error::InvalidInput(format!(
            "oracle plan for {} ended with reward {reward}",
            task.instruction.id
        )));
    }
    let traj = Trajectory {
        task: task.instruction.clone(),
        steps,
        reward,
        source: Source::Expert,
    };
    traj.validate()?;
    Ok(traj)
}

/// Run the agent through each task once at temperature 0 (exploration).
/// A provider failure aborts that task and continues the batch.
pub fn collect_explored(
    config: &EnvConfig,
    tasks: &[&SuiteTask],
    provider: &dyn Provider,
) -> (Vec<Trajectory>, StageReport) {
    let mut out = Vec::new();
    let mut report = StageReport::default();
    'tasks: for task in tasks {
        let mut ep = match Episode::reset_with_split(config, task.index, task.instruction.split) {
            Ok(ep) => ep,
            Err(e) => {
                report.note(format!("{}: reset failed: {e}", task.instruction.id));
                continue;
            }
        };
        let mut traj = Trajectory {
            task: task.instruction.clone(),
            steps: Vec::new(),
            reward: 0.0,
            source: Source::Explored,
        };
        while !ep.is_done() {
            let history = match render_history(&traj, traj.steps.len(), None) {
                Ok(h) => h,
                Err(e) => {
                    report.note(format!("{}: render failed: {e}", task.instruction.id));
                    continue 'tasks;
                }
            };
            let action = match propose_action(provider, &history, TEMP_DETERMINISTIC) {
                Ok(a) => a,
                Err(e) => {
                    report.note(format!("{}: provider failed: {e}", task.instruction.id));
                    continue 'tasks;
                }
            };
            let outcome = match ep.step(&action) {
                Ok(o) => o,
                Err(e) => {
                    report.note(format!("{}: step failed: {e}", task.instruction.id));
                    continue 'tasks;
                }
            };
            traj.reward = outcome.reward_so_far;
            traj.steps.push(Step {
                action,
                observation: outcome.observation,
                state_knowledge: None,
            });
        }
        out.push(traj);
    }
    (out, report)
}

// ---------------------------------------------------------------------------
// Knowledge synthesis
// ---------------------------------------------------------------------------

/// One task knowledge per task: pairs are tried in order, the first pair
/// that parses wins; tasks whose every pair fails are reported and excluded.
pub fn synthesize_all_task_knowledge(
    pairs: &[PreferencePair],
    provider: &dyn Provider,
    template: &PromptTemplate,
    chosen_only: bool,
) -> (BTreeMap<String, TaskKnowledge>, StageReport) {
    let mut out: BTreeMap<String, TaskKnowledge> = BTreeMap::new();
    let mut failed: BTreeMap<String, String> = BTreeMap::new();
    for pair in pairs {
        let task_id = pair.chosen().task.id.clone();
        if out.contains_key(&task_id) {
            continue;
        }
        match generate_task_knowledge(provider, pair, template, chosen_only) {
            Ok(k) => {
                failed.remove(&task_id);
                out.insert(task_id, k);
            }
            Err(e) => {
                failed.entry(task_id).or_insert_with(|| e.to_string());
            }
        }
    }
    let mut report = StageReport::default();
    for (task_id, err) in failed {
        report.note(format!("{task_id}: all pairs failed: {err}"));
    }
    (out, report)
}

/// One state knowledge per step, each generated from the history prefix
/// through that step (inclusive of its observation). Per-step failures are
/// skipped with a report; the KB tolerates gaps.
pub fn summarize_states(
    expert: &Trajectory,
    provider: &dyn Provider,
    template: &PromptTemplate,
) -> (Vec<StateKnowledge>, StageReport) {
    let mut out = Vec::new();
    let mut report = StageReport::default();
    let bare = expert.without_state_knowledge();
    for t in 0..expert.steps.len() {
        let history = match render_history(&bare, t + 1, None) {
            Ok(h) => h,
            Err(e) => {
                report.note(format!("{} step {t}: render failed: {e}", expert.task.id));
                continue;
            }
        };
        match generate_state_knowledge(provider, &history, template) {
            Ok((text, truncated)) => {
                if truncated {
                    report.note(format!("{} step {t}: state knowledge truncated", expert.task.id));
                }
                out.push(StateKnowledge {
                    task_id: expert.task.id.clone(),
                    step_index: t,
                    text,
                });
            }
            Err(e) => report.note(format!("{} step {t}: skipped: {e}", expert.task.id)),
        }
    }
    (out, report)
}

/// Copy of the expert trajectory with state knowledge attached to its steps.
pub fn annotate_trajectory(expert: &Trajectory, states: &[StateKnowledge]) -> Trajectory {
    let mut t = expert.clone();
    for s in states {
        if s.task_id == t.task.id {
            if let Some(step) = t.steps.get_mut(s.step_index) {
                step.state_knowledge = Some(s.clone());
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// KB record production
// ---------------------------------------------------------------------------

/// Emit one (a_pre, s_t, a_next) record per state s_t whose step has a
/// successor; the final step emits nothing, so a fully-summarized n-step
/// trajectory yields n-1 records.
pub fn build_kb_records(
    expert: &Trajectory,
    states: &[StateKnowledge],
    provider: &dyn Provider,
) -> (Vec<KBRecord>, StageReport) {
    let mut report = StageReport::default();
    let by_step: BTreeMap<usize, &StateKnowledge> = states
        .iter()
        .filter(|s| s.task_id == expert.task.id)
        .map(|s| (s.step_index, s))
        .collect();
    let mut out = Vec::new();
    for t in 0..expert.steps.len().saturating_sub(1) {
        let Some(state) = by_step.get(&t) else {
            continue;
        };
        let embedding = match provider.embed(&state.text) {
            Ok(v) => v,
            Err(e) => {
                report.note(format!("{} step {t}: embedding failed: {e}", expert.task.id));
                continue;
            }
        };
        out.push(KBRecord {
            state_text: state.text.clone(),
            state_embedding: embedding.components,
            prev_action: expert.steps[t].action.action_id.clone(),
            next_action: expert.steps[t + 1].action.action_id.clone(),
            task_id: expert.task.id.clone(),
            step_index: t,
        });
    }
    (out, report)
}

// ---------------------------------------------------------------------------
// Training-corpus emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusTarget {
    Agent,
    Wkm,
}

/// Rendered training sequence with half-open byte spans marking the
/// loss-bearing characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub target: CorpusTarget,
    pub full_text: String,
    pub mask_spans: Vec<(usize, usize)>,
}

fn mask_for(
    traj: &Trajectory,
    knowledge: &TaskKnowledge,
    target: CorpusTarget,
) -> Result<TrainingRecord> {
    let blocks = render_history_blocks(traj, traj.steps.len(), Some(knowledge))?;
    let wanted: &[BlockKind] = match target {
        CorpusTarget::Agent => &[BlockKind::Thought, BlockKind::Action],
        CorpusTarget::Wkm => &[BlockKind::TaskKnowledge, BlockKind::StateKnowledge],
    };
    let mask_spans: Vec<(usize, usize)> = blocks
        .spans
        .iter()
        .filter(|(kind, _, _)| wanted.contains(kind))
        .map(|(_, s, e)| (*s, *e))
        .collect();
    for w in mask_spans.windows(2) {
        assert!(w[0].1 <= w[1].0, "mask spans overlap or are unsorted");
    }
    if let Some((_, end)) = mask_spans.last() {
        assert!(*end <= blocks.text.len(), "mask span out of bounds");
    }
    Ok(TrainingRecord {
        target,
        full_text: blocks.text,
        mask_spans,
    })
}

/// Emit the agent corpus (state knowledge stripped, Thought/Action masked)
/// and the knowledge-model corpus (state knowledge interleaved, task and
/// state knowledge masked). Every trajectory must have a task knowledge.
pub fn emit_training(
    annotated_experts: &[Trajectory],
    knowledge: &BTreeMap<String, TaskKnowledge>,
) -> Result<(Vec<TrainingRecord>, Vec<TrainingRecord>)> {
    let mut agent = Vec::new();
    let mut wkm = Vec::new();
    for traj in annotated_experts {
        let k = knowledge.get(&traj.task.id).ok_or_else(|| {
            Error::MissingInput(format!("no task knowledge for {}", traj.task.id))
        })?;
        agent.push(mask_for(&traj.without_state_knowledge(), k, CorpusTarget::Agent)?);
        wkm.push(mask_for(traj, k, CorpusTarget::Wkm)?);
    }
    Ok((agent, wkm))
}

/// Negative sum of per-byte scores inside the mask spans; a verification
/// utility standing in for the masked NLL.
pub fn masked_score(record: &TrainingRecord, per_char_scores: &[f64]) -> Result<f64> {
    if per_char_scores.len() != record.full_text.len() {
        return Err(Error::LengthMismatch {
            expected: record.full_text.len(),
            got: per_char_scores.len(),
        });
    }
    let mut total = 0.0;
    for (s, e) in &record.mask_spans {
        total += per_char_scores[*s..*e].iter().sum::<f64>();
    }
    Ok(-total)
}

// ---------------------------------------------------------------------------
// Corpus files
// ---------------------------------------------------------------------------

pub fn write_training(path: &Path, records: &[TrainingRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_training(path: &Path) -> Result<Vec<TrainingRecord>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrainingRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
