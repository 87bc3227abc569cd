//! Canonical data model for tasks, actions, observations, trajectories and
//! preference pairs, plus the labeled-block history renderer shared by
//! provider prompts and training-corpus emission.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "test-seen")]
    TestSeen,
    #[serde(rename = "test-unseen")]
    TestUnseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Household,
    Shopping,
    Science,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Explored,
    Planned,
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstruction {
    pub id: String,
    pub text: String,
    pub split: Split,
    pub env_kind: EnvKind,
}

/// An action together with its optional rationale. `action_id` is the
/// canonical normalized form used everywhere actions are matched textually.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub rationale: String,
    pub action_text: String,
    pub action_id: String,
}

impl ActionRecord {
    pub fn new(rationale: impl Into<String>, action_text: impl Into<String>) -> Self {
        let action_text = action_text.into();
        let action_id = canonical_action_id(&action_text).unwrap_or_default();
        ActionRecord {
            rationale: rationale.into(),
            action_text,
            action_id,
        }
    }

    /// An unparseable proposal; the environment will reject it.
    pub fn invalid(rationale: impl Into<String>) -> Self {
        ActionRecord {
            rationale: rationale.into(),
            action_text: String::new(),
            action_id: String::new(),
        }
    }

    pub fn is_parseable(&self) -> bool {
        !self.action_text.is_empty()
    }
}

/// Natural-language global prior for a task, generated once per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskKnowledge {
    pub task_id: String,
    pub text: String,
}

/// Natural-language summary of the situation after step `step_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateKnowledge {
    pub task_id: String,
    pub step_index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: ActionRecord,
    pub observation: String,
    /// Present only in annotated trajectories used for the knowledge-model
    /// corpus or the explicit-state planning mode.
    pub state_knowledge: Option<StateKnowledge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: TaskInstruction,
    pub steps: Vec<Step>,
    pub reward: f64,
    pub source: Source,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(Error::InvalidInput(format!(
                "reward {} outside [0,1]",
                self.reward
            )));
        }
        if self.steps.is_empty() {
            return Err(Error::InvalidInput("trajectory has no steps".into()));
        }
        if self.source == Source::Expert && self.reward != 1.0 {
            return Err(Error::InvalidInput(
                "expert trajectory must have reward 1".into(),
            ));
        }
        Ok(())
    }

    /// Copy with all state-knowledge annotations removed.
    pub fn without_state_knowledge(&self) -> Trajectory {
        let mut t = self.clone();
        for step in &mut t.steps {
            step.state_knowledge = None;
        }
        t
    }
}

/// Expert (chosen) vs explored (rejected) trajectory on the same task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferencePair {
    chosen: Trajectory,
    rejected: Trajectory,
}

impl PreferencePair {
    pub fn new(chosen: Trajectory, rejected: Trajectory) -> Result<Self> {
        if chosen.task.id != rejected.task.id {
            return Err(Error::InvalidInput("preference pair across tasks".into()));
        }
        if chosen.source != Source::Expert {
            return Err(Error::InvalidInput("chosen side must be expert".into()));
        }
        if rejected.source != Source::Explored {
            return Err(Error::InvalidInput("rejected side must be explored".into()));
        }
        if chosen.reward != 1.0 || chosen.reward < rejected.reward {
            return Err(Error::InvalidInput(
                "pair must satisfy chosen.reward = 1 >= rejected.reward".into(),
            ));
        }
        Ok(PreferencePair { chosen, rejected })
    }

    pub fn chosen(&self) -> &Trajectory {
        &self.chosen
    }

    pub fn rejected(&self) -> &Trajectory {
        &self.rejected
    }
}

// ---------------------------------------------------------------------------
// Canonical action identity
// ---------------------------------------------------------------------------

/// Lowercase and collapse whitespace so textually-equivalent actions compare
/// equal in the knowledge-base filter.
pub fn canonical_action_id(action_text: &str) -> Result<String> {
    let id = action_text
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ");
    if id.is_empty() {
        return Err(Error::EmptyAction);
    }
    Ok(id)
}

// ---------------------------------------------------------------------------
// Labeled-block rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Instruction,
    TaskKnowledge,
    Thought,
    Action,
    Observation,
    StateKnowledge,
}

impl BlockKind {
    pub fn label(self) -> &'static str {
        match self {
            BlockKind::Instruction => "Task Instruction:",
            BlockKind::TaskKnowledge => "Task Knowledge:",
            BlockKind::Thought => "Thought:",
            BlockKind::Action => "Action:",
            BlockKind::Observation => "Observation:",
            BlockKind::StateKnowledge => "State Knowledge:",
        }
    }
}

/// Rendered text plus the byte span of every labeled block (label included).
#[derive(Debug, Clone, Default)]
pub struct RenderedBlocks {
    pub text: String,
    pub spans: Vec<(BlockKind, usize, usize)>,
}

impl RenderedBlocks {
    pub fn push(&mut self, kind: BlockKind, body: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let start = self.text.len();
        self.text.push_str(kind.label());
        self.text.push(' ');
        self.text.push_str(body);
        self.spans.push((kind, start, self.text.len()));
    }
}

/// Render a history prefix through `upto_step` steps in the labeled-block
/// layout used for provider prompts and training data. State-knowledge
/// annotations present on steps are rendered after their observation.
pub fn render_history(
    traj: &Trajectory,
    upto_step: usize,
    task_knowledge: Option<&TaskKnowledge>,
) -> Result<String> {
    Ok(render_history_blocks(traj, upto_step, task_knowledge)?.text)
}

pub fn render_history_blocks(
    traj: &Trajectory,
    upto_step: usize,
    task_knowledge: Option<&TaskKnowledge>,
) -> Result<RenderedBlocks> {
    if upto_step > traj.steps.len() {
        return Err(Error::IndexOutOfRange {
            index: upto_step,
            len: traj.steps.len(),
        });
    }
    let mut out = RenderedBlocks::default();
    out.push(BlockKind::Instruction, &traj.task.text);
    if let Some(k) = task_knowledge {
        out.push(BlockKind::TaskKnowledge, &k.text);
    }
    for step in &traj.steps[..upto_step] {
        if !step.action.rationale.is_empty() {
            out.push(BlockKind::Thought, &step.action.rationale);
        }
        out.push(BlockKind::Action, &step.action.action_text);
        if !step.observation.is_empty() {
            out.push(BlockKind::Observation, &step.observation);
        }
        if let Some(sk) = &step.state_knowledge {
            out.push(BlockKind::StateKnowledge, &sk.text);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Preference pairing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct PairingReport {
    /// Task ids of explored trajectories with no same-task expert.
    pub skipped: Vec<String>,
}

/// Match every explored trajectory with an expert on the same task. Ties in
/// reward still pair, with the expert kept as chosen.
pub fn pair_preferences(
    experts: &[Trajectory],
    explored: &[Trajectory],
) -> Result<(Vec<PreferencePair>, PairingReport)> {
    let mut by_task: BTreeMap<&str, &Trajectory> = BTreeMap::new();
    for e in experts {
        if e.reward != 1.0 {
            return Err(Error::InvalidInput(format!(
                "expert trajectory for task {} has reward {}",
                e.task.id, e.reward
            )));
        }
        by_task.entry(e.task.id.as_str()).or_insert(e);
    }
    let mut pairs = Vec::new();
    let mut report = PairingReport::default();
    for x in explored {
        match by_task.get(x.task.id.as_str()) {
            Some(expert) => pairs.push(PreferencePair::new((*expert).clone(), x.clone())?),
            None => report.skipped.push(x.task.id.clone()),
        }
    }
    Ok((pairs, report))
}

// ---------------------------------------------------------------------------
// Trajectory corpus file (line-delimited JSON)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireStep {
    rationale: String,
    action: String,
    observation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    state_knowledge: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WireTrajectory {
    task_id: String,
    task_text: String,
    split: Split,
    env_kind: EnvKind,
    source: Source,
    reward: f64,
    steps: Vec<WireStep>,
}

impl From<&Trajectory> for WireTrajectory {
    fn from(t: &Trajectory) -> Self {
        WireTrajectory {
            task_id: t.task.id.clone(),
            task_text: t.task.text.clone(),
            split: t.task.split,
            env_kind: t.task.env_kind,
            source: t.source,
            reward: t.reward,
            steps: t
                .steps
                .iter()
                .map(|s| WireStep {
                    rationale: s.action.rationale.clone(),
                    action: s.action.action_text.clone(),
                    observation: s.observation.clone(),
                    state_knowledge: s.state_knowledge.as_ref().map(|k| k.text.clone()),
                })
                .collect(),
        }
    }
}

impl WireTrajectory {
    fn into_trajectory(self) -> Trajectory {
        let task_id = self.task_id.clone();
        Trajectory {
            task: TaskInstruction {
                id: self.task_id,
                text: self.task_text,
                split: self.split,
                env_kind: self.env_kind,
            },
            steps: self
                .steps
                .into_iter()
                .enumerate()
                .map(|(i, s)| Step {
                    action: ActionRecord::new(s.rationale, s.action),
                    observation: s.observation,
                    state_knowledge: s.state_knowledge.map(|text| StateKnowledge {
                        task_id: task_id.clone(),
                        step_index: i,
                        text,
                    }),
                })
                .collect(),
            reward: self.reward,
            source: self.source,
        }
    }
}

pub fn write_corpus(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut f, &WireTrajectory::from(t))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Trajectory>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireTrajectory =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(wire.into_trajectory());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str) -> TaskInstruction {
        TaskInstruction {
            id: id.into(),
            text: "You are in the middle of a room. Your task is to: test.".into(),
            split: Split::Train,
            env_kind: EnvKind::Household,
        }
    }

    fn step(rationale: &str, action: &str, obs: &str) -> Step {
        Step {
            action: ActionRecord::new(rationale, action),
            observation: obs.into(),
            state_knowledge: None,
        }
    }

    fn traj(id: &str, steps: Vec<Step>, reward: f64, source: Source) -> Trajectory {
        Trajectory {
            task: task(id),
            steps,
            reward,
            source,
        }
    }

    #[test]
    fn canonical_id_normalizes() {
        assert_eq!(
            canonical_action_id("Take Soapbar 1 from toilet 1 ").unwrap(),
            "take soapbar 1 from toilet 1"
        );
        assert_eq!(
            canonical_action_id("go  to   cabinet 1").unwrap(),
            "go to cabinet 1"
        );
        assert!(matches!(
            canonical_action_id("   "),
            Err(Error::EmptyAction)
        ));
    }

    #[test]
    fn canonical_id_idempotent() {
        for s in ["Go To Bed 1", "  use   desklamp 1", "CLICK[Buy Now]"] {
            let once = canonical_action_id(s).unwrap();
            assert_eq!(canonical_action_id(&once).unwrap(), once);
        }
    }

    #[test]
    fn render_base_case_is_instruction_only() {
        let t = traj("t0", vec![], 0.0, Source::Explored);
        let s = render_history(&t, 0, None).unwrap();
        assert_eq!(
            s,
            "Task Instruction: You are in the middle of a room. Your task is to: test."
        );
    }

    #[test]
    fn render_block_order_with_task_knowledge() {
        let t = traj(
            "t0",
            vec![step("find it", "go to bed 1", "On the bed 1, you see a book 1.")],
            1.0,
            Source::Expert,
        );
        let k = TaskKnowledge {
            task_id: "t0".into(),
            text: "When testing, look first.".into(),
        };
        let s = render_history(&t, 1, Some(&k)).unwrap();
        let order: Vec<usize> = [
            "Task Instruction:",
            "Task Knowledge:",
            "Thought:",
            "Action:",
            "Observation:",
        ]
        .iter()
        .map(|l| s.find(l).unwrap())
        .collect();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(order, sorted);
    }

    #[test]
    fn render_prefix_consistency() {
        let steps = vec![
            step("a", "go to bed 1", "obs a"),
            step("b", "take book 1 from bed 1", "obs b"),
            step("c", "use desklamp 1", "obs c"),
        ];
        let t = traj("t0", steps, 1.0, Source::Expert);
        let two = render_history(&t, 2, None).unwrap();
        let mut prefix = t.clone();
        prefix.steps.truncate(2);
        assert_eq!(render_history(&prefix, 2, None).unwrap(), two);
        let three = render_history(&t, 3, None).unwrap();
        assert!(three.as_bytes().starts_with(two.as_bytes()));
    }

    #[test]
    fn render_out_of_range() {
        let t = traj("t0", vec![step("", "go to bed 1", "ok")], 0.0, Source::Explored);
        assert!(render_history(&t, 2, None).is_err());
    }

    #[test]
    fn pairing_rules() {
        let expert = traj("t0", vec![step("", "go to bed 1", "ok")], 1.0, Source::Expert);
        let low = traj("t0", vec![step("", "go to desk 1", "no")], 0.4, Source::Explored);
        let tied = traj("t0", vec![step("", "go to bed 1", "ok")], 1.0, Source::Explored);
        let orphan = traj("t9", vec![step("", "go to bed 1", "ok")], 0.0, Source::Explored);

        let (pairs, report) =
            pair_preferences(&[expert.clone()], &[low, tied, orphan]).unwrap();
        assert_eq!(pairs.len(), 2);
        for p in &pairs {
            assert_eq!(p.chosen().source, Source::Expert);
            assert_eq!(p.chosen().reward, 1.0);
            assert!(p.chosen().reward >= p.rejected().reward);
        }
        assert_eq!(report.skipped, vec!["t9".to_string()]);
    }

    #[test]
    fn pair_rejects_non_expert_chosen() {
        let a = traj("t0", vec![step("", "go to bed 1", "ok")], 1.0, Source::Explored);
        let b = traj("t0", vec![step("", "go to bed 1", "ok")], 0.5, Source::Explored);
        assert!(PreferencePair::new(a, b).is_err());
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut t = traj(
            "t0",
            vec![step("why", "go to bed 1", "On the bed 1, you see a book 1.")],
            1.0,
            Source::Expert,
        );
        t.steps[0].state_knowledge = Some(StateKnowledge {
            task_id: "t0".into(),
            step_index: 0,
            text: "You have checked the bed.".into(),
        });
        write_corpus(&path, &[t.clone()]).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back, vec![t]);
    }
}
