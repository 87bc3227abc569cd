//! Deterministic, seeded POMDP text environments: household, shopping and
//! science analogues with valid-action sets, invalid-action semantics, and
//! binary or dense rewards.

pub mod household;
pub mod science;
pub mod shopping;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{ActionRecord, EnvKind, Split, TaskInstruction};

/// Observation returned for any action the environment cannot execute.
pub const NOTHING_HAPPENS: &str = "Nothing happens.";

/// Task indices at or above this base draw from the unseen template pools.
pub const UNSEEN_INDEX_BASE: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Binary,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub env_kind: EnvKind,
    pub seed: u64,
    pub max_steps: u32,
    pub reward_mode: RewardMode,
}

impl EnvConfig {
    pub fn new(env_kind: EnvKind, seed: u64) -> Self {
        let (max_steps, reward_mode) = match env_kind {
            EnvKind::Household => (40, RewardMode::Binary),
            EnvKind::Shopping => (10, RewardMode::Dense),
            EnvKind::Science => (40, RewardMode::Dense),
        };
        EnvConfig {
            env_kind,
            seed,
            max_steps,
            reward_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        if self.env_kind == EnvKind::Science && !(10..=120).contains(&self.max_steps) {
            return Err(Error::InvalidInput(
                "science max_steps must be in [10,120]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: String,
    pub done: bool,
    pub reward_so_far: f64,
    pub was_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldState {
    Household(household::HouseholdWorld),
    Shopping(shopping::ShoppingWorld),
    Science(science::ScienceWorld),
}

impl WorldState {
    fn apply(&mut self, action: &str) -> Option<String> {
        match self {
            WorldState::Household(w) => w.apply(action),
            WorldState::Shopping(w) => w.apply(action),
            WorldState::Science(w) => w.apply(action),
        }
    }

    fn goal_met(&self) -> bool {
        match self {
            WorldState::Household(w) => w.goal_met(),
            WorldState::Shopping(w) => w.goal_met(),
            WorldState::Science(w) => w.goal_met(),
        }
    }

    fn subgoals(&self) -> (usize, usize) {
        match self {
            WorldState::Household(w) => w.subgoals(),
            WorldState::Shopping(w) => w.subgoals(),
            WorldState::Science(w) => w.subgoals(),
        }
    }

    fn available_actions(&self) -> Vec<String> {
        match self {
            WorldState::Household(w) => w.available_actions(),
            WorldState::Shopping(w) => w.available_actions(),
            WorldState::Science(w) => w.available_actions(),
        }
    }
}

/// Everything the task generator produces for one (seed, index) pair.
pub struct GeneratedTask<W> {
    pub instruction: String,
    pub initial_observation: String,
    pub oracle_plan: Vec<String>,
    pub goal_template: String,
    pub world: W,
}

fn task_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15))
}

fn generate_task(config: &EnvConfig, index: usize) -> (WorldState, String, String, Vec<String>, String) {
    let unseen = index >= UNSEEN_INDEX_BASE;
    let mut rng = task_rng(config.seed, index);
    match config.env_kind {
        EnvKind::Household => {
            let g = household::generate(&mut rng, unseen);
            (
                WorldState::Household(g.world),
                g.instruction,
                g.initial_observation,
                g.oracle_plan,
                g.goal_template,
            )
        }
        EnvKind::Shopping => {
            let g = shopping::generate(&mut rng, unseen);
            (
                WorldState::Shopping(g.world),
                g.instruction,
                g.initial_observation,
                g.oracle_plan,
                g.goal_template,
            )
        }
        EnvKind::Science => {
            let g = science::generate(&mut rng, unseen);
            (
                WorldState::Science(g.world),
                g.instruction,
                g.initial_observation,
                g.oracle_plan,
                g.goal_template,
            )
        }
    }
}

fn task_id(config: &EnvConfig, index: usize) -> String {
    let kind = match config.env_kind {
        EnvKind::Household => "household",
        EnvKind::Shopping => "shopping",
        EnvKind::Science => "science",
    };
    format!("{kind}-s{}-t{index:07}", config.seed)
}

// ---------------------------------------------------------------------------
// Episode
// ---------------------------------------------------------------------------

/// One running episode; single-writer, never shared across threads.
#[derive(Debug, Clone)]
pub struct Episode {
    pub task: TaskInstruction,
    config: EnvConfig,
    world: WorldState,
    initial_observation: String,
    steps_taken: u32,
    done: bool,
    /// Latched best subgoal fraction so dense reward is monotone.
    best_dense: f64,
}

impl Episode {
    /// Deterministic reset: the same (seed, task_index) always rebuilds the
    /// identical world, instruction, and initial observation.
    pub fn reset(config: &EnvConfig, task_index: usize) -> Result<Episode> {
        config.validate()?;
        Self::reset_with_split(config, task_index, split_for_index(task_index))
    }

    pub(crate) fn reset_with_split(
        config: &EnvConfig,
        task_index: usize,
        split: Split,
    ) -> Result<Episode> {
        let (world, instruction, initial_observation, _, _) = generate_task(config, task_index);
        Ok(Episode {
            task: TaskInstruction {
                id: task_id(config, task_index),
                text: instruction,
                split,
                env_kind: config.env_kind,
            },
            config: *config,
            world,
            initial_observation,
            steps_taken: 0,
            done: false,
            best_dense: 0.0,
        })
    }

    pub fn initial_observation(&self) -> &str {
        &self.initial_observation
    }

    pub fn available_actions(&self) -> Vec<String> {
        self.world.available_actions()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps_taken
    }

    pub fn max_steps(&self) -> u32 {
        self.config.max_steps
    }

    /// Serialized world state, for state-purity checks.
    pub fn state_fingerprint(&self) -> String {
        serde_json::to_string(&self.world).expect("world state serializes")
    }

    fn current_reward(&mut self) -> f64 {
        match self.config.reward_mode {
            RewardMode::Binary => {
                if self.done && self.world.goal_met() {
                    1.0
                } else {
                    0.0
                }
            }
            RewardMode::Dense => {
                let (sat, total) = self.world.subgoals();
                let frac = if total == 0 { 0.0 } else { sat as f64 / total as f64 };
                self.best_dense = self.best_dense.max(frac);
                self.best_dense
            }
        }
    }

    pub fn step(&mut self, action: &ActionRecord) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let (observation, was_valid) = if action.action_id.is_empty() {
            (NOTHING_HAPPENS.to_string(), false)
        } else {
            match self.world.apply(&action.action_id) {
                Some(obs) => (obs, true),
                None => (NOTHING_HAPPENS.to_string(), false),
            }
        };
        self.steps_taken += 1;
        self.done = self.world.goal_met() || self.steps_taken >= self.config.max_steps;
        let reward_so_far = self.current_reward();
        Ok(StepOutcome {
            observation,
            done: self.done,
            reward_so_far,
            was_valid,
        })
    }
}

fn split_for_index(index: usize) -> Split {
    if index >= UNSEEN_INDEX_BASE {
        Split::TestUnseen
    } else {
        Split::Train
    }
}

// ---------------------------------------------------------------------------
// Task suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTask {
    pub index: usize,
    pub instruction: TaskInstruction,
    pub oracle_plan: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuite {
    pub env_kind: EnvKind,
    pub seed: u64,
    pub tasks: Vec<SuiteTask>,
}

impl TaskSuite {
    pub fn split(&self, split: Split) -> Vec<&SuiteTask> {
        self.tasks
            .iter()
            .filter(|t| t.instruction.split == split)
            .collect()
    }

    pub fn by_id(&self, id: &str) -> Option<&SuiteTask> {
        self.tasks.iter().find(|t| t.instruction.id == id)
    }
}

fn template_capacity(kind: EnvKind, unseen: bool) -> usize {
    match (kind, unseen) {
        (EnvKind::Household, false) => {
            household::SEEN_TEMPLATES.len() * household::SEEN_OBJECTS.len() * 16
        }
        (EnvKind::Household, true) => {
            household::UNSEEN_TEMPLATES.len() * household::UNSEEN_OBJECTS.len() * 16
        }
        (EnvKind::Shopping, false) => shopping::SEEN_CATEGORIES.len() * 25,
        (EnvKind::Shopping, true) => shopping::UNSEEN_CATEGORIES.len() * 25,
        (EnvKind::Science, false) => {
            science::SEEN_TEMPLATES.len() * science::SEEN_SUBSTANCES.len() * 16
        }
        (EnvKind::Science, true) => {
            science::UNSEEN_TEMPLATES.len() * science::UNSEEN_SUBSTANCES.len() * 16
        }
    }
}

/// Generate a task suite with train/seen/unseen splits. Unseen tasks draw
/// from goal-template and object pools disjoint from train and seen; every
/// task carries an oracle plan achieving reward 1 within max_steps.
pub fn generate_suite(
    config: &EnvConfig,
    n_train: usize,
    n_seen: usize,
    n_unseen: usize,
) -> Result<TaskSuite> {
    config.validate()?;
    if n_train < 1 || n_seen < 1 || n_unseen < 1 {
        return Err(Error::InvalidInput("suite counts must be >= 1".into()));
    }
    let seen_capacity = template_capacity(config.env_kind, false);
    if n_train + n_seen > seen_capacity {
        return Err(Error::CapacityExceeded {
            requested: n_train + n_seen,
            capacity: seen_capacity,
        });
    }
    let unseen_capacity = template_capacity(config.env_kind, true);
    if n_unseen > unseen_capacity {
        return Err(Error::CapacityExceeded {
            requested: n_unseen,
            capacity: unseen_capacity,
        });
    }

    let mut tasks = Vec::new();
    for i in 0..n_train + n_seen {
        let split = if i < n_train { Split::Train } else { Split::TestSeen };
        let (_, instruction, _, oracle_plan, _) = generate_task(config, i);
        tasks.push(SuiteTask {
            index: i,
            instruction: TaskInstruction {
                id: task_id(config, i),
                text: instruction,
                split,
                env_kind: config.env_kind,
            },
            oracle_plan,
        });
    }
    for j in 0..n_unseen {
        let index = UNSEEN_INDEX_BASE + j;
        let (_, instruction, _, oracle_plan, _) = generate_task(config, index);
        tasks.push(SuiteTask {
            index,
            instruction: TaskInstruction {
                id: task_id(config, index),
                text: instruction,
                split: Split::TestUnseen,
                env_kind: config.env_kind,
            },
            oracle_plan,
        });
    }
    Ok(TaskSuite {
        env_kind: config.env_kind,
        seed: config.seed,
        tasks,
    })
}

/// Goal template used by a generated task (for split-disjointness checks).
pub fn goal_template(config: &EnvConfig, index: usize) -> String {
    generate_task(config, index).4
}

// ---------------------------------------------------------------------------
// Suite manifest file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestTask {
    id: String,
    split: Split,
    instruction: String,
    oracle_plan: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    env_kind: EnvKind,
    seed: u64,
    tasks: Vec<ManifestTask>,
}

pub fn save_suite(suite: &TaskSuite, path: &Path) -> Result<()> {
    let manifest = Manifest {
        env_kind: suite.env_kind,
        seed: suite.seed,
        tasks: suite
            .tasks
            .iter()
            .map(|t| ManifestTask {
                id: t.instruction.id.clone(),
                split: t.instruction.split,
                instruction: t.instruction.text.clone(),
                oracle_plan: t.oracle_plan.clone(),
            })
            .collect(),
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn load_suite(path: &Path) -> Result<TaskSuite> {
    let manifest: Manifest = serde_json::from_reader(std::fs::File::open(path)?)?;
    let mut base = 0usize;
    let mut unseen = 0usize;
    let tasks = manifest
        .tasks
        .into_iter()
        .map(|t| {
            let index = if t.split == Split::TestUnseen {
                let i = UNSEEN_INDEX_BASE + unseen;
                unseen += 1;
                i
            } else {
                let i = base;
                base += 1;
                i
            };
            SuiteTask {
                index,
                instruction: TaskInstruction {
                    id: t.id,
                    text: t.instruction,
                    split: t.split,
                    env_kind: manifest.env_kind,
                },
                oracle_plan: t.oracle_plan,
            }
        })
        .collect();
    Ok(TaskSuite {
        env_kind: manifest.env_kind,
        seed: manifest.seed,
        tasks,
    })
}

/// Replay a task's oracle plan from reset; returns the finished episode's
/// final reward and step count.
pub fn replay_oracle(config: &EnvConfig, task: &SuiteTask) -> Result<(f64, u32)> {
    let mut ep = Episode::reset_with_split(config, task.index, task.instruction.split)?;
    let mut reward = 0.0;
    for a in &task.oracle_plan {
        let outcome = ep.step(&ActionRecord::new("", a.as_str()))?;
        reward = outcome.reward_so_far;
        if outcome.done {
            break;
        }
    }
    Ok((reward, ep.steps_taken()))
}
