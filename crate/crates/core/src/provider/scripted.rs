//! Deterministic scripted providers for hermetic tests and offline runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::TaskSuite;
use crate::error::{Error, Result};
use crate::provider::{
    hash_embed, prefix_scores, EmbeddingVector, Provider, ProviderRole, TokenConditional,
    HASH_EMBED_DIM,
};

// ---------------------------------------------------------------------------
// CannedProvider
// ---------------------------------------------------------------------------

/// Echo provider: canned completions consumed in order (the last one
/// repeats), an exact score table, and the feature-hash embedder.
pub struct CannedProvider {
    role: ProviderRole,
    completions: Vec<String>,
    cursor: AtomicUsize,
    scores: BTreeMap<String, f64>,
    token_conditional: Option<TokenConditional>,
    prompts: Option<Mutex<Vec<String>>>,
}

impl CannedProvider {
    pub fn new(role: ProviderRole) -> Self {
        CannedProvider {
            role,
            completions: Vec::new(),
            cursor: AtomicUsize::new(0),
            scores: BTreeMap::new(),
            token_conditional: None,
            prompts: None,
        }
    }

    pub fn with_completion(mut self, text: &str) -> Self {
        self.completions.push(text.to_string());
        self
    }

    pub fn with_score(mut self, action: &str, score: f64) -> Self {
        self.scores.insert(action.to_string(), score);
        self
    }

    pub fn with_token_conditional(mut self, cond: TokenConditional) -> Self {
        self.token_conditional = Some(cond);
        self
    }

    pub fn record_prompts(mut self) -> Self {
        self.prompts = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn last_prompt(&self) -> Option<String> {
        self.prompts
            .as_ref()
            .and_then(|p| p.lock().unwrap().last().cloned())
    }

    fn note_prompt(&self, prompt: &str) {
        if let Some(p) = &self.prompts {
            p.lock().unwrap().push(prompt.to_string());
        }
    }
}

impl Provider for CannedProvider {
    fn role(&self) -> ProviderRole {
        self.role
    }

    fn generate(&self, prompt: &str, _max_chars: usize, _temperature: f64) -> Result<String> {
        self.note_prompt(prompt);
        if self.completions.is_empty() {
            return Err(Error::Transport("no canned completion configured".into()));
        }
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        Ok(self.completions[i.min(self.completions.len() - 1)].clone())
    }

    fn score_actions(&self, prompt: &str, actions: &[String]) -> Result<Vec<f64>> {
        self.note_prompt(prompt);
        if let Some(cond) = &self.token_conditional {
            return Ok(prefix_scores(actions, cond));
        }
        actions
            .iter()
            .map(|a| {
                self.scores
                    .get(a)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("unknown action in table: {a}")))
            })
            .collect()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(hash_embed(text, HASH_EMBED_DIM))
    }
}

// ---------------------------------------------------------------------------
// OracleProvider
// ---------------------------------------------------------------------------

/// Provider aligned with the task suite's oracle plans. The next plan action
/// is recovered statelessly from the prompt: the task is identified by its
/// instruction text and the step by counting rendered Action blocks.
pub struct OracleProvider {
    role: ProviderRole,
    suite: Arc<TaskSuite>,
    oracle_mass: f64,
}

impl OracleProvider {
    pub fn new(role: ProviderRole, suite: Arc<TaskSuite>) -> Self {
        OracleProvider {
            role,
            suite,
            oracle_mass: 0.95,
        }
    }

    pub fn with_oracle_mass(mut self, mass: f64) -> Self {
        self.oracle_mass = mass;
        self
    }

    fn locate(&self, prompt: &str) -> Option<(usize, usize)> {
        let task = self
            .suite
            .tasks
            .iter()
            .position(|t| prompt.contains(&t.instruction.text))?;
        let step = prompt.matches("\nAction: ").count()
            + usize::from(prompt.starts_with("Action: "));
        Some((task, step))
    }

    fn goal_text(instruction: &str) -> &str {
        instruction
            .find("Your task is to: ")
            .map(|p| instruction[p + "Your task is to: ".len()..].trim_end_matches('.'))
            .unwrap_or(instruction)
    }
}

impl Provider for OracleProvider {
    fn role(&self) -> ProviderRole {
        self.role
    }

    fn generate(&self, prompt: &str, _max_chars: usize, _temperature: f64) -> Result<String> {
        let (task_idx, step) = self
            .locate(prompt)
            .ok_or_else(|| Error::Transport("prompt matches no suite task".into()))?;
        let task = &self.suite.tasks[task_idx];
        let goal = Self::goal_text(&task.instruction.text);
        // Dispatch on the prompt-template signature, not the role: offline
        // summarization runs knowledge prompts through the agent model too.
        let is_plan_prompt = prompt.contains("Respond with a Thought line");
        if !is_plan_prompt && prompt.contains("Put your answer in this format:\nState Knowledge:") {
            return Ok(format!(
                "State Knowledge: Your task is to {goal}. You have taken {step} actions \
                 so far and your last move brought you closer to the goal."
            ));
        }
        if !is_plan_prompt && prompt.contains("Task Knowledge: When") {
            let workflow = task
                .oracle_plan
                .iter()
                .enumerate()
                .map(|(i, a)| format!("{}) {}", i + 1, a))
                .collect::<Vec<_>>()
                .join(" ");
            return Ok(format!(
                "Task Knowledge: When your task is to {goal}, follow a direct workflow \
                 without detours. The action workflows are: {workflow}"
            ));
        }
        let action = task
            .oracle_plan
            .get(step)
            .cloned()
            .unwrap_or_else(|| "look around".to_string());
        Ok(format!(
            "Thought: Step {} of the plan for: {goal}.\nAction: {action}",
            step + 1
        ))
    }

    fn score_actions(&self, prompt: &str, actions: &[String]) -> Result<Vec<f64>> {
        let (task_idx, step) = self
            .locate(prompt)
            .ok_or_else(|| Error::Transport("prompt matches no suite task".into()))?;
        let task = &self.suite.tasks[task_idx];
        let target = task
            .oracle_plan
            .get(step)
            .map(|a| crate::trajectory::canonical_action_id(a))
            .transpose()?;
        let hit = target
            .as_deref()
            .and_then(|t| actions.iter().position(|a| a == t));
        Ok(match hit {
            Some(i) if actions.len() > 1 => {
                let rest = (1.0 - self.oracle_mass) / (actions.len() - 1) as f64;
                (0..actions.len())
                    .map(|j| if j == i { self.oracle_mass } else { rest })
                    .collect()
            }
            Some(_) => vec![1.0],
            None => vec![1.0 / actions.len() as f64; actions.len()],
        })
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(hash_embed(text, HASH_EMBED_DIM))
    }
}

// ---------------------------------------------------------------------------
// BiasedScoreProvider
// ---------------------------------------------------------------------------

/// How the biased provider picks its favored action within the scored set.
#[derive(Debug, Clone)]
pub enum TargetRule {
    /// First action containing the substring.
    Contains(String),
    Index(usize),
}

/// Adversarial stub concentrating probability mass on one action.
pub struct BiasedScoreProvider {
    target: TargetRule,
    mass: f64,
}

impl BiasedScoreProvider {
    pub fn new(target: TargetRule, mass: f64) -> Self {
        BiasedScoreProvider { target, mass }
    }

    fn pick(&self, actions: &[String]) -> usize {
        match &self.target {
            TargetRule::Contains(s) => actions
                .iter()
                .position(|a| a.contains(s.as_str()))
                .unwrap_or(0),
            TargetRule::Index(i) => (*i).min(actions.len().saturating_sub(1)),
        }
    }
}

impl Provider for BiasedScoreProvider {
    fn role(&self) -> ProviderRole {
        ProviderRole::Agent
    }

    fn generate(&self, _prompt: &str, _max_chars: usize, _temperature: f64) -> Result<String> {
        Ok("Thought: acting on instinct.\nAction: wander aimlessly".to_string())
    }

    fn score_actions(&self, _prompt: &str, actions: &[String]) -> Result<Vec<f64>> {
        if actions.is_empty() {
            return Err(Error::InvalidInput("empty action list".into()));
        }
        if actions.len() == 1 {
            return Ok(vec![1.0]);
        }
        let i = self.pick(actions);
        let rest = (1.0 - self.mass) / (actions.len() - 1) as f64;
        Ok((0..actions.len())
            .map(|j| if j == i { self.mass } else { rest })
            .collect())
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(hash_embed(text, HASH_EMBED_DIM))
    }
}

// ---------------------------------------------------------------------------
// WeightedPlanProvider
// ---------------------------------------------------------------------------

/// Draws each completion from a weighted table with a per-call seeded RNG;
/// identical call sequences reproduce identical draws.
pub struct WeightedPlanProvider {
    seed: u64,
    options: Vec<(String, f64)>,
    calls: AtomicUsize,
}

impl WeightedPlanProvider {
    pub fn new(seed: u64, options: Vec<(String, f64)>) -> Self {
        WeightedPlanProvider {
            seed,
            options,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Provider for WeightedPlanProvider {
    fn role(&self) -> ProviderRole {
        ProviderRole::Agent
    }

    fn generate(&self, _prompt: &str, _max_chars: usize, _temperature: f64) -> Result<String> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(call));
        let total: f64 = self.options.iter().map(|(_, w)| w).sum();
        let mut draw = rng.random_range(0.0..total);
        for (text, w) in &self.options {
            if draw < *w {
                return Ok(format!("Thought: scripted draw.\nAction: {text}"));
            }
            draw -= w;
        }
        Ok(format!(
            "Thought: scripted draw.\nAction: {}",
            self.options.last().map(|(t, _)| t.as_str()).unwrap_or("")
        ))
    }

    fn score_actions(&self, _prompt: &str, actions: &[String]) -> Result<Vec<f64>> {
        Ok(vec![1.0 / actions.len() as f64; actions.len()])
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(hash_embed(text, HASH_EMBED_DIM))
    }
}
