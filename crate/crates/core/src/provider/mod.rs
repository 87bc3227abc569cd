//! Abstraction over the agent model and the world knowledge model: text
//! generation, per-action scoring, and sentence embedding, with a scripted
//! deterministic family for hermetic tests and a remote HTTP client.

mod remote;
mod scripted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{
    render_history, PreferencePair, TaskInstruction, TaskKnowledge,
};

pub use remote::RemoteProvider;
pub use scripted::{BiasedScoreProvider, CannedProvider, OracleProvider, TargetRule, WeightedPlanProvider};

/// Temperature used for all knowledge-model calls and agent exploration.
pub const TEMP_DETERMINISTIC: f64 = 0.0;
/// Temperature used for the fused planning agent.
pub const TEMP_PLANNING: f64 = 0.5;
/// Character bound standing in for the 128-token limit on state knowledge.
pub const STATE_KNOWLEDGE_MAX_CHARS: usize = 700;
/// Generation budget passed to providers.
pub const GENERATION_MAX_CHARS: usize = 4000;

pub const TASK_KNOWLEDGE_MARKER: &str = "Task Knowledge:";
pub const STATE_KNOWLEDGE_MARKER: &str = "State Knowledge:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderRole {
    Agent,
    Wkm,
}

/// Raw non-negative per-action scores over the available action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScores {
    pub entries: Vec<(String, f64)>,
}

impl ActionScores {
    pub fn validate(&self) -> Result<()> {
        if self.entries.iter().any(|(_, s)| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput("negative or non-finite score".into()));
        }
        if !self.entries.iter().any(|(_, s)| *s > 0.0) {
            return Err(Error::AllZeroScores);
        }
        Ok(())
    }
}

/// Fixed-dimension sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        EmbeddingVector { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    TaskKnow,
    StateKnow,
    Plan,
}

impl TemplateName {
    fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::TaskKnow => {
                &["{success_trajectory}", "{explored_trajectory}", "{example}"]
            }
            TemplateName::StateKnow => &["{trajectory}", "{example}"],
            TemplateName::Plan => &["{history}"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, text: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate { name, text: text.into() };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for ph in self.name.placeholders() {
            if self.text.matches(ph).count() != 1 {
                return Err(Error::InvalidInput(format!(
                    "template must contain {ph} exactly once"
                )));
            }
        }
        if self.name == TemplateName::TaskKnow
            && !self.text.contains("Task Knowledge: When")
        {
            return Err(Error::InvalidInput(
                "task_know template must contain the 'Task Knowledge: When ...' directive".into(),
            ));
        }
        Ok(())
    }

    pub fn fill(&self, values: &BTreeMap<&str, String>) -> String {
        let mut out = self.text.clone();
        for (k, v) in values {
            out = out.replace(k, v);
        }
        out
    }

    pub fn default_task_know() -> Self {
        PromptTemplate::new(
            TemplateName::TaskKnow,
            "I will provide you with an analysis of both a successful trajectory and an \
             explored trajectory for the same task. By comparing the two, we can identify \
             the key factors that contribute to success. Based on this analysis, you need \
             to generate task-related task knowledge to help increase the success rate of \
             future endeavors.\n\n\
             Success Trajectory: {success_trajectory}\n\n\
             Explored Trajectory: {explored_trajectory}\n\n\
             The task knowledge should specify what to do in what task.\n\
             Here is a task knowledge example:\n\n{example}\n\n\
             You should make your answer concise. Put your answer in this format: \
             Task Knowledge: When ... you should (or should not) ... The action workflows are: ...",
        )
        .expect("default template is valid")
    }

    pub fn default_state_know() -> Self {
        PromptTemplate::new(
            TemplateName::StateKnow,
            "You'll get a segment of a trajectory of a text-based task. Your task is to \
             generate a brief and general state knowledge of the task state now, following \
             \"State Knowledge: \". Keep it wise and general for the same task.\n\
             Here is an example:\n\n{example}\n\n\
             Now it's your turn.\nHere is the trajectory :\n\n{trajectory}\n\n\
             Make sure your output is within 128 tokens.\n\n\
             Put your answer in this format:\nState Knowledge: ...",
        )
        .expect("default template is valid")
    }

    pub fn default_plan() -> Self {
        PromptTemplate::new(
            TemplateName::Plan,
            "Interact with the environment to solve the task. Respond with a Thought line \
             followed by an Action line.\n\n{history}\n\nThought:",
        )
        .expect("default template is valid")
    }
}

// ---------------------------------------------------------------------------
// Provider trait
// ---------------------------------------------------------------------------

/// Low-level model surface. Implementations must be safe for concurrent
/// calls; scripted providers use immutable tables plus per-call seeding.
pub trait Provider: Send + Sync {
    fn role(&self) -> ProviderRole;

    fn generate(&self, prompt: &str, max_chars: usize, temperature: f64) -> Result<String>;

    /// Raw per-action scores derived from the first-token distribution,
    /// extended to the shortest distinguishing token prefix where actions
    /// share a first token. Aligned by index with `actions`.
    fn score_actions(&self, prompt: &str, actions: &[String]) -> Result<Vec<f64>>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

// ---------------------------------------------------------------------------
// High-level operations
// ---------------------------------------------------------------------------

fn parse_after_marker(completion: &str, marker: &'static str) -> Result<String> {
    match completion.find(marker) {
        Some(pos) => Ok(completion[pos + marker.len()..].trim().to_string()),
        None => Err(Error::MissingMarker {
            marker,
            raw: completion.to_string(),
        }),
    }
}

/// Synthesize task knowledge from a preference pair. In chosen-only mode the
/// explored-trajectory block is removed from the prompt entirely.
pub fn generate_task_knowledge(
    provider: &dyn Provider,
    pair: &PreferencePair,
    template: &PromptTemplate,
    chosen_only: bool,
) -> Result<TaskKnowledge> {
    let chosen_text = render_history(pair.chosen(), pair.chosen().steps.len(), None)?;
    let mut text = template.text.clone();
    if chosen_only {
        text = text
            .lines()
            .filter(|l| !l.contains("{explored_trajectory}"))
            .collect::<Vec<_>>()
            .join("\n");
    } else {
        let rejected_text =
            render_history(pair.rejected(), pair.rejected().steps.len(), None)?;
        text = text.replace("{explored_trajectory}", &rejected_text);
    }
    text = text
        .replace("{success_trajectory}", &chosen_text)
        .replace("{example}", example_task_knowledge());
    let completion = provider.generate(&text, GENERATION_MAX_CHARS, TEMP_DETERMINISTIC)?;
    let body = parse_after_marker(&completion, TASK_KNOWLEDGE_MARKER)?;
    Ok(TaskKnowledge {
        task_id: pair.chosen().task.id.clone(),
        text: body,
    })
}

/// Task knowledge at planning time, generated from the instruction alone.
pub fn generate_task_knowledge_for_task(
    provider: &dyn Provider,
    task: &TaskInstruction,
) -> Result<TaskKnowledge> {
    let prompt = format!(
        "Generate concise task knowledge for the following task. Put your answer in this \
         format: Task Knowledge: When ... The action workflows are: ...\n\n\
         Task Instruction: {}",
        task.text
    );
    let completion = provider.generate(&prompt, GENERATION_MAX_CHARS, TEMP_DETERMINISTIC)?;
    let body = parse_after_marker(&completion, TASK_KNOWLEDGE_MARKER)?;
    Ok(TaskKnowledge {
        task_id: task.id.clone(),
        text: body,
    })
}

/// Parsed state-knowledge text plus whether the over-length rule truncated it.
pub fn generate_state_knowledge(
    provider: &dyn Provider,
    history: &str,
    template: &PromptTemplate,
) -> Result<(String, bool)> {
    let mut values = BTreeMap::new();
    values.insert("{trajectory}", history.to_string());
    values.insert("{example}", example_state_knowledge().to_string());
    let prompt = template.fill(&values);
    let completion = provider.generate(&prompt, GENERATION_MAX_CHARS, TEMP_DETERMINISTIC)?;
    let body = parse_after_marker(&completion, STATE_KNOWLEDGE_MARKER)?;
    if body.chars().count() > STATE_KNOWLEDGE_MAX_CHARS {
        let truncated: String = body.chars().take(STATE_KNOWLEDGE_MAX_CHARS).collect();
        Ok((truncated, true))
    } else {
        Ok((body, false))
    }
}

/// Score the available action set against a rendered history.
pub fn score_actions(
    provider: &dyn Provider,
    history: &str,
    actions: &[String],
) -> Result<ActionScores> {
    if actions.is_empty() {
        return Err(Error::InvalidInput("empty action list".into()));
    }
    let raw = provider.score_actions(history, actions)?;
    if raw.len() != actions.len() {
        return Err(Error::LengthMismatch {
            expected: actions.len(),
            got: raw.len(),
        });
    }
    let scores = ActionScores {
        entries: actions.iter().cloned().zip(raw).collect(),
    };
    scores.validate()?;
    Ok(scores)
}

/// Free-form Thought/Action proposal; an unparseable completion surfaces as
/// an invalid action the environment will reject.
pub fn propose_action(
    provider: &dyn Provider,
    history: &str,
    temperature: f64,
) -> Result<crate::trajectory::ActionRecord> {
    let template = PromptTemplate::default_plan();
    let mut values = BTreeMap::new();
    values.insert("{history}", history.to_string());
    let completion = provider.generate(&template.fill(&values), GENERATION_MAX_CHARS, temperature)?;
    let mut rationale = String::new();
    let mut action: Option<String> = None;
    for line in completion.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("Thought:") {
            rationale = rest.trim().to_string();
        } else if let Some(rest) = line.strip_prefix("Action:") {
            action = Some(rest.trim().to_string());
            break;
        }
    }
    Ok(match action {
        Some(a) if !a.trim().is_empty() => crate::trajectory::ActionRecord::new(rationale, a),
        _ => crate::trajectory::ActionRecord::invalid(rationale),
    })
}

pub fn embed(provider: &dyn Provider, text: &str) -> Result<EmbeddingVector> {
    if text.is_empty() {
        return Err(Error::InvalidInput("cannot embed empty text".into()));
    }
    provider.embed(text)
}

fn example_task_knowledge() -> &'static str {
    "When picking an object, heat it, and place it, you should first go to the possible \
     locations of the object, then take the object, heat it with microwave, and put it in \
     place. The action workflows are as follows: 1) go to receptacle 2) take object from \
     receptacle 3) heat object with receptacle 4) go to the place to put the object \
     5) put object in/on receptacle"
}

fn example_state_knowledge() -> &'static str {
    "State Knowledge: Your task is to clean some soapbar and put it in cabinet. Now you \
     are checking toilet 1 and there is a soapbar 1."
}

// ---------------------------------------------------------------------------
// Feature-hash embedder (d=64 by default)
// ---------------------------------------------------------------------------

pub const HASH_EMBED_DIM: usize = 64;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic signed feature-hash sentence embedding.
pub fn hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    let mut v = vec![0.0; dim];
    for word in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        let h = fnv1a64(word.to_lowercase().as_bytes());
        let idx = (h % dim as u64) as usize;
        let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    }
    EmbeddingVector::new(v)
}

// ---------------------------------------------------------------------------
// Shortest-distinguishing-prefix token scoring
// ---------------------------------------------------------------------------

/// Conditional next-token table keyed by whitespace-token prefixes.
#[derive(Debug, Clone, Default)]
pub struct TokenConditional {
    pub table: BTreeMap<Vec<String>, BTreeMap<String, f64>>,
}

impl TokenConditional {
    fn prob(&self, prefix: &[String], token: &str) -> f64 {
        self.table
            .get(prefix)
            .and_then(|d| d.get(token))
            .copied()
            .unwrap_or(0.0)
    }
}

fn tokens(action: &str) -> Vec<String> {
    action.split_whitespace().map(str::to_string).collect()
}

/// Length of the shortest token prefix of `actions[i]` shared by no other
/// action (full length when one action is a prefix of another).
fn distinguishing_len(actions: &[Vec<String>], i: usize) -> usize {
    let me = &actions[i];
    for len in 1..=me.len() {
        let unique = actions.iter().enumerate().all(|(j, other)| {
            j == i || other.len() < len || other[..len] != me[..len]
        });
        if unique {
            return len;
        }
    }
    me.len()
}

/// Per-action scores as the chained conditional probability of each action's
/// shortest distinguishing token prefix.
pub fn prefix_scores(actions: &[String], cond: &TokenConditional) -> Vec<f64> {
    let tokenized: Vec<Vec<String>> = actions.iter().map(|a| tokens(a)).collect();
    tokenized
        .iter()
        .enumerate()
        .map(|(i, toks)| {
            let len = distinguishing_len(&tokenized, i);
            let mut p = 1.0;
            for t in 0..len {
                p *= cond.prob(&toks[..t], &toks[t]);
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::cosine;
    use crate::trajectory::{
        ActionRecord, EnvKind, Source, Split, Step, Trajectory,
    };

    fn mini_pair() -> PreferencePair {
        let task = TaskInstruction {
            id: "t0".into(),
            text: "Your task is to: test.".into(),
            split: Split::Train,
            env_kind: EnvKind::Household,
        };
        let step = |a: &str| Step {
            action: ActionRecord::new("", a),
            observation: "ok".into(),
            state_knowledge: None,
        };
        let chosen = Trajectory {
            task: task.clone(),
            steps: vec![step("go to bed 1")],
            reward: 1.0,
            source: Source::Expert,
        };
        let rejected = Trajectory {
            task,
            steps: vec![step("go to desk 1")],
            reward: 0.0,
            source: Source::Explored,
        };
        PreferencePair::new(chosen, rejected).unwrap()
    }

    #[test]
    fn canned_task_knowledge_parses_body() {
        let p = CannedProvider::new(ProviderRole::Agent).with_completion(
            "Task Knowledge: When you cannot find the object, check the drawers. \
             The action workflows are: 1) go to drawer",
        );
        let k = generate_task_knowledge(
            &p,
            &mini_pair(),
            &PromptTemplate::default_task_know(),
            false,
        )
        .unwrap();
        assert!(k.text.starts_with("When you cannot find the object"));
    }

    #[test]
    fn missing_marker_is_format_error() {
        let p = CannedProvider::new(ProviderRole::Agent).with_completion("no marker here");
        let err = generate_task_knowledge(
            &p,
            &mini_pair(),
            &PromptTemplate::default_task_know(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingMarker { .. }));
    }

    #[test]
    fn chosen_only_omits_explored_block() {
        let p = CannedProvider::new(ProviderRole::Agent)
            .record_prompts()
            .with_completion("Task Knowledge: When testing, proceed.");
        generate_task_knowledge(&p, &mini_pair(), &PromptTemplate::default_task_know(), true)
            .unwrap();
        let prompt = p.last_prompt().unwrap();
        assert!(!prompt.contains("Explored Trajectory"));
        assert!(prompt.contains("Success Trajectory"));
    }

    #[test]
    fn state_knowledge_truncates_over_length() {
        let long = format!("State Knowledge: {}", "x".repeat(10_000));
        let p = CannedProvider::new(ProviderRole::Wkm).with_completion(&long);
        let (text, truncated) =
            generate_state_knowledge(&p, "history", &PromptTemplate::default_state_know())
                .unwrap();
        assert!(truncated);
        assert_eq!(text.chars().count(), STATE_KNOWLEDGE_MAX_CHARS);
    }

    #[test]
    fn score_actions_rejects_empty_list() {
        let p = CannedProvider::new(ProviderRole::Agent);
        assert!(score_actions(&p, "h", &[]).is_err());
    }

    #[test]
    fn scripted_score_table_echoes() {
        let p = CannedProvider::new(ProviderRole::Agent)
            .with_score("a", 0.7)
            .with_score("b", 0.3);
        let s = score_actions(&p, "h", &["a".into(), "b".into()]).unwrap();
        assert_eq!(s.entries[0].1, 0.7);
        assert_eq!(s.entries[1].1, 0.3);
    }

    #[test]
    fn propose_parses_thought_action() {
        let p = CannedProvider::new(ProviderRole::Agent)
            .with_completion("Thought: go there.\nAction: go to bed 1");
        let a = propose_action(&p, "h", TEMP_DETERMINISTIC).unwrap();
        assert_eq!(a.action_text, "go to bed 1");
        assert_eq!(a.rationale, "go there.");
    }

    #[test]
    fn propose_malformed_is_invalid() {
        let p = CannedProvider::new(ProviderRole::Agent)
            .with_completion("I think we should wander around");
        let a = propose_action(&p, "h", TEMP_DETERMINISTIC).unwrap();
        assert!(!a.is_parseable());
    }

    #[test]
    fn hash_embed_is_deterministic_and_self_similar() {
        let a = hash_embed("take the soapbar from the toilet", HASH_EMBED_DIM);
        let b = hash_embed("take the soapbar from the toilet", HASH_EMBED_DIM);
        assert_eq!(a, b);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_texts_have_low_cosine() {
        let a = hash_embed("alpha bravo charlie delta echo foxtrot", HASH_EMBED_DIM);
        let b = hash_embed("golf hotel india juliet kilo lima", HASH_EMBED_DIM);
        let c = cosine(&a, &b).unwrap();
        assert!(c < 0.5, "cosine {c} not below 0.5");
    }

    #[test]
    fn prefix_scores_match_hand_enumerated_trie() {
        // Actions: "go to bed 1" and "go to desk 1" share tokens [go, to];
        // "take book 1" is distinguished by its first token.
        let actions = vec![
            "go to bed 1".to_string(),
            "go to desk 1".to_string(),
            "take book 1".to_string(),
        ];
        let mut cond = TokenConditional::default();
        cond.table.insert(
            vec![],
            BTreeMap::from([("go".to_string(), 0.8), ("take".to_string(), 0.2)]),
        );
        cond.table.insert(
            vec!["go".to_string()],
            BTreeMap::from([("to".to_string(), 1.0)]),
        );
        cond.table.insert(
            vec!["go".to_string(), "to".to_string()],
            BTreeMap::from([("bed".to_string(), 0.7), ("desk".to_string(), 0.3)]),
        );
        let scores = prefix_scores(&actions, &cond);
        // Hand enumeration: "go to bed" = 0.8*1.0*0.7; "go to desk" = 0.8*1.0*0.3;
        // "take" distinguishes at length 1 = 0.2.
        assert!((scores[0] - 0.56).abs() < 1e-12);
        assert!((scores[1] - 0.24).abs() < 1e-12);
        assert!((scores[2] - 0.2).abs() < 1e-12);
        assert_ne!(scores[0], scores[1]);
    }

    #[test]
    fn embed_empty_text_errors() {
        let p = CannedProvider::new(ProviderRole::Agent);
        assert!(embed(&p, "").is_err());
    }
}
