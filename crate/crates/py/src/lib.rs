//! Python bindings: task suites, episodes, the knowledge base, the feature
//! embedder and the fusion rule, mirroring the core crate's public surface.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use wkm_core::env::{generate_suite, EnvConfig, Episode, TaskSuite};
use wkm_core::fusion::{fuse_argmax, ActionDistribution, FusionConfig};
use wkm_core::kb::{cosine, next_action_distribution, KnowledgeBase};
use wkm_core::planner::default_gamma;
use wkm_core::provider::{hash_embed, EmbeddingVector, HASH_EMBED_DIM};
use wkm_core::trajectory::{canonical_action_id, EnvKind, Split};
use wkm_core::Error as CoreError;

fn to_py_err(e: CoreError) -> PyErr {
    match e {
        CoreError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<EnvKind> {
    match kind {
        "household" => Ok(EnvKind::Household),
        "shopping" => Ok(EnvKind::Shopping),
        "science" => Ok(EnvKind::Science),
        other => Err(PyValueError::new_err(format!(
            "unknown env kind {other:?} (expected household, shopping or science)"
        ))),
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::TestSeen => "test-seen",
        Split::TestUnseen => "test-unseen",
    }
}

// ---------------------------------------------------------------------------
// Task suite
// ---------------------------------------------------------------------------

/// A generated task suite with train / test-seen / test-unseen splits.
#[pyclass(name = "TaskSuite", frozen)]
struct PyTaskSuite {
    inner: Arc<TaskSuite>,
    kind: EnvKind,
    seed: u64,
}

#[pymethods]
impl PyTaskSuite {
    #[staticmethod]
    #[pyo3(signature = (kind, seed, train, test_seen, test_unseen))]
    fn generate(
        kind: &str,
        seed: u64,
        train: usize,
        test_seen: usize,
        test_unseen: usize,
    ) -> PyResult<Self> {
        let kind = parse_kind(kind)?;
        let config = EnvConfig::new(kind, seed);
        let suite = generate_suite(&config, train, test_seen, test_unseen).map_err(to_py_err)?;
        Ok(PyTaskSuite {
            inner: Arc::new(suite),
            kind,
            seed,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.tasks.len()
    }

    /// (task_id, split, instruction, oracle_plan) for every task.
    fn tasks(&self) -> Vec<(String, &'static str, String, Vec<String>)> {
        self.inner
            .tasks
            .iter()
            .map(|t| {
                (
                    t.instruction.id.clone(),
                    split_name(t.instruction.split),
                    t.instruction.text.clone(),
                    t.oracle_plan.clone(),
                )
            })
            .collect()
    }

    fn oracle_plan(&self, task_id: &str) -> PyResult<Vec<String>> {
        self.inner
            .by_id(task_id)
            .map(|t| t.oracle_plan.clone())
            .ok_or_else(|| PyValueError::new_err(format!("unknown task id {task_id:?}")))
    }

    /// Open an episode for one of the suite's tasks.
    fn episode(&self, task_id: &str) -> PyResult<PyEpisode> {
        let task = self
            .inner
            .by_id(task_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown task id {task_id:?}")))?;
        let config = EnvConfig::new(self.kind, self.seed);
        // Suite tasks carry the generator index, so plain reset reproduces
        // the exact world regardless of split.
        let episode = Episode::reset(&config, task.index).map_err(to_py_err)?;
        Ok(PyEpisode { inner: episode })
    }
}

// ---------------------------------------------------------------------------
// Episode
// ---------------------------------------------------------------------------

/// A live environment episode; actions are plain strings.
#[pyclass(name = "Episode")]
struct PyEpisode {
    inner: Episode,
}

#[pymethods]
impl PyEpisode {
    fn available_actions(&self) -> Vec<String> {
        self.inner.available_actions()
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    fn steps_taken(&self) -> u32 {
        self.inner.steps_taken()
    }

    /// Execute an action; returns (observation, done, reward_so_far, was_valid).
    fn step(&mut self, action: &str) -> PyResult<(String, bool, f64, bool)> {
        let record = wkm_core::trajectory::ActionRecord::new("", action);
        let outcome = self.inner.step(&record).map_err(to_py_err)?;
        Ok((
            outcome.observation,
            outcome.done,
            outcome.reward_so_far,
            outcome.was_valid,
        ))
    }
}

// ---------------------------------------------------------------------------
// Knowledge base
// ---------------------------------------------------------------------------

/// Retrieval index over (prev_action, state, next_action) records.
#[pyclass(name = "KnowledgeBase", frozen)]
struct PyKnowledgeBase {
    inner: KnowledgeBase,
}

#[pymethods]
impl PyKnowledgeBase {
    /// Build from (state_text, prev_action, next_action) triplets; the state
    /// text is embedded with the feature hasher.
    #[staticmethod]
    fn from_triplets(triplets: Vec<(String, String, String)>) -> PyResult<Self> {
        let records = triplets
            .into_iter()
            .enumerate()
            .map(|(i, (state, prev, next))| wkm_core::kb::KBRecord {
                state_embedding: hash_embed(&state, HASH_EMBED_DIM).components,
                state_text: state,
                prev_action: prev,
                next_action: next,
                task_id: String::new(),
                step_index: i,
            })
            .collect();
        Ok(PyKnowledgeBase {
            inner: KnowledgeBase::from_records(records).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyKnowledgeBase {
            inner: KnowledgeBase::load(&path).map_err(to_py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Nearest records by cosine similarity within the prev_action bucket;
    /// returns (record_index, similarity) pairs.
    fn knn(&self, query: Vec<f64>, prev_action: &str, n: usize) -> PyResult<Vec<(usize, f64)>> {
        let result = self
            .inner
            .knn(&EmbeddingVector::new(query), prev_action, n)
            .map_err(to_py_err)?;
        Ok(result.hits)
    }

    /// Retrieved next-action distribution over the available set, or None
    /// when the knowledge base is silent for this step.
    fn next_action_probs(
        &self,
        query: Vec<f64>,
        prev_action: &str,
        n: usize,
        available: Vec<String>,
    ) -> PyResult<Option<Vec<f64>>> {
        let result = self
            .inner
            .knn(&EmbeddingVector::new(query), prev_action, n)
            .map_err(to_py_err)?;
        match next_action_distribution(&result, &self.inner, &available) {
            Ok(dist) => Ok(Some(dist.probs)),
            Err(CoreError::KbSilent) => Ok(None),
            Err(e) => Err(to_py_err(e)),
        }
    }
}

// ---------------------------------------------------------------------------
// Functions
// ---------------------------------------------------------------------------

/// Normalize an action to its canonical id (lowercase, collapsed whitespace).
#[pyfunction]
#[pyo3(name = "canonical_action_id")]
fn py_canonical_action_id(action: &str) -> PyResult<String> {
    canonical_action_id(action).map_err(to_py_err)
}

/// Feature-hash embedding of a text, 64 dimensions by default.
#[pyfunction]
#[pyo3(name = "hash_embed", signature = (text, dim = HASH_EMBED_DIM))]
fn py_hash_embed(text: &str, dim: usize) -> Vec<f64> {
    hash_embed(text, dim).components
}

/// Cosine similarity; 0 for zero-norm inputs.
#[pyfunction]
#[pyo3(name = "cosine")]
fn py_cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    cosine(&EmbeddingVector::new(a), &EmbeddingVector::new(b)).map_err(to_py_err)
}

/// Gamma-weighted argmax over agent and knowledge distributions; p_know=None
/// falls back to the pure agent argmax. Returns (action_id, fused_scores).
#[pyfunction]
#[pyo3(name = "fuse", signature = (action_ids, p_agent, p_know, gamma))]
fn py_fuse(
    action_ids: Vec<String>,
    p_agent: Vec<f64>,
    p_know: Option<Vec<f64>>,
    gamma: f64,
) -> PyResult<(String, Vec<f64>)> {
    let agent = ActionDistribution::new(action_ids.clone(), p_agent).map_err(to_py_err)?;
    let know = p_know
        .map(|p| ActionDistribution::new(action_ids, p))
        .transpose()
        .map_err(to_py_err)?;
    let config = FusionConfig::new(gamma).map_err(to_py_err)?;
    fuse_argmax(&agent, know.as_ref(), &config).map_err(to_py_err)
}

/// Per-environment default fusion weight.
#[pyfunction]
#[pyo3(name = "default_gamma")]
fn py_default_gamma(kind: &str) -> PyResult<f64> {
    Ok(default_gamma(parse_kind(kind)?))
}

#[pymodule]
fn wkm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTaskSuite>()?;
    m.add_class::<PyEpisode>()?;
    m.add_class::<PyKnowledgeBase>()?;
    m.add_function(wrap_pyfunction!(py_canonical_action_id, m)?)?;
    m.add_function(wrap_pyfunction!(py_hash_embed, m)?)?;
    m.add_function(wrap_pyfunction!(py_cosine, m)?)?;
    m.add_function(wrap_pyfunction!(py_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(py_default_gamma, m)?)?;
    m.add("HASH_EMBED_DIM", HASH_EMBED_DIM)?;
    Ok(())
}
