//! In-memory state knowledge base: exact brute-force cosine kNN restricted by
//! a previous-action filter, plus next-action frequency aggregation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::ActionDistribution;
use crate::provider::EmbeddingVector;

/// One (previous action, state knowledge, next action) triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBRecord {
    pub state_text: String,
    pub state_embedding: Vec<f64>,
    pub prev_action: String,
    pub next_action: String,
    pub task_id: String,
    pub step_index: usize,
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    records: Vec<KBRecord>,
    dimension: usize,
    by_prev_action: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// (record position, cosine similarity), similarity non-increasing with
    /// ties broken by ascending position.
    pub hits: Vec<(usize, f64)>,
    pub requested: usize,
}

impl RetrievalResult {
    pub fn matched(&self) -> usize {
        self.hits.len()
    }

    pub fn top_similarity(&self) -> Option<f64> {
        self.hits.first().map(|(_, s)| *s)
    }
}

/// Cosine similarity; defined as 0 when either vector has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            expected: a.dimension(),
            got: b.dimension(),
            line: None,
        });
    }
    let dot: f64 = a.components.iter().zip(&b.components).map(|(x, y)| x * y).sum();
    let na: f64 = a.components.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.components.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

impl KnowledgeBase {
    pub fn from_records(records: Vec<KBRecord>) -> Result<Self> {
        let dimension = records.first().map(|r| r.state_embedding.len()).unwrap_or(0);
        for (i, r) in records.iter().enumerate() {
            if r.state_embedding.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: r.state_embedding.len(),
                    line: Some(i + 1),
                });
            }
        }
        let mut by_prev_action: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_prev_action.entry(r.prev_action.clone()).or_default().push(i);
        }
        Ok(KnowledgeBase {
            records,
            dimension,
            by_prev_action,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: KBRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    pub fn save(records: &[KBRecord], path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[KBRecord] {
        &self.records
    }

    pub fn bucket(&self, prev_action: &str) -> &[usize] {
        self.by_prev_action
            .get(prev_action)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Exact kNN over the `prev_action` bucket (filter applied before top-n).
    pub fn knn(
        &self,
        query: &EmbeddingVector,
        prev_action: &str,
        n: usize,
    ) -> Result<RetrievalResult> {
        if !self.records.is_empty() && query.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: query.dimension(),
                line: None,
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .bucket(prev_action)
            .iter()
            .map(|&pos| {
                let emb = EmbeddingVector::new(self.records[pos].state_embedding.clone());
                Ok((pos, cosine(query, &emb)?))
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|(pa, sa), (pb, sb)| {
            sb.partial_cmp(sa).unwrap().then(pa.cmp(pb))
        });
        scored.truncate(n);
        Ok(RetrievalResult {
            hits: scored,
            requested: n,
        })
    }
}

/// Aggregate retrieved next actions into a distribution over the available
/// action set. Retrieved next actions outside the set are dropped before
/// normalization; if everything drops, the KB is silent for this step.
pub fn next_action_distribution(
    result: &RetrievalResult,
    kb: &KnowledgeBase,
    available: &[String],
) -> Result<ActionDistribution> {
    if result.hits.is_empty() {
        return Err(Error::KbSilent);
    }
    let mut counts = vec![0usize; available.len()];
    let mut total = 0usize;
    for (pos, _) in &result.hits {
        let next = &kb.records()[*pos].next_action;
        if let Some(i) = available.iter().position(|a| a == next) {
            counts[i] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::KbSilent);
    }
    let probs: Vec<f64> = counts.iter().map(|c| *c as f64 / total as f64).collect();
    ActionDistribution::new(available.to_vec(), probs)
}
