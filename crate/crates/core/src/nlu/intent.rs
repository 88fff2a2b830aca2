//! Word embeddings, mean word vectors and the 1-nearest-neighbor intent
//! classifier.

use std::collections::{BTreeSet, HashMap};

use serde::Deserialize;
use thiserror::Error;

use crate::dialog::IntentId;
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn new(dimension: usize) -> Self {
        Embeddings { dimension, table: HashMap::new() }
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<(), ConfigError> {
        if vector.len() != self.dimension {
            return Err(ConfigError::Invalid(format!(
                "vector for {word:?} has dimension {}, expected {}",
                vector.len(),
                self.dimension
            )));
        }
        self.table.insert(word.to_lowercase(), vector);
        Ok(())
    }

    /// Text format: header "<vocab_size> <dimension>", then "word v1 .. vn"
    /// per line.
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(ConfigError::Parse { line: 1, message: "missing header".into() })?;
        let mut head = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(vocab)), Some(Ok(dimension)), None) = (head.next(), head.next(), head.next()) else {
            return Err(ConfigError::Parse { line: 1, message: "header must be \"<vocab_size> <dimension>\"".into() });
        };
        if dimension == 0 {
            return Err(ConfigError::Parse { line: 1, message: "dimension must be positive".into() });
        }
        let mut emb = Embeddings::new(dimension);
        for (idx, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default();
            let vector: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vector = vector.map_err(|e| ConfigError::Parse { line: idx + 1, message: e.to_string() })?;
            if vector.len() != dimension {
                return Err(ConfigError::Parse {
                    line: idx + 1,
                    message: format!("expected {dimension} components, found {}", vector.len()),
                });
            }
            emb.table.insert(word.to_lowercase(), vector);
        }
        if emb.table.len() != vocab {
            return Err(ConfigError::Parse {
                line: 1,
                message: format!("header declares {vocab} words, file has {}", emb.table.len()),
            });
        }
        Ok(emb)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.table.get(&word.to_lowercase()).map(Vec::as_slice)
    }
}

/// Arithmetic mean of the in-vocabulary token vectors.
pub fn mean_vector<S: AsRef<str>>(tokens: &[S], embeddings: &Embeddings) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; embeddings.dimension()];
    let mut n = 0usize;
    for v in tokens.iter().filter_map(|t| embeddings.get(t.as_ref())) {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub text: String,
    pub vector: Vec<f64>,
    pub intent: IntentId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    dimension: usize,
    samples: Vec<Sample>,
}

#[derive(Debug, Deserialize)]
struct TrainRecord {
    text: String,
    intent_class: String,
}

impl TrainingSet {
    pub fn new(dimension: usize, samples: Vec<Sample>) -> Result<Self, ConfigError> {
        if let Some(s) = samples.iter().find(|s| s.vector.len() != dimension) {
            return Err(ConfigError::Invalid(format!(
                "sample {:?} has dimension {}, expected {dimension}",
                s.text,
                s.vector.len()
            )));
        }
        Ok(TrainingSet { dimension, samples })
    }

    /// One JSON record per line: `{"text": ..., "intent_class": ...}`. Each
    /// text is embedded as its L2-normalized mean word vector.
    pub fn from_jsonl(src: &str, embeddings: &Embeddings) -> Result<Self, ConfigError> {
        let mut samples = Vec::new();
        for (idx, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TrainRecord =
                serde_json::from_str(line).map_err(|e| ConfigError::Parse { line: idx + 1, message: e.to_string() })?;
            let vector = embed(&rec.text, embeddings).ok_or_else(|| ConfigError::Parse {
                line: idx + 1,
                message: format!("no in-vocabulary token in {:?}", rec.text),
            })?;
            samples.push(Sample { text: rec.text, vector, intent: IntentId::new(rec.intent_class) });
        }
        TrainingSet::new(embeddings.dimension(), samples)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn classes(&self) -> BTreeSet<&IntentId> {
        self.samples.iter().map(|s| &s.intent).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// L2-normalized mean word vector of `text`.
pub fn embed(text: &str, embeddings: &Embeddings) -> Option<Vec<f64>> {
    let tokens = super::topic::words(text);
    let mut v = mean_vector(&tokens, embeddings)?;
    normalize(&mut v);
    Some(v)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("dimension mismatch: query has {got}, training set has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub intent: IntentId,
    pub distance: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Class of the Euclidean-nearest sample. Equal distances go to the
/// lexicographically smallest class id.
pub fn classify_intent(vector: &[f64], trainset: &TrainingSet) -> Result<Classification, ClassifyError> {
    if vector.len() != trainset.dimension {
        return Err(ClassifyError::DimensionMismatch { expected: trainset.dimension, got: vector.len() });
    }
    trainset
        .samples
        .iter()
        .map(|s| (euclidean(vector, &s.vector), &s.intent))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(distance, intent)| Classification { intent: intent.clone(), distance })
        .ok_or(ClassifyError::EmptyTrainingSet)
}
