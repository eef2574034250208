//! LLM oracle: prompts, response parsing, clients, caching, and aggregation
//! of per-view confidences.
//!
//! For every training sample the pipeline queries the original text (view
//! index 0) and each augmented view (indices `1..=M`). The oracle label comes
//! from the original-text query; the aggregated confidence is the mean over
//! the augmented views.

pub mod cache;
pub mod confidence;
pub mod http;
pub mod prompt;
pub mod simulated;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rayon::prelude::*;

use crate::augment::{Augmentation, Augmenter};
use crate::corpus::{ClassSet, Dataset, Sample};
use crate::error::{LaftError, Result};
use crate::rng;

pub use cache::{cache_key, OracleCache, OracleRecord};
pub use confidence::{aggregate_confidences, llm_label, ConfidenceVector};
pub use http::HttpOracle;
pub use prompt::{build_prompt, parse_response, render_response};
pub use simulated::{simulated_oracle, SimulatedOracle};

pub struct OracleRequest<'a> {
    pub sample: &'a Sample,
    pub classes: &'a ClassSet,
    pub view_index: usize,
    pub prompt: &'a str,
}

pub trait OracleClient: Send + Sync {
    fn model_id(&self) -> &str;
    /// Raw response text for one prompt.
    fn complete(&self, req: &OracleRequest<'_>) -> Result<String>;
}

/// Client that only answers from the cache; every call is a miss.
#[derive(Debug, Clone)]
pub struct CacheOnly {
    model_id: String,
}

impl CacheOnly {
    pub fn new(model_id: impl Into<String>) -> Self {
        CacheOnly {
            model_id: model_id.into(),
        }
    }
}

impl OracleClient for CacheOnly {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &OracleRequest<'_>) -> Result<String> {
        Err(LaftError::OracleUnavailable {
            sample_id: req.sample.id.clone(),
            view: req.view_index,
            reason: "not in cache and no client configured".into(),
        })
    }
}

/// Wraps a client and counts calls that reach it.
pub struct CountingClient<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: OracleClient> CountingClient<C> {
    pub fn new(inner: C) -> Self {
        CountingClient {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: OracleClient> OracleClient for CountingClient<C> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, req: &OracleRequest<'_>) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            base_delay: Duration::ZERO,
        }
    }
}

fn retryable(e: &LaftError) -> bool {
    matches!(e, LaftError::Transport(_) | LaftError::Parse(_))
}

/// One confidence vector per entry of `views`; `views[m]` is recorded as view `m`.
pub fn query_confidences(
    sample: &Sample,
    classes: &ClassSet,
    views: &[String],
    client: &dyn OracleClient,
    cache: &OracleCache,
    retry: &RetryPolicy,
) -> Result<Vec<ConfidenceVector>> {
    let model_id = client.model_id();
    views
        .iter()
        .enumerate()
        .map(|(m, text)| {
            let prompt = build_prompt(text, classes);
            if let Some(rec) = cache.get(model_id, &prompt)? {
                if rec.confidences.len() == classes.len() {
                    return Ok(rec.confidences);
                }
            }
            let req = OracleRequest {
                sample,
                classes,
                view_index: m,
                prompt: &prompt,
            };
            let mut last = String::new();
            for attempt in 0..retry.attempts.max(1) {
                if attempt > 0 {
                    std::thread::sleep(retry.base_delay * 2u32.pow(attempt - 1));
                }
                let outcome = client
                    .complete(&req)
                    .and_then(|raw| parse_response(&raw, classes).map(|c| (raw, c)));
                match outcome {
                    Ok((raw_response, confidences)) => {
                        cache.put(&OracleRecord {
                            sample_id: sample.id.clone(),
                            view_index: m,
                            prompt: prompt.clone(),
                            raw_response,
                            confidences: confidences.clone(),
                            model_id: model_id.to_string(),
                        })?;
                        return Ok(confidences);
                    }
                    Err(e) if retryable(&e) => last = e.to_string(),
                    Err(e) => return Err(e),
                }
            }
            Err(LaftError::OracleUnavailable {
                sample_id: sample.id.clone(),
                view: m,
                reason: last,
            })
        })
        .collect()
}

/// Oracle information for one training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    /// Argmax of the original-text confidences.
    pub llm_label: usize,
    pub original: ConfidenceVector,
    /// Mean over the augmented views.
    pub aggregated: ConfidenceVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleOutputs {
    by_id: HashMap<String, OracleOutput>,
}

impl OracleOutputs {
    pub fn insert(&mut self, id: impl Into<String>, out: OracleOutput) {
        self.by_id.insert(id.into(), out);
    }

    pub fn get(&self, id: &str) -> Option<&OracleOutput> {
        self.by_id.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&OracleOutput> {
        self.get(id).ok_or_else(|| LaftError::Missing {
            what: "oracle output",
            id: id.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn llm_labels(&self) -> HashMap<String, usize> {
        self.by_id.iter().map(|(k, v)| (k.clone(), v.llm_label)).collect()
    }

    pub fn aggregated(&self) -> HashMap<String, ConfidenceVector> {
        self.by_id
            .iter()
            .map(|(k, v)| (k.clone(), v.aggregated.clone()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub augmentations: Vec<Augmentation>,
    /// Seeds the augmentations; views of a sample depend on `(seed, sample id)`.
    pub seed: u64,
    /// Samples queried in parallel.
    pub fanout: usize,
    pub retry: RetryPolicy,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            augmentations: crate::augment::default_augmentations(),
            seed: 0,
            fanout: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Original text followed by the `M` augmented views.
pub fn query_texts(sample: &Sample, augmenter: &Augmenter, opts: &FetchOptions) -> Result<Vec<String>> {
    let seed = rng::derive(opts.seed, &[rng::hash_str(&sample.id)]);
    let mut texts = vec![sample.text.clone()];
    texts.extend(augmenter.make_views(&sample.text, &opts.augmentations, seed)?);
    Ok(texts)
}

pub fn fetch_oracle_outputs(
    d: &Dataset,
    augmenter: &Augmenter,
    opts: &FetchOptions,
    client: &dyn OracleClient,
    cache: &OracleCache,
) -> Result<OracleOutputs> {
    let run = || -> Result<Vec<(String, OracleOutput)>> {
        d.samples()
            .par_iter()
            .map(|s| {
                let texts = query_texts(s, augmenter, opts)?;
                let mut vs = query_confidences(s, d.classes(), &texts, client, cache, &opts.retry)?;
                let views = vs.split_off(1);
                let original = vs.pop().expect("original query");
                Ok((
                    s.id.clone(),
                    OracleOutput {
                        llm_label: llm_label(&original),
                        aggregated: aggregate_confidences(&views)?,
                        original,
                    },
                ))
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.fanout.max(1))
        .build()
        .map_err(|e| LaftError::InvalidArgument(format!("thread pool: {e}")))?;
    let pairs = pool.install(run)?;
    let mut out = OracleOutputs::default();
    for (id, o) in pairs {
        out.insert(id, o);
    }
    Ok(out)
}
