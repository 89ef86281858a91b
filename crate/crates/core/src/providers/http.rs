//! Blocking HTTP clients for the NLI, embedding and decomposition services.
//!
//! Wire formats:
//! - `POST {endpoint}/nli`   `{"pairs":[{"premise":..,"hypothesis":..}]}` -> `{"logits":[[e,c,n],..]}`
//! - `POST {endpoint}/embed` `{"texts":[..]}` -> `{"vectors":[[..],..],"dim":D}`
//! - `POST {endpoint}/chat`  `{"messages":[{"role":..,"content":..}]}` -> text, one fact per line
//!
//! Requests are split into `batch_size` chunks, at most `max_in_flight` of
//! which are outstanding at once. Transport failures and non-2xx statuses
//! are retried with exponential backoff.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    check_pairs, check_vectors, few_shot_messages, parse_fact_lines, ChatMessage, Decomposer,
    Embedder, EmbeddingVector, NliLogits, NliPair, NliProvider, ProviderConfig,
};
use crate::error::ProviderError;

struct Client {
    name: &'static str,
    config: ProviderConfig,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

impl Client {
    fn new(name: &'static str, config: ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name,
            config,
            agent,
            requests: AtomicUsize::new(0),
        }
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.config.endpoint.trim_end_matches('/'))
    }

    fn token(&self) -> Option<String> {
        if self.config.auth_env_var.is_empty() {
            return None;
        }
        std::env::var(&self.config.auth_env_var)
            .ok()
            .filter(|t| !t.is_empty())
    }

    /// POST a JSON body and return the 2xx response text, retrying on
    /// transport errors and non-2xx statuses.
    fn post(&self, route: &str, body: &impl Serialize) -> Result<String, ProviderError> {
        let url = self.url(route);
        let max = self.config.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=max {
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut request = self.agent.post(&url);
            if let Some(token) = self.token() {
                request = request.header("Authorization", &format!("Bearer {token}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    let status = response.status();
                    let text = response.body_mut().read_to_string();
                    match (status.is_success(), text) {
                        (true, Ok(text)) => return Ok(text),
                        (true, Err(e)) => last_error = format!("reading body: {e}"),
                        (false, _) => last_error = format!("HTTP status {}", status.as_u16()),
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
            if attempt < max {
                std::thread::sleep(self.config.retry.backoff(attempt));
            }
        }
        Err(ProviderError::Transport {
            provider: self.name,
            attempts: max,
            message: last_error,
        })
    }

    fn post_json<T: DeserializeOwned>(
        &self,
        route: &str,
        body: &impl Serialize,
    ) -> Result<T, ProviderError> {
        let text = self.post(route, body)?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Protocol {
            provider: self.name,
            message: format!("bad response body: {e}"),
        })
    }

    /// Run `call` over `batch_size` chunks of `items` with bounded concurrency,
    /// reassembling results in input order.
    fn batched<I, O, F>(&self, items: &[I], call: F) -> Result<Vec<O>, ProviderError>
    where
        I: Sync,
        O: Send,
        F: Fn(&[I]) -> Result<Vec<O>, ProviderError> + Sync,
    {
        let chunks: Vec<&[I]> = items.chunks(self.config.batch_size.max(1)).collect();
        if chunks.len() <= 1 {
            return chunks.first().map_or(Ok(Vec::new()), |c| call(c));
        }
        type Slot<O> = Mutex<Option<Result<Vec<O>, ProviderError>>>;
        let slots: Vec<Slot<O>> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.max(1).min(chunks.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let result = call(chunks[i]);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(items.len());
        for slot in slots {
            out.extend(slot.into_inner().unwrap().expect("every chunk ran")?);
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct NliRequestPair<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Serialize)]
struct NliRequest<'a> {
    pairs: Vec<NliRequestPair<'a>>,
}

#[derive(Deserialize)]
struct NliResponse {
    logits: Vec<[f64; 3]>,
}

pub struct HttpNli {
    client: Client,
}

impl HttpNli {
    pub fn new(config: ProviderConfig) -> Self {
        Self {
            client: Client::new("nli", config),
        }
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests(&self) -> usize {
        self.client.requests.load(Ordering::Relaxed)
    }
}

impl NliProvider for HttpNli {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        check_pairs("nli", pairs)?;
        self.client.batched(pairs, |chunk| {
            let body = NliRequest {
                pairs: chunk
                    .iter()
                    .map(|(p, h)| NliRequestPair {
                        premise: p,
                        hypothesis: h,
                    })
                    .collect(),
            };
            let response: NliResponse = self.client.post_json("nli", &body)?;
            if response.logits.len() != chunk.len() {
                return Err(ProviderError::Protocol {
                    provider: "nli",
                    message: format!(
                        "arity mismatch: {} logit triples for {} pairs",
                        response.logits.len(),
                        chunk.len()
                    ),
                });
            }
            let logits: Vec<NliLogits> = response.logits.into_iter().map(NliLogits::from_array).collect();
            if logits.iter().any(|l| !l.is_finite()) {
                return Err(ProviderError::Protocol {
                    provider: "nli",
                    message: "non-finite logits".into(),
                });
            }
            Ok(logits)
        })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

pub struct HttpEmbedder {
    client: Client,
    dim: Mutex<Option<usize>>,
}

impl HttpEmbedder {
    pub fn new(config: ProviderConfig) -> Self {
        Self {
            client: Client::new("embed", config),
            dim: Mutex::new(None),
        }
    }

    pub fn requests(&self) -> usize {
        self.client.requests.load(Ordering::Relaxed)
    }
}

impl Embedder for HttpEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let vectors = self.client.batched(texts, |chunk| {
            let response: EmbedResponse = self.client.post_json("embed", &EmbedRequest { texts: chunk })?;
            if response.vectors.len() != chunk.len() {
                return Err(ProviderError::Protocol {
                    provider: "embed",
                    message: format!(
                        "arity mismatch: {} vectors for {} texts",
                        response.vectors.len(),
                        chunk.len()
                    ),
                });
            }
            let vectors: Vec<EmbeddingVector> =
                response.vectors.into_iter().map(EmbeddingVector).collect();
            check_vectors("embed", &vectors, Some(response.dim))?;
            Ok(vectors)
        })?;
        // The dimension is fixed by the first successful response of the run.
        let mut dim = self.dim.lock().unwrap();
        check_vectors("embed", &vectors, *dim)?;
        if dim.is_none() {
            *dim = vectors.first().map(EmbeddingVector::dim);
        }
        Ok(vectors)
    }
}

#[derive(Serialize)]
struct ChatRequest {
    messages: Vec<ChatMessage>,
}

pub struct HttpDecomposer {
    client: Client,
}

impl HttpDecomposer {
    pub fn new(config: ProviderConfig) -> Self {
        Self {
            client: Client::new("decompose", config),
        }
    }

    pub fn requests(&self) -> usize {
        self.client.requests.load(Ordering::Relaxed)
    }
}

/// The chat response is either plain text or a JSON object whose `content`
/// field holds the text.
fn chat_text(body: &str) -> String {
    match serde_json::from_str::<Value>(body) {
        Ok(Value::Object(obj)) => match obj.get("content") {
            Some(Value::String(s)) => s.clone(),
            _ => body.to_string(),
        },
        _ => body.to_string(),
    }
}

impl Decomposer for HttpDecomposer {
    fn decompose(&self, sentence: &str, prompt_context: &str) -> Result<Vec<String>, ProviderError> {
        if sentence.trim().is_empty() {
            return Err(ProviderError::InvalidInput {
                provider: "decompose",
                message: "empty sentence".into(),
            });
        }
        let body = ChatRequest {
            messages: few_shot_messages(sentence, prompt_context),
        };
        let text = self.client.post("chat", &body)?;
        let facts = parse_fact_lines(&chat_text(&text));
        if facts.is_empty() {
            return Err(ProviderError::Protocol {
                provider: "decompose",
                message: "response contained no facts".into(),
            });
        }
        Ok(facts)
    }
}
