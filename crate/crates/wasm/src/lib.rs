//! Browser demo over the embedded fixture data.
//!
//! Three operations: a per-candidate breakdown of the matching score, the
//! temperature-adjusted next-token distribution, and a chat session. Results
//! cross the boundary as JSON strings; the page parses them.

use selftalk_core::dialogue_manager::{Engine, SessionState};
use selftalk_core::fixtures;
use selftalk_core::generator::apply_temperature;
use selftalk_core::match_index::{QueryContext, ScoringParams, SubScores};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Candidate {
    pub response: String,
    pub context: Option<String>,
    pub topic: String,
    pub score: f64,
    pub confidence: f64,
    pub sub: SubScores,
    /// Which stage would act on this confidence.
    pub gate: &'static str,
}

fn gate(confidence: f64, params: &ScoringParams) -> &'static str {
    if confidence >= params.priority_threshold {
        "replies before likes/dislikes"
    } else if confidence >= params.respond_threshold {
        "candidate after likes/dislikes"
    } else {
        "below the response floor"
    }
}

/// Top `k` fixture candidates for an utterance.
pub fn score_candidates(
    engine: &Engine,
    utterance: &str,
    previous: Option<&str>,
    topic: Option<&str>,
    k: usize,
) -> Result<Vec<Candidate>, String> {
    let mut q = QueryContext::new(utterance).map_err(|e| e.to_string())?;
    if let Some(p) = previous.filter(|p| !p.trim().is_empty()) {
        q = q.with_previous(p);
    }
    if let Some(t) = topic.filter(|t| !t.trim().is_empty()) {
        q = q.with_topic(t);
    }
    let params = engine.config().params;
    let results = engine.index().query(&q, &params, k).map_err(|e| e.to_string())?;
    Ok(results
        .into_iter()
        .map(|r| Candidate {
            gate: gate(r.confidence, &params),
            response: r.entry.response,
            context: r.entry.context1,
            topic: r.entry.topic,
            score: r.score,
            confidence: r.confidence,
            sub: r.sub,
        })
        .collect())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serialises")
}

/// Holds the fixture engine and one chat session.
#[wasm_bindgen]
pub struct Demo {
    engine: Engine,
    session: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoReply {
    pub reply: String,
    pub component: String,
    pub confidence: Option<f64>,
    pub topic: Option<String>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        let engine = fixtures::engine()?;
        let session = engine.start_session("demo", seed.into());
        Ok(Demo { engine, session })
    }

    pub fn greeting(&self) -> String {
        self.session.transcript[0].raw.clone()
    }

    /// Restarts the chat with a new seed.
    pub fn reset(&mut self, seed: u32) {
        self.session = self.engine.start_session("demo", seed.into());
    }

    /// JSON `{reply, component, confidence, topic}`.
    pub fn send(&mut self, utterance: &str) -> Result<String, JsError> {
        Ok(to_json(&self.reply(utterance)?))
    }

    /// JSON array of the top candidates with their score terms.
    pub fn score(&self, utterance: &str, previous: &str, topic: &str, k: u32) -> Result<String, JsError> {
        let c = score_candidates(&self.engine, utterance, Some(previous), Some(topic), k as usize)
            .map_err(|e| JsError::new(&e))?;
        Ok(to_json(&c))
    }

    /// Fixture topic labels, JSON array.
    pub fn topics(&self) -> String {
        to_json(&self.engine.parts().registry.labels().collect::<Vec<_>>())
    }
}

impl Demo {
    pub fn reply(&mut self, utterance: &str) -> Result<DemoReply, selftalk_core::Error> {
        let r = self.engine.respond(&mut self.session, utterance)?;
        Ok(DemoReply {
            reply: r.text,
            component: r.component.tag().to_string(),
            confidence: r.confidence,
            topic: self.session.current_topic.clone(),
        })
    }
}

/// The distribution `p^(1/T)` renormalised, as JSON. `probs` need not sum to one.
#[wasm_bindgen]
pub fn temperature_distribution(probs: Vec<f64>, temperature: f64) -> Result<String, JsError> {
    let d = temperature_adjusted(&probs, temperature).map_err(|e| JsError::new(&e))?;
    Ok(to_json(&d))
}

pub fn temperature_adjusted(probs: &[f64], temperature: f64) -> Result<Vec<f64>, String> {
    if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("probabilities must be non-negative numbers".into());
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err("at least one probability must be positive".into());
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err("temperature must be positive".into());
    }
    let normalised: Vec<f64> = probs.iter().map(|p| p / total).collect();
    Ok(apply_temperature(&normalised, temperature))
}
