//! Rule-based replies and the likes/dislikes template path.
//!
//! Patterns are a small whole-utterance language over normalised tokens:
//!
//! * literal words match themselves;
//! * `*` matches zero or more words and is captured (`<star>`, `<star1>`, ...);
//! * `(a|b c)` matches one of its alternatives, each one or more words.
//!
//! When several rules match, sensitive rules win, then the rule whose
//! wildcards consumed the fewest tokens, then the earliest rule.

use std::collections::HashMap;
use std::io::BufRead;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::tokenize;
use crate::preprocess::EntityTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RuleCategory {
    Identity,
    Sensitive,
    TopicShift,
    Engagement,
}

impl FromStr for RuleCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "identity" => Ok(RuleCategory::Identity),
            "sensitive" => Ok(RuleCategory::Sensitive),
            "topicshift" => Ok(RuleCategory::TopicShift),
            "engagement" => Ok(RuleCategory::Engagement),
            other => Err(format!("unknown rule category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Element {
    Word(String),
    Star,
    OneOf(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    source: String,
    elements: Vec<Element>,
}

impl Pattern {
    pub fn parse(source: &str) -> std::result::Result<Self, String> {
        let mut elements = Vec::new();
        let mut rest = source;
        while !rest.is_empty() {
            if let Some(open) = rest.find(['(', ')']) {
                if rest.as_bytes()[open] == b')' {
                    return Err("unbalanced `)`".into());
                }
                push_words(&rest[..open], &mut elements);
                let after = &rest[open + 1..];
                let close = after.find(')').ok_or("unclosed `(`")?;
                let body = &after[..close];
                if body.contains('(') {
                    return Err("nested alternation is not supported".into());
                }
                let alts: Vec<Vec<String>> = body.split('|').map(tokenize).collect();
                if alts.iter().any(Vec::is_empty) {
                    return Err("empty alternative".into());
                }
                elements.push(Element::OneOf(alts));
                rest = &after[close + 1..];
            } else {
                push_words(rest, &mut elements);
                rest = "";
            }
        }
        if elements.is_empty() {
            return Err("empty pattern".into());
        }
        Ok(Self {
            source: source.trim().to_lowercase(),
            elements,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn wildcards(&self) -> usize {
        self.elements.iter().filter(|e| matches!(e, Element::Star)).count()
    }

    pub fn is_literal(&self) -> bool {
        self.elements.iter().all(|e| matches!(e, Element::Word(_)))
    }

    /// Whole-utterance match. Returns the number of tokens consumed by
    /// wildcards (minimised) and the captured text of each wildcard.
    pub fn matches(&self, tokens: &[String]) -> Option<(usize, Vec<String>)> {
        let m = self.elements.len();
        let n = tokens.len();
        let mut memo: Vec<Option<Option<usize>>> = vec![None; (m + 1) * (n + 1)];
        let best = self.best(0, 0, tokens, &mut memo)?;

        let mut captures = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < m {
            match &self.elements[i] {
                Element::Word(_) => j += 1,
                Element::OneOf(alts) => {
                    let remaining = self.best_cached(i, j, &memo);
                    let alt = alts
                        .iter()
                        .find(|a| {
                            starts_with(&tokens[j..], a)
                                && self.best_cached(i + 1, j + a.len(), &memo) == remaining
                        })
                        .expect("alignment exists");
                    j += alt.len();
                }
                Element::Star => {
                    let remaining = self.best_cached(i, j, &memo).expect("alignment exists");
                    let len = (0..=n - j)
                        .find(|&len| self.best_cached(i + 1, j + len, &memo) == Some(remaining - len))
                        .expect("alignment exists");
                    captures.push(tokens[j..j + len].join(" "));
                    j += len;
                }
            }
            i += 1;
        }
        Some((best, captures))
    }

    fn best_cached(&self, i: usize, j: usize, memo: &[Option<Option<usize>>]) -> Option<usize> {
        memo[i * (memo.len() / (self.elements.len() + 1)) + j].flatten()
    }

    fn best(
        &self,
        i: usize,
        j: usize,
        tokens: &[String],
        memo: &mut Vec<Option<Option<usize>>>,
    ) -> Option<usize> {
        let n = tokens.len();
        let slot = i * (n + 1) + j;
        if let Some(cached) = memo[slot] {
            return cached;
        }
        let result = if i == self.elements.len() {
            (j == n).then_some(0)
        } else {
            match &self.elements[i] {
                Element::Word(w) => {
                    if j < n && &tokens[j] == w {
                        self.best(i + 1, j + 1, tokens, memo)
                    } else {
                        None
                    }
                }
                Element::OneOf(alts) => alts
                    .iter()
                    .filter(|a| starts_with(&tokens[j..], a))
                    .filter_map(|a| self.best(i + 1, j + a.len(), tokens, memo))
                    .min(),
                Element::Star => (0..=n - j)
                    .filter_map(|len| self.best(i + 1, j + len, tokens, memo).map(|b| b + len))
                    .min(),
            }
        };
        memo[slot] = Some(result);
        result
    }
}

fn starts_with(tokens: &[String], prefix: &[String]) -> bool {
    tokens.len() >= prefix.len() && tokens.iter().zip(prefix).all(|(a, b)| a == b)
}

fn push_words(text: &str, out: &mut Vec<Element>) {
    for raw in text.split_whitespace() {
        if raw == "*" {
            out.push(Element::Star);
        } else {
            out.extend(tokenize(raw).into_iter().map(Element::Word));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub pattern: Pattern,
    pub category: RuleCategory,
    pub responses: Vec<String>,
    /// Line of the rule in its source file, 0 when built in code.
    pub line: usize,
}

impl Rule {
    pub fn new(pattern: &str, category: RuleCategory, responses: &[&str]) -> Result<Self> {
        let rule = Rule {
            pattern: Pattern::parse(pattern).map_err(Error::InvalidArgument)?,
            category,
            responses: responses.iter().map(|r| r.to_string()).collect(),
            line: 0,
        };
        rule.check().map_err(Error::InvalidArgument)?;
        Ok(rule)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.responses.is_empty() || self.responses.iter().any(|r| r.trim().is_empty()) {
            return Err("rule needs at least one non-empty response".into());
        }
        let stars = self.pattern.wildcards();
        for r in &self.responses {
            for slot in star_refs(r) {
                if slot == 0 || slot > stars {
                    return Err(format!(
                        "response references <star{slot}> but the pattern has {stars} wildcard(s)"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Slot numbers referenced by `<star>` / `<starN>` in a template.
fn star_refs(template: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(pos) = rest.find("<star") {
        let after = &rest[pos + 5..];
        if let Some(end) = after.find('>') {
            let digits = &after[..end];
            if digits.is_empty() {
                out.push(1);
            } else if let Ok(n) = digits.parse() {
                out.push(n);
            }
            rest = &after[end + 1..];
        } else {
            break;
        }
    }
    out
}

fn fill_template(template: &str, captures: &[String]) -> String {
    let mut out = template.replace("<star>", captures.first().map_or("", String::as_str));
    for (i, cap) in captures.iter().enumerate() {
        out = out.replace(&format!("<star{}>", i + 1), cap);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub reply: String,
    pub category: RuleCategory,
    pub rule_index: usize,
    pub pattern: String,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    /// Reads `pattern<TAB>category<TAB>response[|response...]` lines.
    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [pattern, category, responses] = cols[..] else {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "expected `pattern<TAB>category<TAB>responses`",
                ));
            };
            let pattern = Pattern::parse(pattern)
                .map_err(|e| Error::parse(source_name, lineno, format!("pattern: {e}")))?;
            let category = category
                .parse()
                .map_err(|e: String| Error::parse(source_name, lineno, e))?;
            let rule = Rule {
                pattern,
                category,
                responses: responses.split('|').map(|r| r.trim().to_string()).collect(),
                line: lineno,
            };
            rule.check()
                .map_err(|e| Error::parse(source_name, lineno, e))?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// All response templates, for content audits.
    pub fn responses(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().flat_map(|r| r.responses.iter().map(String::as_str))
    }

    pub fn match_rule<R: Rng + ?Sized>(&self, input: &str, rng: &mut R) -> Option<RuleMatch> {
        let tokens = tokenize(input);
        if tokens.is_empty() {
            return None;
        }
        let (index, rule, captures) = self
            .rules
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.pattern.matches(&tokens).map(|(used, caps)| (i, r, used, caps)))
            .min_by_key(|(i, r, used, _)| (r.category != RuleCategory::Sensitive, *used, *i))
            .map(|(i, r, _, caps)| (i, r, caps))?;
        let template = &rule.responses[rng.random_range(0..rule.responses.len())];
        Some(RuleMatch {
            reply: fill_template(template, &captures),
            category: rule.category,
            rule_index: index,
            pattern: rule.pattern.source().to_string(),
        })
    }
}

pub fn match_rule<R: Rng + ?Sized>(input: &str, ruleset: &RuleSet, rng: &mut R) -> Option<RuleMatch> {
    ruleset.match_rule(input, rng)
}

/// Entity domains the likes/dislikes path may talk about.
pub const SAFE_DOMAINS: &[&str] = &[
    "actor", "actress", "band", "composer", "director", "musician", "rapper", "singer",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityFact {
    pub canonical: String,
    pub blurb: String,
    pub popularity: u64,
    pub domain: String,
}

impl EntityFact {
    pub fn is_safe(&self) -> bool {
        SAFE_DOMAINS.contains(&self.domain.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactStore {
    facts: HashMap<String, EntityFact>,
}

impl FactStore {
    /// Reads `canonical<TAB>domain<TAB>popularity<TAB>blurb` lines.
    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut store = FactStore::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [canonical, domain, popularity, blurb] = cols[..] else {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "expected `canonical<TAB>domain<TAB>popularity<TAB>blurb`",
                ));
            };
            let popularity = popularity
                .trim()
                .parse()
                .map_err(|_| Error::parse(source_name, lineno, "bad popularity"))?;
            if blurb.trim().is_empty() {
                return Err(Error::parse(source_name, lineno, "empty blurb"));
            }
            store.insert(EntityFact {
                canonical: canonical.trim().to_string(),
                blurb: blurb.trim().to_string(),
                popularity,
                domain: domain.trim().to_ascii_lowercase(),
            });
        }
        Ok(store)
    }

    pub fn insert(&mut self, fact: EntityFact) {
        self.facts.insert(fact.canonical.to_lowercase(), fact);
    }

    pub fn get(&self, canonical: &str) -> Option<&EntityFact> {
        self.facts.get(&canonical.to_lowercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityFact> {
        self.facts.values()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikesConfig {
    /// Facts at or above this popularity use the trending template.
    pub trending_popularity: u64,
}

impl Default for LikesConfig {
    fn default() -> Self {
        Self {
            trending_popularity: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikesReply {
    pub text: String,
    pub canonical: String,
    pub trending: bool,
}

/// Blurb plus an opinion question for the first tagged entity with a
/// safe-domain fact.
pub fn likes_dislikes(
    entities: &[EntityTag],
    facts: &FactStore,
    config: &LikesConfig,
) -> Option<LikesReply> {
    let fact = entities
        .iter()
        .filter_map(|e| facts.get(&e.canonical))
        .find(|f| f.is_safe())?;
    let trending = fact.popularity >= config.trending_popularity;
    let text = if trending {
        format!(
            "{} People have been talking about them a lot lately. What do you think about them?",
            fact.blurb
        )
    } else {
        format!("{} What do you think about them?", fact.blurb)
    };
    Some(LikesReply {
        text,
        canonical: fact.canonical.clone(),
        trending,
    })
}
