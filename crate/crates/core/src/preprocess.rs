//! Input preprocessing: gazetteer entity tagging, pronoun substitution over
//! recent turns, and detection of explicit user preferences.

use std::collections::HashMap;
use std::io::BufRead;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TopicRegistry;
use crate::error::{Error, Result};
use crate::lexicon::{token_spans, tokenize};

/// Number of previous turns searched for pronoun antecedents.
pub const PRONOUN_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Male,
    Female,
    Neuter,
    Plural,
}

impl FromStr for EntityClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(EntityClass::Male),
            "female" | "f" => Ok(EntityClass::Female),
            "neuter" | "n" | "thing" => Ok(EntityClass::Neuter),
            "plural" | "group" | "p" => Ok(EntityClass::Plural),
            other => Err(format!("unknown entity class `{other}`")),
        }
    }
}

fn pronoun_class(word: &str) -> Option<EntityClass> {
    match word {
        "he" | "him" => Some(EntityClass::Male),
        "she" | "her" => Some(EntityClass::Female),
        "it" => Some(EntityClass::Neuter),
        "they" | "them" => Some(EntityClass::Plural),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub canonical: String,
    pub topic: String,
    pub class: EntityClass,
}

/// Surface form (as a token sequence) to entity lookup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    entries: HashMap<String, GazetteerEntry>,
    max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTag {
    pub span: Range<usize>,
    pub canonical: String,
    pub topic: String,
    pub class: EntityClass,
}

impl Gazetteer {
    /// One neuter entity per registry label, named by its display form.
    pub fn from_registry(registry: &TopicRegistry) -> Self {
        let mut gaz = Gazetteer::default();
        for label in registry.labels() {
            let display = TopicRegistry::display(label);
            gaz.insert(
                &display,
                GazetteerEntry {
                    canonical: title_case(&display),
                    topic: label.to_string(),
                    class: EntityClass::Neuter,
                },
            );
        }
        gaz
    }

    /// Adds `surface<TAB>canonical<TAB>topic<TAB>class` lines. Topics must be
    /// registered.
    pub fn extend_from_reader<R: BufRead>(
        &mut self,
        reader: R,
        registry: &TopicRegistry,
        source_name: &str,
    ) -> Result<()> {
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [surface, canonical, topic, class] = cols[..] else {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "expected `surface<TAB>canonical<TAB>topic<TAB>class`",
                ));
            };
            if tokenize(surface).is_empty() || canonical.trim().is_empty() {
                return Err(Error::parse(source_name, lineno, "empty surface or canonical name"));
            }
            if !registry.contains(topic.trim()) {
                return Err(Error::parse(source_name, lineno, format!("unknown topic `{topic}`")));
            }
            let class = class
                .parse()
                .map_err(|e: String| Error::parse(source_name, lineno, e))?;
            self.insert(
                surface,
                GazetteerEntry {
                    canonical: canonical.trim().to_string(),
                    topic: topic.trim().to_string(),
                    class,
                },
            );
        }
        Ok(())
    }

    pub fn insert(&mut self, surface: &str, entry: GazetteerEntry) {
        let tokens = tokenize(surface);
        if tokens.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(tokens.len());
        self.entries.insert(tokens.join(" "), entry);
    }

    pub fn lookup(&self, surface: &str) -> Option<&GazetteerEntry> {
        self.entries.get(&tokenize(surface).join(" "))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Non-overlapping entity spans, longest match first, left to right.
    pub fn tag(&self, input: &str) -> Vec<EntityTag> {
        let spans = token_spans(input);
        let mut tags = Vec::new();
        let mut i = 0;
        while i < spans.len() {
            let longest = (1..=self.max_tokens.min(spans.len() - i)).rev().find_map(|len| {
                let key = spans[i..i + len]
                    .iter()
                    .map(|(_, t)| t.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                self.entries.get(&key).map(|e| (len, e))
            });
            match longest {
                Some((len, e)) => {
                    tags.push(EntityTag {
                        span: spans[i].0.start..spans[i + len - 1].0.end,
                        canonical: e.canonical.clone(),
                        topic: e.topic.clone(),
                        class: e.class,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        tags
    }
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(first) => first.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tag_entities(input: &str, gaz: &Gazetteer) -> Vec<EntityTag> {
    gaz.tag(input)
}

/// Replaces third-person pronouns with the most recent compatible entity
/// mentioned in the last [`PRONOUN_WINDOW`] turns of `history` (oldest first).
pub fn resolve_pronouns<S: AsRef<str>>(input: &str, history: &[S], gaz: &Gazetteer) -> String {
    let window_start = history.len().saturating_sub(PRONOUN_WINDOW);
    // most recent first: newest turn, rightmost mention
    let antecedents: Vec<EntityTag> = history[window_start..]
        .iter()
        .rev()
        .flat_map(|turn| gaz.tag(turn.as_ref()).into_iter().rev())
        .collect();
    if antecedents.is_empty() {
        return input.to_string();
    }

    let mut out = String::with_capacity(input.len());
    let mut last = 0;
    for (span, tok) in token_spans(input) {
        let Some(class) = pronoun_class(&tok) else {
            continue;
        };
        if let Some(ante) = antecedents.iter().find(|a| a.class == class) {
            out.push_str(&input[last..span.start]);
            out.push_str(&ante.canonical);
            last = span.end;
        }
    }
    out.push_str(&input[last..]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "topic", rename_all = "camelCase")]
pub enum UserSignal {
    Likes(String),
    Dislikes(String),
    /// `None` when the user asks to change topic without naming one.
    ChangeTopic(Option<String>),
}

const DISLIKE_TRIGGERS: &[&[&str]] = &[
    &["i", "hate"],
    &["i", "dislike"],
    &["i", "don't", "like"],
    &["i", "do", "not", "like"],
];
const LIKE_TRIGGERS: &[&[&str]] = &[
    &["i", "like"],
    &["i", "love"],
    &["i", "really", "like"],
    &["i", "really", "love"],
];
const TALK_TRIGGERS: &[&[&str]] = &[&["talk", "about"], &["chat", "about"]];
const CHANGE_TRIGGERS: &[&[&str]] = &[&["change", "the", "topic"], &["change", "topic"]];

/// Detects explicit preference and topic-change statements. The object must
/// name a registered topic, except for a bare "change the topic".
pub fn extract_signals(input: &str, registry: &TopicRegistry) -> Option<UserSignal> {
    let tokens = tokenize(input);

    if let Some(rest) = after_trigger(&tokens, CHANGE_TRIGGERS) {
        let target = match rest {
            [to, tail @ ..] if to == "to" => resolve_prefix(tail, registry),
            _ => None,
        };
        return Some(UserSignal::ChangeTopic(target));
    }
    if let Some(rest) = after_trigger(&tokens, TALK_TRIGGERS) {
        return resolve_prefix(rest, registry).map(|t| UserSignal::ChangeTopic(Some(t)));
    }
    if let Some(rest) = after_trigger(&tokens, DISLIKE_TRIGGERS) {
        return resolve_prefix(rest, registry).map(UserSignal::Dislikes);
    }
    if let Some(rest) = after_trigger(&tokens, LIKE_TRIGGERS) {
        return resolve_prefix(rest, registry).map(UserSignal::Likes);
    }
    None
}

fn after_trigger<'a>(tokens: &'a [String], triggers: &[&[&str]]) -> Option<&'a [String]> {
    (0..tokens.len()).find_map(|start| {
        triggers.iter().find_map(|trig| {
            let end = start + trig.len();
            (end <= tokens.len() && tokens[start..end].iter().zip(trig.iter()).all(|(a, b)| a == b))
                .then(|| &tokens[end..])
        })
    })
}

/// Longest prefix of `tokens` naming a registered topic.
fn resolve_prefix(tokens: &[String], registry: &TopicRegistry) -> Option<String> {
    (1..=tokens.len())
        .rev()
        .find_map(|len| registry.resolve(&tokens[..len].join(" ")).map(str::to_string))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedInput {
    pub raw: String,
    pub resolved: String,
    pub entities: Vec<EntityTag>,
    pub signal: Option<UserSignal>,
}

pub fn preprocess<S: AsRef<str>>(
    raw: &str,
    history: &[S],
    gaz: &Gazetteer,
    registry: &TopicRegistry,
) -> ProcessedInput {
    ProcessedInput {
        raw: raw.to_string(),
        resolved: resolve_pronouns(raw, history, gaz),
        entities: gaz.tag(raw),
        signal: extract_signals(raw, registry),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn registry() -> TopicRegistry {
        TopicRegistry::load(
            "movies\tstar wars|fast and furious\nmusic\tthe beatles|rock\n".as_bytes(),
            "topics",
        )
        .unwrap()
    }

    fn gazetteer() -> Gazetteer {
        let reg = registry();
        let mut gaz = Gazetteer::from_registry(&reg);
        let entities = "david bowie\tDavid Bowie\tmusic\tmale\n\
                        bowie\tDavid Bowie\tmusic\tmale\n\
                        lady gaga\tLady Gaga\tmusic\tfemale\n\
                        fast and furious\tFast & Furious\tfast_and_furious\tneuter\n\
                        fast\tFast Company\tmovies\tneuter\n\
                        the beatles\tThe Beatles\tthe_beatles\tplural\n\
                        guns and roses\tGuns N' Roses\tmusic\tplural\n";
        gaz.extend_from_reader(entities.as_bytes(), &reg, "entities").unwrap();
        gaz
    }

    #[test]
    fn pronoun_replaced_by_recent_entity() {
        let gaz = gazetteer();
        let history = ["Who do you like?", "I love David Bowie"];
        assert_eq!(resolve_pronouns("he passed away", &history, &gaz), "David Bowie passed away");
    }

    #[test]
    fn pronoun_uses_compatible_class_and_recency() {
        let gaz = gazetteer();
        let history = ["I love David Bowie", "and Lady Gaga", "the beatles too"];
        assert_eq!(
            resolve_pronouns("is he better than her or them", &history, &gaz),
            "is David Bowie better than Lady Gaga or The Beatles"
        );
    }

    #[test]
    fn only_last_four_turns_are_searched() {
        let gaz = gazetteer();
        let history = ["David Bowie", "a", "b", "c", "d"];
        assert_eq!(resolve_pronouns("he is great", &history, &gaz), "he is great");
    }

    #[test]
    fn unchanged_without_entities_or_pronouns() {
        let gaz = gazetteer();
        assert_eq!(resolve_pronouns("he left", &["nothing here"], &gaz), "he left");
        assert_eq!(
            resolve_pronouns("music is fun", &["I love David Bowie"], &gaz),
            "music is fun"
        );
    }

    #[test]
    fn longest_match_tagging() {
        let gaz = gazetteer();
        let tags = tag_entities("fast and furious is fun", &gaz);
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].span, 0..16);
        assert_eq!(tags[0].canonical, "Fast & Furious");
        assert_eq!(tags[0].topic, "fast_and_furious");
        assert!(tag_entities("", &gaz).is_empty());
    }

    #[test]
    fn adjacent_entities_both_tagged() {
        let gaz = gazetteer();
        let text = "david bowie lady gaga";
        let tags = tag_entities(text, &gaz);
        let names: Vec<_> = tags.iter().map(|t| t.canonical.as_str()).collect();
        assert_eq!(names, vec!["David Bowie", "Lady Gaga"]);
        assert_eq!(&text[tags[0].span.clone()], "david bowie");
        assert_eq!(&text[tags[1].span.clone()], "lady gaga");
    }

    #[test]
    fn entity_file_errors() {
        let reg = registry();
        let mut gaz = Gazetteer::default();
        assert!(gaz
            .extend_from_reader("x\tX\tjazz\tmale\n".as_bytes(), &reg, "e")
            .is_err());
        assert!(gaz
            .extend_from_reader("x\tX\tmusic\twizard\n".as_bytes(), &reg, "e")
            .is_err());
        assert!(gaz.extend_from_reader("x\tX\n".as_bytes(), &reg, "e").is_err());
    }

    #[test]
    fn signal_templates() {
        let reg = registry();
        assert_eq!(
            extract_signals("let's talk about star wars", &reg),
            Some(UserSignal::ChangeTopic(Some("star_wars".into())))
        );
        assert_eq!(
            extract_signals("I love the Beatles!", &reg),
            Some(UserSignal::Likes("the_beatles".into()))
        );
        assert_eq!(
            extract_signals("i don't like rock music", &reg),
            Some(UserSignal::Dislikes("rock".into()))
        );
        assert_eq!(
            extract_signals("can we change the topic", &reg),
            Some(UserSignal::ChangeTopic(None))
        );
        assert_eq!(
            extract_signals("change the topic to movies please", &reg),
            Some(UserSignal::ChangeTopic(Some("movies".into())))
        );
        assert_eq!(extract_signals("the weather is nice", &reg), None);
        assert_eq!(extract_signals("i love sandwiches", &reg), None);
    }

    fn arb_sentence() -> impl Strategy<Value = String> {
        let words = prop::sample::select(vec![
            "he", "she", "it", "they", "him", "her", "them", "is", "great", "david", "bowie",
            "lady", "gaga", "the", "beatles", "music", "fast", "and", "furious", "was", "i",
            "think", "star", "wars", "sad", "love", "talk", "about",
        ]);
        prop::collection::vec(words, 0..10).prop_map(|w| w.join(" "))
    }

    const TRIGGERS: &[&str] = &["like", "love", "hate", "dislike", "talk", "chat", "topic"];

    proptest! {
        #[test]
        fn resolution_is_idempotent(input in arb_sentence(), history in prop::collection::vec(arb_sentence(), 0..6)) {
            let gaz = gazetteer();
            let once = resolve_pronouns(&input, &history, &gaz);
            prop_assert_eq!(resolve_pronouns(&once, &history, &gaz), once);
        }

        #[test]
        fn spans_do_not_overlap_and_reconstruct(input in arb_sentence()) {
            let gaz = gazetteer();
            let tags = gaz.tag(&input);
            let mut rebuilt = String::new();
            let mut last = 0;
            for t in &tags {
                prop_assert!(t.span.start >= last);
                rebuilt.push_str(&input[last..t.span.start]);
                rebuilt.push_str(&input[t.span.clone()]);
                last = t.span.end;
            }
            rebuilt.push_str(&input[last..]);
            prop_assert_eq!(rebuilt, input);
        }

        #[test]
        fn no_signal_without_trigger_words(input in arb_sentence()) {
            let tokens = tokenize(&input);
            prop_assume!(!tokens.iter().any(|t| TRIGGERS.contains(&t.as_str())));
            prop_assert_eq!(extract_signals(&input, &registry()), None);
        }
    }
}
