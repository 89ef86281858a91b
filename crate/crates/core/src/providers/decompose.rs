//! Atomic-fact decomposition helpers: the few-shot chat prompt, the
//! line-per-fact response parser, and a deterministic rule-based splitter
//! used as fallback and as the offline decomposer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

const INSTRUCTION: &str = "Break the sentence into independent atomic facts. \
Each fact must be a short, self-contained statement that can be checked on its own. \
Resolve pronouns to the entity they refer to. \
Write one fact per line, each starting with \"- \". Do not add information that is not in the sentence.";

const DEMOS: &[(&str, &[&str])] = &[
    (
        "Marie Curie was a physicist and chemist who conducted pioneering research on radioactivity.",
        &[
            "Marie Curie was a physicist.",
            "Marie Curie was a chemist.",
            "Marie Curie conducted pioneering research on radioactivity.",
        ],
    ),
    (
        "Born in Warsaw in 1867, she moved to Paris in 1891.",
        &[
            "She was born in Warsaw.",
            "She was born in 1867.",
            "She moved to Paris.",
            "She moved to Paris in 1891.",
        ],
    ),
    (
        "The bridge opened in 1937.",
        &["The bridge opened in 1937."],
    ),
];

/// Chat messages for the decomposition endpoint: instruction, worked
/// examples, then the target sentence with its prompt as context.
pub fn few_shot_messages(sentence: &str, prompt_context: &str) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::new("system", INSTRUCTION)];
    for (demo, facts) in DEMOS {
        messages.push(ChatMessage::new("user", format!("Sentence: {demo}")));
        let lines: Vec<String> = facts.iter().map(|f| format!("- {f}")).collect();
        messages.push(ChatMessage::new("assistant", lines.join("\n")));
    }
    let user = if prompt_context.trim().is_empty() {
        format!("Sentence: {sentence}")
    } else {
        format!("Context: {prompt_context}\nSentence: {sentence}")
    };
    messages.push(ChatMessage::new("user", user));
    messages
}

/// One fact per non-blank line, leading "- " stripped.
pub fn parse_fact_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .map(|l| l.strip_prefix("- ").unwrap_or(l).trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

const SUBJECT_PRONOUNS: &[&str] = &["he", "she", "it", "they", "we", "i"];
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "his", "her", "its", "their", "our",
];
const PREPOSITIONS: &[&str] = &[
    "by", "in", "of", "at", "from", "with", "for", "to", "on", "as", "into", "under", "during",
];
const SEPARATORS: &[&str] = &[", and ", ", but ", "; ", " and ", " but "];

fn is_capitalized(token: &str) -> bool {
    token
        .chars()
        .find(|c| c.is_alphanumeric())
        .is_some_and(|c| c.is_uppercase())
}

fn lower(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Leading subject phrase of a clause, if one can be identified.
fn subject_of(clause: &str) -> Option<String> {
    let tokens: Vec<&str> = clause.split_whitespace().collect();
    let first = *tokens.first()?;
    let first_lower = lower(first);
    if SUBJECT_PRONOUNS.contains(&first_lower.as_str()) {
        return Some(first.to_string());
    }
    let mut end = if DETERMINERS.contains(&first_lower.as_str()) {
        2.min(tokens.len())
    } else if is_capitalized(first) {
        1
    } else {
        return None;
    };
    while end < tokens.len() && is_capitalized(tokens[end]) {
        end += 1;
    }
    let next = lower(tokens.get(end)?);
    if PREPOSITIONS.contains(&next.as_str()) || next == "and" {
        return None;
    }
    Some(tokens[..end].join(" "))
}

/// The last run of capitalized tokens, used to resolve object pronouns.
fn last_name(text: &str) -> Option<String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut best = None;
    let mut i = 0;
    while i < tokens.len() {
        if is_capitalized(tokens[i]) && !DETERMINERS.contains(&lower(tokens[i]).as_str()) {
            let start = i;
            while i < tokens.len() && is_capitalized(tokens[i]) {
                i += 1;
            }
            let run = tokens[start..i].join(" ");
            let run = run.trim_end_matches([',', ';']).to_string();
            // A lone capitalized token at clause start is usually a verb or adverb.
            if start > 0 || i - start > 1 {
                best = Some(run);
            }
        } else {
            i += 1;
        }
    }
    best
}

/// Everything through the last preposition, or subject + verb, used to
/// complete a bare noun-phrase conjunct.
fn predicate_prefix(fact: &str) -> Option<String> {
    let tokens: Vec<&str> = fact.split_whitespace().collect();
    if let Some(p) = tokens
        .iter()
        .rposition(|t| PREPOSITIONS.contains(&lower(t).as_str()))
    {
        if p + 1 < tokens.len() {
            return Some(tokens[..=p].join(" "));
        }
    }
    let subject = subject_of(fact)?;
    let n = subject.split_whitespace().count();
    (n < tokens.len()).then(|| tokens[..=n].join(" "))
}

fn is_bare_noun_phrase(piece: &str) -> bool {
    let tokens: Vec<&str> = piece.split_whitespace().collect();
    match tokens.as_slice() {
        [] => false,
        [only] => !SUBJECT_PRONOUNS.contains(&lower(only).as_str()),
        [first, ..] => {
            DETERMINERS.contains(&lower(first).as_str()) || tokens.iter().all(|t| is_capitalized(t))
        }
    }
}

fn resolve_object_pronoun(piece: &str, antecedent: Option<&str>) -> String {
    let Some(name) = antecedent else {
        return piece.to_string();
    };
    let tokens: Vec<&str> = piece.split_whitespace().collect();
    let last = tokens.len().saturating_sub(1);
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| match lower(t).as_str() {
            "him" => name.to_string(),
            "her" if i == last => name.to_string(),
            _ => t.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pull ", which ..." / ", who ..." clauses out as facts about their antecedent.
fn extract_relative_clauses(body: &str) -> (String, Vec<String>) {
    let mut main = body.to_string();
    let mut extracted = Vec::new();
    loop {
        let found = [", which ", ", who "]
            .iter()
            .filter_map(|m| main.find(m).map(|i| (i, m.len())))
            .min();
        let Some((at, marker_len)) = found else { break };
        let before = &main[..at];
        let rest = &main[at + marker_len..];
        let (clause, after) = match rest.find(", ") {
            Some(j) => (&rest[..j], &rest[j + 2..]),
            None => (rest, ""),
        };
        let tokens: Vec<&str> = before.split_whitespace().collect();
        let antecedent = if tokens.last().is_some_and(|t| is_capitalized(t)) {
            let mut s = tokens.len();
            while s > 0 && is_capitalized(tokens[s - 1]) {
                s -= 1;
            }
            tokens[s..].join(" ")
        } else if tokens.len() >= 2 && DETERMINERS.contains(&lower(tokens[tokens.len() - 2]).as_str())
        {
            tokens[tokens.len() - 2..].join(" ")
        } else {
            tokens.last().copied().unwrap_or_default().to_string()
        };
        if antecedent.is_empty() || clause.trim().is_empty() {
            break;
        }
        extracted.push(format!("{antecedent} {}", clause.trim()));
        main = if after.is_empty() {
            before.to_string()
        } else {
            format!("{before} {after}")
        };
    }
    (main, extracted)
}

fn split_coordination(body: &str) -> Vec<String> {
    let mut pieces = vec![body.to_string()];
    for sep in SEPARATORS {
        pieces = pieces
            .into_iter()
            .flat_map(|p| {
                p.split(sep)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    pieces
}

/// Deterministic rule-based decomposition: splits coordinated clauses and
/// non-restrictive relative clauses, carries the subject into subjectless
/// conjuncts, completes bare noun-phrase conjuncts with the preceding
/// predicate, and resolves "him"/"her" to the last named entity. A sentence
/// with no split point is returned unchanged.
pub fn rule_split(sentence: &str) -> Vec<String> {
    let trimmed = sentence.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    let terminal: String = trimmed
        .chars()
        .rev()
        .take_while(|c| matches!(c, '.' | '!' | '?'))
        .collect();
    let body = trimmed[..trimmed.len() - terminal.len()].trim();
    let terminal = if terminal.is_empty() { "" } else { &terminal[..1] };

    let (main, relative) = extract_relative_clauses(body);
    let pieces = split_coordination(&main);
    if pieces.len() <= 1 && relative.is_empty() {
        return vec![trimmed.to_string()];
    }

    let subject = pieces.first().and_then(|p| subject_of(p));
    let mut facts: Vec<String> = Vec::new();
    let mut seen_text = String::new();
    for (i, piece) in pieces.iter().enumerate() {
        let resolved = resolve_object_pronoun(piece, last_name(&seen_text).as_deref());
        let fact = if i == 0 || subject_of(&resolved).is_some() {
            resolved
        } else if is_bare_noun_phrase(&resolved) {
            match facts.last().and_then(|f| predicate_prefix(f)) {
                Some(prefix) => format!("{prefix} {resolved}"),
                None => {
                    // No way to complete it: undo the split.
                    let prev = facts.pop().unwrap_or_default();
                    format!("{prev} and {resolved}")
                }
            }
        } else {
            match &subject {
                Some(s) => format!("{s} {resolved}"),
                None => resolved,
            }
        };
        seen_text.push(' ');
        seen_text.push_str(piece);
        facts.push(capitalize_first(&fact));
    }
    facts.extend(relative.iter().map(|r| capitalize_first(r)));
    facts
        .into_iter()
        .map(|f| format!("{f}{terminal}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_veracity_sentence_gives_three_facts() {
        assert_eq!(
            rule_split("Directed by Darren Aronofsky and co-written by him and Mark Heyman."),
            vec![
                "Directed by Darren Aronofsky.",
                "Co-written by Darren Aronofsky.",
                "Co-written by Mark Heyman.",
            ]
        );
    }

    #[test]
    fn single_clause_is_unchanged() {
        assert_eq!(rule_split("He was born in 1879."), vec!["He was born in 1879."]);
    }

    #[test]
    fn subject_carries_into_second_conjunct() {
        assert_eq!(
            rule_split("X won A and received B."),
            vec!["X won A.", "X received B."]
        );
        assert_eq!(
            rule_split("He was born in Ulm and grew up in Munich."),
            vec!["He was born in Ulm.", "He grew up in Munich."]
        );
    }

    #[test]
    fn bare_object_conjunct_reuses_verb() {
        assert_eq!(
            rule_split("She studied physics and chemistry."),
            vec!["She studied physics.", "She studied chemistry."]
        );
    }

    #[test]
    fn relative_clause_becomes_its_own_fact() {
        assert_eq!(
            rule_split("He joined IBM, which was founded in 1911."),
            vec!["He joined IBM.", "IBM was founded in 1911."]
        );
        assert_eq!(
            rule_split("Einstein met Niels Bohr, who won the Nobel Prize, in 1920."),
            vec!["Einstein met Niels Bohr in 1920.", "Niels Bohr won the Nobel Prize."]
        );
    }

    #[test]
    fn deterministic_and_non_empty() {
        for s in ["A and B.", "and", "x", "The cat sat; the dog ran!"] {
            let a = rule_split(s);
            assert!(!a.is_empty());
            assert!(a.iter().all(|f| !f.trim().is_empty()));
            assert_eq!(a, rule_split(s));
        }
    }

    #[test]
    fn parses_dash_lines() {
        assert_eq!(
            parse_fact_lines("- One.\n\n-  Two.\nThree.\n"),
            vec!["One.", "Two.", "Three."]
        );
    }

    #[test]
    fn prompt_ends_with_target_sentence() {
        let m = few_shot_messages("He was born in 1879.", "Tell me about Einstein");
        assert_eq!(m[0].role, "system");
        let last = m.last().unwrap();
        assert_eq!(last.role, "user");
        assert!(last.content.ends_with("Sentence: He was born in 1879."));
        assert!(last.content.contains("Context: Tell me about Einstein"));
    }
}
