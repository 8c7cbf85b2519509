//! Pattern-file parser and matching engine for the extraction grammar.
//!
//! The grammar ships as a human-readable asset (`assets/extraction_grammar.txt`)
//! so the phrase inventory can be audited and versioned alongside the
//! synthetic-note phrasing bank.

use std::sync::OnceLock;

use thiserror::Error;

/// Version of the built-in grammar; the synth phrasing bank asserts against it.
pub const GRAMMAR_VERSION: u32 = 1;

const GRAMMAR_SOURCE: &str = include_str!("../../assets/extraction_grammar.txt");

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grammar declares no version")]
    MissingVersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    NumAfter,
    NumBefore,
    FlagYes,
    FlagNo,
}

#[derive(Debug, Clone)]
pub enum Pattern {
    Num { kind: RuleKind, phrase: String },
    Flag { kind: RuleKind, phrase: String },
    Map { phrase: String, value: String },
}

impl Pattern {
    pub fn phrase(&self) -> &str {
        match self {
            Pattern::Num { phrase, .. } => phrase,
            Pattern::Flag { phrase, .. } => phrase,
            Pattern::Map { phrase, .. } => phrase,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldRules {
    pub field: String,
    pub patterns: Vec<Pattern>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    pub version: u32,
    pub fields: Vec<FieldRules>,
}

/// A single accepted match inside a note.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub value: MatchValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchValue {
    Number(f64),
    Flag(bool),
    Choice(String),
}

impl Grammar {
    /// The grammar compiled into the crate.
    pub fn builtin() -> &'static Grammar {
        static BUILTIN: OnceLock<Grammar> = OnceLock::new();
        BUILTIN.get_or_init(|| Grammar::parse(GRAMMAR_SOURCE).expect("built-in grammar must parse"))
    }

    pub fn parse(source: &str) -> Result<Grammar, GrammarError> {
        let mut version = None;
        let mut fields: Vec<FieldRules> = Vec::new();

        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("version ") {
                version = Some(v.trim().parse().map_err(|_| GrammarError::Parse {
                    line: line_no,
                    message: format!("bad version number {v:?}"),
                })?);
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                let inner = &line[1..line.len() - 1];
                let mut parts = inner.splitn(2, ' ');
                let kind = parts.next().unwrap_or_default();
                let field = parts.next().unwrap_or_default().trim();
                if field.is_empty() || !matches!(kind, "num" | "flag" | "enum") {
                    return Err(GrammarError::Parse {
                        line: line_no,
                        message: format!("bad section header {line:?}"),
                    });
                }
                fields.push(FieldRules {
                    field: field.to_string(),
                    patterns: Vec::new(),
                });
                continue;
            }
            let current = fields.last_mut().ok_or(GrammarError::Parse {
                line: line_no,
                message: "pattern before any section header".into(),
            })?;
            let (tag, rest) = line.split_once(':').ok_or_else(|| GrammarError::Parse {
                line: line_no,
                message: format!("expected `tag: phrase`, got {line:?}"),
            })?;
            let rest = rest.trim().to_lowercase();
            let pattern = match tag.trim() {
                "after" => Pattern::Num {
                    kind: RuleKind::NumAfter,
                    phrase: rest,
                },
                "before" => Pattern::Num {
                    kind: RuleKind::NumBefore,
                    phrase: rest,
                },
                "yes" => Pattern::Flag {
                    kind: RuleKind::FlagYes,
                    phrase: rest,
                },
                "no" => Pattern::Flag {
                    kind: RuleKind::FlagNo,
                    phrase: rest,
                },
                "map" => {
                    let (phrase, value) =
                        rest.split_once("=>").ok_or_else(|| GrammarError::Parse {
                            line: line_no,
                            message: "map pattern needs `phrase => value`".into(),
                        })?;
                    Pattern::Map {
                        phrase: phrase.trim().to_string(),
                        value: value.trim().to_string(),
                    }
                }
                other => {
                    return Err(GrammarError::Parse {
                        line: line_no,
                        message: format!("unknown pattern tag {other:?}"),
                    })
                }
            };
            if pattern.phrase().is_empty() {
                return Err(GrammarError::Parse {
                    line: line_no,
                    message: "empty phrase".into(),
                });
            }
            current.patterns.push(pattern);
        }

        Ok(Grammar {
            version: version.ok_or(GrammarError::MissingVersion)?,
            fields,
        })
    }

    /// Runs every pattern of `field` over the lowercased note and returns the
    /// accepted matches in text order. Overlapping candidates are resolved
    /// longest-phrase-first, so "no history of hypertension" suppresses the
    /// bare "hypertension" inside it.
    pub fn matches_for(&self, field: &FieldRules, lower: &str) -> Vec<Match> {
        let mut candidates: Vec<Match> = Vec::new();
        for pattern in &field.patterns {
            for start in phrase_occurrences(lower, pattern.phrase()) {
                let end = start + pattern.phrase().len();
                let value = match pattern {
                    Pattern::Num { kind, .. } => match *kind {
                        RuleKind::NumAfter => number_after(lower, end).map(MatchValue::Number),
                        RuleKind::NumBefore => number_before(lower, start).map(MatchValue::Number),
                        _ => unreachable!(),
                    },
                    Pattern::Flag { kind, .. } => {
                        Some(MatchValue::Flag(*kind == RuleKind::FlagYes))
                    }
                    Pattern::Map { value, .. } => Some(MatchValue::Choice(value.clone())),
                };
                if let Some(value) = value {
                    candidates.push(Match { start, end, value });
                }
            }
        }
        // Longest span first; greedily accept non-overlapping matches.
        candidates.sort_by(|a, b| {
            (b.end - b.start)
                .cmp(&(a.end - a.start))
                .then(a.start.cmp(&b.start))
        });
        let mut accepted: Vec<Match> = Vec::new();
        for cand in candidates {
            if accepted
                .iter()
                .all(|m| cand.end <= m.start || cand.start >= m.end)
            {
                accepted.push(cand);
            }
        }
        accepted.sort_by_key(|m| m.start);
        accepted
    }
}

fn is_word_char(c: u8) -> bool {
    c.is_ascii_alphanumeric()
}

/// Byte offsets of word-bounded occurrences of `phrase` in `haystack`.
/// Both inputs are expected to be lowercase.
fn phrase_occurrences(haystack: &str, phrase: &str) -> Vec<usize> {
    let hay = haystack.as_bytes();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let left_ok = start == 0 || !is_word_char(hay[start - 1]);
        let right_ok = end == hay.len() || !is_word_char(hay[end]);
        // Word boundaries only matter when the phrase edge itself is a word char.
        let left_edge = phrase.as_bytes().first().is_some_and(|c| is_word_char(*c));
        let right_edge = phrase.as_bytes().last().is_some_and(|c| is_word_char(*c));
        if (!left_edge || left_ok) && (!right_edge || right_ok) {
            out.push(start);
        }
        from = start + 1;
    }
    out
}

/// First number within a bounded gap after byte offset `from`. The gap may
/// contain label filler (letters, spaces, punctuation) but a period ends the
/// scan so values never leak across sentences.
fn number_after(text: &str, from: usize) -> Option<f64> {
    const MAX_GAP: usize = 24;
    let bytes = text.as_bytes();
    let mut i = from;
    let limit = (from + MAX_GAP).min(bytes.len());
    while i < limit {
        let c = bytes[i];
        if c.is_ascii_digit() {
            return parse_number(text, i).map(|(v, _)| v);
        }
        match c {
            b'.' | b'\n' => return None,
            b' ' | b':' | b'=' | b',' | b'(' | b')' | b'-' | b'%' => i += 1,
            c if c.is_ascii_alphabetic() => i += 1,
            _ => return None,
        }
    }
    None
}

/// Number ending immediately before byte offset `at` (e.g. "83-year-old").
fn number_before(text: &str, at: usize) -> Option<f64> {
    let bytes = text.as_bytes();
    let mut start = at;
    while start > 0 && (bytes[start - 1].is_ascii_digit() || bytes[start - 1] == b'.') {
        start -= 1;
    }
    if start == at {
        return None;
    }
    text[start..at].parse().ok()
}

/// Parses `digits(.digits)?` starting at byte offset `start`.
fn parse_number(text: &str, start: usize) -> Option<(f64, usize)> {
    let bytes = text.as_bytes();
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    text[start..end].parse().ok().map(|v| (v, end))
}
