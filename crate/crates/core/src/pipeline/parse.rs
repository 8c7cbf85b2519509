//! Parsing model output into an mRS score.
//!
//! Strict pass first: the trimmed output must be exactly one of "0".."6".
//! Lenient fallback: collect standalone integer tokens, keep those in [0, 6],
//! and succeed only when exactly one distinct value remains. Everything else
//! is one of three declared error classes, each of which triggers an
//! extraction retry upstream.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no candidate integer in output")]
    NoCandidate,
    #[error("ambiguous output: distinct candidates {0:?}")]
    Ambiguous(Vec<u8>),
    #[error("integer(s) out of range [0, 6]: {0:?}")]
    OutOfRange(Vec<u64>),
}

impl ParseError {
    pub fn class(&self) -> &'static str {
        match self {
            ParseError::NoCandidate => "parse_failed",
            ParseError::Ambiguous(_) => "ambiguous",
            ParseError::OutOfRange(_) => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedMrs {
    pub score: u8,
    /// True when the lenient fallback (not the strict pass) produced the score.
    pub lenient: bool,
}

pub fn parse_mrs(raw: &str) -> Result<ParsedMrs, ParseError> {
    let trimmed = raw.trim();
    if trimmed.len() == 1 && ("0"..="6").contains(&trimmed) {
        return Ok(ParsedMrs {
            score: trimmed.as_bytes()[0] - b'0',
            lenient: false,
        });
    }

    let tokens = standalone_integers(raw);
    if tokens.is_empty() {
        return Err(ParseError::NoCandidate);
    }
    let mut in_range: Vec<u8> = tokens
        .iter()
        .filter(|v| **v <= 6)
        .map(|v| *v as u8)
        .collect();
    in_range.sort_unstable();
    in_range.dedup();
    match in_range.len() {
        1 => Ok(ParsedMrs {
            score: in_range[0],
            lenient: true,
        }),
        0 => {
            let mut out: Vec<u64> = tokens.into_iter().filter(|v| *v > 6).collect();
            out.sort_unstable();
            out.dedup();
            Err(ParseError::OutOfRange(out))
        }
        _ => Err(ParseError::Ambiguous(in_range)),
    }
}

/// Maximal ASCII digit runs that stand alone as integers: not glued to a
/// word, not signed, and not part of a decimal number on either side.
fn standalone_integers(text: &str) -> Vec<u64> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let end = i;

        let prev = start.checked_sub(1).map(|p| bytes[p]);
        let prev2 = start.checked_sub(2).map(|p| bytes[p]);
        let next = bytes.get(end).copied();
        let next2 = bytes.get(end + 1).copied();

        let glued_left = matches!(prev, Some(c) if c.is_ascii_alphanumeric());
        let signed = matches!(prev, Some(b'-') | Some(b'+'));
        let decimal_tail = prev == Some(b'.') && matches!(prev2, Some(c) if c.is_ascii_digit());
        let glued_right = matches!(next, Some(c) if c.is_ascii_alphanumeric());
        let decimal_head = next == Some(b'.') && matches!(next2, Some(c) if c.is_ascii_digit());

        if !(glued_left || signed || decimal_tail || glued_right || decimal_head) {
            if let Ok(value) = text[start..end].parse::<u64>() {
                out.push(value);
            }
        }
    }
    out
}
