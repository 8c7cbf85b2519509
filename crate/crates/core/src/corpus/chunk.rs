//! Sliding-window chunking for long documents.
//!
//! Segment k covers token span [k*(window-overlap), min(k*(window-overlap)+window, n));
//! generation stops at the first segment whose span reaches n. Tokenization is
//! injectable; the default splits on whitespace.

use std::ops::Range;

use super::CorpusError;

pub const DEFAULT_WINDOW: usize = 512;
pub const DEFAULT_OVERLAP: usize = 50;

/// Token spans for a sequence of `len` tokens.
pub fn chunk_spans(
    len: usize,
    window: usize,
    overlap: usize,
) -> Result<Vec<Range<usize>>, CorpusError> {
    if window <= overlap {
        return Err(CorpusError::BadChunkGeometry { window, overlap });
    }
    let stride = window - overlap;
    let mut spans = Vec::new();
    let mut k = 0;
    loop {
        let start = k * stride;
        let end = (start + window).min(len);
        spans.push(start..end);
        if end >= len {
            break;
        }
        k += 1;
    }
    Ok(spans)
}

/// Slices `tokens` into overlapping segments.
pub fn chunk_tokens<T>(
    tokens: &[T],
    window: usize,
    overlap: usize,
) -> Result<Vec<&[T]>, CorpusError> {
    Ok(chunk_spans(tokens.len(), window, overlap)?
        .into_iter()
        .map(|span| &tokens[span])
        .collect())
}

/// Default tokenizer: maximal whitespace-delimited substrings.
pub fn whitespace_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}
