//! Prompt templates with `{{placeholder}}` substitution.
//!
//! Rendering is a single literal pass: binding values are inserted verbatim
//! and never re-scanned, so a value containing `{{` cannot expand again.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::ChatRequest;

pub const PLACEHOLDER_DISCHARGE_SUMMARY: &str = "discharge_summary";
pub const PLACEHOLDER_REASONING_TEXT: &str = "reasoning_text";

const REASONING_DEFAULT: &str = include_str!("../../assets/reasoning_prompt.txt");
const EXTRACTION_DEFAULT: &str = include_str!("../../assets/extraction_prompt.txt");
const SINGLE_STEP_DEFAULT: &str = include_str!("../../assets/single_step_prompt.txt");

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {name}: unclosed placeholder at byte {at}")]
    Unclosed { name: String, at: usize },
    #[error("template {name}: no binding for placeholder {placeholder:?}")]
    MissingBinding { name: String, placeholder: String },
    #[error("template {name}: binding {binding:?} matches no declared placeholder")]
    UnknownBinding { name: String, binding: String },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

/// How a rendered body maps onto chat messages. The pipeline's prompts are
/// single user messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoleLayout {
    #[default]
    SingleUser,
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: String,
    body: String,
    placeholders: BTreeSet<String>,
    pub role_layout: RoleLayout,
}

impl PromptTemplate {
    pub fn new(name: &str, body: &str) -> Result<Self, TemplateError> {
        let placeholders = scan_placeholders(name, body)?;
        Ok(PromptTemplate {
            name: name.to_string(),
            body: body.to_string(),
            placeholders,
            role_layout: RoleLayout::SingleUser,
        })
    }

    pub fn from_file(name: &str, path: &Path) -> Result<Self, TemplateError> {
        let body = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(name, &body)
    }

    /// The two-step defaults shipped with the crate.
    pub fn reasoning_default() -> Self {
        Self::new("reasoning", REASONING_DEFAULT).expect("built-in template parses")
    }

    pub fn extraction_default() -> Self {
        Self::new("extraction", EXTRACTION_DEFAULT).expect("built-in template parses")
    }

    pub fn single_step_default() -> Self {
        Self::new("single_step", SINGLE_STEP_DEFAULT).expect("built-in template parses")
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Hash of the template body; recorded in run manifests.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.body.as_bytes());
        crate::corpus::hex(&hasher.finalize())
    }

    /// Substitutes every placeholder and wraps the result per the role
    /// layout. Bindings must cover the declared placeholders exactly.
    pub fn render(
        &self,
        bindings: &BTreeMap<String, String>,
    ) -> Result<ChatRequest, TemplateError> {
        for binding in bindings.keys() {
            if !self.placeholders.contains(binding) {
                return Err(TemplateError::UnknownBinding {
                    name: self.name.clone(),
                    binding: binding.clone(),
                });
            }
        }

        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let close = after.find("}}").expect("validated at construction");
            let placeholder = &after[..close];
            let value = bindings
                .get(placeholder)
                .ok_or_else(|| TemplateError::MissingBinding {
                    name: self.name.clone(),
                    placeholder: placeholder.to_string(),
                })?;
            out.push_str(value);
            rest = &after[close + 2..];
        }
        out.push_str(rest);

        match self.role_layout {
            RoleLayout::SingleUser => Ok(ChatRequest::user(out)),
        }
    }
}

fn scan_placeholders(name: &str, body: &str) -> Result<BTreeSet<String>, TemplateError> {
    let mut placeholders = BTreeSet::new();
    let mut offset = 0;
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                placeholders.insert(after[..close].to_string());
                let consumed = open + 2 + close + 2;
                offset += consumed;
                rest = &rest[consumed..];
            }
            None => {
                return Err(TemplateError::Unclosed {
                    name: name.to_string(),
                    at: offset + open,
                })
            }
        }
    }
    Ok(placeholders)
}

/// Convenience for one-placeholder renders.
pub fn bind_one(key: &str, value: &str) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert(key.to_string(), value.to_string());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_declare_expected_placeholders() {
        let reasoning = PromptTemplate::reasoning_default();
        assert!(reasoning
            .placeholders()
            .contains(PLACEHOLDER_DISCHARGE_SUMMARY));
        let extraction = PromptTemplate::extraction_default();
        assert!(extraction
            .placeholders()
            .contains(PLACEHOLDER_REASONING_TEXT));
        let single = PromptTemplate::single_step_default();
        assert!(single
            .placeholders()
            .contains(PLACEHOLDER_DISCHARGE_SUMMARY));
    }

    #[test]
    fn renders_summary_verbatim() {
        let template = PromptTemplate::reasoning_default();
        let summary = "Patient arrived with dense hemiparesis.\nBaseline NIHSS 17.";
        let request = template
            .render(&bind_one(PLACEHOLDER_DISCHARGE_SUMMARY, summary))
            .unwrap();
        let content = request.last_user_content().unwrap();
        assert!(content.contains(summary));
        assert!(!content.contains("{{"));
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let template = PromptTemplate::extraction_default();
        let err = template.render(&BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            TemplateError::MissingBinding {
                name: "extraction".into(),
                placeholder: PLACEHOLDER_REASONING_TEXT.into(),
            }
        );
    }

    #[test]
    fn unknown_binding_rejected() {
        let template = PromptTemplate::new("t", "hello {{a}}").unwrap();
        let err = template.render(&bind_one("b", "x")).unwrap_err();
        assert!(matches!(err, TemplateError::UnknownBinding { .. }));
    }

    #[test]
    fn no_reexpansion_of_binding_values() {
        let template = PromptTemplate::new("t", "value: {{a}}").unwrap();
        let request = template
            .render(&bind_one("a", "literal {{b}} stays"))
            .unwrap();
        assert_eq!(
            request.last_user_content().unwrap(),
            "value: literal {{b}} stays"
        );
    }

    #[test]
    fn unclosed_placeholder_rejected_at_construction() {
        let err = PromptTemplate::new("t", "broken {{a").unwrap_err();
        assert!(matches!(err, TemplateError::Unclosed { at: 7, .. }));
    }

    #[test]
    fn hash_tracks_body() {
        let a = PromptTemplate::new("t", "body one {{x}}").unwrap();
        let b = PromptTemplate::new("t", "body two {{x}}").unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(
            a.content_hash(),
            PromptTemplate::new("t2", a.body()).unwrap().content_hash()
        );
    }
}
