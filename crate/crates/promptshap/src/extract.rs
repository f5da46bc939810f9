//! Answer extraction from free-form model output.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    MultipleChoice,
    Date,
    Numeric,
}

// A bare lowercase "a" is almost always the article, so it only counts when
// bracketed, e.g. "(a)" or "a)".
static OPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(([a-eA-E])\)|\b([a-eA-E])\)|\b([b-eA-E])\b").unwrap());
static DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{2}/\d{2}/\d{4})\b").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?").unwrap());

/// Last answer of the given kind in `text`, normalized; `None` if there is none.
pub fn extract_answer(text: &str, task: TaskKind) -> Option<String> {
    match task {
        TaskKind::MultipleChoice => OPTION
            .captures_iter(text)
            .last()
            .and_then(|c| c.iter().skip(1).flatten().next().map(|m| m.as_str().to_ascii_uppercase())),
        TaskKind::Date => DATE.captures_iter(text).last().map(|c| c[1].to_owned()),
        TaskKind::Numeric => NUMBER.find_iter(text).last().map(|m| m.as_str().replace(',', "")),
    }
}
