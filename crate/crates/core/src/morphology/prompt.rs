//! Caption templates: the label-only baseline and the morphology-enriched
//! variant that appends the cluster index.

use serde::{Deserialize, Serialize};

use super::words::{cardinal, parse_cardinal};
use super::ClusterError;

const PREFIX: &str = "Histology image of ";
const TISSUE: &str = " tissue";
const MORPHOLOGY: &str = ", morphology type ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Baseline,
    Enriched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFormat {
    /// "twenty-one"
    Words,
    /// "21"
    Digits,
}

/// How cluster indices are rendered into prompt text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFormat {
    pub index_format: IndexFormat,
    /// Added to the 0-based cluster index before rendering.
    pub index_base: usize,
}

impl Default for PromptFormat {
    fn default() -> Self {
        Self {
            index_format: IndexFormat::Words,
            index_base: 0,
        }
    }
}

impl PromptFormat {
    fn render(&self, cluster: usize) -> String {
        let shown = (cluster + self.index_base) as u64;
        match self.index_format {
            IndexFormat::Words => cardinal(shown),
            IndexFormat::Digits => shown.to_string(),
        }
    }

    fn parse(&self, text: &str) -> Option<usize> {
        let shown = match self.index_format {
            IndexFormat::Words => parse_cardinal(text)?,
            IndexFormat::Digits => {
                let v: u64 = text.parse().ok()?;
                (v.to_string() == text).then_some(v)?
            }
        };
        usize::try_from(shown).ok()?.checked_sub(self.index_base)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub label: String,
    pub cluster: Option<usize>,
    pub style: PromptStyle,
}

pub fn build_prompt(
    label: &str,
    cluster: Option<usize>,
    style: PromptStyle,
) -> Result<Prompt, ClusterError> {
    build_prompt_with(label, cluster, style, PromptFormat::default())
}

pub fn build_prompt_with(
    label: &str,
    cluster: Option<usize>,
    style: PromptStyle,
    format: PromptFormat,
) -> Result<Prompt, ClusterError> {
    let mut text = format!("{PREFIX}{label}{TISSUE}");
    let cluster = match style {
        PromptStyle::Baseline => None,
        PromptStyle::Enriched => {
            let c = cluster.ok_or(ClusterError::MissingCluster)?;
            text.push_str(MORPHOLOGY);
            text.push_str(&format.render(c));
            Some(c)
        }
    };
    Ok(Prompt {
        text,
        label: label.to_string(),
        cluster,
        style,
    })
}

/// Recovers label, style and cluster from prompt text.
pub fn parse_prompt(text: &str, format: PromptFormat) -> Result<Prompt, ClusterError> {
    let malformed = || ClusterError::MalformedPrompt(text.to_string());
    let body = text.strip_prefix(PREFIX).ok_or_else(malformed)?;
    if let Some(label) = body.strip_suffix(TISSUE) {
        if !label.is_empty() && !label.contains(MORPHOLOGY) {
            return Ok(Prompt {
                text: text.to_string(),
                label: label.to_string(),
                cluster: None,
                style: PromptStyle::Baseline,
            });
        }
    }
    let (head, index) = body.rsplit_once(MORPHOLOGY).ok_or_else(malformed)?;
    let label = head.strip_suffix(TISSUE).filter(|l| !l.is_empty()).ok_or_else(malformed)?;
    let cluster = format.parse(index).ok_or_else(malformed)?;
    Ok(Prompt {
        text: text.to_string(),
        label: label.to_string(),
        cluster: Some(cluster),
        style: PromptStyle::Enriched,
    })
}

/// Removes the morphology clause, returning the baseline twin with the same
/// label. Baseline prompts pass through unchanged.
pub fn strip_prompt(prompt: &Prompt) -> Result<Prompt, ClusterError> {
    strip_prompt_with(prompt, PromptFormat::default())
}

pub fn strip_prompt_with(prompt: &Prompt, format: PromptFormat) -> Result<Prompt, ClusterError> {
    let parsed = parse_prompt(&prompt.text, format)?;
    build_prompt_with(&parsed.label, None, PromptStyle::Baseline, format)
}
