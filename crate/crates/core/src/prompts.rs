//! Prompt templates and completion parsing.
//!
//! Templates are text assets with `{{name}}` placeholders. Rendering is a
//! single pass, so placeholder-looking text inside substituted values is left
//! alone. Output blocks are `<tag>...</tag>` pairs matched case-insensitively.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Template {
    Formulator,
    Programmer,
    Debugger,
    RetrievalAnalysis,
    Debate,
    DebateSummarizer,
    ErrorSignature,
    DebugDiagnosis,
    Discrepancy,
    Reminder,
}

impl Template {
    pub fn text(self) -> &'static str {
        match self {
            Template::Formulator => include_str!("../prompts/formulator.txt"),
            Template::Programmer => include_str!("../prompts/programmer.txt"),
            Template::Debugger => include_str!("../prompts/debugger.txt"),
            Template::RetrievalAnalysis => include_str!("../prompts/retrieval_analysis.txt"),
            Template::Debate => include_str!("../prompts/debate.txt"),
            Template::DebateSummarizer => include_str!("../prompts/debate_summarizer.txt"),
            Template::ErrorSignature => include_str!("../prompts/error_signature.txt"),
            Template::DebugDiagnosis => include_str!("../prompts/debug_diagnosis.txt"),
            Template::Discrepancy => include_str!("../prompts/discrepancy.txt"),
            Template::Reminder => include_str!("../prompts/reminder.txt"),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        let mut rest = self.text();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let name = &after[..end];
            if !names.contains(&name) {
                names.push(name);
            }
            rest = &after[end + 2..];
        }
        names
    }

    pub fn render(self, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        render(self.text(), vars)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template placeholder `{0}` has no value")]
    MissingVariable(String),
    #[error("template has an unterminated placeholder")]
    Unterminated,
}

pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let lookup: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(PromptError::Unterminated)?;
        let name = &after[..end];
        let value = lookup.get(name).ok_or_else(|| PromptError::MissingVariable(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockError {
    #[error("no <{0}> block in completion")]
    Missing(String),
    #[error("nested <{0}> tags")]
    Nested(String),
    #[error("unmatched <{0}> tag")]
    Unmatched(String),
}

/// Every `<tag>...</tag>` body in order, trimmed. Nested or unmatched tags
/// are an error; zero blocks is `Missing`.
pub fn extract_blocks(text: &str, tag: &str) -> Result<Vec<String>, BlockError> {
    let lower = text.to_ascii_lowercase();
    let tag = tag.to_ascii_lowercase();
    let mut events: Vec<(usize, usize, bool)> = Vec::new();
    for (open, pattern) in [(true, format!("<{tag}")), (false, format!("</{tag}"))] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(&pattern) {
            let at = from + pos;
            let tail = &lower[at + pattern.len()..];
            let trimmed = tail.trim_start();
            if let Some(stripped) = trimmed.strip_prefix('>') {
                let end = lower.len() - stripped.len();
                events.push((at, end, open));
            }
            from = at + pattern.len();
        }
    }
    events.sort_by_key(|e| e.0);

    let mut blocks = Vec::new();
    let mut open_at: Option<usize> = None;
    for (start, end, is_open) in events {
        match (is_open, open_at) {
            (true, None) => open_at = Some(end),
            (true, Some(_)) => return Err(BlockError::Nested(tag)),
            (false, Some(body_start)) => {
                blocks.push(text[body_start..start].trim().to_string());
                open_at = None;
            }
            (false, None) => return Err(BlockError::Unmatched(tag)),
        }
    }
    if open_at.is_some() {
        return Err(BlockError::Unmatched(tag));
    }
    if blocks.is_empty() {
        return Err(BlockError::Missing(tag));
    }
    Ok(blocks)
}

/// First block plus a warning when the completion carried more than one.
pub fn first_block(text: &str, tag: &str) -> Result<(String, Option<String>), BlockError> {
    let mut blocks = extract_blocks(text, tag)?;
    let warning = (blocks.len() > 1)
        .then(|| format!("completion contained {} <{tag}> blocks; using the first", blocks.len()));
    Ok((blocks.swap_remove(0), warning))
}

/// Substring between the first `{` and the last `}`.
pub fn outermost_json(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_block_body() {
        let (body, warn) = first_block("<formulation>min 3x+2y ...</formulation>", "formulation").unwrap();
        assert_eq!(body, "min 3x+2y ...");
        assert!(warn.is_none());
    }

    #[test]
    fn discards_surrounding_prose() {
        let text = "Sure! Here it is:\n<formulation>\n  min z\n</formulation>\nHope this helps.";
        assert_eq!(first_block(text, "formulation").unwrap().0, "min z");
    }

    #[test]
    fn tag_matching_ignores_case_and_whitespace() {
        assert_eq!(first_block("<PYTHON >print(1)</Python>", "python").unwrap().0, "print(1)");
    }

    #[test]
    fn two_blocks_take_first_with_warning() {
        let (body, warn) = first_block("<python>a</python> text <python>b</python>", "python").unwrap();
        assert_eq!(body, "a");
        assert!(warn.unwrap().contains("2 <python> blocks"));
    }

    #[test]
    fn malformed_tags_are_errors() {
        assert_eq!(extract_blocks("no block here", "python"), Err(BlockError::Missing("python".into())));
        assert_eq!(extract_blocks("<python>a<python>b</python>", "python"), Err(BlockError::Nested("python".into())));
        assert_eq!(extract_blocks("<python>a", "python"), Err(BlockError::Unmatched("python".into())));
        assert_eq!(extract_blocks("a</python>", "python"), Err(BlockError::Unmatched("python".into())));
    }

    #[test]
    fn other_tags_with_same_prefix_are_ignored() {
        assert_eq!(first_block("<pythonic>x</pythonic><python>y</python>", "python").unwrap().0, "y");
    }

    #[test]
    fn render_substitutes_once() {
        let out = render("A {{x}} B {{y}}", &[("x", "{{y}}"), ("y", "2")]).unwrap();
        assert_eq!(out, "A {{y}} B 2");
        assert_eq!(render("{{z}}", &[]), Err(PromptError::MissingVariable("z".into())));
    }

    #[test]
    fn placeholder_names_are_part_of_the_contract() {
        assert_eq!(Template::Formulator.placeholders(), ["solution_memory", "problem"]);
        assert_eq!(Template::Programmer.placeholders(), ["solution_memory", "problem", "formulation"]);
        assert_eq!(
            Template::Debugger.placeholders(),
            ["problem", "formulation", "current_code", "exec_status", "solver_flag", "stderr", "debug_memory"]
        );
        assert_eq!(Template::RetrievalAnalysis.placeholders(), ["current_problem_desc", "full_cases"]);
        assert_eq!(
            Template::Debate.placeholders(),
            ["problem", "my_formulation", "my_code", "my_result", "other_formulation", "other_code", "other_result", "debate_memory"]
        );
        assert_eq!(
            Template::DebateSummarizer.placeholders(),
            ["description", "initial_A_result", "initial_B_result", "history_text", "final_result"]
        );
    }

    #[test]
    fn outermost_braces() {
        assert_eq!(outermost_json("Here: {\"a\": {\"b\": 1}} done"), Some("{\"a\": {\"b\": 1}}"));
        assert_eq!(outermost_json("none"), None);
    }
}
