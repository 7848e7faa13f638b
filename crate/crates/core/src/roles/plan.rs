//! Node-level plans in the `## Step N / Reasoning: / Step:` format.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: u32,
    pub reasoning: String,
    pub step_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    /// Builds a plan from `(reasoning, step)` pairs, numbering from 1.
    pub fn from_steps<R: Into<String>, S: Into<String>>(steps: impl IntoIterator<Item = (R, S)>) -> Self {
        Self {
            steps: steps
                .into_iter()
                .enumerate()
                .map(|(i, (reasoning, step_text))| PlanStep {
                    index: i as u32 + 1,
                    reasoning: reasoning.into(),
                    step_text: step_text.into(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_plan(self))
    }
}

pub fn render_plan(plan: &Plan) -> String {
    plan.steps
        .iter()
        .map(|s| format!("## Step {}\nReasoning: {}\nStep: {}", s.index, s.reasoning, s.step_text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn step_header(line: &str) -> Option<Result<u32, ParseError>> {
    let trimmed = line.trim_start();
    let rest = trimmed.strip_prefix("##")?.trim_start_matches('#').trim_start();
    let rest = rest.strip_prefix("Step")?.trim_start();
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    Some(
        digits
            .parse()
            .map_err(|_| ParseError::Plan(format!("step number `{digits}` out of range"))),
    )
}

enum Section {
    Header,
    Reasoning,
    Step,
}

struct Block {
    index: u32,
    reasoning: Vec<String>,
    step: Option<Vec<String>>,
}

pub fn parse_plan(text: &str) -> Result<Plan, ParseError> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut section = Section::Header;
    for line in text.lines() {
        if let Some(index) = step_header(line) {
            blocks.push(Block {
                index: index?,
                reasoning: Vec::new(),
                step: None,
            });
            section = Section::Header;
            continue;
        }
        let Some(block) = blocks.last_mut() else {
            continue; // preamble before the first header
        };
        let trimmed = line.trim_start();
        match section {
            Section::Header | Section::Reasoning => {
                if let Some(rest) = trimmed.strip_prefix("Step:") {
                    block.step = Some(vec![rest.trim_start().to_string()]);
                    section = Section::Step;
                } else if let Some(rest) = trimmed.strip_prefix("Reasoning:") {
                    block.reasoning = vec![rest.trim_start().to_string()];
                    section = Section::Reasoning;
                } else if matches!(section, Section::Reasoning) {
                    block.reasoning.push(line.to_string());
                }
            }
            Section::Step => {
                if let Some(step) = block.step.as_mut() {
                    step.push(line.to_string());
                }
            }
        }
    }

    if blocks.is_empty() {
        return Err(ParseError::Plan("no `## Step N` headers found".into()));
    }
    let mut steps = Vec::with_capacity(blocks.len());
    for (position, block) in blocks.into_iter().enumerate() {
        let expected = position as u32 + 1;
        if block.index != expected {
            return Err(ParseError::Plan(format!(
                "non-contiguous step numbering: expected Step {expected}, found Step {}",
                block.index
            )));
        }
        let step_text = block
            .step
            .map(|lines| lines.join("\n").trim().to_string())
            .ok_or_else(|| ParseError::Plan(format!("Step {expected} has no `Step:` line")))?;
        if step_text.is_empty() {
            return Err(ParseError::Plan(format!("Step {expected} has empty step text")));
        }
        steps.push(PlanStep {
            index: expected,
            reasoning: block.reasoning.join("\n").trim().to_string(),
            step_text,
        });
    }
    Ok(Plan { steps })
}
