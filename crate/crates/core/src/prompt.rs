//! Instruction templates for the caption and grounding fine-tuning stages.
//!
//! Both stages share the Llama-2 conversation skeleton
//! `[INST]<Img><ImageFeature></Img>[task]instruction[/INST]`. The grounding
//! stage appends the phrase to ground after the instruction, separated by a
//! single space. The supervised target for grounding is rendered separately
//! by [`render_stage2_target`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode, NormBox};
use crate::seed;

pub const INST_OPEN: &str = "[INST]";
pub const INST_CLOSE: &str = "[/INST]";
pub const IMG_OPEN: &str = "<Img>";
pub const IMG_CLOSE: &str = "</Img>";
pub const IMAGE_SENTINEL: &str = "<ImageFeature>";
pub const CAPTION_ID: &str = "[caption]";
pub const REFER_ID: &str = "[refer]";

/// Strings that may not appear inside pool instructions or label text.
pub const RESERVED_MARKERS: [&str; 7] = [
    INST_OPEN,
    INST_CLOSE,
    IMG_OPEN,
    IMG_CLOSE,
    IMAGE_SENTINEL,
    CAPTION_ID,
    REFER_ID,
];

const DEFAULT_CAPTION_POOL: &str = include_str!("../data/caption_pool.txt");
const DEFAULT_REFER_POOL: &str = include_str!("../data/refer_pool.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("instruction pool is empty")]
    EmptyPool,
    #[error("label text is empty")]
    EmptyLabel,
    #[error("expected a {expected} pool, got a {got} pool")]
    WrongTask { expected: Task, got: Task },
    #[error("duplicate instruction in pool: {0:?}")]
    DuplicateInstruction(String),
    #[error("text contains reserved marker {marker:?}: {text:?}")]
    ReservedMarker { marker: &'static str, text: String },
    #[error("unknown task {0:?} (expected caption or refer)")]
    UnknownTask(String),
    #[error("failed to read pool file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Caption,
    Refer,
}

impl Task {
    pub fn identifier(self) -> &'static str {
        match self {
            Task::Caption => CAPTION_ID,
            Task::Refer => REFER_ID,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Caption => "caption",
            Task::Refer => "refer",
        })
    }
}

impl FromStr for Task {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "caption" => Ok(Task::Caption),
            "refer" => Ok(Task::Refer),
            _ => Err(PromptError::UnknownTask(s.to_string())),
        }
    }
}

fn check_reserved(text: &str) -> Result<(), PromptError> {
    match RESERVED_MARKERS.iter().find(|m| text.contains(*m)) {
        Some(marker) => Err(PromptError::ReservedMarker {
            marker,
            text: text.to_string(),
        }),
        None => Ok(()),
    }
}

/// An ordered set of interchangeable instructions for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionPool {
    task: Task,
    instructions: Vec<String>,
}

impl InstructionPool {
    pub fn new<I, S>(task: Task, instructions: I) -> Result<Self, PromptError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for ins in instructions {
            let ins = ins.into();
            if ins.trim().is_empty() {
                return Err(PromptError::EmptyPool);
            }
            check_reserved(&ins)?;
            if out.contains(&ins) {
                return Err(PromptError::DuplicateInstruction(ins));
            }
            out.push(ins);
        }
        if out.is_empty() {
            return Err(PromptError::EmptyPool);
        }
        Ok(Self {
            task,
            instructions: out,
        })
    }

    /// Parses the pool text format: one instruction per line, `#` lines and blank lines skipped.
    pub fn parse(task: Task, text: &str) -> Result<Self, PromptError> {
        let lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(task, lines)
    }

    pub fn load(task: Task, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(task, &text)
    }

    /// The shipped fixture pool for `task` (8 instructions).
    pub fn default_for(task: Task) -> Self {
        let text = match task {
            Task::Caption => DEFAULT_CAPTION_POOL,
            Task::Refer => DEFAULT_REFER_POOL,
        };
        Self::parse(task, text).expect("shipped pool is valid")
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn instructions(&self) -> &[String] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Index drawn uniformly from a generator keyed by `seed`.
    pub fn select_index(&self, seed: u64) -> usize {
        seed::rng(seed).random_range(0..self.instructions.len())
    }

    fn expect_task(&self, expected: Task) -> Result<(), PromptError> {
        if self.instructions.is_empty() {
            return Err(PromptError::EmptyPool);
        }
        if self.task != expected {
            return Err(PromptError::WrongTask {
                expected,
                got: self.task,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub task_identifier: String,
    pub instruction_used: String,
    pub image_sentinel: String,
}

fn assemble(task: Task, body: &str, instruction: &str) -> RenderedPrompt {
    let text = format!(
        "{INST_OPEN}{IMG_OPEN}{IMAGE_SENTINEL}{IMG_CLOSE}{}{body}{INST_CLOSE}",
        task.identifier()
    );
    RenderedPrompt {
        text,
        task_identifier: task.identifier().to_string(),
        instruction_used: instruction.to_string(),
        image_sentinel: IMAGE_SENTINEL.to_string(),
    }
}

/// Caption-stage prompt with a seeded instruction choice.
pub fn render_stage1(pool: &InstructionPool, seed: u64) -> Result<RenderedPrompt, PromptError> {
    pool.expect_task(Task::Caption)?;
    let instruction = &pool.instructions[pool.select_index(seed)];
    Ok(assemble(Task::Caption, instruction, instruction))
}

/// Grounding-stage prompt: seeded instruction, a space, then the label text.
pub fn render_stage2(
    pool: &InstructionPool,
    label_text: &str,
    seed: u64,
) -> Result<RenderedPrompt, PromptError> {
    pool.expect_task(Task::Refer)?;
    if label_text.trim().is_empty() {
        return Err(PromptError::EmptyLabel);
    }
    check_reserved(label_text)?;
    let instruction = &pool.instructions[pool.select_index(seed)];
    let body = format!("{instruction} {label_text}");
    Ok(assemble(Task::Refer, &body, instruction))
}

/// Supervised target string for the grounding stage.
pub fn render_stage2_target(nb: &NormBox) -> String {
    encode(nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse;
    use proptest::prelude::*;

    fn pool(task: Task, items: &[&str]) -> InstructionPool {
        InstructionPool::new(task, items.iter().copied()).unwrap()
    }

    #[test]
    fn stage1_singleton() {
        let p = pool(Task::Caption, &["Describe this chest X-ray."]);
        let r = render_stage1(&p, 0).unwrap();
        assert_eq!(
            r.text,
            "[INST]<Img><ImageFeature></Img>[caption]Describe this chest X-ray.[/INST]"
        );
        assert_eq!(r, render_stage1(&p, 99).unwrap());
        assert_eq!(r.task_identifier, "[caption]");
    }

    #[test]
    fn stage1_is_deterministic() {
        let p = InstructionPool::default_for(Task::Caption);
        let before = p.clone();
        for seed in [0, 1, 7, 12345] {
            assert_eq!(render_stage1(&p, seed).unwrap(), render_stage1(&p, seed).unwrap());
        }
        assert_eq!(p, before);
    }

    #[test]
    fn stage2_example() {
        let p = pool(Task::Refer, &["Locate:"]);
        let r = render_stage2(&p, "small right apical pneumothorax", 3).unwrap();
        assert_eq!(
            r.text,
            "[INST]<Img><ImageFeature></Img>[refer]Locate: small right apical pneumothorax[/INST]"
        );
        assert_eq!(r.instruction_used, "Locate:");
        assert_eq!(r.task_identifier, "[refer]");
    }

    #[test]
    fn stage2_errors() {
        let p = pool(Task::Refer, &["Locate:"]);
        assert!(matches!(render_stage2(&p, "", 0), Err(PromptError::EmptyLabel)));
        assert!(matches!(render_stage2(&p, "   ", 0), Err(PromptError::EmptyLabel)));
        assert!(matches!(
            render_stage2(&p, "edema <ImageFeature>", 0),
            Err(PromptError::ReservedMarker { .. })
        ));
        let caption = pool(Task::Caption, &["Describe."]);
        assert!(matches!(
            render_stage2(&caption, "edema", 0),
            Err(PromptError::WrongTask { .. })
        ));
        assert!(matches!(render_stage1(&p, 0), Err(PromptError::WrongTask { .. })));
    }

    #[test]
    fn pool_validation() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            InstructionPool::new(Task::Refer, empty),
            Err(PromptError::EmptyPool)
        ));
        assert!(matches!(
            InstructionPool::new(Task::Refer, ["a", "a"]),
            Err(PromptError::DuplicateInstruction(_))
        ));
        assert!(matches!(
            InstructionPool::new(Task::Refer, ["see [INST] here"]),
            Err(PromptError::ReservedMarker { .. })
        ));
        assert!(matches!(
            InstructionPool::parse(Task::Caption, "# only a comment\n\n"),
            Err(PromptError::EmptyPool)
        ));
    }

    #[test]
    fn pool_file_format() {
        let p = InstructionPool::parse(Task::Refer, "# header\nFind\r\n\n  Locate  \n#x\n").unwrap();
        assert_eq!(p.instructions(), ["Find", "Locate"]);
    }

    #[test]
    fn default_pools_have_eight_entries() {
        assert_eq!(InstructionPool::default_for(Task::Caption).len(), 8);
        assert_eq!(InstructionPool::default_for(Task::Refer).len(), 8);
    }

    #[test]
    fn target_examples() {
        let nb = NormBox::new(50, 25, 75, 50).unwrap();
        assert_eq!(render_stage2_target(&nb), "{<50><25><75><50>}");
        let full = NormBox::new(0, 0, 100, 100).unwrap();
        assert_eq!(render_stage2_target(&full), "{<0><0><100><100>}");
    }

    proptest! {
        #[test]
        fn target_round_trips(a in 0u32..=100, b in 0u32..=100, c in 0u32..=100, d in 0u32..=100) {
            let nb = NormBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap();
            prop_assert_eq!(parse(&render_stage2_target(&nb)).result, Ok(nb));
        }

        #[test]
        fn skeleton_holds(seed in any::<u64>(), label in "[a-z][a-z ]{0,30}") {
            let r = render_stage2(&InstructionPool::default_for(Task::Refer), &label, seed).unwrap();
            prop_assert!(r.text.starts_with("[INST]<Img><ImageFeature></Img>[refer]"));
            let suffix = format!(" {label}[/INST]");
            prop_assert!(r.text.ends_with(&suffix));
            prop_assert_eq!(r.text.matches(IMAGE_SENTINEL).count(), 1);
            prop_assert_eq!(r.text.matches(REFER_ID).count(), 1);
        }
    }
}
