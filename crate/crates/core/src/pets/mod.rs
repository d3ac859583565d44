//! The nine prompt engineering techniques (PETs), their templates and the
//! multi-round protocols that drive them.

mod exemplars;
mod extract;
mod protocol;
mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use exemplars::{Exemplar, ExemplarPool, ExemplarSet};
pub use extract::extract_code;
pub use protocol::{advance, render, Advance, Message, ProtocolState, Role, Stage, StageInputs, TestVerdict};
pub use templates::template_dump;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PetError {
    #[error("{pet} stage {stage:?} requires {what}")]
    MissingAux { pet: PetId, stage: Stage, what: &'static str },
    #[error("{pet} requires an exemplar set: {reason}")]
    MissingExemplars { pet: PetId, reason: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("unknown PET {0:?}")]
    UnknownPet(String),
}

/// The PET pool. Declaration order is the deterministic tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PetId {
    ZeroShot,
    FewShot,
    ZeroShotCot,
    FewShotCot,
    Persona,
    SelfPlanning,
    SelfRefine,
    ProgressiveHint,
    SelfDebug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategicCategory {
    Root,
    Reasoning,
    Priming,
    Decomposition,
    Refinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Iteration {
    Single,
    Multiple,
}

impl PetId {
    pub const ALL: [PetId; 9] = [
        PetId::ZeroShot,
        PetId::FewShot,
        PetId::ZeroShotCot,
        PetId::FewShotCot,
        PetId::Persona,
        PetId::SelfPlanning,
        PetId::SelfRefine,
        PetId::ProgressiveHint,
        PetId::SelfDebug,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PetId> {
        Self::ALL.get(i).copied()
    }

    pub fn category(self) -> StrategicCategory {
        match self {
            PetId::ZeroShot | PetId::FewShot => StrategicCategory::Root,
            PetId::ZeroShotCot | PetId::FewShotCot => StrategicCategory::Reasoning,
            PetId::Persona => StrategicCategory::Priming,
            PetId::SelfPlanning => StrategicCategory::Decomposition,
            PetId::SelfRefine | PetId::ProgressiveHint | PetId::SelfDebug => StrategicCategory::Refinement,
        }
    }

    pub fn iteration(self) -> Iteration {
        match self {
            PetId::SelfPlanning | PetId::SelfRefine | PetId::ProgressiveHint | PetId::SelfDebug => Iteration::Multiple,
            _ => Iteration::Single,
        }
    }

    pub fn uses_examples(self) -> bool {
        matches!(self, PetId::FewShot | PetId::FewShotCot | PetId::SelfPlanning)
    }

    /// Exemplars for this PET must carry reasoning steps (or a plan).
    pub fn needs_reasoning(self) -> bool {
        matches!(self, PetId::FewShotCot | PetId::SelfPlanning)
    }

    /// Stable machine name, also used for result directories.
    pub fn slug(self) -> &'static str {
        match self {
            PetId::ZeroShot => "zero_shot",
            PetId::FewShot => "few_shot",
            PetId::ZeroShotCot => "zero_shot_cot",
            PetId::FewShotCot => "few_shot_cot",
            PetId::Persona => "persona",
            PetId::SelfPlanning => "self_planning",
            PetId::SelfRefine => "self_refine",
            PetId::ProgressiveHint => "progressive_hint",
            PetId::SelfDebug => "self_debug",
        }
    }

    /// Human-readable name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            PetId::ZeroShot => "Zero-shot",
            PetId::FewShot => "Few-shot",
            PetId::ZeroShotCot => "Zero-shot CoT",
            PetId::FewShotCot => "Few-shot CoT",
            PetId::Persona => "Persona",
            PetId::SelfPlanning => "Self-planning",
            PetId::SelfRefine => "Self-refine",
            PetId::ProgressiveHint => "Progressive Hint",
            PetId::SelfDebug => "Self-debug",
        }
    }
}

impl fmt::Display for PetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for PetId {
    type Err = PetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        PetId::ALL
            .into_iter()
            .find(|p| p.slug().replace('_', "") == norm)
            .ok_or_else(|| PetError::UnknownPet(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_metadata() {
        let multi: Vec<_> = PetId::ALL.into_iter().filter(|p| p.iteration() == Iteration::Multiple).collect();
        assert_eq!(multi, vec![PetId::SelfPlanning, PetId::SelfRefine, PetId::ProgressiveHint, PetId::SelfDebug]);
        let examples: Vec<_> = PetId::ALL.into_iter().filter(|p| p.uses_examples()).collect();
        assert_eq!(examples, vec![PetId::FewShot, PetId::FewShotCot, PetId::SelfPlanning]);
        assert_eq!(PetId::Persona.category(), StrategicCategory::Priming);
    }

    #[test]
    fn order_and_parsing() {
        for (i, p) in PetId::ALL.into_iter().enumerate() {
            assert_eq!(p.index(), i);
            assert_eq!(PetId::from_index(i), Some(p));
            assert_eq!(p.slug().parse::<PetId>().unwrap(), p);
            assert_eq!(p.display_name().parse::<PetId>().unwrap(), p);
        }
        assert!(PetId::ZeroShot < PetId::SelfDebug);
        assert!("tree_of_thought".parse::<PetId>().is_err());
        assert_eq!(serde_json::to_string(&PetId::ZeroShotCot).unwrap(), "\"zero_shot_cot\"");
    }
}
