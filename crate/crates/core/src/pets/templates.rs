//! Prompt templates, one per PET stage. Placeholders are substituted verbatim.

use super::{ExemplarSet, PetId, Stage};

pub(crate) const ZERO_SHOT: &str = "Only generate the Python code for the following task. {Coding Task}.";
pub(crate) const FEW_SHOT: &str =
    "Here are some examples of how to generate the code.\n{Three examples}.\nHow about this task? {Coding Task}.";
pub(crate) const ZERO_SHOT_COT: &str =
    "Only generate the Python code for the following task. {Coding Task}.\nLet's generate the code step by step.";
pub(crate) const FEW_SHOT_COT: &str = "Here are some examples of how to generate the code step by step.\n{Three examples}.\nHow about this task? {Coding Task}.";
pub(crate) const PERSONA: &str = "You are a programming expert, especially good at Python.\nPlease complete the following task in Python: {Coding Task}.";
pub(crate) const PLAN: &str = "{Three examples}\nHow about this intent: {Coding Task}.";
pub(crate) const IMPLEMENT: &str =
    "{Coding Task}.\nPlease complete the task with the following plan in Python.\n{Plan}.";
pub(crate) const REFINE_INIT: &str = "Only generate the Python code for the following task. {Coding Task}";
pub(crate) const REFLECT: &str =
    "Here is a code snippet: {Code}.\nPlease review the code and suggest any improvements or identify any issues.";
pub(crate) const REFINE: &str =
    "Here is a code snippet: {Code}.\nBased on the following feedback, refine the code:\n{Feedback}.";
pub(crate) const HINT_INIT: &str = "Please complete the following task in Python. {Coding Task}.";
pub(crate) const HINT: &str = "Please complete the task in Python.\nThe answer is near to: {Code}.";
pub(crate) const DEBUG_INIT: &str =
    "Only generate the Python code for the following task. {Coding Task}\nYour code should pass the test: {Test case}.";
pub(crate) const DEBUG_SUCCESS: &str = "{Code}.\nIs the code above correct? If not, please fix it.";
pub(crate) const DEBUG_FAILURE: &str = "{Code}.\nThe code above is wrong. Please fix it.";

/// Single-pass substitution: placeholder-like text inside substituted values
/// is never expanded again.
pub(crate) fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = tail.find('}').and_then(|close| {
            let key = &tail[1..close];
            pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Formats exemplars for substitution into `{Three examples}`.
pub(crate) fn format_exemplars(pet: PetId, set: &ExemplarSet) -> String {
    set.items()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let n = i + 1;
            let reasoning = e.reasoning.as_deref().unwrap_or_default();
            match pet {
                PetId::SelfPlanning => format!("Example {n}:\nIntent: {}\nPlan:\n{reasoning}", e.prompt),
                PetId::FewShotCot => {
                    format!("Example {n}:\nTask: {}\nSteps:\n{reasoning}\nCode:\n{}", e.prompt, e.solution)
                }
                _ => format!("Example {n}:\nTask: {}\nCode:\n{}", e.prompt, e.solution),
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Every stage template keyed by PET and stage, for auditing.
pub fn template_dump() -> Vec<(PetId, Stage, &'static str)> {
    vec![
        (PetId::ZeroShot, Stage::Init, ZERO_SHOT),
        (PetId::FewShot, Stage::Init, FEW_SHOT),
        (PetId::ZeroShotCot, Stage::Init, ZERO_SHOT_COT),
        (PetId::FewShotCot, Stage::Init, FEW_SHOT_COT),
        (PetId::Persona, Stage::Init, PERSONA),
        (PetId::SelfPlanning, Stage::Plan, PLAN),
        (PetId::SelfPlanning, Stage::Implement, IMPLEMENT),
        (PetId::SelfRefine, Stage::Init, REFINE_INIT),
        (PetId::SelfRefine, Stage::Reflect, REFLECT),
        (PetId::SelfRefine, Stage::Refine, REFINE),
        (PetId::ProgressiveHint, Stage::Init, HINT_INIT),
        (PetId::ProgressiveHint, Stage::Hint, HINT),
        (PetId::SelfDebug, Stage::Init, DEBUG_INIT),
        (PetId::SelfDebug, Stage::DebugJudge, DEBUG_SUCCESS),
        (PetId::SelfDebug, Stage::DebugJudge, DEBUG_FAILURE),
    ]
}
