//! Stage machines for single- and multi-round PETs.
//!
//! Each stage is sent as one user message; earlier stages of the same
//! conversation are replayed as alternating user/assistant history.

use serde::{Deserialize, Serialize};

use super::templates::{self, format_exemplars};
use super::{extract_code, ExemplarSet, Iteration, PetError, PetId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Plan,
    Implement,
    Reflect,
    Refine,
    Hint,
    DebugJudge,
    Done,
}

/// Result of running the shown test case for self-debugging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVerdict {
    Pass,
    Fail,
}

/// Prior-stage outputs a template may need.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInputs {
    pub code: Option<String>,
    pub plan: Option<String>,
    pub feedback: Option<String>,
    pub test_case: Option<String>,
    pub verdict: Option<TestVerdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolState {
    pub pet: PetId,
    pub stage: Stage,
    pub transcript: Vec<Message>,
    pub rounds_used: usize,
    pub max_debug_rounds: usize,
    pub debug_rounds: usize,
    outputs: StageInputs,
}

impl ProtocolState {
    pub fn new(pet: PetId, max_debug_rounds: usize) -> Self {
        let stage = if pet == PetId::SelfPlanning { Stage::Plan } else { Stage::Init };
        Self {
            pet,
            stage,
            transcript: Vec::new(),
            rounds_used: 0,
            max_debug_rounds: max_debug_rounds.max(1),
            debug_rounds: 0,
            outputs: StageInputs::default(),
        }
    }

    /// Outputs captured from earlier stages, ready to pass to [`render`].
    pub fn aux(&self) -> StageInputs {
        self.outputs.clone()
    }

    pub fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    /// Whether the next [`advance`] expects the shown-test verdict for the response.
    pub fn wants_test_outcome(&self) -> bool {
        self.pet == PetId::SelfDebug
            && match self.stage {
                Stage::Init => true,
                Stage::DebugJudge => self.debug_rounds + 1 < self.max_debug_rounds,
                _ => false,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Advance {
    Next(ProtocolState),
    Done { state: ProtocolState, code: String },
}

fn require<'a>(value: &'a Option<String>, state: &ProtocolState, what: &'static str) -> Result<&'a str, PetError> {
    value.as_deref().ok_or(PetError::MissingAux { pet: state.pet, stage: state.stage, what })
}

fn exemplar_text(state: &ProtocolState, exemplars: Option<&ExemplarSet>) -> Result<String, PetError> {
    let set = exemplars.ok_or_else(|| PetError::MissingExemplars {
        pet: state.pet,
        reason: "no exemplar set supplied".into(),
    })?;
    if state.pet.needs_reasoning() && set.items().iter().any(|e| e.reasoning.is_none()) {
        return Err(PetError::MissingExemplars {
            pet: state.pet,
            reason: "exemplars lack reasoning steps".into(),
        });
    }
    Ok(format_exemplars(state.pet, set))
}

/// Builds the message list for the current stage: prior history plus the
/// stage prompt as the final user message.
pub fn render(
    state: &ProtocolState,
    task: &str,
    exemplars: Option<&ExemplarSet>,
    aux: &StageInputs,
) -> Result<Vec<Message>, PetError> {
    use templates::*;
    let prompt = match (state.pet, state.stage) {
        (_, Stage::Done) => {
            return Err(PetError::ProtocolViolation(format!("{} has no prompt after completion", state.pet)));
        }
        (PetId::ZeroShot, Stage::Init) => fill(ZERO_SHOT, &[("Coding Task", task)]),
        (PetId::ZeroShotCot, Stage::Init) => fill(ZERO_SHOT_COT, &[("Coding Task", task)]),
        (PetId::Persona, Stage::Init) => fill(PERSONA, &[("Coding Task", task)]),
        (PetId::FewShot, Stage::Init) => {
            let ex = exemplar_text(state, exemplars)?;
            fill(FEW_SHOT, &[("Three examples", &ex), ("Coding Task", task)])
        }
        (PetId::FewShotCot, Stage::Init) => {
            let ex = exemplar_text(state, exemplars)?;
            fill(FEW_SHOT_COT, &[("Three examples", &ex), ("Coding Task", task)])
        }
        (PetId::SelfPlanning, Stage::Plan) => {
            let ex = exemplar_text(state, exemplars)?;
            fill(PLAN, &[("Three examples", &ex), ("Coding Task", task)])
        }
        (PetId::SelfPlanning, Stage::Implement) => {
            let plan = require(&aux.plan, state, "the generated plan")?;
            fill(IMPLEMENT, &[("Coding Task", task), ("Plan", plan)])
        }
        (PetId::SelfRefine, Stage::Init) => fill(REFINE_INIT, &[("Coding Task", task)]),
        (PetId::SelfRefine, Stage::Reflect) => {
            let code = require(&aux.code, state, "the initial code")?;
            fill(REFLECT, &[("Code", code)])
        }
        (PetId::SelfRefine, Stage::Refine) => {
            let code = require(&aux.code, state, "the initial code")?;
            let feedback = require(&aux.feedback, state, "reflection feedback")?;
            fill(REFINE, &[("Code", code), ("Feedback", feedback)])
        }
        (PetId::ProgressiveHint, Stage::Init) => fill(HINT_INIT, &[("Coding Task", task)]),
        (PetId::ProgressiveHint, Stage::Hint) => {
            let code = require(&aux.code, state, "the initial code")?;
            fill(HINT, &[("Code", code)])
        }
        (PetId::SelfDebug, Stage::Init) => {
            let test = require(&aux.test_case, state, "one test case")?;
            fill(DEBUG_INIT, &[("Coding Task", task), ("Test case", test)])
        }
        (PetId::SelfDebug, Stage::DebugJudge) => {
            let code = require(&aux.code, state, "the generated code")?;
            let verdict = aux.verdict.ok_or(PetError::MissingAux {
                pet: state.pet,
                stage: state.stage,
                what: "the shown-test verdict",
            })?;
            let template = match verdict {
                TestVerdict::Pass => DEBUG_SUCCESS,
                TestVerdict::Fail => DEBUG_FAILURE,
            };
            fill(template, &[("Code", code)])
        }
        (pet, stage) => {
            return Err(PetError::ProtocolViolation(format!("{pet} has no stage {stage:?}")));
        }
    };
    let mut messages = state.transcript.clone();
    messages.push(Message::user(prompt));
    Ok(messages)
}

/// Consumes the model's reply to `prompt` and moves to the next stage.
pub fn advance(
    mut state: ProtocolState,
    prompt: &str,
    response: &str,
    test_outcome: Option<TestVerdict>,
) -> Result<Advance, PetError> {
    if state.is_done() {
        return Err(PetError::ProtocolViolation(format!("advance called on a finished {} protocol", state.pet)));
    }
    state.transcript.push(Message::user(prompt));
    state.transcript.push(Message::assistant(response));
    state.rounds_used += 1;

    let next = match (state.pet, state.stage) {
        (pet, Stage::Init) if pet.iteration() == Iteration::Single => Stage::Done,
        (PetId::SelfPlanning, Stage::Plan) => {
            state.outputs.plan = Some(response.trim().to_string());
            Stage::Implement
        }
        (PetId::SelfPlanning, Stage::Implement) => Stage::Done,
        (PetId::SelfRefine, Stage::Init) => {
            state.outputs.code = Some(extract_code(response));
            Stage::Reflect
        }
        (PetId::SelfRefine, Stage::Reflect) => {
            state.outputs.feedback = Some(response.trim().to_string());
            Stage::Refine
        }
        (PetId::SelfRefine, Stage::Refine) => Stage::Done,
        (PetId::ProgressiveHint, Stage::Init) => {
            state.outputs.code = Some(extract_code(response));
            Stage::Hint
        }
        (PetId::ProgressiveHint, Stage::Hint) => Stage::Done,
        (PetId::SelfDebug, Stage::Init) => {
            let verdict = test_outcome.ok_or(PetError::MissingAux {
                pet: state.pet,
                stage: state.stage,
                what: "the shown-test outcome",
            })?;
            state.outputs.code = Some(extract_code(response));
            state.outputs.verdict = Some(verdict);
            Stage::DebugJudge
        }
        (PetId::SelfDebug, Stage::DebugJudge) => {
            state.debug_rounds += 1;
            state.outputs.code = Some(extract_code(response));
            match test_outcome {
                Some(TestVerdict::Fail) if state.debug_rounds < state.max_debug_rounds => {
                    state.outputs.verdict = Some(TestVerdict::Fail);
                    Stage::DebugJudge
                }
                _ => Stage::Done,
            }
        }
        (pet, stage) => {
            return Err(PetError::ProtocolViolation(format!("{pet} has no stage {stage:?}")));
        }
    };
    state.stage = next;
    if next == Stage::Done {
        let code = extract_code(response);
        Ok(Advance::Done { state, code })
    } else {
        Ok(Advance::Next(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pets::Exemplar;

    const TASK: &str = "Write a function to add two numbers";

    fn exemplars() -> ExemplarSet {
        ExemplarSet::new(std::array::from_fn(|i| Exemplar {
            task_id: format!("ex{i}"),
            prompt: format!("task {i}"),
            solution: format!("def f{i}(): return {i}"),
            reasoning: Some(format!("1. return {i}")),
        }))
    }

    fn aux_with_test(state: &ProtocolState) -> StageInputs {
        StageInputs { test_case: Some("assert add(1, 2) == 3".into()), ..state.aux() }
    }

    fn last_prompt(msgs: &[Message]) -> &str {
        &msgs.last().unwrap().content
    }

    /// Drives a PET to completion with scripted replies; returns (responses used, final code).
    fn drive(pet: PetId, replies: &[&str], verdicts: &[TestVerdict], max_debug: usize) -> (usize, String) {
        let ex = exemplars();
        let mut state = ProtocolState::new(pet, max_debug);
        let mut verdicts = verdicts.iter().copied();
        for reply in replies {
            let msgs = render(&state, TASK, Some(&ex), &aux_with_test(&state)).unwrap();
            let outcome = if state.wants_test_outcome() { verdicts.next() } else { None };
            match advance(state, last_prompt(&msgs), reply, outcome).unwrap() {
                Advance::Next(s) => state = s,
                Advance::Done { state, code } => return (state.rounds_used, code),
            }
        }
        panic!("{pet} did not finish within {} replies", replies.len());
    }

    #[test]
    fn zero_shot_prompt_text() {
        let state = ProtocolState::new(PetId::ZeroShot, 1);
        let msgs = render(&state, "T", None, &state.aux()).unwrap();
        assert_eq!(msgs, vec![Message::user("Only generate the Python code for the following task. T.")]);
    }

    #[test]
    fn zero_shot_cot_appends_step_by_step() {
        let state = ProtocolState::new(PetId::ZeroShotCot, 1);
        let msgs = render(&state, "T", None, &state.aux()).unwrap();
        assert_eq!(
            last_prompt(&msgs),
            "Only generate the Python code for the following task. T.\nLet's generate the code step by step."
        );
    }

    #[test]
    fn self_debug_failure_stage() {
        let state = ProtocolState::new(PetId::SelfDebug, 1);
        let msgs = render(&state, "T", None, &aux_with_test(&state)).unwrap();
        let Advance::Next(state) = advance(state, last_prompt(&msgs), "```\nbad()\n```", Some(TestVerdict::Fail)).unwrap()
        else {
            panic!("expected judge stage")
        };
        assert_eq!(state.stage, Stage::DebugJudge);
        let msgs = render(&state, "T", None, &state.aux()).unwrap();
        assert_eq!(last_prompt(&msgs), "bad().\nThe code above is wrong. Please fix it.");
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[1].role, Role::Assistant);

        let state = ProtocolState::new(PetId::SelfDebug, 1);
        let msgs = render(&state, "T", None, &aux_with_test(&state)).unwrap();
        let Advance::Next(state) = advance(state, last_prompt(&msgs), "ok()", Some(TestVerdict::Pass)).unwrap() else {
            panic!()
        };
        let msgs = render(&state, "T", None, &state.aux()).unwrap();
        assert_eq!(last_prompt(&msgs), "ok().\nIs the code above correct? If not, please fix it.");
    }

    #[test]
    fn round_counts_per_pet() {
        for pet in [PetId::ZeroShot, PetId::FewShot, PetId::ZeroShotCot, PetId::FewShotCot, PetId::Persona] {
            assert_eq!(drive(pet, &["a", "b", "c"], &[], 1).0, 1, "{pet}");
        }
        assert_eq!(drive(PetId::SelfPlanning, &["plan", "code", "x"], &[], 1).0, 2);
        assert_eq!(drive(PetId::ProgressiveHint, &["a", "b", "c"], &[], 1).0, 2);
        assert_eq!(drive(PetId::SelfRefine, &["a", "b", "c", "d"], &[], 1).0, 3);
        assert_eq!(drive(PetId::SelfDebug, &["a", "b", "c"], &[TestVerdict::Fail], 1).0, 2);
        assert_eq!(drive(PetId::SelfDebug, &["a", "b", "c", "d"], &[TestVerdict::Pass], 3).0, 2);
        assert_eq!(
            drive(PetId::SelfDebug, &["a", "b", "c", "d"], &[TestVerdict::Fail, TestVerdict::Fail, TestVerdict::Fail], 3).0,
            4
        );
        assert_eq!(
            drive(PetId::SelfDebug, &["a", "b", "c", "d"], &[TestVerdict::Fail, TestVerdict::Fail, TestVerdict::Pass], 3).0,
            3
        );
    }

    #[test]
    fn self_refine_carries_initial_code_and_feedback() {
        let ex = exemplars();
        let state = ProtocolState::new(PetId::SelfRefine, 1);
        let m = render(&state, TASK, None, &state.aux()).unwrap();
        assert!(!last_prompt(&m).ends_with('.'));
        let Advance::Next(state) = advance(state, last_prompt(&m), "```python\nv1\n```", None).unwrap() else { panic!() };
        assert_eq!(state.stage, Stage::Reflect);
        let m = render(&state, TASK, Some(&ex), &state.aux()).unwrap();
        assert!(last_prompt(&m).starts_with("Here is a code snippet: v1.\nPlease review the code"));
        let Advance::Next(state) = advance(state, last_prompt(&m), "use a loop", None).unwrap() else { panic!() };
        let m = render(&state, TASK, None, &state.aux()).unwrap();
        assert_eq!(
            last_prompt(&m),
            "Here is a code snippet: v1.\nBased on the following feedback, refine the code:\nuse a loop."
        );
        let Advance::Done { code, state } = advance(state, last_prompt(&m), "```\nv2\n```", None).unwrap() else {
            panic!()
        };
        assert_eq!(code, "v2");
        assert_eq!(state.transcript.len(), 6);
    }

    #[test]
    fn missing_inputs_are_errors() {
        let state = ProtocolState::new(PetId::FewShot, 1);
        assert!(matches!(render(&state, TASK, None, &state.aux()), Err(PetError::MissingExemplars { .. })));
        let state = ProtocolState::new(PetId::SelfDebug, 1);
        assert!(matches!(render(&state, TASK, None, &state.aux()), Err(PetError::MissingAux { .. })));
        let mut no_reasoning = exemplars();
        let items: [Exemplar; 3] = no_reasoning.items().clone().map(|mut e| {
            e.reasoning = None;
            e
        });
        no_reasoning = ExemplarSet::new(items);
        let state = ProtocolState::new(PetId::FewShotCot, 1);
        assert!(render(&state, TASK, Some(&no_reasoning), &state.aux()).is_err());
        let state = ProtocolState::new(PetId::SelfDebug, 1);
        assert!(matches!(advance(state, "p", "r", None), Err(PetError::MissingAux { .. })));
    }

    #[test]
    fn advance_after_done_is_a_violation() {
        let state = ProtocolState::new(PetId::Persona, 1);
        let Advance::Done { state, code } = advance(state, "p", "x = 1", None).unwrap() else { panic!() };
        assert_eq!(code, "x = 1");
        assert!(matches!(advance(state, "p", "y", None), Err(PetError::ProtocolViolation(_))));
    }

    #[test]
    fn init_prompts_are_pairwise_distinct_and_pure() {
        let ex = exemplars();
        let prompts: Vec<String> = PetId::ALL
            .into_iter()
            .map(|pet| {
                let state = ProtocolState::new(pet, 1);
                let a = render(&state, TASK, Some(&ex), &aux_with_test(&state)).unwrap();
                let b = render(&state, TASK, Some(&ex), &aux_with_test(&state)).unwrap();
                assert_eq!(a, b);
                last_prompt(&a).to_string()
            })
            .collect();
        for i in 0..prompts.len() {
            for j in i + 1..prompts.len() {
                assert_ne!(prompts[i], prompts[j]);
            }
        }
    }

    #[test]
    fn placeholders_in_task_text_are_not_expanded() {
        let state = ProtocolState::new(PetId::ZeroShot, 1);
        let m = render(&state, "print('{Code}')", None, &state.aux()).unwrap();
        assert_eq!(last_prompt(&m), "Only generate the Python code for the following task. print('{Code}').");
    }
}
