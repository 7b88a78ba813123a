//! Cyclic test-assumption revision.
//!
//! A measurement value is assumed, then the cycle is traversed repeatedly
//! with demolition records carried from pass to pass until a pass changes
//! nothing. An assumption of entanglement missing that the next pass shows
//! to be wrong restarts the run from scratch with the corrected value.
//!
//! Demolitions are recorded with the execution rank from which they are
//! visible within a pass. When both first actions are entanglement
//! preserving each pair's present episode spans the whole cycle, so a
//! demolition recorded in one pass is visible to every measurement of the
//! pair in later passes. Otherwise records stay rank scoped.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    Assignment, DecisionRule, DecoherenceSchedule, EventId, EventValue, ExecutionCycle, Mode,
    Pair, PairState, ProtocolInstance, Provenance, ScenarioConfig,
};

pub const DEFAULT_CYCLE_LIMIT: usize = 16;

/// Rank value for demolitions that affect no measurement of the current pass.
const NEXT_PASS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantClass {
    /// The target is a frame's second measurement (A2 or B2').
    First,
    /// The target is a frame's first measurement (A2' or B2).
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TestAssumption {
    pub target: EventId,
    pub assumed: EventValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssumptionError {
    #[error("{0} is not a measurement")]
    NotAMeasurement(EventId),
    #[error("assumed value must be YES or NO")]
    UnknownValue,
}

impl TestAssumption {
    pub fn new(target: EventId, assumed: EventValue) -> Result<Self, AssumptionError> {
        if !target.is_measurement() {
            return Err(AssumptionError::NotAMeasurement(target));
        }
        if !assumed.is_known() {
            return Err(AssumptionError::UnknownValue);
        }
        Ok(TestAssumption { target, assumed })
    }

    pub fn variant_class(&self) -> VariantClass {
        match self.target {
            EventId::A2 | EventId::B2p => VariantClass::First,
            _ => VariantClass::Alternate,
        }
    }

    /// The eight admissible assumptions, alternate variants first.
    pub fn all() -> Vec<TestAssumption> {
        let targets = [EventId::A2p, EventId::B2, EventId::A2, EventId::B2p];
        targets
            .into_iter()
            .flat_map(|t| {
                [EventValue::Yes, EventValue::No].map(|v| TestAssumption {
                    target: t,
                    assumed: v,
                })
            })
            .collect()
    }
}

impl std::fmt::Display for TestAssumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.target, self.assumed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemolitionRecord {
    pub pair: Pair,
    pub pass: usize,
    pub from_rank: u8,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAction {
    Seed,
    Evaluate,
    Revise,
    Restart,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub pass: usize,
    pub action: StepAction,
    pub event: EventId,
    pub value: EventValue,
    pub pairs: PairState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassOutcome {
    Changed,
    Confirming,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pass {
    pub index: usize,
    /// Restart segment this pass belongs to (0 before any restart).
    pub run: usize,
    pub entry: EventId,
    pub steps: Vec<Step>,
    pub outcome: PassOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restart {
    pub pass: usize,
    pub target: EventId,
    pub from: EventValue,
    pub to: EventValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionTrace {
    pub assumption: TestAssumption,
    pub passes: Vec<Pass>,
    pub restarts: Vec<Restart>,
    pub final_assignment: Assignment,
    pub final_pairs: PairState,
    pub records: Vec<DemolitionRecord>,
}

impl RevisionTrace {
    /// Passes that changed a value or a record. The confirming pass and
    /// aborted passes do not count.
    pub fn cycle_count(&self) -> usize {
        self.passes
            .iter()
            .filter(|p| p.outcome == PassOutcome::Changed)
            .count()
    }

    pub fn converged(&self) -> bool {
        self.passes
            .last()
            .is_some_and(|p| p.outcome == PassOutcome::Confirming)
    }

    /// Values of the six cycle events at the end of pass `index`.
    pub fn values_after(&self, index: usize) -> Vec<(EventId, EventValue)> {
        let pass = &self.passes[index];
        pass.steps
            .iter()
            .filter(|s| s.action != StepAction::Restart)
            .map(|s| (s.event, s.value))
            .collect()
    }

    /// One JSON object per line: a header, then every step with its pass.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            assumption: &'a TestAssumption,
            class: VariantClass,
        }
        #[derive(Serialize)]
        struct Footer<'a> {
            cycles: usize,
            restarts: usize,
            final_assignment: &'a Assignment,
            final_pairs: &'a PairState,
        }
        writeln!(
            w,
            "{}",
            serde_json::to_string(&Header {
                assumption: &self.assumption,
                class: self.assumption.variant_class(),
            })?
        )?;
        for pass in &self.passes {
            for step in &pass.steps {
                writeln!(w, "{}", serde_json::to_string(step)?)?;
            }
        }
        writeln!(
            w,
            "{}",
            serde_json::to_string(&Footer {
                cycles: self.cycle_count(),
                restarts: self.restarts.len(),
                final_assignment: &self.final_assignment,
                final_pairs: &self.final_pairs,
            })?
        )
    }
}

#[derive(Debug, Error)]
pub enum EpisodicError {
    #[error("no fixed point within {limit} passes for assumption {}", trace.assumption)]
    NonTermination {
        limit: usize,
        trace: Box<RevisionTrace>,
    },
    #[error("entry point {0} is not on the measurement cycle")]
    InvalidEntry(EventId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodicEngine {
    pub cycle_limit: usize,
    /// Where passes after the first enter the cycle; the target when `None`.
    pub entry: Option<EventId>,
}

impl Default for EpisodicEngine {
    fn default() -> Self {
        EpisodicEngine {
            cycle_limit: DEFAULT_CYCLE_LIMIT,
            entry: None,
        }
    }
}

struct Run<'a> {
    instance: &'a ProtocolInstance,
    interleaved: bool,
    values: Assignment,
    records: Vec<DemolitionRecord>,
}

impl<'a> Run<'a> {
    fn new(instance: &'a ProtocolInstance) -> Self {
        Run {
            instance,
            interleaved: instance.has_interleaved_episodes(),
            values: instance.seeded_assignment(),
            records: Vec::new(),
        }
    }

    fn pair_state(&self) -> PairState {
        let mut state = PairState::intact();
        let genuine = self
            .records
            .iter()
            .filter(|r| !matches!(r.provenance, Provenance::Assumption(_)));
        let assumed = self
            .records
            .iter()
            .filter(|r| matches!(r.provenance, Provenance::Assumption(_)));
        for r in genuine.chain(assumed) {
            state.demolish(r.pair, r.provenance.clone());
        }
        state
    }

    /// Adds a record unless one with the same provenance exists. Returns
    /// whether the record set grew.
    fn record(&mut self, record: DemolitionRecord) -> bool {
        if self
            .records
            .iter()
            .any(|r| r.pair == record.pair && r.provenance == record.provenance)
        {
            return false;
        }
        self.records.push(record);
        true
    }

    fn visible(&self, pair: Pair, rank: u8, pass: usize) -> bool {
        self.records.iter().any(|r| {
            r.pair == pair
                && if r.pass < pass
                    && self.interleaved
                    && !matches!(r.provenance, Provenance::Assumption(_))
                {
                    true
                } else {
                    r.from_rank <= rank
                }
        })
    }

    fn seed(&mut self, assumption: TestAssumption) {
        self.values.set(assumption.target, assumption.assumed);
        if assumption.assumed == EventValue::No {
            let pair = assumption.target.pair().expect("measurement");
            let rank = assumption.target.rank().expect("measurement");
            self.record(DemolitionRecord {
                pair,
                pass: 1,
                from_rank: rank + 1,
                provenance: Provenance::Assumption(assumption.target),
            });
        }
    }

    fn drop_assumption(&mut self, target: EventId) {
        self.records
            .retain(|r| r.provenance != Provenance::Assumption(target));
    }

    /// Evaluates one event in place. Returns whether a record was added.
    fn evaluate(&mut self, event: EventId, pass: usize) -> bool {
        let Some(pair) = event.pair() else {
            let v = self
                .instance
                .local_rule(event, &self.values, &PairState::intact())
                .expect("decision inputs are known in cycle order");
            self.values.set(event, v);
            return false;
        };
        let rank = event.rank().expect("measurement");
        let decision = event.controlling_decision().expect("measurement");
        match self.values.get(decision) {
            EventValue::No => {
                self.values.set(event, EventValue::No);
                self.record(DemolitionRecord {
                    pair,
                    pass,
                    from_rank: rank + 1,
                    provenance: Provenance::Measurement(event),
                })
            }
            _ => {
                let v = EventValue::from_bool(!self.visible(pair, rank, pass));
                self.values.set(event, v);
                false
            }
        }
    }

    fn cross(&mut self, from: EventId, to: EventId, pass: usize) -> bool {
        let arc = crate::protocol::Arc::new(from, to);
        let entries: Vec<_> = self.instance.schedule().on_arc(arc).collect();
        let mut grew = false;
        for e in entries {
            grew |= self.record(DemolitionRecord {
                pair: e.pair,
                pass,
                from_rank: if e.slot() == 0 { 1 } else { NEXT_PASS },
                provenance: Provenance::Decoherence(arc),
            });
        }
        grew
    }
}

impl EpisodicEngine {
    pub fn new(cycle_limit: usize, entry: Option<EventId>) -> Result<Self, EpisodicError> {
        if let Some(e) = entry {
            if ExecutionCycle::position(e).is_none() {
                return Err(EpisodicError::InvalidEntry(e));
            }
        }
        Ok(EpisodicEngine { cycle_limit, entry })
    }

    pub fn evaluate(
        &self,
        instance: &ProtocolInstance,
        assumption: TestAssumption,
    ) -> Result<RevisionTrace, EpisodicError> {
        let target = assumption.target;
        let later_entry = self.entry.unwrap_or(target);
        let later_order =
            ExecutionCycle::traversal_from(later_entry).ok_or(EpisodicError::InvalidEntry(later_entry))?;
        let first_order = ExecutionCycle::traversal_from(target).expect("measurement on cycle");

        let mut passes: Vec<Pass> = Vec::new();
        let mut restarts: Vec<Restart> = Vec::new();
        let mut current = assumption;
        let mut run = Run::new(instance);
        let mut run_index = 0;
        let mut run_pass = 0;
        let mut pending = true;

        loop {
            if passes.len() >= self.cycle_limit {
                let trace = RevisionTrace {
                    assumption,
                    passes,
                    restarts,
                    final_assignment: run.values,
                    final_pairs: run.pair_state(),
                    records: run.records,
                };
                return Err(EpisodicError::NonTermination {
                    limit: self.cycle_limit,
                    trace: Box::new(trace),
                });
            }
            let index = passes.len() + 1;
            run_pass += 1;
            let order = if run_pass == 1 { first_order } else { later_order };
            let before = run.values;
            let mut grew = false;
            let mut steps = Vec::with_capacity(7);
            let mut aborted = false;

            for (i, &event) in order.iter().enumerate() {
                let action = if run_pass == 1 && event == target {
                    run.seed(current);
                    grew = true;
                    StepAction::Seed
                } else if pending && event == target {
                    pending = false;
                    run.drop_assumption(target);
                    grew |= run.evaluate(event, index);
                    let got = run.values.get(event);
                    let restart_allowed = restarts.is_empty()
                        && (!run.interleaved || current.assumed == EventValue::No);
                    if got != current.assumed && restart_allowed {
                        restarts.push(Restart {
                            pass: index,
                            target,
                            from: current.assumed,
                            to: got,
                        });
                        steps.push(Step {
                            pass: index,
                            action: StepAction::Restart,
                            event,
                            value: got,
                            pairs: run.pair_state(),
                        });
                        current = TestAssumption {
                            target,
                            assumed: got,
                        };
                        aborted = true;
                        break;
                    }
                    if got != current.assumed {
                        StepAction::Revise
                    } else {
                        StepAction::Evaluate
                    }
                } else {
                    grew |= run.evaluate(event, index);
                    StepAction::Evaluate
                };
                steps.push(Step {
                    pass: index,
                    action,
                    event,
                    value: run.values.get(event),
                    pairs: run.pair_state(),
                });
                let next = order[(i + 1) % order.len()];
                grew |= run.cross(event, next, index);
            }

            let outcome = if aborted {
                PassOutcome::Aborted
            } else if run_pass > 1 && !grew && run.values == before {
                PassOutcome::Confirming
            } else {
                PassOutcome::Changed
            };
            passes.push(Pass {
                index,
                run: run_index,
                entry: order[0],
                steps,
                outcome,
            });
            match outcome {
                PassOutcome::Confirming => break,
                PassOutcome::Aborted => {
                    run = Run::new(instance);
                    run_index += 1;
                    run_pass = 0;
                    pending = true;
                }
                PassOutcome::Changed => {}
            }
        }

        Ok(RevisionTrace {
            assumption,
            final_pairs: run.pair_state(),
            final_assignment: run.values,
            records: run.records,
            passes,
            restarts,
        })
    }

    pub fn run_all_variants(
        &self,
        instance: &ProtocolInstance,
    ) -> Result<Vec<VariantRow>, EpisodicError> {
        TestAssumption::all()
            .into_iter()
            .map(|assumption| {
                let trace = self.evaluate(instance, assumption)?;
                Ok(VariantRow {
                    class: assumption.variant_class(),
                    assumption,
                    cycles: trace.cycle_count(),
                    restarts: trace.restarts.len(),
                    final_assignment: trace.final_assignment,
                    trace,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantRow {
    pub assumption: TestAssumption,
    pub class: VariantClass,
    pub cycles: usize,
    pub restarts: usize,
    pub final_assignment: Assignment,
    #[serde(skip)]
    pub trace: RevisionTrace,
}

impl Default for RevisionTrace {
    fn default() -> Self {
        RevisionTrace {
            assumption: TestAssumption {
                target: EventId::A2p,
                assumed: EventValue::Yes,
            },
            passes: Vec::new(),
            restarts: Vec::new(),
            final_assignment: Assignment::unknown(),
            final_pairs: PairState::intact(),
            records: Vec::new(),
        }
    }
}

/// Convenience wrapper with the default engine.
pub fn evaluate(
    instance: &ProtocolInstance,
    assumption: TestAssumption,
) -> Result<RevisionTrace, EpisodicError> {
    EpisodicEngine::default().evaluate(instance, assumption)
}

pub fn run_all_variants(instance: &ProtocolInstance) -> Result<Vec<VariantRow>, EpisodicError> {
    EpisodicEngine::default().run_all_variants(instance)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "assignments", rename_all = "lowercase")]
pub enum Prediction {
    /// Every admissible assumption converges to the same assignment.
    Determined(Assignment),
    /// Different assumptions reach different fixed points.
    Branching(Vec<Assignment>),
}

impl Prediction {
    pub fn assignments(&self) -> Vec<Assignment> {
        match self {
            Prediction::Determined(a) => vec![*a],
            Prediction::Branching(v) => v.clone(),
        }
    }

    pub fn determined(&self) -> Option<&Assignment> {
        match self {
            Prediction::Determined(a) => Some(a),
            Prediction::Branching(_) => None,
        }
    }
}

fn fixed_points(
    instances: impl IntoIterator<Item = ProtocolInstance>,
) -> Result<Prediction, EpisodicError> {
    let mut finals = BTreeSet::new();
    for instance in instances {
        for row in run_all_variants(&instance)? {
            finals.insert(row.final_assignment);
        }
    }
    let finals: Vec<_> = finals.into_iter().collect();
    Ok(match finals.as_slice() {
        [only] => Prediction::Determined(*only),
        _ => Prediction::Branching(finals),
    })
}

/// Predicted final values under cyclic revision.
///
/// A stochastic config with a positive rate and both first actions
/// preserving is resolved over every schedule that decoheres both pairs,
/// since an unlimited number of passes makes that certain.
pub fn predict(config: &ScenarioConfig) -> Result<Prediction, crate::protocol::ConfigError> {
    let instance = ProtocolInstance::new(config.clone())?;
    let result = match config.mode {
        Mode::Stochastic { p } if p > 0.0 && config.both_first_yes() => fixed_points(
            DecoherenceSchedule::all()
                .into_iter()
                .filter(|s| s.len() == Pair::ALL.len())
                .map(|s| instance.with_schedule(s)),
        ),
        _ => fixed_points([instance]),
    };
    Ok(result.expect("revision converges on every valid instance"))
}

/// The third-case instance: SAME/OPPOSITE rules, both first actions preserving.
pub fn third_case() -> ProtocolInstance {
    ProtocolInstance::new(ScenarioConfig::ideal(
        DecisionRule::Same,
        DecisionRule::Opposite,
        EventValue::Yes,
        EventValue::Yes,
    ))
    .expect("valid config")
}
