//! Single-history semantics: a scenario is a causal loop when no assignment
//! of event values satisfies every local rule at once.
//!
//! With scheduled decoherence each ideal history is treated as a branch.
//! Measurements of a decohered pair that executed before the decoherence
//! keep their branch value; a branch with no consistent continuation is
//! broken and makes the scenario a loop.

use serde::{Deserialize, Serialize};

use crate::protocol::{
    Assignment, DecoherenceEntry, EventId, EventValue, ExecutionCycle, ProtocolInstance,
    ScenarioConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub event: EventId,
    pub value: EventValue,
}

/// A chain of forced values around the measurement cycle that returns to
/// its starting event with the opposite value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub chain: Vec<Link>,
}

impl Witness {
    pub fn start(&self) -> Link {
        self.chain[0]
    }

    pub fn end(&self) -> Link {
        *self.chain.last().expect("non-empty chain")
    }

    /// Compact rendering, e.g. `A2'=YES -> A1=YES -> ... -> A2'=NO`.
    pub fn render(&self) -> String {
        self.chain
            .iter()
            .map(|l| format!("{}={}", l.event, l.value))
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

/// An ideal history that has no continuation once a decoherence is applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokenBranch {
    pub history: Assignment,
    pub pinned: Vec<Link>,
    pub decoherence: Vec<DecoherenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub consistent_assignments: Vec<Assignment>,
    pub causal_loop: bool,
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub broken_branches: Vec<BrokenBranch>,
}

impl ConsistencyVerdict {
    pub fn unique(&self) -> Option<&Assignment> {
        match self.consistent_assignments.as_slice() {
            [only] => Some(only),
            _ => None,
        }
    }
}

/// Every total assignment over the six solved events that satisfies all
/// local rules under the instance's schedule, in canonical order.
pub fn consistent_histories(instance: &ProtocolInstance) -> Vec<Assignment> {
    let base = instance.seeded_assignment();
    let mut out: Vec<Assignment> = (0u32..1 << EventId::FREE.len())
        .map(|bits| {
            EventId::FREE
                .iter()
                .enumerate()
                .fold(base, |a, (i, &e)| {
                    a.with(e, EventValue::from_bool(bits & (1 << i) == 0))
                })
        })
        .filter(|a| instance.is_consistent(a))
        .collect();
    out.sort();
    out
}

/// Exhaustive verdict. Dispatches to [`loop_with_schedule`] when the
/// instance carries scheduled decoherence.
pub fn enumerate_consistent(instance: &ProtocolInstance) -> ConsistencyVerdict {
    if !instance.schedule().is_empty() {
        return loop_with_schedule(instance);
    }
    let histories = consistent_histories(instance);
    let witness = histories
        .is_empty()
        .then(|| cycle_witness(instance, &instance.seeded_assignment()))
        .flatten();
    ConsistencyVerdict {
        causal_loop: histories.is_empty(),
        consistent_assignments: histories,
        witness,
        broken_branches: Vec::new(),
    }
}

/// Branch verdict under scheduled decoherence.
pub fn loop_with_schedule(instance: &ProtocolInstance) -> ConsistencyVerdict {
    let ideal = instance.ideal();
    let baseline = consistent_histories(&ideal);
    if baseline.is_empty() {
        let mut verdict = enumerate_consistent(&ideal);
        verdict.consistent_assignments.clear();
        return verdict;
    }
    let scheduled = consistent_histories(instance);
    let mut continuations = Vec::new();
    let mut broken = Vec::new();
    for history in &baseline {
        let pinned = pinned_links(instance, history);
        let matching: Vec<Assignment> = scheduled
            .iter()
            .filter(|a| pinned.iter().all(|l| a.get(l.event) == l.value))
            .copied()
            .collect();
        if matching.is_empty() {
            broken.push(BrokenBranch {
                history: *history,
                pinned,
                decoherence: instance.schedule().entries().collect(),
            });
        }
        continuations.extend(matching);
    }
    continuations.sort();
    continuations.dedup();
    let witness = broken.first().and_then(|b| {
        b.pinned
            .iter()
            .find_map(|l| chain_from(instance, &b.history, l.event, l.value))
    });
    ConsistencyVerdict {
        causal_loop: !broken.is_empty(),
        consistent_assignments: continuations,
        witness,
        broken_branches: broken,
    }
}

/// Measurements of each decohered pair that execute before the decoherence.
fn pinned_links(instance: &ProtocolInstance, history: &Assignment) -> Vec<Link> {
    let mut out = Vec::new();
    for entry in instance.schedule().entries() {
        let [m0, m1] = entry.pair.measurements();
        let executed: &[EventId] = if entry.slot() == 0 { &[m0] } else { &[m0, m1] };
        out.extend(executed.iter().map(|&event| Link {
            event,
            value: history.get(event),
        }));
    }
    out
}

/// Forces values around the cycle from `start = value` and returns the
/// chain if it comes back to `start` with a different value.
fn chain_from(
    instance: &ProtocolInstance,
    base: &Assignment,
    start: EventId,
    value: EventValue,
) -> Option<Witness> {
    let order = ExecutionCycle::traversal_from(start)?;
    let mut a = base.with(start, value);
    let mut chain = vec![Link { event: start, value }];
    for &e in order.iter().skip(1).chain(std::iter::once(&start)) {
        let pairs = instance.pair_state_at(e, &a).ok()?;
        let v = instance.local_rule(e, &a, &pairs).ok()?;
        chain.push(Link { event: e, value: v });
        if e == start {
            return (v != value).then_some(Witness { chain });
        }
        a.set(e, v);
    }
    None
}

fn cycle_witness(instance: &ProtocolInstance, base: &Assignment) -> Option<Witness> {
    [EventValue::Yes, EventValue::No]
        .into_iter()
        .find_map(|v| chain_from(instance, base, EventId::A2p, v))
}

/// Recomputes every cycle event once, in cycle order from `entry`, reading
/// the current values. A consistent assignment reproduces itself.
pub fn replay(instance: &ProtocolInstance, assignment: &Assignment, entry: EventId) -> Assignment {
    let mut a = *assignment;
    for e in ExecutionCycle::traversal_from(entry).expect("entry on the measurement cycle") {
        let pairs = instance
            .pair_state_at(e, &a)
            .expect("finalized assignment");
        let v = instance.local_rule(e, &a, &pairs).expect("finalized assignment");
        a.set(e, v);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub config: ScenarioConfig,
    pub verdict: ConsistencyVerdict,
}

/// Ideal verdicts for all 16 rule/first-action combinations.
pub fn scenario_table() -> Vec<ScenarioRow> {
    ScenarioConfig::all_ideal()
        .into_iter()
        .map(|config| {
            let instance = ProtocolInstance::new(config.clone()).expect("ideal configs are valid");
            ScenarioRow {
                verdict: enumerate_consistent(&instance),
                config,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{build_instance, DecisionRule::*, DecoherenceSchedule, Pair};
    use EventValue::*;

    fn inst(cfg: ScenarioConfig) -> ProtocolInstance {
        build_instance(cfg).unwrap()
    }

    fn free_values(a: &Assignment) -> [EventValue; 6] {
        EventId::FREE.map(|e| a.get(e))
    }

    #[test]
    fn third_case_is_a_loop_with_witness() {
        let v = enumerate_consistent(&inst(ScenarioConfig::ideal(Same, Opposite, Yes, Yes)));
        assert!(v.causal_loop);
        assert!(v.consistent_assignments.is_empty());
        let w = v.witness.expect("loop has a witness");
        assert_eq!(w.start().event, EventId::A2p);
        assert_eq!(w.end().event, EventId::A2p);
        assert_ne!(w.start().value, w.end().value);
        // A2' = B2' = not B2 = not A1 = not A2' appears in order
        let pos = |e: EventId, v: EventValue| {
            w.chain
                .iter()
                .position(|l| l.event == e && l.value == v)
                .unwrap_or_else(|| panic!("{e}={v} missing from {}", w.render()))
        };
        let s = w.start().value;
        assert!(pos(EventId::A1, s) < pos(EventId::B2, s));
        assert!(pos(EventId::B2, s) < pos(EventId::B2p, s.negate()));
    }

    #[test]
    fn opposite_opposite_has_two_histories() {
        let v = enumerate_consistent(&inst(ScenarioConfig::ideal(Opposite, Opposite, Yes, Yes)));
        assert!(!v.causal_loop);
        assert!(v.witness.is_none());
        let got: Vec<_> = v.consistent_assignments.iter().map(free_values).collect();
        // FREE order: A2', A1, A2, B2, B1', B2'
        let h = [Yes, No, No, No, Yes, Yes];
        let complement = h.map(EventValue::negate);
        assert_eq!(got.len(), 2);
        assert!(got.contains(&h));
        assert!(got.contains(&complement));
    }

    #[test]
    fn same_same_includes_all_yes_and_all_no() {
        let v = enumerate_consistent(&inst(ScenarioConfig::ideal(Same, Same, Yes, Yes)));
        let got: Vec<_> = v.consistent_assignments.iter().map(free_values).collect();
        assert_eq!(got, vec![[Yes; 6], [No; 6]]);
    }

    #[test]
    fn table_marks_only_mixed_rules_with_yes_actions() {
        let table = scenario_table();
        assert_eq!(table.len(), 16);
        for row in &table {
            let c = &row.config;
            let expect_loop = c.rule_a != c.rule_b && c.both_first_yes();
            assert_eq!(row.verdict.causal_loop, expect_loop, "{c:?}");
            if !c.both_first_yes() {
                assert_eq!(row.verdict.consistent_assignments.len(), 1, "{c:?}");
            }
        }
    }

    #[test]
    fn no_no_rows() {
        let v = enumerate_consistent(&inst(ScenarioConfig::ideal(Same, Same, No, No)));
        let a = v.unique().unwrap();
        assert!(a.measurements().iter().all(|&m| m == No));

        let v = enumerate_consistent(&inst(ScenarioConfig::ideal(Opposite, Opposite, No, No)));
        let a = v.unique().unwrap();
        assert_eq!(a.get(EventId::A2), Yes);
        assert_eq!(a.get(EventId::B2p), Yes);
    }

    #[test]
    fn decoherence_between_s_measurements_breaks_scenario_one() {
        let schedule =
            DecoherenceSchedule::from_entries(["S@A2->B2".parse().unwrap()]).unwrap();
        let base = ScenarioConfig::ideal(Same, Same, Yes, Yes);
        let v = enumerate_consistent(&inst(base.clone().with_schedule(schedule)));
        assert!(v.causal_loop);
        assert_eq!(v.broken_branches.len(), 1);
        assert_eq!(v.broken_branches[0].history.get(EventId::A2), Yes);
        let w = v.witness.unwrap();
        assert_eq!(w.start(), Link { event: EventId::A2, value: Yes });
        assert_eq!(w.end(), Link { event: EventId::A2, value: No });
        // the all-NO branch survives
        assert_eq!(v.consistent_assignments.len(), 1);
        assert_eq!(v.consistent_assignments[0].yes_measurements(), 0);

        let v = enumerate_consistent(&inst(base.with_schedule(DecoherenceSchedule::new())));
        assert!(!v.causal_loop);
    }

    #[test]
    fn late_slots_do_not_change_single_history() {
        for pair in Pair::ALL {
            for arc in ExecutionCycle::pair_slots(pair).into_iter().skip(1) {
                let schedule =
                    DecoherenceSchedule::from_entries([DecoherenceEntry { pair, arc }]).unwrap();
                let v = enumerate_consistent(&inst(
                    ScenarioConfig::ideal(Same, Same, Yes, Yes).with_schedule(schedule),
                ));
                assert!(!v.causal_loop, "{pair}@{arc}");
            }
        }
    }

    #[test]
    fn ideal_histories_replay_from_every_entry() {
        for row in scenario_table() {
            let instance = inst(row.config.clone());
            for a in &row.verdict.consistent_assignments {
                for entry in ExecutionCycle::CYCLE {
                    assert_eq!(&replay(&instance, a, entry), a);
                }
            }
        }
    }

    #[test]
    fn verdict_serializes() {
        let v = enumerate_consistent(&inst(ScenarioConfig::ideal(Same, Opposite, Yes, Yes)));
        let json = serde_json::to_string(&v).unwrap();
        let back: ConsistencyVerdict = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
