//! Protocol events, their cyclic execution order and the local rules.
//!
//! Two observers (frames A and B) each make two decisions and two
//! measurements on photons from two entangled pair sources, `S` and `S'`.
//! Frame A receives `S'` photons first, frame B receives `S` photons first,
//! and the delayed-choice wiring forces each frame's second measurement to
//! be executed before the other frame's first one. The resulting precedence
//! graph has a single directed cycle through all four measurements:
//!
//! ```text
//! B2' -> A2' -> A1 -> A2 -> B2 -> B1' -> B2'
//! ```
//!
//! `A1'` and `B1` (the first decisions) sit outside the cycle and are free
//! inputs. Everything else is fixed by the local rules once a value for
//! every event has been chosen.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Frame {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Decision,
    Measurement,
}

/// One of the two entangled photon-pair sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pair {
    S,
    Sp,
}

impl Pair {
    pub const ALL: [Pair; 2] = [Pair::S, Pair::Sp];

    pub fn index(self) -> usize {
        match self {
            Pair::S => 0,
            Pair::Sp => 1,
        }
    }

    pub fn mirror(self) -> Pair {
        match self {
            Pair::S => Pair::Sp,
            Pair::Sp => Pair::S,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pair::S => "S",
            Pair::Sp => "S'",
        }
    }

    /// The measurements of this pair in execution order.
    pub fn measurements(self) -> [EventId; 2] {
        match self {
            Pair::S => [EventId::A2, EventId::B2],
            Pair::Sp => [EventId::B2p, EventId::A2p],
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pair {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "S" | "s" => Ok(Pair::S),
            "S'" | "Sp" | "sp" | "s'" => Ok(Pair::Sp),
            other => Err(ParseError::Pair(other.to_string())),
        }
    }
}

/// The eight protocol events. `p` marks the primed events.
///
/// The declaration order is the canonical order used when sorting
/// assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventId {
    A1p,
    A2p,
    A1,
    A2,
    B1,
    B2,
    B1p,
    B2p,
}

impl EventId {
    pub const ALL: [EventId; 8] = [
        EventId::A1p,
        EventId::A2p,
        EventId::A1,
        EventId::A2,
        EventId::B1,
        EventId::B2,
        EventId::B1p,
        EventId::B2p,
    ];

    pub const MEASUREMENTS: [EventId; 4] = [EventId::A2p, EventId::A2, EventId::B2, EventId::B2p];

    /// Events whose values are solved for (everything except the two first decisions).
    pub const FREE: [EventId; 6] = [
        EventId::A2p,
        EventId::A1,
        EventId::A2,
        EventId::B2,
        EventId::B1p,
        EventId::B2p,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn frame(self) -> Frame {
        match self {
            EventId::A1p | EventId::A2p | EventId::A1 | EventId::A2 => Frame::A,
            _ => Frame::B,
        }
    }

    pub fn kind(self) -> EventKind {
        match self {
            EventId::A1p | EventId::A1 | EventId::B1 | EventId::B1p => EventKind::Decision,
            _ => EventKind::Measurement,
        }
    }

    pub fn is_measurement(self) -> bool {
        self.kind() == EventKind::Measurement
    }

    /// The pair a measurement acts on.
    pub fn pair(self) -> Option<Pair> {
        match self {
            EventId::A2p | EventId::B2p => Some(Pair::Sp),
            EventId::A2 | EventId::B2 => Some(Pair::S),
            _ => None,
        }
    }

    /// Position of a measurement in its pair's execution order (0 = executed first).
    pub fn rank(self) -> Option<u8> {
        match self {
            EventId::A2 | EventId::B2p => Some(0),
            EventId::B2 | EventId::A2p => Some(1),
            _ => None,
        }
    }

    /// The decision that sets the type of a measurement.
    pub fn controlling_decision(self) -> Option<EventId> {
        match self {
            EventId::A2p => Some(EventId::A1p),
            EventId::A2 => Some(EventId::A1),
            EventId::B2 => Some(EventId::B1),
            EventId::B2p => Some(EventId::B1p),
            _ => None,
        }
    }

    /// For the rule-driven decisions, the measurement whose result feeds the rule.
    pub fn rule_input(self) -> Option<EventId> {
        match self {
            EventId::A1 => Some(EventId::A2p),
            EventId::B1p => Some(EventId::B2),
            _ => None,
        }
    }

    /// Frame/pair swap: A↔B, S↔S', primed↔unprimed.
    pub fn mirror(self) -> EventId {
        match self {
            EventId::A1p => EventId::B1,
            EventId::B1 => EventId::A1p,
            EventId::A2p => EventId::B2,
            EventId::B2 => EventId::A2p,
            EventId::A1 => EventId::B1p,
            EventId::B1p => EventId::A1,
            EventId::A2 => EventId::B2p,
            EventId::B2p => EventId::A2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EventId::A1p => "A1'",
            EventId::A2p => "A2'",
            EventId::A1 => "A1",
            EventId::A2 => "A2",
            EventId::B1 => "B1",
            EventId::B2 => "B2",
            EventId::B1p => "B1'",
            EventId::B2p => "B2'",
        }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EventId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('\'', "p");
        let ev = match norm.to_ascii_uppercase().as_str() {
            "A1P" => EventId::A1p,
            "A2P" => EventId::A2p,
            "A1" => EventId::A1,
            "A2" => EventId::A2,
            "B1" => EventId::B1,
            "B2" => EventId::B2,
            "B1P" => EventId::B1p,
            "B2P" => EventId::B2p,
            _ => return Err(ParseError::Event(s.to_string())),
        };
        Ok(ev)
    }
}

/// YES / NO / UNKNOWN.
///
/// For decisions YES is the entanglement-preserving type and NO the
/// demolishing type; for measurements YES means entanglement confirmed and
/// NO entanglement missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventValue {
    Yes,
    No,
    Unknown,
}

impl EventValue {
    pub fn from_bool(b: bool) -> Self {
        if b {
            EventValue::Yes
        } else {
            EventValue::No
        }
    }

    pub fn is_known(self) -> bool {
        self != EventValue::Unknown
    }

    pub fn is_yes(self) -> bool {
        self == EventValue::Yes
    }

    pub fn negate(self) -> Self {
        match self {
            EventValue::Yes => EventValue::No,
            EventValue::No => EventValue::Yes,
            EventValue::Unknown => EventValue::Unknown,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EventValue::Yes => "YES",
            EventValue::No => "NO",
            EventValue::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for EventValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EventValue {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" => Ok(EventValue::Yes),
            "no" | "n" | "false" => Ok(EventValue::No),
            other => Err(ParseError::Value(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DecisionRule {
    /// Action same as observation.
    Same,
    /// Action opposite of observation.
    Opposite,
}

impl DecisionRule {
    pub const ALL: [DecisionRule; 2] = [DecisionRule::Same, DecisionRule::Opposite];

    pub fn apply(self, observed: EventValue) -> EventValue {
        match self {
            DecisionRule::Same => observed,
            DecisionRule::Opposite => observed.negate(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DecisionRule::Same => "SAME",
            DecisionRule::Opposite => "OPPOSITE",
        }
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DecisionRule {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "same" => Ok(DecisionRule::Same),
            "opposite" | "opp" => Ok(DecisionRule::Opposite),
            other => Err(ParseError::Rule(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown event `{0}`")]
    Event(String),
    #[error("unknown pair `{0}` (expected S or S')")]
    Pair(String),
    #[error("unknown value `{0}` (expected yes or no)")]
    Value(String),
    #[error("unknown decision rule `{0}` (expected same or opposite)")]
    Rule(String),
    #[error("malformed arc `{0}` (expected FROM->TO)")]
    Arc(String),
    #[error("malformed decoherence entry `{0}` (expected PAIR@FROM->TO)")]
    Entry(String),
}

/// A directed precedence edge between two events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arc {
    pub from: EventId,
    pub to: EventId,
}

impl Arc {
    pub const fn new(from: EventId, to: EventId) -> Self {
        Arc { from, to }
    }

    pub fn mirror(self) -> Arc {
        Arc::new(self.from.mirror(), self.to.mirror())
    }
}

impl fmt::Display for Arc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

impl FromStr for Arc {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once('>'))
            .ok_or_else(|| ParseError::Arc(s.to_string()))?;
        Ok(Arc::new(a.parse()?, b.parse()?))
    }
}

/// Static precedence structure of the protocol.
pub struct ExecutionCycle;

impl ExecutionCycle {
    /// The measurement cycle in traversal order, starting at `B2'`.
    pub const CYCLE: [EventId; 6] = [
        EventId::B2p,
        EventId::A2p,
        EventId::A1,
        EventId::A2,
        EventId::B2,
        EventId::B1p,
    ];

    pub const FRAME_A: [EventId; 4] = [EventId::A1p, EventId::A2p, EventId::A1, EventId::A2];
    pub const FRAME_B: [EventId; 4] = [EventId::B1, EventId::B2, EventId::B1p, EventId::B2p];

    /// Delayed-choice constraints: A2 precedes B2, B2' precedes A2'.
    pub const CROSS: [Arc; 2] = [
        Arc::new(EventId::A2, EventId::B2),
        Arc::new(EventId::B2p, EventId::A2p),
    ];

    /// All precedence arcs: both per-frame chains plus the cross-frame edges.
    pub fn all_arcs() -> Vec<Arc> {
        let mut arcs = Vec::with_capacity(8);
        for chain in [Self::FRAME_A, Self::FRAME_B] {
            arcs.extend(chain.windows(2).map(|w| Arc::new(w[0], w[1])));
        }
        arcs.extend(Self::CROSS);
        arcs
    }

    /// The six arcs of the measurement cycle, in cycle order from `B2'`.
    pub fn cycle_arcs() -> [Arc; 6] {
        let c = Self::CYCLE;
        std::array::from_fn(|i| Arc::new(c[i], c[(i + 1) % 6]))
    }

    pub fn is_on_cycle(arc: Arc) -> bool {
        Self::cycle_arcs().contains(&arc)
    }

    pub fn position(event: EventId) -> Option<usize> {
        Self::CYCLE.iter().position(|&e| e == event)
    }

    pub fn successor(event: EventId) -> Option<EventId> {
        Self::position(event).map(|i| Self::CYCLE[(i + 1) % 6])
    }

    /// The cycle traversed once, starting at `entry`.
    pub fn traversal_from(entry: EventId) -> Option<[EventId; 6]> {
        let start = Self::position(entry)?;
        Some(std::array::from_fn(|i| Self::CYCLE[(start + i) % 6]))
    }

    /// The decoherence slots of a pair, ordered from the arc leaving the
    /// pair's first-executed measurement.
    pub fn pair_slots(pair: Pair) -> [Arc; 6] {
        let first = pair.measurements()[0];
        let order = Self::traversal_from(first).expect("measurement lies on the cycle");
        std::array::from_fn(|i| Arc::new(order[i], order[(i + 1) % 6]))
    }

    pub fn slot_index(pair: Pair, arc: Arc) -> Option<usize> {
        Self::pair_slots(pair).iter().position(|&a| a == arc)
    }
}

/// An unintended decoherence of one pair on one arc of the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecoherenceEntry {
    pub pair: Pair,
    pub arc: Arc,
}

impl DecoherenceEntry {
    pub fn slot(&self) -> usize {
        ExecutionCycle::slot_index(self.pair, self.arc).expect("validated on construction")
    }
}

impl fmt::Display for DecoherenceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.pair, self.arc)
    }
}

impl FromStr for DecoherenceEntry {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (pair, arc) = s
            .split_once('@')
            .or_else(|| s.split_once(':'))
            .ok_or_else(|| ParseError::Entry(s.to_string()))?;
        Ok(DecoherenceEntry {
            pair: pair.parse()?,
            arc: arc.parse()?,
        })
    }
}

/// At most one decoherence per pair, each on an arc of the measurement cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecoherenceSchedule {
    entries: BTreeMap<Pair, Arc>,
}

impl DecoherenceSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I>(entries: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = DecoherenceEntry>,
    {
        let mut schedule = Self::new();
        for e in entries {
            schedule.insert(e)?;
        }
        Ok(schedule)
    }

    pub fn insert(&mut self, entry: DecoherenceEntry) -> Result<(), ConfigError> {
        if !ExecutionCycle::is_on_cycle(entry.arc) {
            return Err(ConfigError::ArcNotOnCycle(entry.arc));
        }
        if let Some(existing) = self.entries.get(&entry.pair) {
            return Err(ConfigError::DuplicatePair {
                pair: entry.pair,
                existing: *existing,
            });
        }
        self.entries.insert(entry.pair, entry.arc);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, pair: Pair) -> Option<DecoherenceEntry> {
        self.entries.get(&pair).map(|&arc| DecoherenceEntry { pair, arc })
    }

    pub fn entries(&self) -> impl Iterator<Item = DecoherenceEntry> + '_ {
        self.entries.iter().map(|(&pair, &arc)| DecoherenceEntry { pair, arc })
    }

    /// Entries whose arc is `arc`.
    pub fn on_arc(&self, arc: Arc) -> impl Iterator<Item = DecoherenceEntry> + '_ {
        self.entries().filter(move |e| e.arc == arc)
    }

    pub fn mirror(&self) -> Self {
        Self::from_entries(self.entries().map(|e| DecoherenceEntry {
            pair: e.pair.mirror(),
            arc: e.arc.mirror(),
        }))
        .expect("mirror of a valid schedule is valid")
    }

    /// Every valid schedule: no entry or one of six slots for each pair.
    pub fn all() -> Vec<DecoherenceSchedule> {
        let options = |pair: Pair| {
            std::iter::once(None).chain(
                ExecutionCycle::pair_slots(pair)
                    .into_iter()
                    .map(move |arc| Some(DecoherenceEntry { pair, arc })),
            )
        };
        let mut out = Vec::with_capacity(49);
        for s in options(Pair::S) {
            for sp in options(Pair::Sp) {
                out.push(
                    DecoherenceSchedule::from_entries(s.into_iter().chain(sp))
                        .expect("one entry per pair"),
                );
            }
        }
        out
    }
}

impl fmt::Display for DecoherenceSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.entries().map(|e| e.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mode {
    Ideal,
    Scheduled { schedule: DecoherenceSchedule },
    Stochastic { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub rule_a: DecisionRule,
    pub rule_b: DecisionRule,
    /// Value of `A1'`.
    pub first_action_a: EventValue,
    /// Value of `B1`.
    pub first_action_b: EventValue,
    pub mode: Mode,
}

impl ScenarioConfig {
    pub fn ideal(
        rule_a: DecisionRule,
        rule_b: DecisionRule,
        first_action_a: EventValue,
        first_action_b: EventValue,
    ) -> Self {
        ScenarioConfig {
            rule_a,
            rule_b,
            first_action_a,
            first_action_b,
            mode: Mode::Ideal,
        }
    }

    pub fn with_schedule(mut self, schedule: DecoherenceSchedule) -> Self {
        self.mode = Mode::Scheduled { schedule };
        self
    }

    /// The 16 rule/first-action combinations in Ideal mode.
    pub fn all_ideal() -> Vec<ScenarioConfig> {
        let actions = [EventValue::Yes, EventValue::No];
        let mut out = Vec::with_capacity(16);
        for ra in DecisionRule::ALL {
            for rb in DecisionRule::ALL {
                for a in actions {
                    for b in actions {
                        out.push(ScenarioConfig::ideal(ra, rb, a, b));
                    }
                }
            }
        }
        out
    }

    pub fn both_first_yes(&self) -> bool {
        self.first_action_a.is_yes() && self.first_action_b.is_yes()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (ev, v) in [
            (EventId::A1p, self.first_action_a),
            (EventId::B1, self.first_action_b),
        ] {
            if !v.is_known() {
                return Err(ConfigError::UnknownFirstAction(ev));
            }
        }
        if let Mode::Stochastic { p } = self.mode {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(ConfigError::Probability(p));
            }
        }
        Ok(())
    }

    pub fn mirror(&self) -> Self {
        ScenarioConfig {
            rule_a: self.rule_b,
            rule_b: self.rule_a,
            first_action_a: self.first_action_b,
            first_action_b: self.first_action_a,
            mode: match &self.mode {
                Mode::Ideal => Mode::Ideal,
                Mode::Scheduled { schedule } => Mode::Scheduled {
                    schedule: schedule.mirror(),
                },
                Mode::Stochastic { p } => Mode::Stochastic { p: *p },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("decoherence arc {0} does not lie on the measurement cycle")]
    ArcNotOnCycle(Arc),
    #[error("pair {pair} already decoheres on {existing}")]
    DuplicatePair { pair: Pair, existing: Arc },
    #[error("first action {0} must be YES or NO")]
    UnknownFirstAction(EventId),
    #[error("decoherence probability {0} outside [0, 1]")]
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "lowercase")]
pub enum Provenance {
    /// A demolishing-type measurement.
    Measurement(EventId),
    /// A scheduled unintended decoherence.
    Decoherence(Arc),
    /// A test assumption of an entanglement-missing result.
    Assumption(EventId),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Measurement(e) => write!(f, "measurement {e}"),
            Provenance::Decoherence(a) => write!(f, "decoherence on {a}"),
            Provenance::Assumption(e) => write!(f, "assumption at {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "UPPERCASE")]
pub enum PairStatus {
    Intact,
    Demolished { by: Provenance },
}

impl PairStatus {
    pub fn is_intact(&self) -> bool {
        matches!(self, PairStatus::Intact)
    }
}

/// Entanglement state of both pairs. Transitions are one-way.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairState {
    s: PairStatus,
    sp: PairStatus,
}

impl Default for PairState {
    fn default() -> Self {
        PairState {
            s: PairStatus::Intact,
            sp: PairStatus::Intact,
        }
    }
}

impl PairState {
    pub fn intact() -> Self {
        Self::default()
    }

    pub fn get(&self, pair: Pair) -> &PairStatus {
        match pair {
            Pair::S => &self.s,
            Pair::Sp => &self.sp,
        }
    }

    /// Marks `pair` demolished. A pair already demolished keeps its original provenance.
    pub fn demolish(&mut self, pair: Pair, by: Provenance) {
        let slot = match pair {
            Pair::S => &mut self.s,
            Pair::Sp => &mut self.sp,
        };
        if slot.is_intact() {
            *slot = PairStatus::Demolished { by };
        }
    }

    pub fn is_intact(&self, pair: Pair) -> bool {
        self.get(pair).is_intact()
    }

    /// True when no pair that is demolished in `self` is intact in `later`.
    pub fn precedes_monotonically(&self, later: &PairState) -> bool {
        Pair::ALL
            .iter()
            .all(|&p| self.is_intact(p) || !later.is_intact(p))
    }
}

/// A value for each of the eight events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment([EventValue; 8]);

impl Default for Assignment {
    fn default() -> Self {
        Assignment([EventValue::Unknown; 8])
    }
}

impl Assignment {
    pub fn unknown() -> Self {
        Self::default()
    }

    pub fn get(&self, e: EventId) -> EventValue {
        self.0[e.index()]
    }

    pub fn set(&mut self, e: EventId, v: EventValue) {
        self.0[e.index()] = v;
    }

    pub fn with(mut self, e: EventId, v: EventValue) -> Self {
        self.set(e, v);
        self
    }

    pub fn is_finalized(&self) -> bool {
        self.0.iter().all(|v| v.is_known())
    }

    pub fn measurements(&self) -> [EventValue; 4] {
        EventId::MEASUREMENTS.map(|m| self.get(m))
    }

    pub fn yes_measurements(&self) -> usize {
        self.measurements().iter().filter(|v| v.is_yes()).count()
    }

    pub fn mirror(&self) -> Assignment {
        let mut out = Assignment::unknown();
        for e in EventId::ALL {
            out.set(e.mirror(), self.get(e));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventId, EventValue)> + '_ {
        EventId::ALL.iter().map(move |&e| (e, self.get(e)))
    }

    /// Decision values follow the configured first actions and rules.
    pub fn respects_rules(&self, config: &ScenarioConfig) -> bool {
        self.get(EventId::A1p) == config.first_action_a
            && self.get(EventId::B1) == config.first_action_b
            && self.get(EventId::A1) == config.rule_a.apply(self.get(EventId::A2p))
            && self.get(EventId::B1p) == config.rule_b.apply(self.get(EventId::B2))
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(e, v)| format!("{e}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

impl Serialize for Assignment {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(8))?;
        for (e, v) in self.iter() {
            map.serialize_entry(e.label(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, EventValue>::deserialize(deserializer)?;
        let mut out = Assignment::unknown();
        for (k, v) in raw {
            let e: EventId = k.parse().map_err(serde::de::Error::custom)?;
            out.set(e, v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{event} reads {dependency}, which is still UNKNOWN")]
    UnknownDependency { event: EventId, dependency: EventId },
}

/// A validated scenario: events, cycle, local rules and initial pair states.
///
/// Immutable after construction; evaluation keeps its own scratch state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolInstance {
    config: ScenarioConfig,
    schedule: DecoherenceSchedule,
    initial_pairs: PairState,
}

pub fn build_instance(config: ScenarioConfig) -> Result<ProtocolInstance, ConfigError> {
    ProtocolInstance::new(config)
}

impl ProtocolInstance {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let schedule = match &config.mode {
            Mode::Scheduled { schedule } => {
                for e in schedule.entries() {
                    if !ExecutionCycle::is_on_cycle(e.arc) {
                        return Err(ConfigError::ArcNotOnCycle(e.arc));
                    }
                }
                schedule.clone()
            }
            Mode::Ideal | Mode::Stochastic { .. } => DecoherenceSchedule::new(),
        };
        Ok(ProtocolInstance {
            config,
            schedule,
            initial_pairs: PairState::intact(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Scheduled decoherence (empty for Ideal and Stochastic modes).
    pub fn schedule(&self) -> &DecoherenceSchedule {
        &self.schedule
    }

    pub fn initial_pairs(&self) -> &PairState {
        &self.initial_pairs
    }

    /// Same rules and first actions, different schedule.
    pub fn with_schedule(&self, schedule: DecoherenceSchedule) -> ProtocolInstance {
        ProtocolInstance {
            config: self.config.clone().with_schedule(schedule.clone()),
            schedule,
            initial_pairs: PairState::intact(),
        }
    }

    pub fn ideal(&self) -> ProtocolInstance {
        self.with_schedule(DecoherenceSchedule::new())
    }

    /// Both first actions are entanglement preserving, so each pair's
    /// superposition can span a full circuit of the cycle.
    pub fn has_interleaved_episodes(&self) -> bool {
        self.config.both_first_yes()
    }

    pub fn rule_for(&self, decision: EventId) -> Option<DecisionRule> {
        match decision {
            EventId::A1 => Some(self.config.rule_a),
            EventId::B1p => Some(self.config.rule_b),
            _ => None,
        }
    }

    pub fn first_action(&self, decision: EventId) -> Option<EventValue> {
        match decision {
            EventId::A1p => Some(self.config.first_action_a),
            EventId::B1 => Some(self.config.first_action_b),
            _ => None,
        }
    }

    /// An assignment with the two first decisions filled in.
    pub fn seeded_assignment(&self) -> Assignment {
        Assignment::unknown()
            .with(EventId::A1p, self.config.first_action_a)
            .with(EventId::B1, self.config.first_action_b)
    }

    /// Value of `event` under its local rule.
    ///
    /// For measurements `pairs` is the entanglement state seen at the
    /// measurement's execution. A demolishing-type measurement always
    /// returns NO; a preserving one returns YES exactly when its pair is
    /// still intact.
    pub fn local_rule(
        &self,
        event: EventId,
        partial: &Assignment,
        pairs: &PairState,
    ) -> Result<EventValue, EvalError> {
        if let Some(v) = self.first_action(event) {
            return Ok(v);
        }
        let read = |dep: EventId| {
            let v = partial.get(dep);
            if v.is_known() {
                Ok(v)
            } else {
                Err(EvalError::UnknownDependency {
                    event,
                    dependency: dep,
                })
            }
        };
        if let (Some(rule), Some(input)) = (self.rule_for(event), event.rule_input()) {
            return Ok(rule.apply(read(input)?));
        }
        let decision = event.controlling_decision().expect("remaining events are measurements");
        let pair = event.pair().expect("measurement has a pair");
        Ok(match read(decision)? {
            EventValue::No => EventValue::No,
            _ => EventValue::from_bool(pairs.is_intact(pair)),
        })
    }

    /// Entanglement state seen by `measurement` within a single consistent history.
    ///
    /// A demolishing-type measurement ignores the pair, so no state is read
    /// for it. The first-executed measurement of a pair always sees it intact. The
    /// second one sees it demolished if the first was of demolishing type
    /// or if the pair decoheres on the arc between them. Decoherence on the
    /// remaining arcs falls after both measurements.
    pub fn pair_state_at(
        &self,
        measurement: EventId,
        assignment: &Assignment,
    ) -> Result<PairState, EvalError> {
        let mut state = PairState::intact();
        let (Some(pair), Some(rank)) = (measurement.pair(), measurement.rank()) else {
            return Ok(state);
        };
        let own = measurement.controlling_decision().expect("measurement");
        if rank == 1 && assignment.get(own) != EventValue::No {
            let first = pair.measurements()[0];
            let decision = first.controlling_decision().expect("measurement");
            match assignment.get(decision) {
                EventValue::Unknown => {
                    return Err(EvalError::UnknownDependency {
                        event: measurement,
                        dependency: decision,
                    })
                }
                EventValue::No => state.demolish(pair, Provenance::Measurement(first)),
                EventValue::Yes => {}
            }
            if let Some(entry) = self.schedule.get(pair) {
                if entry.slot() == 0 {
                    state.demolish(pair, Provenance::Decoherence(entry.arc));
                }
            }
        }
        Ok(state)
    }

    /// True when every event of a finalized assignment equals its local rule's output.
    pub fn is_consistent(&self, assignment: &Assignment) -> bool {
        self.violations(assignment).map(|v| v.is_empty()).unwrap_or(false)
    }

    /// Events whose value differs from their local rule's output.
    pub fn violations(&self, assignment: &Assignment) -> Result<Vec<EventId>, EvalError> {
        let mut out = Vec::new();
        for e in EventId::ALL {
            let pairs = self.pair_state_at(e, assignment)?;
            if self.local_rule(e, assignment, &pairs)? != assignment.get(e) {
                out.push(e);
            }
        }
        Ok(out)
    }
}
