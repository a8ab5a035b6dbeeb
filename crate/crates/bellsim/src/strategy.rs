//! The strategy contract and the registry of players.
//!
//! A strategy answers settings through [`Strategy::respond`], which hands
//! each party only its own setting, its own local memory, and the frozen
//! shared memory. That call signature is the structural no-signaling
//! guarantee: nothing in it carries the partner's setting. Between rounds
//! anything goes — [`Strategy::between_rounds`] may rewrite all three
//! memory segments with full knowledge of the history, which is exactly
//! the memory loophole the statistics have to survive.
//!
//! Two escapes from the classical interface exist, both explicit:
//!
//! * an entangled pair prepared *before* the settings of the round are
//!   drawn ([`Strategy::prepare_round`]), measured locally by each party;
//! * the signaling cheat fixture, which demands the partner's setting
//!   outright and therefore only runs when the engine's enforcement flag
//!   is off.
//!
//! Shipped strategies: `deterministic`, `mixture`, `adaptive-switch`,
//! `signaling-cheat`, and `quantum`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::game::{
    deterministic_win_count, CounterfactualTable, Outcome, Party, RoundRecord, Setting,
};
use crate::quantum::{measure_party, optimal_angles, AngleQuadruple, QuantumError, TwoQubitState};

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("unknown strategy name {0:?}")]
    UnknownName(String),
    #[error("invalid strategy parameters: {0}")]
    InvalidParameters(String),
    #[error("strategy state for {party} is missing or malformed")]
    UninitializedState { party: Party },
    #[error("signaling strategy cannot answer through the no-signaling interface")]
    RequiresBothSettings,
    #[error("strategy does not implement the signaling interface")]
    NotSignaling,
    #[error("entangled resource missing for this round")]
    MissingEntangledResource,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Per-strategy memory, split into the three segments the game allows.
///
/// During a round each responder sees only its own local segment plus the
/// shared segment, read-only. All three segments may be rewritten between
/// rounds.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct StrategyState {
    pub alice_local: Vec<u8>,
    pub bob_local: Vec<u8>,
    pub shared: Vec<u8>,
}

impl StrategyState {
    pub fn empty() -> StrategyState {
        StrategyState::default()
    }

    /// The read-only slice of memory one party may consult mid-round.
    pub fn view(&self, party: Party) -> PartyView<'_> {
        let local = match party {
            Party::Alice => &self.alice_local,
            Party::Bob => &self.bob_local,
        };
        PartyView {
            local,
            shared: &self.shared,
        }
    }
}

/// What one responder is allowed to read during a round.
#[derive(Clone, Copy, Debug)]
pub struct PartyView<'a> {
    pub local: &'a [u8],
    pub shared: &'a [u8],
}

/// Serializable identity of a strategy: registry name plus canonicalized
/// parameters. The signaling flag is true only for cheat fixtures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyDescriptor {
    pub name: String,
    pub parameters: BTreeMap<String, String>,
    pub signaling: bool,
}

impl fmt::Display for StrategyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (k, v) in &self.parameters {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

pub mod names {
    pub const DETERMINISTIC: &str = "deterministic";
    pub const MIXTURE: &str = "mixture";
    pub const ADAPTIVE_SWITCH: &str = "adaptive-switch";
    pub const SIGNALING_CHEAT: &str = "signaling-cheat";
    pub const QUANTUM: &str = "quantum";
}

/// Every registered strategy name.
pub fn registered_names() -> [&'static str; 5] {
    [
        names::DETERMINISTIC,
        names::MIXTURE,
        names::ADAPTIVE_SWITCH,
        names::SIGNALING_CHEAT,
        names::QUANTUM,
    ]
}

/// A player for one experiment run.
///
/// Instances are bound to a single run and called sequentially; distinct
/// instances may run on different threads.
pub trait Strategy: Send {
    /// Canonical descriptor, suitable for configs and log headers.
    fn descriptor(&self) -> StrategyDescriptor;

    /// Memory before round 0. The rng is the shared-randomness stream; it
    /// plays the role of the hidden variable dealt before play begins.
    fn initial_state(&self, shared_rng: &mut dyn RngCore) -> StrategyState;

    /// Resource set up before the round's settings exist. Classical
    /// strategies have none; the quantum strategy emits a fresh entangled
    /// pair.
    fn prepare_round(&self) -> Option<TwoQubitState> {
        None
    }

    /// One party's answer to its own setting. `entangled` is the round's
    /// quantum resource, if any; measuring it collapses it for the partner.
    fn respond(
        &self,
        party: Party,
        setting: Setting,
        view: PartyView<'_>,
        entangled: &mut Option<TwoQubitState>,
        sampling_rng: &mut dyn RngCore,
    ) -> Result<Outcome, StrategyError>;

    /// The between-round communication phase: unrestricted rewriting of
    /// all memory segments in the light of the full history.
    fn between_rounds(
        &self,
        state: &mut StrategyState,
        history: &[RoundRecord],
        shared_rng: &mut dyn RngCore,
    );

    /// The counterfactual table this state commits to for the next round,
    /// when one exists. Classical strategies always have one; the quantum
    /// strategy never does — that absence is the whole story.
    fn committed_table(&self, _state: &StrategyState) -> Option<CounterfactualTable> {
        None
    }

    /// True only for cheat fixtures that demand both settings.
    fn is_signaling(&self) -> bool {
        false
    }

    /// The cheat interface: answer knowing the partner's setting too. The
    /// engine only routes here when enforcement is explicitly disabled.
    fn respond_signaling(
        &self,
        _party: Party,
        _own: Setting,
        _other: Setting,
    ) -> Result<Outcome, StrategyError> {
        Err(StrategyError::NotSignaling)
    }
}

// Response-pair encoding shared by the classical strategies: two ASCII
// sign bytes per party, indexed by the party's setting.
fn encode_responses(first: Outcome, second: Outcome) -> Vec<u8> {
    vec![first.sign_char() as u8, second.sign_char() as u8]
}

fn decode_response(
    view: &PartyView<'_>,
    party: Party,
    setting: Setting,
) -> Result<Outcome, StrategyError> {
    if view.local.len() != 2 {
        return Err(StrategyError::UninitializedState { party });
    }
    Outcome::from_sign_char(view.local[setting.index()] as char)
        .ok_or(StrategyError::UninitializedState { party })
}

fn encode_table(state: &mut StrategyState, table: CounterfactualTable) {
    state.alice_local = encode_responses(table.x1, table.x2);
    state.bob_local = encode_responses(table.y1, table.y2);
}

fn decode_table(state: &StrategyState) -> Option<CounterfactualTable> {
    if state.alice_local.len() != 2 || state.bob_local.len() != 2 {
        return None;
    }
    let o = |b: u8| Outcome::from_sign_char(b as char);
    Some(CounterfactualTable::new(
        o(state.alice_local[0])?,
        o(state.alice_local[1])?,
        o(state.bob_local[0])?,
        o(state.bob_local[1])?,
    ))
}

/// Plays one fixed counterfactual table forever.
#[derive(Clone, Debug)]
pub struct DeterministicStrategy {
    table: CounterfactualTable,
}

impl DeterministicStrategy {
    pub fn new(table: CounterfactualTable) -> DeterministicStrategy {
        DeterministicStrategy { table }
    }

    /// The best fixed table this module ships as a reference player:
    /// x1 = x2 = y1 = +1, y2 = -1, winning 3 of the 4 setting pairs.
    pub fn best() -> DeterministicStrategy {
        DeterministicStrategy::new(CounterfactualTable::from_sign_string("+++-").expect("fixed"))
    }

    pub fn table(&self) -> CounterfactualTable {
        self.table
    }
}

impl Strategy for DeterministicStrategy {
    fn descriptor(&self) -> StrategyDescriptor {
        let mut parameters = BTreeMap::new();
        parameters.insert("table".to_string(), self.table.sign_string());
        StrategyDescriptor {
            name: names::DETERMINISTIC.to_string(),
            parameters,
            signaling: false,
        }
    }

    fn initial_state(&self, _shared_rng: &mut dyn RngCore) -> StrategyState {
        let mut state = StrategyState::empty();
        encode_table(&mut state, self.table);
        state
    }

    fn respond(
        &self,
        party: Party,
        setting: Setting,
        view: PartyView<'_>,
        _entangled: &mut Option<TwoQubitState>,
        _sampling_rng: &mut dyn RngCore,
    ) -> Result<Outcome, StrategyError> {
        decode_response(&view, party, setting)
    }

    fn between_rounds(
        &self,
        _state: &mut StrategyState,
        _history: &[RoundRecord],
        _shared_rng: &mut dyn RngCore,
    ) {
    }

    fn committed_table(&self, state: &StrategyState) -> Option<CounterfactualTable> {
        decode_table(state)
    }
}

/// Draws a fresh table from a fixed distribution over the sixteen tables
/// before every round — shared randomness, the classical hidden variable.
#[derive(Clone, Debug)]
pub struct MixtureStrategy {
    weights: [f64; 16],
}

impl MixtureStrategy {
    pub fn new(weights: [f64; 16]) -> Result<MixtureStrategy, StrategyError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(StrategyError::InvalidParameters(format!(
                "mixture weights must be a probability vector over 16 tables, sum {sum}"
            )));
        }
        Ok(MixtureStrategy { weights })
    }

    pub fn uniform() -> MixtureStrategy {
        MixtureStrategy {
            weights: [1.0 / 16.0; 16],
        }
    }

    /// Exact per-round win probability of the mixture.
    pub fn expected_win_probability(&self) -> f64 {
        CounterfactualTable::all()
            .zip(self.weights.iter())
            .map(|(t, w)| w * f64::from(deterministic_win_count(t)) / 4.0)
            .sum()
    }

    fn draw_table(&self, rng: &mut dyn RngCore) -> CounterfactualTable {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return CounterfactualTable::from_index(i);
            }
        }
        CounterfactualTable::from_index(15)
    }
}

impl Strategy for MixtureStrategy {
    fn descriptor(&self) -> StrategyDescriptor {
        let mut parameters = BTreeMap::new();
        let weights: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        parameters.insert("weights".to_string(), weights.join(","));
        StrategyDescriptor {
            name: names::MIXTURE.to_string(),
            parameters,
            signaling: false,
        }
    }

    fn initial_state(&self, shared_rng: &mut dyn RngCore) -> StrategyState {
        let mut state = StrategyState::empty();
        encode_table(&mut state, self.draw_table(shared_rng));
        state
    }

    fn respond(
        &self,
        party: Party,
        setting: Setting,
        view: PartyView<'_>,
        _entangled: &mut Option<TwoQubitState>,
        _sampling_rng: &mut dyn RngCore,
    ) -> Result<Outcome, StrategyError> {
        decode_response(&view, party, setting)
    }

    fn between_rounds(
        &self,
        state: &mut StrategyState,
        _history: &[RoundRecord],
        shared_rng: &mut dyn RngCore,
    ) {
        encode_table(state, self.draw_table(shared_rng));
    }

    fn committed_table(&self, state: &StrategyState) -> Option<CounterfactualTable> {
        decode_table(state)
    }
}

/// The eight tables that win three of the four setting pairs, in
/// enumeration order.
pub fn optimal_tables() -> Vec<CounterfactualTable> {
    CounterfactualTable::all()
        .filter(|t| deterministic_win_count(*t) == 3)
        .collect()
}

/// Memory-exploiting player: keeps its current table while winning and
/// steps to the next of the eight optimal tables after every lost round.
///
/// Each committed table still wins exactly 3 of 4 fresh uniform setting
/// pairs, so adaptivity buys nothing — which is the claim the statistics
/// module gets to verify.
#[derive(Clone, Debug, Default)]
pub struct AdaptiveSwitchStrategy {
    start: usize,
}

impl AdaptiveSwitchStrategy {
    pub fn new(start: usize) -> Result<AdaptiveSwitchStrategy, StrategyError> {
        if start >= 8 {
            return Err(StrategyError::InvalidParameters(format!(
                "adaptive-switch start index must be in 0..8, got {start}"
            )));
        }
        Ok(AdaptiveSwitchStrategy { start })
    }

    fn table_at(cursor: usize) -> CounterfactualTable {
        optimal_tables()[cursor % 8]
    }
}

impl Strategy for AdaptiveSwitchStrategy {
    fn descriptor(&self) -> StrategyDescriptor {
        let mut parameters = BTreeMap::new();
        parameters.insert("start".to_string(), self.start.to_string());
        StrategyDescriptor {
            name: names::ADAPTIVE_SWITCH.to_string(),
            parameters,
            signaling: false,
        }
    }

    fn initial_state(&self, _shared_rng: &mut dyn RngCore) -> StrategyState {
        let mut state = StrategyState::empty();
        encode_table(&mut state, Self::table_at(self.start));
        state.shared = vec![self.start as u8];
        state
    }

    fn respond(
        &self,
        party: Party,
        setting: Setting,
        view: PartyView<'_>,
        _entangled: &mut Option<TwoQubitState>,
        _sampling_rng: &mut dyn RngCore,
    ) -> Result<Outcome, StrategyError> {
        decode_response(&view, party, setting)
    }

    fn between_rounds(
        &self,
        state: &mut StrategyState,
        history: &[RoundRecord],
        _shared_rng: &mut dyn RngCore,
    ) {
        let Some(last) = history.last() else {
            return;
        };
        if last.win {
            return;
        }
        let cursor = state.shared.first().copied().unwrap_or(self.start as u8) as usize;
        let next = (cursor + 1) % 8;
        encode_table(state, Self::table_at(next));
        state.shared = vec![next as u8];
    }

    fn committed_table(&self, state: &StrategyState) -> Option<CounterfactualTable> {
        decode_table(state)
    }
}

/// Negative control: wins every round by reading the partner's setting,
/// which no physical strategy could do. Runs only with enforcement off.
#[derive(Clone, Copy, Debug, Default)]
pub struct SignalingCheatStrategy;

impl Strategy for SignalingCheatStrategy {
    fn descriptor(&self) -> StrategyDescriptor {
        StrategyDescriptor {
            name: names::SIGNALING_CHEAT.to_string(),
            parameters: BTreeMap::new(),
            signaling: true,
        }
    }

    fn initial_state(&self, _shared_rng: &mut dyn RngCore) -> StrategyState {
        StrategyState::empty()
    }

    fn respond(
        &self,
        _party: Party,
        _setting: Setting,
        _view: PartyView<'_>,
        _entangled: &mut Option<TwoQubitState>,
        _sampling_rng: &mut dyn RngCore,
    ) -> Result<Outcome, StrategyError> {
        Err(StrategyError::RequiresBothSettings)
    }

    fn between_rounds(
        &self,
        _state: &mut StrategyState,
        _history: &[RoundRecord],
        _shared_rng: &mut dyn RngCore,
    ) {
    }

    fn is_signaling(&self) -> bool {
        true
    }

    fn respond_signaling(
        &self,
        party: Party,
        own: Setting,
        other: Setting,
    ) -> Result<Outcome, StrategyError> {
        // Alice always answers +1; Bob matches on pair 11 and differs
        // elsewhere, so every pair is won.
        Ok(match party {
            Party::Alice => Outcome::Plus,
            Party::Bob => {
                if own == Setting::S1 && other == Setting::S1 {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                }
            }
        })
    }
}

/// Measures a fresh entangled pair each round at setting-dependent angles.
#[derive(Clone, Debug)]
pub struct QuantumStrategy {
    angles: AngleQuadruple,
}

impl QuantumStrategy {
    pub fn new(angles: AngleQuadruple) -> QuantumStrategy {
        QuantumStrategy { angles }
    }

    pub fn optimal() -> QuantumStrategy {
        QuantumStrategy {
            angles: optimal_angles(),
        }
    }

    pub fn angles(&self) -> &AngleQuadruple {
        &self.angles
    }
}

impl Strategy for QuantumStrategy {
    fn descriptor(&self) -> StrategyDescriptor {
        let mut parameters = BTreeMap::new();
        let value = if self.angles == optimal_angles() {
            "optimal".to_string()
        } else {
            let r = self.angles.as_radians();
            format!("{},{},{},{}", r[0], r[1], r[2], r[3])
        };
        parameters.insert("angles".to_string(), value);
        StrategyDescriptor {
            name: names::QUANTUM.to_string(),
            parameters,
            signaling: false,
        }
    }

    fn initial_state(&self, _shared_rng: &mut dyn RngCore) -> StrategyState {
        StrategyState::empty()
    }

    fn prepare_round(&self) -> Option<TwoQubitState> {
        Some(TwoQubitState::phi_plus())
    }

    fn respond(
        &self,
        party: Party,
        setting: Setting,
        _view: PartyView<'_>,
        entangled: &mut Option<TwoQubitState>,
        sampling_rng: &mut dyn RngCore,
    ) -> Result<Outcome, StrategyError> {
        let state = entangled
            .take()
            .ok_or(StrategyError::MissingEntangledResource)?;
        let angle = self.angles.angle_for(party, setting);
        let (outcome, collapsed) = measure_party(&state, party, angle, sampling_rng)?;
        *entangled = Some(collapsed);
        Ok(outcome)
    }

    fn between_rounds(
        &self,
        _state: &mut StrategyState,
        _history: &[RoundRecord],
        _shared_rng: &mut dyn RngCore,
    ) {
    }
}

fn parse_weights(raw: &str) -> Result<[f64; 16], StrategyError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 16 {
        return Err(StrategyError::InvalidParameters(format!(
            "mixture weights need 16 comma-separated values, got {}",
            parts.len()
        )));
    }
    let mut weights = [0.0; 16];
    for (slot, part) in weights.iter_mut().zip(parts.iter()) {
        *slot = part.parse::<f64>().map_err(|_| {
            StrategyError::InvalidParameters(format!("bad mixture weight {part:?}"))
        })?;
    }
    Ok(weights)
}

fn parse_angles(raw: &str) -> Result<AngleQuadruple, StrategyError> {
    if raw.trim() == "optimal" {
        return Ok(optimal_angles());
    }
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(StrategyError::InvalidParameters(format!(
            "quantum angles need \"optimal\" or 4 comma-separated radians, got {raw:?}"
        )));
    }
    let mut radians = [0.0; 4];
    for (slot, part) in radians.iter_mut().zip(parts.iter()) {
        *slot = part
            .parse::<f64>()
            .map_err(|_| StrategyError::InvalidParameters(format!("bad angle {part:?}")))?;
    }
    AngleQuadruple::from_radians(radians[0], radians[1], radians[2], radians[3])
        .map_err(StrategyError::from)
}

fn reject_unknown_params(
    parameters: &BTreeMap<String, String>,
    allowed: &[&str],
) -> Result<(), StrategyError> {
    for key in parameters.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(StrategyError::InvalidParameters(format!(
                "unknown parameter {key:?} (allowed: {allowed:?})"
            )));
        }
    }
    Ok(())
}

/// Builds the strategy a descriptor names, validating its parameters.
pub fn build_strategy(descriptor: &StrategyDescriptor) -> Result<Box<dyn Strategy>, StrategyError> {
    let params = &descriptor.parameters;
    match descriptor.name.as_str() {
        names::DETERMINISTIC => {
            reject_unknown_params(params, &["table"])?;
            let raw = params.get("table").ok_or_else(|| {
                StrategyError::InvalidParameters("deterministic needs table=<4 signs>".to_string())
            })?;
            let table = CounterfactualTable::from_sign_string(raw)
                .map_err(|e| StrategyError::InvalidParameters(e.to_string()))?;
            Ok(Box::new(DeterministicStrategy::new(table)))
        }
        names::MIXTURE => {
            reject_unknown_params(params, &["weights"])?;
            let raw = params.get("weights").ok_or_else(|| {
                StrategyError::InvalidParameters("mixture needs weights=<16 values>".to_string())
            })?;
            Ok(Box::new(MixtureStrategy::new(parse_weights(raw)?)?))
        }
        names::ADAPTIVE_SWITCH => {
            reject_unknown_params(params, &["start"])?;
            let start = match params.get("start") {
                None => 0,
                Some(raw) => raw.parse::<usize>().map_err(|_| {
                    StrategyError::InvalidParameters(format!("bad start index {raw:?}"))
                })?,
            };
            Ok(Box::new(AdaptiveSwitchStrategy::new(start)?))
        }
        names::SIGNALING_CHEAT => {
            reject_unknown_params(params, &[])?;
            Ok(Box::new(SignalingCheatStrategy))
        }
        names::QUANTUM => {
            reject_unknown_params(params, &["angles"])?;
            let angles = match params.get("angles") {
                None => optimal_angles(),
                Some(raw) => parse_angles(raw)?,
            };
            Ok(Box::new(QuantumStrategy::new(angles)))
        }
        other => Err(StrategyError::UnknownName(other.to_string())),
    }
}

/// Validates name and raw parameters, returning the canonical descriptor
/// (defaults filled in, values reformatted) for configs and log headers.
pub fn descriptor_for(
    name: &str,
    parameters: &BTreeMap<String, String>,
) -> Result<StrategyDescriptor, StrategyError> {
    let draft = StrategyDescriptor {
        name: name.to_string(),
        parameters: parameters.clone(),
        signaling: false,
    };
    Ok(build_strategy(&draft)?.descriptor())
}
