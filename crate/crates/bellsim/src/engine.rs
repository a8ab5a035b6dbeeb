//! The referee: draws fair-coin settings, runs rounds in phases, stamps a
//! simulated clock, and audits spacetime separation after the fact.
//!
//! A run is a pure function of its [`ExperimentConfig`]: the master seed
//! is split into three independent ChaCha streams (settings, strategy
//! shared randomness, respond-phase sampling), so swapping the strategy
//! never perturbs the settings sequence. Two runs of the same config
//! serialize to identical bytes.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::game::{EventTimes, Party, RoundRecord, Setting, SettingDistribution, SettingPair};
use crate::strategy::{build_strategy, Strategy, StrategyDescriptor, StrategyError, StrategyState};

/// Vacuum light speed, the default audit signal speed, in m/s.
pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("structural no-signaling violation: strategy {0:?} demands both settings while enforcement is on")]
    StructuralViolation(String),
    #[error("round {index} failed ({index} rounds completed before the failure): {source}")]
    Round { index: u64, source: StrategyError },
    #[error("spacetime audit inapplicable: {0}")]
    AuditInapplicable(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Lab placement and per-phase latencies that generate event timestamps.
///
/// All latencies are nanoseconds on the simulated clock. The audit
/// compares committed outputs against the one-way light time
/// `separation_m / signal_speed_mps`. A separation of zero is allowed and
/// makes every round fail the audit, which is the honest verdict for
/// co-located labs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LabGeometry {
    pub separation_m: f64,
    pub signal_speed_mps: f64,
    /// Clock ticks from round start until each party's setting is issued.
    pub setting_latency_ns: u64,
    /// Ticks from setting issuance to Alice's committed output.
    pub response_latency_a_ns: u64,
    /// Ticks from setting issuance to Bob's committed output.
    pub response_latency_b_ns: u64,
    /// Idle ticks after both commits before the next round starts.
    pub round_gap_ns: u64,
}

impl LabGeometry {
    pub fn new(separation_m: f64) -> Result<LabGeometry, EngineError> {
        let g = LabGeometry {
            separation_m,
            signal_speed_mps: SPEED_OF_LIGHT_MPS,
            setting_latency_ns: 0,
            response_latency_a_ns: 1_000,
            response_latency_b_ns: 1_000,
            round_gap_ns: 1_000,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.separation_m.is_finite() || self.separation_m < 0.0 {
            return Err(EngineError::InvalidConfig(format!(
                "separation_m must be finite and nonnegative, got {}",
                self.separation_m
            )));
        }
        if !self.signal_speed_mps.is_finite() || self.signal_speed_mps <= 0.0 {
            return Err(EngineError::InvalidConfig(format!(
                "signal_speed_mps must be finite and positive, got {}",
                self.signal_speed_mps
            )));
        }
        Ok(())
    }

    /// One-way light time between the labs, in clock nanoseconds.
    pub fn light_time_ns(&self) -> f64 {
        self.separation_m / self.signal_speed_mps * 1e9
    }
}

/// Everything a run needs; runs are reproducible from this value alone.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub rounds: u64,
    pub seed: u64,
    pub strategy: StrategyDescriptor,
    pub setting_distribution: SettingDistribution,
    pub enforcement: bool,
    pub geometry: Option<LabGeometry>,
}

impl ExperimentConfig {
    pub fn new(rounds: u64, seed: u64, strategy: StrategyDescriptor) -> ExperimentConfig {
        ExperimentConfig {
            rounds,
            seed,
            strategy,
            setting_distribution: SettingDistribution::uniform(),
            enforcement: true,
            geometry: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.rounds == 0 {
            return Err(EngineError::InvalidConfig(
                "rounds must be at least 1".to_string(),
            ));
        }
        if let Some(g) = &self.geometry {
            g.validate()?;
        }
        Ok(())
    }
}

/// Win/loss tallies, always recomputable from the records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub wins: u64,
    pub losses: u64,
    /// Rounds per setting pair, in 11, 12, 21, 22 order.
    pub per_pair_counts: [u64; 4],
}

impl RunSummary {
    pub fn from_records(records: &[RoundRecord]) -> RunSummary {
        let mut summary = RunSummary {
            wins: 0,
            losses: 0,
            per_pair_counts: [0; 4],
        };
        for r in records {
            if r.win {
                summary.wins += 1;
            } else {
                summary.losses += 1;
            }
            summary.per_pair_counts[r.pair.index()] += 1;
        }
        summary
    }
}

/// A finished run: the config it came from, every round, and the tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentLog {
    pub config: ExperimentConfig,
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

impl ExperimentLog {
    pub fn win_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.summary.wins as f64 / self.records.len() as f64
    }
}

/// Which child stream of the master seed a component draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamId {
    /// Setting-pair draws.
    Settings = 0,
    /// Strategy shared randomness (initial state and between-round phases).
    Shared = 1,
    /// Respond-phase sampling: quantum measurements and local coins.
    Sampling = 2,
}

/// The documented seed-splitting rule: one ChaCha key from the master
/// seed, one ChaCha stream index per component.
pub fn derive_stream(seed: u64, id: StreamId) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Draw one setting pair. Under the uniform default this is two
/// independent fair coins; in general it is one categorical draw over the
/// four pairs.
pub fn draw_settings(rng: &mut dyn RngCore, dist: &SettingDistribution) -> SettingPair {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for pair in SettingPair::ALL {
        acc += dist.probability(pair);
        if u < acc {
            return pair;
        }
    }
    SettingPair::new(Setting::S2, Setting::S2)
}

/// Logical clock that stamps the four observable events of each round.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimulatedClock {
    now_ns: u64,
}

impl SimulatedClock {
    pub fn new() -> SimulatedClock {
        SimulatedClock { now_ns: 0 }
    }

    pub fn now_ns(&self) -> u64 {
        self.now_ns
    }

    fn stamp_round(&mut self, g: &LabGeometry) -> EventTimes {
        let issued = self.now_ns + g.setting_latency_ns;
        let events = EventTimes {
            setting_issued_a_ns: issued,
            setting_issued_b_ns: issued,
            output_committed_a_ns: issued + g.response_latency_a_ns,
            output_committed_b_ns: issued + g.response_latency_b_ns,
        };
        self.now_ns = events
            .output_committed_a_ns
            .max(events.output_committed_b_ns)
            + g.round_gap_ns;
        events
    }
}

/// Play a single round: each party answers its own setting, the win flag
/// comes from the win rule, and event times are stamped when a geometry
/// is configured.
#[allow(clippy::too_many_arguments)]
pub fn play_round(
    strategy: &dyn Strategy,
    state: &StrategyState,
    index: u64,
    pair: SettingPair,
    geometry: Option<&LabGeometry>,
    clock: &mut SimulatedClock,
    enforcement: bool,
    sampling_rng: &mut dyn RngCore,
) -> Result<RoundRecord, EngineError> {
    let (x, y) = if strategy.is_signaling() {
        if enforcement {
            return Err(EngineError::StructuralViolation(strategy.descriptor().name));
        }
        let x = strategy.respond_signaling(Party::Alice, pair.a, pair.b)?;
        let y = strategy.respond_signaling(Party::Bob, pair.b, pair.a)?;
        (x, y)
    } else {
        let mut entangled = strategy.prepare_round();
        let x = strategy.respond(
            Party::Alice,
            pair.a,
            state.view(Party::Alice),
            &mut entangled,
            sampling_rng,
        )?;
        let y = strategy.respond(
            Party::Bob,
            pair.b,
            state.view(Party::Bob),
            &mut entangled,
            sampling_rng,
        )?;
        (x, y)
    };
    let events = geometry.map(|g| clock.stamp_round(g));
    Ok(RoundRecord::new(index, pair, x, y, events))
}

/// Run the configured number of rounds and tally the results.
///
/// Settings are drawn fresh each round; the strategy's between-round phase
/// runs after every round with the full history. A signaling strategy
/// under enforcement is refused before any round is played.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentLog, EngineError> {
    config.validate()?;
    let strategy = build_strategy(&config.strategy)?;
    if strategy.is_signaling() && config.enforcement {
        return Err(EngineError::StructuralViolation(
            config.strategy.name.clone(),
        ));
    }

    let mut settings_rng = derive_stream(config.seed, StreamId::Settings);
    let mut shared_rng = derive_stream(config.seed, StreamId::Shared);
    let mut sampling_rng = derive_stream(config.seed, StreamId::Sampling);

    let mut state = strategy.initial_state(&mut shared_rng);
    let mut clock = SimulatedClock::new();
    let mut records: Vec<RoundRecord> = Vec::with_capacity(config.rounds as usize);

    for index in 0..config.rounds {
        let pair = draw_settings(&mut settings_rng, &config.setting_distribution);
        let record = play_round(
            strategy.as_ref(),
            &state,
            index,
            pair,
            config.geometry.as_ref(),
            &mut clock,
            config.enforcement,
            &mut sampling_rng,
        )
        .map_err(|e| match e {
            EngineError::Strategy(source) => EngineError::Round { index, source },
            other => other,
        })?;
        records.push(record);
        strategy.between_rounds(&mut state, &records, &mut shared_rng);
    }

    let summary = RunSummary::from_records(&records);
    Ok(ExperimentLog {
        config: config.clone(),
        records,
        summary,
    })
}

/// Verdict of the locality audit over one log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    /// One-way light time implied by the configured geometry.
    pub light_time_ns: f64,
    pub rounds_checked: u64,
    /// Indices of rounds where an output commit was inside the partner's
    /// future light cone of the setting issuance.
    pub violations: Vec<u64>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every round for space-like separation: each party must commit
/// its output strictly before the partner's setting could have arrived at
/// light speed.
pub fn spacetime_audit(log: &ExperimentLog) -> Result<AuditReport, EngineError> {
    let geometry =
        log.config.geometry.as_ref().ok_or_else(|| {
            EngineError::AuditInapplicable("config has no lab geometry".to_string())
        })?;
    let light_time_ns = geometry.light_time_ns();
    let mut violations = Vec::new();
    for record in &log.records {
        let events = record.events.ok_or_else(|| {
            EngineError::AuditInapplicable(format!("round {} has no timestamps", record.index))
        })?;
        let alice_separated = (events.output_committed_a_ns as f64)
            < events.setting_issued_b_ns as f64 + light_time_ns;
        let bob_separated = (events.output_committed_b_ns as f64)
            < events.setting_issued_a_ns as f64 + light_time_ns;
        if !(alice_separated && bob_separated) {
            violations.push(record.index);
        }
    }
    Ok(AuditReport {
        light_time_ns,
        rounds_checked: log.records.len() as u64,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{win_rule, CounterfactualTable};
    use crate::strategy::names;
    use std::collections::BTreeMap;

    fn deterministic_config(table: &str, rounds: u64, seed: u64) -> ExperimentConfig {
        let mut params = BTreeMap::new();
        params.insert("table".to_string(), table.to_string());
        let descriptor = crate::strategy::descriptor_for(names::DETERMINISTIC, &params).unwrap();
        ExperimentConfig::new(rounds, seed, descriptor)
    }

    fn quantum_config(rounds: u64, seed: u64) -> ExperimentConfig {
        let descriptor = crate::strategy::descriptor_for(names::QUANTUM, &BTreeMap::new()).unwrap();
        ExperimentConfig::new(rounds, seed, descriptor)
    }

    #[test]
    fn draw_settings_point_mass_and_replay() {
        let dist = SettingDistribution::point_mass(SettingPair::new(Setting::S1, Setting::S1));
        let mut rng = derive_stream(1, StreamId::Settings);
        for _ in 0..100 {
            assert_eq!(
                draw_settings(&mut rng, &dist),
                SettingPair::new(Setting::S1, Setting::S1)
            );
        }
        let uniform = SettingDistribution::uniform();
        let mut r1 = derive_stream(42, StreamId::Settings);
        let mut r2 = derive_stream(42, StreamId::Settings);
        for _ in 0..1000 {
            assert_eq!(
                draw_settings(&mut r1, &uniform),
                draw_settings(&mut r2, &uniform)
            );
        }
    }

    #[test]
    fn child_streams_are_distinct() {
        let mut a = derive_stream(7, StreamId::Settings);
        let mut b = derive_stream(7, StreamId::Shared);
        let mut c = derive_stream(7, StreamId::Sampling);
        let va: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(va, vb);
        assert_ne!(vb, vc);
        assert_ne!(va, vc);
    }

    #[test]
    fn play_round_deterministic_example() {
        let config = deterministic_config("+++-", 1, 0);
        let strategy = build_strategy(&config.strategy).unwrap();
        let mut shared = derive_stream(0, StreamId::Shared);
        let state = strategy.initial_state(&mut shared);
        let mut clock = SimulatedClock::new();
        let mut sampling = derive_stream(0, StreamId::Sampling);
        let pair = SettingPair::new(Setting::S2, Setting::S1);
        let record = play_round(
            strategy.as_ref(),
            &state,
            0,
            pair,
            None,
            &mut clock,
            true,
            &mut sampling,
        )
        .unwrap();
        assert_eq!(record.x, crate::game::Outcome::Plus);
        assert_eq!(record.y, crate::game::Outcome::Plus);
        assert!(!record.win);
        assert!(record.events.is_none());
    }

    #[test]
    fn run_matches_win_rule_on_drawn_pairs() {
        // All-plus table: wins exactly the rounds whose pair is 11.
        let config = deterministic_config("++++", 64, 909);
        let log = run_experiment(&config).unwrap();
        assert_eq!(log.records.len(), 64);
        for r in &log.records {
            assert_eq!(r.win, r.pair.both_one());
            assert_eq!(r.win, win_rule(r.pair, r.x, r.y));
        }
        // And the pairs really were drawn from the settings stream.
        let mut rng = derive_stream(909, StreamId::Settings);
        for r in &log.records {
            assert_eq!(
                r.pair,
                draw_settings(&mut rng, &SettingDistribution::uniform())
            );
        }
    }

    #[test]
    fn summary_is_recomputable() {
        let config = quantum_config(500, 5);
        let log = run_experiment(&config).unwrap();
        let recomputed = RunSummary::from_records(&log.records);
        assert_eq!(log.summary, recomputed);
        assert_eq!(log.summary.per_pair_counts.iter().sum::<u64>(), 500);
        assert_eq!(log.summary.wins + log.summary.losses, 500);
    }

    #[test]
    fn identical_configs_replay_identically() {
        let config = quantum_config(300, 123);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn changing_strategy_keeps_the_settings_sequence() {
        let det = run_experiment(&deterministic_config("+++-", 200, 77)).unwrap();
        let qua = run_experiment(&quantum_config(200, 77)).unwrap();
        for (a, b) in det.records.iter().zip(qua.records.iter()) {
            assert_eq!(a.pair, b.pair);
        }
    }

    #[test]
    fn rejects_zero_rounds() {
        let mut config = deterministic_config("+++-", 1, 0);
        config.rounds = 0;
        assert!(matches!(
            run_experiment(&config),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn signaling_cheat_is_refused_under_enforcement() {
        let descriptor =
            crate::strategy::descriptor_for(names::SIGNALING_CHEAT, &BTreeMap::new()).unwrap();
        let config = ExperimentConfig::new(100, 1, descriptor.clone());
        assert!(matches!(
            run_experiment(&config),
            Err(EngineError::StructuralViolation(name)) if name == names::SIGNALING_CHEAT
        ));

        let mut off = ExperimentConfig::new(100, 1, descriptor);
        off.enforcement = false;
        let log = run_experiment(&off).unwrap();
        assert_eq!(log.summary.wins, 100, "cheat wins every round");
    }

    #[test]
    fn clock_stamps_are_causal_and_advance() {
        let g = LabGeometry::new(1300.0).unwrap();
        let mut clock = SimulatedClock::new();
        let e1 = clock.stamp_round(&g);
        let e2 = clock.stamp_round(&g);
        assert!(e1.is_causal());
        assert!(e2.setting_issued_a_ns > e1.output_committed_a_ns);
    }

    #[test]
    fn audit_pass_and_fail_fixtures() {
        // 1300 m separation: one-way light time ~4336 ns.
        let mut g = LabGeometry::new(1300.0).unwrap();
        g.response_latency_a_ns = 3_000;
        g.response_latency_b_ns = 3_000;
        let mut config = deterministic_config("+++-", 50, 3);
        config.geometry = Some(g);
        let log = run_experiment(&config).unwrap();
        let report = spacetime_audit(&log).unwrap();
        assert!((report.light_time_ns - 4336.3).abs() < 0.2);
        assert!(report.all_pass());
        assert_eq!(report.rounds_checked, 50);

        // Committing 5000 ns after the partner's setting issuance fails.
        let mut slow = g;
        slow.response_latency_a_ns = 5_000;
        let mut config = deterministic_config("+++-", 50, 3);
        config.geometry = Some(slow);
        let log = run_experiment(&config).unwrap();
        let report = spacetime_audit(&log).unwrap();
        assert_eq!(report.violations.len(), 50);

        // Zero separation: light time 0, every round fails.
        let zero = LabGeometry::new(0.0).unwrap();
        let mut config = deterministic_config("+++-", 10, 3);
        config.geometry = Some(zero);
        let log = run_experiment(&config).unwrap();
        let report = spacetime_audit(&log).unwrap();
        assert_eq!(report.violations.len(), 10);
    }

    #[test]
    fn audit_requires_timestamps() {
        let log = run_experiment(&deterministic_config("+++-", 10, 3)).unwrap();
        assert!(matches!(
            spacetime_audit(&log),
            Err(EngineError::AuditInapplicable(_))
        ));
    }

    #[test]
    fn committed_tables_stay_optimal_for_adaptive_runs() {
        let descriptor =
            crate::strategy::descriptor_for(names::ADAPTIVE_SWITCH, &BTreeMap::new()).unwrap();
        let config = ExperimentConfig::new(200, 11, descriptor);
        let strategy = build_strategy(&config.strategy).unwrap();
        let mut settings_rng = derive_stream(config.seed, StreamId::Settings);
        let mut shared_rng = derive_stream(config.seed, StreamId::Shared);
        let mut sampling_rng = derive_stream(config.seed, StreamId::Sampling);
        let mut state = strategy.initial_state(&mut shared_rng);
        let mut clock = SimulatedClock::new();
        let mut records = Vec::new();
        for index in 0..config.rounds {
            let table: CounterfactualTable = strategy.committed_table(&state).unwrap();
            assert_eq!(crate::game::deterministic_win_count(table), 3);
            let pair = draw_settings(&mut settings_rng, &config.setting_distribution);
            // The round outputs are exactly the committed table's entries.
            let record = play_round(
                strategy.as_ref(),
                &state,
                index,
                pair,
                None,
                &mut clock,
                true,
                &mut sampling_rng,
            )
            .unwrap();
            assert_eq!(record.x, table.alice_response(pair.a));
            assert_eq!(record.y, table.bob_response(pair.b));
            records.push(record);
            strategy.between_rounds(&mut state, &records, &mut shared_rng);
        }
    }
}
