//! A desk-scale laboratory for the two-party Bell/CHSH game.
//!
//! The game: Alice and Bob each receive a fair-coin setting and answer
//! +1 or -1, winning when their answers agree on setting pair 11 and
//! differ on 12, 21, and 22. No classical strategy — no matter how much
//! shared randomness, memory of past rounds, or between-round
//! communication it uses — wins more than 3/4 of the time. Measuring a
//! shared entangled pair wins (2 + sqrt(2))/4, about 0.8536.
//!
//! This crate holds the whole loop of that story:
//!
//! * [`game`] — the win rule, counterfactual tables, and the exhaustive
//!   16-strategy enumeration behind the 3/4 ceiling;
//! * [`quantum`] — exact two-qubit state-vector simulation and the
//!   optimal measurement angles;
//! * [`strategy`] — the strategy contract plus the registry: fixed
//!   tables, mixtures, a memory-exploiting adaptive player, a signaling
//!   cheat fixture, and the quantum strategy;
//! * [`engine`] — the referee: seeded setting draws, phased rounds,
//!   simulated event clocks, spacetime audits, reproducible logs;
//! * [`stats`] — exact binomial tail tests justified by stochastic
//!   domination, the Azuma supermartingale bound, power planning, and
//!   empirical no-signaling checks;
//! * [`io`] — the plain-text config and log formats the CLI speaks.
//!
//! Runs are pure functions of their seeded config:
//!
//! ```
//! use bellsim::prelude::*;
//!
//! let descriptor = descriptor_for(strategy_names::QUANTUM, &Default::default())?;
//! let config = ExperimentConfig::new(2_000, 7, descriptor);
//! let log = run_experiment(&config)?;
//! let report = analyze_log(&log, &[0.05])?;
//! assert!(log.win_rate() > 0.8);
//! assert!(report.reject_at.contains(&0.05));
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod engine;
pub mod game;
pub mod io;
pub mod quantum;
pub mod stats;
pub mod strategy;

pub use rand;

/// The commonly used surface in one import.
pub mod prelude {
    pub use crate::engine::{
        derive_stream, draw_settings, run_experiment, spacetime_audit, ExperimentConfig,
        ExperimentLog, LabGeometry, StreamId,
    };
    pub use crate::game::{
        enumerate_deterministic_strategies, equality_count, indicator_sum, loss_probability,
        win_rule, CounterfactualTable, Outcome, Party, RoundRecord, Setting, SettingDistribution,
        SettingPair,
    };
    pub use crate::io::{parse_config_str, parse_log_str, render_config, serialize_log};
    pub use crate::quantum::{
        correlation, joint_distribution, optimal_angles, sample_outcomes, AngleQuadruple,
        MeasurementAngle, TwoQubitState, TSIRELSON_WIN_RATE,
    };
    pub use crate::stats::{
        analyze_log, azuma_bound, binomial_tail_pvalue, no_signaling_check, required_rounds,
        PValue, PowerReport, TestReport,
    };
    pub use crate::strategy::{
        build_strategy, descriptor_for, names as strategy_names, Strategy, StrategyDescriptor,
        StrategyState,
    };
}
