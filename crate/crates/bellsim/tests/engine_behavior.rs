//! Monte Carlo behavior of the referee: settings frequencies, per-pair
//! win rates, and full-run rates for each strategy family. All bands are
//! 3 sigma around the exact values, on fixed seeds.

mod common;

use bellsim::engine::{
    derive_stream, draw_settings, play_round, run_experiment, SimulatedClock, StreamId,
};
use bellsim::game::{Setting, SettingDistribution, SettingPair};
use bellsim::quantum::TSIRELSON_WIN_RATE;
use bellsim::strategy::build_strategy;

type ConfigBuilder = fn(u64, u64) -> bellsim::engine::ExperimentConfig;

#[test]
fn uniform_settings_frequencies() {
    let mut rng = derive_stream(2024, StreamId::Settings);
    let uniform = SettingDistribution::uniform();
    let mut counts = [0u64; 4];
    let n = 1_000_000;
    for _ in 0..n {
        counts[draw_settings(&mut rng, &uniform).index()] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        let freq = *c as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.0015, "pair {i}: {freq}");
    }
}

#[test]
fn quantum_win_frequency_at_a_fixed_pair() {
    let config = common::quantum_config(1, 8);
    let strategy = build_strategy(&config.strategy).unwrap();
    let mut shared = derive_stream(8, StreamId::Shared);
    let state = strategy.initial_state(&mut shared);
    let mut sampling = derive_stream(8, StreamId::Sampling);
    let mut clock = SimulatedClock::new();
    let pair = SettingPair::new(Setting::S1, Setting::S1);
    let n = 100_000u64;
    let mut wins = 0u64;
    for index in 0..n {
        let record = play_round(
            strategy.as_ref(),
            &state,
            index,
            pair,
            None,
            &mut clock,
            true,
            &mut sampling,
        )
        .unwrap();
        if record.win {
            wins += 1;
        }
    }
    let freq = wins as f64 / n as f64;
    // 3 sigma at 1e5 rounds is 0.00335.
    assert!(
        (freq - TSIRELSON_WIN_RATE).abs() < 0.0034,
        "pair 11 win rate {freq}"
    );
}

#[test]
fn full_run_win_rates_sit_in_their_bands() {
    let n = 100_000u64;

    let quantum = run_experiment(&common::quantum_config(n, 5150)).unwrap();
    let rate = quantum.win_rate();
    assert!((rate - TSIRELSON_WIN_RATE).abs() < 0.0034, "quantum {rate}");

    let best = run_experiment(&common::best_deterministic_config(n, 5151)).unwrap();
    let rate = best.win_rate();
    assert!((rate - 0.75).abs() < 0.0041, "best deterministic {rate}");

    let adaptive = run_experiment(&common::adaptive_config(n, 5152)).unwrap();
    let rate = adaptive.win_rate();
    assert!((rate - 0.75).abs() < 0.0041, "adaptive-switch {rate}");

    let mixture = run_experiment(&common::mixture_uniform_config(n, 5153)).unwrap();
    let rate = mixture.win_rate();
    // Uniform mixture wins half its rounds: 3 sigma is 0.0047.
    assert!((rate - 0.5).abs() < 0.0048, "uniform mixture {rate}");
}

// The memory-loophole harness: the empirical win frequency of round n,
// conditioned on what happened in round n-1, stays at or below 3/4 for
// every classical strategy. Buckets are (previous pair, previous win).
#[test]
fn conditional_win_rates_respect_the_classical_bound() {
    let replications = 4_000u64;
    let rounds = 16usize;
    let players: [(&str, ConfigBuilder); 3] = [
        ("best deterministic", common::best_deterministic_config),
        ("adaptive-switch", common::adaptive_config),
        ("uniform mixture", common::mixture_uniform_config),
    ];
    for (label, build) in players {
        // wins[round][bucket], totals[round][bucket]
        let mut wins = vec![[0u64; 8]; rounds];
        let mut totals = vec![[0u64; 8]; rounds];
        for i in 0..replications {
            let log = run_experiment(&build(rounds as u64, 700_000 + i)).unwrap();
            for n in 1..rounds {
                let prev = &log.records[n - 1];
                let bucket = prev.pair.index() * 2 + usize::from(prev.win);
                totals[n][bucket] += 1;
                if log.records[n].win {
                    wins[n][bucket] += 1;
                }
            }
        }
        for n in 1..rounds {
            for bucket in 0..8 {
                let total = totals[n][bucket];
                if total < 200 {
                    continue;
                }
                let freq = wins[n][bucket] as f64 / total as f64;
                let slack = 3.0 * (0.75 * 0.25 / total as f64).sqrt();
                assert!(
                    freq <= 0.75 + slack,
                    "{label}: round {n} bucket {bucket}: {freq} over {total} samples"
                );
            }
        }
    }
}
