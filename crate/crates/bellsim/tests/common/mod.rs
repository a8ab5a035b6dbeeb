//! Helpers shared by the integration suites.
//!
//! Each suite links its own copy, so not every helper is used everywhere.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use bellsim::engine::{ExperimentConfig, ExperimentLog, LabGeometry, RunSummary};
use bellsim::game::{EventTimes, Outcome, RoundRecord, Setting, SettingDistribution, SettingPair};
use bellsim::strategy::{descriptor_for, names, StrategyDescriptor};

pub fn descriptor(name: &str) -> StrategyDescriptor {
    descriptor_for(name, &BTreeMap::new()).expect("registered strategy")
}

pub fn deterministic_descriptor(table: &str) -> StrategyDescriptor {
    let mut params = BTreeMap::new();
    params.insert("table".to_string(), table.to_string());
    descriptor_for(names::DETERMINISTIC, &params).expect("valid table")
}

pub fn best_deterministic_config(rounds: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(rounds, seed, deterministic_descriptor("+++-"))
}

pub fn adaptive_config(rounds: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(rounds, seed, descriptor(names::ADAPTIVE_SWITCH))
}

pub fn quantum_config(rounds: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(rounds, seed, descriptor(names::QUANTUM))
}

pub fn mixture_uniform_config(rounds: u64, seed: u64) -> ExperimentConfig {
    let weights: Vec<String> = (0..16).map(|_| (1.0f64 / 16.0).to_string()).collect();
    let mut params = BTreeMap::new();
    params.insert("weights".to_string(), weights.join(","));
    let descriptor = descriptor_for(names::MIXTURE, &params).expect("valid weights");
    ExperimentConfig::new(rounds, seed, descriptor)
}

fn random_outcome(rng: &mut ChaCha12Rng) -> Outcome {
    if rng.gen::<bool>() {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

fn random_pair(rng: &mut ChaCha12Rng) -> SettingPair {
    let s = |b: bool| if b { Setting::S2 } else { Setting::S1 };
    SettingPair::new(s(rng.gen()), s(rng.gen()))
}

fn random_descriptor(rng: &mut ChaCha12Rng) -> StrategyDescriptor {
    match rng.gen_range(0..5u8) {
        0 => {
            let signs: String = (0..4)
                .map(|_| if rng.gen::<bool>() { '+' } else { '-' })
                .collect();
            deterministic_descriptor(&signs)
        }
        1 => {
            let mut raw: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for w in raw.iter_mut() {
                *w /= sum;
            }
            let joined: Vec<String> = raw.iter().map(|w| w.to_string()).collect();
            let mut params = BTreeMap::new();
            params.insert("weights".to_string(), joined.join(","));
            descriptor_for(names::MIXTURE, &params).expect("normalized weights")
        }
        2 => {
            let mut params = BTreeMap::new();
            params.insert("start".to_string(), rng.gen_range(0..8u8).to_string());
            descriptor_for(names::ADAPTIVE_SWITCH, &params).expect("valid start")
        }
        3 => descriptor(names::SIGNALING_CHEAT),
        _ => {
            if rng.gen::<bool>() {
                descriptor(names::QUANTUM)
            } else {
                let mut params = BTreeMap::new();
                let angles: Vec<String> = (0..4)
                    .map(|_| {
                        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                            .to_string()
                    })
                    .collect();
                params.insert("angles".to_string(), angles.join(","));
                descriptor_for(names::QUANTUM, &params).expect("finite angles")
            }
        }
    }
}

/// A random but format-valid experiment log: arbitrary config, arbitrary
/// outcome records with derived win flags, timestamps present exactly
/// when the config has a geometry.
pub fn random_log(rng: &mut ChaCha12Rng) -> ExperimentLog {
    let rounds = rng.gen_range(1..=40u64);
    let seed = rng.gen::<u64>();
    let mut config = ExperimentConfig::new(rounds, seed, random_descriptor(rng));
    config.enforcement = rng.gen::<bool>();
    if rng.gen_bool(0.3) {
        let mut raw = [0.0f64; 4];
        for p in raw.iter_mut() {
            *p = rng.gen_range(0.01..1.0);
        }
        let sum: f64 = raw.iter().sum();
        for p in raw.iter_mut() {
            *p /= sum;
        }
        config.setting_distribution = SettingDistribution::new(raw).expect("normalized");
    }
    if rng.gen_bool(0.4) {
        let mut g = LabGeometry::new(rng.gen_range(0.0..5000.0)).expect("valid separation");
        g.setting_latency_ns = rng.gen_range(0..1000);
        g.response_latency_a_ns = rng.gen_range(0..10_000);
        g.response_latency_b_ns = rng.gen_range(0..10_000);
        g.round_gap_ns = rng.gen_range(0..1000);
        config.geometry = Some(g);
    }

    let mut clock = 0u64;
    let records: Vec<RoundRecord> = (0..rounds)
        .map(|index| {
            let events = config.geometry.map(|g| {
                let issued = clock + g.setting_latency_ns;
                let e = EventTimes {
                    setting_issued_a_ns: issued,
                    setting_issued_b_ns: issued,
                    output_committed_a_ns: issued + g.response_latency_a_ns,
                    output_committed_b_ns: issued + g.response_latency_b_ns,
                };
                clock = e.output_committed_a_ns.max(e.output_committed_b_ns) + g.round_gap_ns;
                e
            });
            RoundRecord::new(
                index,
                random_pair(rng),
                random_outcome(rng),
                random_outcome(rng),
                events,
            )
        })
        .collect();
    let summary = RunSummary::from_records(&records);
    ExperimentLog {
        config,
        records,
        summary,
    }
}
