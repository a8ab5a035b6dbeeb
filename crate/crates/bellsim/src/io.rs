//! Text formats: the `key = value` experiment config and the versioned
//! line-oriented run log.
//!
//! Both formats are plain text on purpose: logs diff cleanly, external
//! experiment data can be converted in, and byte-identical output is the
//! reproducibility contract. Floats are rendered with Rust's shortest
//! round-trip formatting, so serialize-then-parse returns the exact same
//! values.
//!
//! Log layout: a `# bellsim-log v1` version line, the full config echoed
//! as `# key = value` lines, then one line per round with the fields
//! `index a b x y win`, plus four event timestamps when the run had a lab
//! geometry.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::engine::{ExperimentConfig, ExperimentLog, LabGeometry, RunSummary};
use crate::game::{
    win_rule, EventTimes, Outcome, RoundRecord, Setting, SettingDistribution, SettingPair,
};
use crate::strategy::descriptor_for;

/// Version tag on every log file this build writes.
pub const LOG_FORMAT_VERSION: u32 = 1;

const LOG_MAGIC: &str = "# bellsim-log v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required key {0:?}")]
    MissingKey(&'static str),
}

impl IoError {
    fn parse(line: usize, message: impl Into<String>) -> IoError {
        IoError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Documented config keys, in canonical render order.
const CONFIG_KEYS: &[&str] = &[
    "rounds",
    "seed",
    "strategy.name",
    "enforcement",
    "distribution",
    "geometry.separation_m",
    "geometry.signal_speed_mps",
    "geometry.setting_latency_ns",
    "geometry.response_latency_a_ns",
    "geometry.response_latency_b_ns",
    "geometry.round_gap_ns",
];

fn is_known_key(key: &str) -> bool {
    CONFIG_KEYS.contains(&key) || key.starts_with("strategy.params.")
}

/// Render a config as the canonical `key = value` document.
pub fn render_config(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("rounds = {}\n", config.rounds));
    out.push_str(&format!("seed = {}\n", config.seed));
    out.push_str(&format!("strategy.name = {}\n", config.strategy.name));
    for (key, value) in &config.strategy.parameters {
        out.push_str(&format!("strategy.params.{key} = {value}\n"));
    }
    out.push_str(&format!("enforcement = {}\n", config.enforcement));
    let d = config.setting_distribution.as_array();
    out.push_str(&format!(
        "distribution = {},{},{},{}\n",
        d[0], d[1], d[2], d[3]
    ));
    if let Some(g) = &config.geometry {
        out.push_str(&format!("geometry.separation_m = {}\n", g.separation_m));
        out.push_str(&format!(
            "geometry.signal_speed_mps = {}\n",
            g.signal_speed_mps
        ));
        out.push_str(&format!(
            "geometry.setting_latency_ns = {}\n",
            g.setting_latency_ns
        ));
        out.push_str(&format!(
            "geometry.response_latency_a_ns = {}\n",
            g.response_latency_a_ns
        ));
        out.push_str(&format!(
            "geometry.response_latency_b_ns = {}\n",
            g.response_latency_b_ns
        ));
        out.push_str(&format!("geometry.round_gap_ns = {}\n", g.round_gap_ns));
    }
    out
}

/// Key-value lines with their 1-based line numbers, comments stripped.
fn collect_pairs(text: &str) -> Result<Vec<(usize, String, String)>, IoError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(IoError::parse(
                line_no,
                format!("expected key = value, got {raw:?}"),
            ));
        };
        pairs.push((line_no, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64, IoError> {
    value.parse::<u64>().map_err(|_| {
        IoError::parse(
            line,
            format!("{key} must be a nonnegative integer, got {value:?}"),
        )
    })
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, IoError> {
    value
        .parse::<f64>()
        .map_err(|_| IoError::parse(line, format!("{key} must be a number, got {value:?}")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, IoError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(IoError::parse(
            line,
            format!("{key} must be true or false, got {value:?}"),
        )),
    }
}

/// Parse a config document. Unknown keys are rejected; omitted optional
/// keys take their defaults (uniform distribution, enforcement on, no
/// geometry). `rounds`, `seed`, and `strategy.name` are mandatory — in
/// particular there is no entropy fallback for the seed.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, IoError> {
    let pairs = collect_pairs(text)?;
    let mut seen: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (line, key, value) in pairs {
        if !is_known_key(&key) {
            return Err(IoError::parse(line, format!("unknown key {key:?}")));
        }
        if seen.insert(key.clone(), (line, value)).is_some() {
            return Err(IoError::parse(line, format!("duplicate key {key:?}")));
        }
    }

    let take = |key: &str| seen.get(key).cloned();

    let (line, value) = take("rounds").ok_or(IoError::MissingKey("rounds"))?;
    let rounds = parse_u64(line, "rounds", &value)?;
    let (line, value) = take("seed").ok_or(IoError::MissingKey("seed"))?;
    let seed = parse_u64(line, "seed", &value)?;
    let (name_line, name) = take("strategy.name").ok_or(IoError::MissingKey("strategy.name"))?;

    let mut params = BTreeMap::new();
    for (key, (_, value)) in &seen {
        if let Some(param) = key.strip_prefix("strategy.params.") {
            params.insert(param.to_string(), value.clone());
        }
    }
    let strategy =
        descriptor_for(&name, &params).map_err(|e| IoError::parse(name_line, e.to_string()))?;

    let enforcement = match take("enforcement") {
        Some((line, value)) => parse_bool(line, "enforcement", &value)?,
        None => true,
    };

    let setting_distribution = match take("distribution") {
        Some((line, value)) => {
            let parts: Vec<&str> = value.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(IoError::parse(
                    line,
                    format!("distribution needs 4 comma-separated probabilities, got {value:?}"),
                ));
            }
            let mut probs = [0.0; 4];
            for (slot, part) in probs.iter_mut().zip(parts.iter()) {
                *slot = parse_f64(line, "distribution", part)?;
            }
            SettingDistribution::new(probs).map_err(|e| IoError::parse(line, e.to_string()))?
        }
        None => SettingDistribution::uniform(),
    };

    let geometry = if seen.keys().any(|k| k.starts_with("geometry.")) {
        let (line, value) =
            take("geometry.separation_m").ok_or(IoError::MissingKey("geometry.separation_m"))?;
        let mut g = LabGeometry::new(parse_f64(line, "geometry.separation_m", &value)?)
            .map_err(|e| IoError::parse(line, e.to_string()))?;
        if let Some((line, value)) = take("geometry.signal_speed_mps") {
            g.signal_speed_mps = parse_f64(line, "geometry.signal_speed_mps", &value)?;
        }
        if let Some((line, value)) = take("geometry.setting_latency_ns") {
            g.setting_latency_ns = parse_u64(line, "geometry.setting_latency_ns", &value)?;
        }
        if let Some((line, value)) = take("geometry.response_latency_a_ns") {
            g.response_latency_a_ns = parse_u64(line, "geometry.response_latency_a_ns", &value)?;
        }
        if let Some((line, value)) = take("geometry.response_latency_b_ns") {
            g.response_latency_b_ns = parse_u64(line, "geometry.response_latency_b_ns", &value)?;
        }
        if let Some((line, value)) = take("geometry.round_gap_ns") {
            g.round_gap_ns = parse_u64(line, "geometry.round_gap_ns", &value)?;
        }
        g.validate()
            .map_err(|e| IoError::parse(line, e.to_string()))?;
        Some(g)
    } else {
        None
    };

    let config = ExperimentConfig {
        rounds,
        seed,
        strategy,
        setting_distribution,
        enforcement,
        geometry,
    };
    config
        .validate()
        .map_err(|e| IoError::parse(0, e.to_string()))?;
    Ok(config)
}

fn record_line(record: &RoundRecord) -> String {
    let mut line = format!(
        "{} {} {} {} {} {}",
        record.index,
        record.pair.a.label(),
        record.pair.b.label(),
        record.x.label(),
        record.y.label(),
        u8::from(record.win),
    );
    if let Some(e) = record.events {
        line.push_str(&format!(
            " {} {} {} {}",
            e.setting_issued_a_ns,
            e.setting_issued_b_ns,
            e.output_committed_a_ns,
            e.output_committed_b_ns,
        ));
    }
    line
}

/// Serialize a log: version line, config echo, one line per round.
pub fn serialize_log(log: &ExperimentLog) -> String {
    let mut out = String::new();
    out.push_str(LOG_MAGIC);
    out.push('\n');
    for line in render_config(&log.config).lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for record in &log.records {
        out.push_str(&record_line(record));
        out.push('\n');
    }
    out
}

fn parse_record(
    line_no: usize,
    line: &str,
    expected_index: u64,
    with_events: bool,
) -> Result<RoundRecord, IoError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let expected_fields = if with_events { 10 } else { 6 };
    if fields.len() != expected_fields {
        return Err(IoError::parse(
            line_no,
            format!("expected {expected_fields} fields, got {}", fields.len()),
        ));
    }
    let index = parse_u64(line_no, "index", fields[0])?;
    if index != expected_index {
        return Err(IoError::parse(
            line_no,
            format!("round index {index} out of order, expected {expected_index}"),
        ));
    }
    let setting = |field: &str| -> Result<Setting, IoError> {
        field
            .chars()
            .next()
            .filter(|_| field.len() == 1)
            .and_then(Setting::from_label)
            .ok_or_else(|| IoError::parse(line_no, format!("bad setting {field:?}")))
    };
    let outcome = |field: &str| -> Result<Outcome, IoError> {
        match field {
            "+1" => Ok(Outcome::Plus),
            "-1" => Ok(Outcome::Minus),
            _ => Err(IoError::parse(line_no, format!("bad outcome {field:?}"))),
        }
    };
    let pair = SettingPair::new(setting(fields[1])?, setting(fields[2])?);
    let x = outcome(fields[3])?;
    let y = outcome(fields[4])?;
    let win = match fields[5] {
        "1" => true,
        "0" => false,
        other => return Err(IoError::parse(line_no, format!("bad win flag {other:?}"))),
    };
    if win != win_rule(pair, x, y) {
        return Err(IoError::parse(
            line_no,
            format!("win flag {win} contradicts the win rule for pair {pair} ({x}, {y})"),
        ));
    }
    let events = if with_events {
        let e = EventTimes {
            setting_issued_a_ns: parse_u64(line_no, "setting_issued_a_ns", fields[6])?,
            setting_issued_b_ns: parse_u64(line_no, "setting_issued_b_ns", fields[7])?,
            output_committed_a_ns: parse_u64(line_no, "output_committed_a_ns", fields[8])?,
            output_committed_b_ns: parse_u64(line_no, "output_committed_b_ns", fields[9])?,
        };
        if !e.is_causal() {
            return Err(IoError::parse(
                line_no,
                "output committed before its setting was issued".to_string(),
            ));
        }
        Some(e)
    } else {
        None
    };
    Ok(RoundRecord {
        index,
        pair,
        x,
        y,
        win,
        events,
    })
}

/// Parse a log file. The echoed config is parsed with the config parser,
/// the records are validated against it (count, order, win rule, and
/// timestamp presence matching the geometry), and the summary is
/// recomputed from the records.
pub fn parse_log_str(text: &str) -> Result<ExperimentLog, IoError> {
    let mut lines = text.lines().enumerate();
    let Some((_, first)) = lines.next() else {
        return Err(IoError::parse(1, "empty log file".to_string()));
    };
    if first.trim() != LOG_MAGIC {
        return Err(IoError::parse(
            1,
            format!("expected version line {LOG_MAGIC:?}, got {first:?}"),
        ));
    }

    let mut config_text = String::new();
    let mut records = Vec::new();
    let mut config: Option<ExperimentConfig> = None;
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if config.is_some() {
                return Err(IoError::parse(
                    line_no,
                    "config lines must precede the round records".to_string(),
                ));
            }
            config_text.push_str(rest.trim_start());
            config_text.push('\n');
            continue;
        }
        if config.is_none() {
            // Header lines sit one file line below their position in the
            // collected config block (the version line comes first).
            config = Some(parse_config_str(&config_text).map_err(|e| match e {
                IoError::Parse { line, message } => IoError::Parse { line: line + 1, message },
                other => other,
            })?);
        }
        let with_events = config.as_ref().expect("set above").geometry.is_some();
        let record = parse_record(line_no, line, records.len() as u64, with_events)?;
        records.push(record);
    }

    let config = config.ok_or_else(|| {
        IoError::parse(text.lines().count(), "log has no round records".to_string())
    })?;
    if records.len() as u64 != config.rounds {
        return Err(IoError::parse(
            text.lines().count(),
            format!(
                "config says {} rounds but the log has {}",
                config.rounds,
                records.len()
            ),
        ));
    }
    let summary = RunSummary::from_records(&records);
    Ok(ExperimentLog {
        config,
        records,
        summary,
    })
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, IoError> {
    parse_config_str(&fs::read_to_string(path)?)
}

pub fn write_log(path: &Path, log: &ExperimentLog) -> Result<(), IoError> {
    fs::write(path, serialize_log(log))?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<ExperimentLog, IoError> {
    parse_log_str(&fs::read_to_string(path)?)
}
