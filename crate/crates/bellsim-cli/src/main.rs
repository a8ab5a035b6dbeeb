//! Command-line surface: run experiments from config files, enumerate the
//! deterministic strategies, analyze logs, and plan sample sizes.
//!
//! Exit codes: 0 success, 2 usage/config/parse/domain errors, 3 structural
//! no-signaling violation (a signaling strategy under enforcement).

use std::env;
use std::path::Path;
use std::process::ExitCode;

use bellsim::engine::{run_experiment, spacetime_audit, AuditReport, EngineError};
use bellsim::game::enumerate_deterministic_strategies;
use bellsim::io::{read_config, read_log, write_log, IoError};
use bellsim::stats::{
    analyze_log, no_signaling_check, required_rounds_with, NoSignalingReport, PowerReport,
    TestReport, DEFAULT_NULL_RATE, DEFAULT_SEARCH_CAP,
};
use serde_json::json;

/// Environment override for the exact sample-size search cap.
const POWER_CAP_ENV: &str = "BELLSIM_POWER_CAP";

const USAGE: &str = "\
bellsim — referee and statistics for the two-party Bell/CHSH game

usage:
  bellsim run <config> <out-log> [--json]     play a configured experiment,
                                              write the log, print the test report
  bellsim enumerate [--json]                  all 16 deterministic strategies
                                              with exact win probabilities
  bellsim analyze <log> [--alpha a,b] [--json]
                                              test report, no-signaling check,
                                              and spacetime audit for a log
  bellsim power <rate> <alpha> [--json]       rounds needed to certify <rate>
                                              against the 3/4 bound
  bellsim help                                this text

config keys: rounds, seed, strategy.name, strategy.params.*, enforcement,
distribution, geometry.* — see the guide for the full reference.
environment: BELLSIM_POWER_CAP caps the exact search in `power`.

exit codes: 0 ok, 2 bad usage/config/input, 3 structural violation.";

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Failure {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Failure {
        let code = match e {
            EngineError::StructuralViolation(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<bellsim::stats::StatsError> for Failure {
    fn from(e: bellsim::stats::StatsError) -> Failure {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("bellsim: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// Positionals, `--flag value` pairs, and whether `--json` was given.
type ParsedArgs<'a> = (Vec<&'a str>, Vec<(&'a str, &'a str)>, bool);

/// Splits flags from positionals; only the listed flags are accepted.
fn split_args<'a>(args: &'a [String], value_flags: &[&str]) -> Result<ParsedArgs<'a>, Failure> {
    let mut positionals = Vec::new();
    let mut values = Vec::new();
    let mut json = false;
    let mut i = 0;
    while i < args.len() {
        let arg = args[i].as_str();
        if arg == "--json" {
            json = true;
        } else if value_flags.contains(&arg) {
            let value = args
                .get(i + 1)
                .ok_or_else(|| Failure::usage(format!("flag {arg} needs a value")))?;
            values.push((arg, value.as_str()));
            i += 1;
        } else if arg.starts_with('-') {
            return Err(Failure::usage(format!("unknown flag {arg:?}\n\n{USAGE}")));
        } else {
            positionals.push(arg);
        }
        i += 1;
    }
    Ok((positionals, values, json))
}

fn dispatch(args: &[String]) -> Result<(), Failure> {
    let Some(command) = args.first() else {
        return Err(Failure::usage(USAGE));
    };
    let rest = &args[1..];
    match command.as_str() {
        "run" => cmd_run(rest),
        "enumerate" => cmd_enumerate(rest),
        "analyze" => cmd_analyze(rest),
        "power" => cmd_power(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(Failure::usage(format!(
            "unknown command {other:?}\n\n{USAGE}"
        ))),
    }
}

fn render_test_report(report: &TestReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("rounds                     = {}\n", report.rounds));
    out.push_str(&format!("wins                       = {}\n", report.wins));
    out.push_str(&format!(
        "win rate                   = {:.6}\n",
        report.rate
    ));
    out.push_str(&format!(
        "p exact (binomial vs 3/4)  = {}\n",
        report.p_value_exact
    ));
    out.push_str(&format!(
        "p bound (azuma vs 3/4)     = {}\n",
        report.p_value_azuma
    ));
    if report.reject_at.is_empty() {
        out.push_str("rejects classical bound at : none of the requested levels\n");
    } else {
        let levels: Vec<String> = report.reject_at.iter().map(|a| a.to_string()).collect();
        out.push_str(&format!(
            "rejects classical bound at : {}\n",
            levels.join(", ")
        ));
    }
    out
}

fn render_no_signaling(report: &NoSignalingReport) -> String {
    if !report.sufficient_data {
        return format!(
            "no-signaling check         : insufficient data (smallest pair count {}, need {})\n",
            report.min_pair_count,
            bellsim::stats::MIN_PAIR_COUNT
        );
    }
    let mut out = format!(
        "no-signaling check         : max discrepancy {:.6}, max z {:.3}\n",
        report.max_discrepancy, report.max_z_score
    );
    for c in &report.checks {
        out.push_str(&format!(
            "  {:5} setting {}: P(+1) = {:.4} vs {:.4} by partner setting (z = {:.3})\n",
            c.party.to_string(),
            c.own_setting,
            c.p_plus_when_other_s1,
            c.p_plus_when_other_s2,
            c.z_score
        ));
    }
    out
}

fn render_audit(audit: &Result<AuditReport, EngineError>) -> String {
    match audit {
        Ok(report) => {
            if report.all_pass() {
                format!(
                    "spacetime audit            : PASS, {} rounds space-like separated (light time {:.1} ns)\n",
                    report.rounds_checked, report.light_time_ns
                )
            } else {
                format!(
                    "spacetime audit            : FAIL, {} of {} rounds violate separation (light time {:.1} ns)\n",
                    report.violations.len(),
                    report.rounds_checked,
                    report.light_time_ns
                )
            }
        }
        Err(e) => format!("spacetime audit            : inapplicable ({e})\n"),
    }
}

fn cmd_run(args: &[String]) -> Result<(), Failure> {
    let (positionals, _, json) = split_args(args, &[])?;
    let [config_path, out_path] = positionals.as_slice() else {
        return Err(Failure::usage(format!(
            "run needs <config> and <out-log> paths\n\n{USAGE}"
        )));
    };
    let config = read_config(Path::new(config_path))?;
    let log = run_experiment(&config)?;
    write_log(Path::new(out_path), &log)?;
    let report = analyze_log(&log, &[0.05, 0.01])?;
    if json {
        println!(
            "{}",
            json!({
                "log_path": out_path,
                "strategy": log.config.strategy.name,
                "test_report": report,
            })
        );
    } else {
        println!("strategy                   = {}", log.config.strategy);
        print!("{}", render_test_report(&report));
        println!("log written to             : {out_path}");
    }
    Ok(())
}

fn cmd_enumerate(args: &[String]) -> Result<(), Failure> {
    let (positionals, _, json) = split_args(args, &[])?;
    if !positionals.is_empty() {
        return Err(Failure::usage(format!(
            "enumerate takes no arguments\n\n{USAGE}"
        )));
    }
    let rows = enumerate_deterministic_strategies();
    let max = rows.iter().map(|r| r.wins_of_four).max().expect("16 rows");
    if json {
        println!(
            "{}",
            json!({
                "strategies": rows,
                "max_win_probability": f64::from(max) / 4.0,
            })
        );
    } else {
        println!("table wins_of_4 win_probability");
        for row in &rows {
            println!(
                "{} {} {}",
                row.table,
                row.wins_of_four,
                row.win_probability()
            );
        }
        println!("max {} {}", max, f64::from(max) / 4.0);
    }
    Ok(())
}

fn parse_alphas(raw: Option<&str>) -> Result<Vec<f64>, Failure> {
    let raw = raw.unwrap_or("0.05,0.01");
    raw.split(',')
        .map(str::trim)
        .map(|part| {
            part.parse::<f64>()
                .ok()
                .filter(|a| *a > 0.0 && *a < 1.0)
                .ok_or_else(|| {
                    Failure::usage(format!(
                        "significance level must be in (0, 1), got {part:?}"
                    ))
                })
        })
        .collect()
}

fn cmd_analyze(args: &[String]) -> Result<(), Failure> {
    let (positionals, values, json) = split_args(args, &["--alpha"])?;
    let [log_path] = positionals.as_slice() else {
        return Err(Failure::usage(format!(
            "analyze needs a <log> path\n\n{USAGE}"
        )));
    };
    let alphas = parse_alphas(
        values
            .iter()
            .find(|(f, _)| *f == "--alpha")
            .map(|(_, v)| *v),
    )?;
    let log = read_log(Path::new(log_path))?;
    let report = analyze_log(&log, &alphas)?;
    let marginals = no_signaling_check(&log);
    let audit = spacetime_audit(&log);
    if json {
        let audit_json = match &audit {
            Ok(report) => json!({ "status": "checked", "report": report }),
            Err(e) => json!({ "status": "inapplicable", "reason": e.to_string() }),
        };
        println!(
            "{}",
            json!({
                "strategy": log.config.strategy.name,
                "test_report": report,
                "no_signaling": marginals,
                "audit": audit_json,
            })
        );
    } else {
        println!("strategy                   = {}", log.config.strategy);
        print!("{}", render_test_report(&report));
        print!("{}", render_no_signaling(&marginals));
        print!("{}", render_audit(&audit));
    }
    Ok(())
}

fn power_cap() -> Result<u64, Failure> {
    match env::var(POWER_CAP_ENV) {
        Ok(raw) => raw.parse::<u64>().map_err(|_| {
            Failure::usage(format!(
                "{POWER_CAP_ENV} must be a positive integer, got {raw:?}"
            ))
        }),
        Err(_) => Ok(DEFAULT_SEARCH_CAP),
    }
}

fn render_power_report(report: &PowerReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "power analysis             : rate {} vs null {} at alpha {}\n",
        report.assumed_rate, report.null_rate, report.alpha
    ));
    match report.required_n_exact {
        Some(n) => {
            out.push_str(&format!("required N (exact search)  = {n}\n"));
        }
        None => {
            out.push_str(&format!(
                "required N (exact search)  = infeasible within cap {}\n",
                report.search_cap
            ));
        }
    }
    out.push_str(&format!(
        "required N (normal approx) = {:.6e}\n",
        report.required_n_normal_approx
    ));
    out
}

fn cmd_power(args: &[String]) -> Result<(), Failure> {
    let (positionals, _, json) = split_args(args, &[])?;
    let [rate, alpha] = positionals.as_slice() else {
        return Err(Failure::usage(format!(
            "power needs <rate> and <alpha>\n\n{USAGE}"
        )));
    };
    let rate: f64 = rate
        .parse()
        .map_err(|_| Failure::usage(format!("rate must be a number, got {rate:?}")))?;
    let alpha: f64 = alpha
        .parse()
        .map_err(|_| Failure::usage(format!("alpha must be a number, got {alpha:?}")))?;
    let report = required_rounds_with(rate, alpha, DEFAULT_NULL_RATE, power_cap()?)?;
    if json {
        println!("{}", json!({ "power_report": report }));
    } else {
        print!("{}", render_power_report(&report));
    }
    Ok(())
}
