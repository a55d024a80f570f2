//! Experiment-runner mechanics: cell expansion, report files,
//! reproducibility, paired seeding across policies, and exit codes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use skillqueue::{LogKind, PolicyKind};
use skillqueue_cli::{run_experiment, write_outputs, ExperimentConfig};

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("skillqueue-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn minimal_config(out: &std::path::Path) -> String {
    format!(
        r#"
[experiment]
replications = 3
base_seed = 9
output_dir = "{}"

[scenario.synthetic]
num_types = 2
num_servers = 2
service = {{ kind = "exponential", mean = 1.0 }}
theta = {{ kind = "per_line", values = [0.9, 0.2, 0.3, 0.8] }}
agent_counts = [1, 1]
horizon = 2000.0
seed = 5

[[scenario.synthetic.rate_segments]]
start = 0.0
rates = [0.4, 0.3]

[[policies]]
kind = "UCBQR"
episode_length_h = 50.0

[[policies]]
kind = "ORACLE"
episode_length_h = 50.0
"#,
        out.display()
    )
}

#[test]
fn minimal_experiment_writes_expected_files() {
    let out = temp_dir("minimal");
    let config: ExperimentConfig = toml::from_str(&minimal_config(&out)).unwrap();
    assert_eq!(config.expand_cells().len(), 2);
    let outcome = run_experiment(&config).unwrap();
    write_outputs(&outcome).unwrap();

    // Two episodic policies: three report files each, plus the summary.
    let mut files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        vec![
            "ORACLE.kpi.csv",
            "ORACLE.kpi.json",
            "ORACLE.snapshots.csv",
            "UCBQR.kpi.csv",
            "UCBQR.kpi.json",
            "UCBQR.snapshots.csv",
            "summary.csv",
        ]
    );
    let ucbqr = outcome
        .cells
        .iter()
        .find(|c| c.policy == PolicyKind::Ucbqr)
        .unwrap();
    assert!(ucbqr
        .report
        .as_ref()
        .unwrap()
        .payoff_relative_to_oracle
        .is_some());
}

#[test]
fn rerun_reproduces_byte_identical_reports() {
    let out1 = temp_dir("repro1");
    let out2 = temp_dir("repro2");
    let config1: ExperimentConfig = toml::from_str(&minimal_config(&out1)).unwrap();
    let config2: ExperimentConfig = toml::from_str(&minimal_config(&out2)).unwrap();
    write_outputs(&run_experiment(&config1).unwrap()).unwrap();
    write_outputs(&run_experiment(&config2).unwrap()).unwrap();
    for file in ["UCBQR.kpi.csv", "ORACLE.kpi.csv", "summary.csv"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn policies_share_arrival_and_service_draws() {
    // Replication r must see the same arrivals and the same k-th service
    // draw per line under every policy.
    let config = skillqueue::SystemConfig {
        num_types: 2,
        num_servers: 2,
        lines: vec![
            skillqueue::Line::new(0, 0),
            skillqueue::Line::new(0, 1),
            skillqueue::Line::new(1, 0),
            skillqueue::Line::new(1, 1),
        ],
        payoff: vec![0.9, 0.4, 0.3, 0.8],
        service: vec![skillqueue::ServiceSource::Exponential { mean: 5.0 }; 4],
        arrivals: vec![
            skillqueue::ArrivalSource::Exponential { mean: 10.0 },
            skillqueue::ArrivalSource::Exponential { mean: 12.0 },
        ],
        capacity: vec![skillqueue::CapacitySchedule::constant(1); 2],
    };
    let logs: Vec<skillqueue::EventLog> = [PolicyKind::FcfsAlis, PolicyKind::Greedy]
        .iter()
        .map(|kind| {
            skillqueue::run_replication(&config, &skillqueue::PolicySpec::new(*kind), 77, 3000.0)
                .unwrap()
        })
        .collect();

    let arrivals: Vec<Vec<(f64, usize)>> = logs
        .iter()
        .map(|log| {
            log.records
                .iter()
                .filter(|r| r.kind == LogKind::Arrival)
                .map(|r| (r.time, r.customer_type.unwrap()))
                .collect()
        })
        .collect();
    assert_eq!(arrivals[0], arrivals[1], "arrival processes diverged");

    // Realized durations per line, in service order.
    let durations = |log: &skillqueue::EventLog| -> BTreeMap<(usize, usize), Vec<f64>> {
        let mut started: BTreeMap<u64, f64> = BTreeMap::new();
        let mut out: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for r in &log.records {
            match r.kind {
                LogKind::ServiceStart => {
                    started.insert(r.customer.unwrap(), r.time);
                }
                LogKind::Departure => {
                    let begun = started[&r.customer.unwrap()];
                    out.entry((r.customer_type.unwrap(), r.server.unwrap()))
                        .or_default()
                        .push(r.time - begun);
                }
                _ => {}
            }
        }
        out
    };
    let (a, b) = (durations(&logs[0]), durations(&logs[1]));
    for (line, da) in &a {
        if let Some(db) = b.get(line) {
            let shared = da.len().min(db.len());
            for k in 0..shared {
                assert!(
                    (da[k] - db[k]).abs() < 1e-12,
                    "service draw {k} on line {line:?} diverged"
                );
            }
        }
    }
}

#[test]
fn fairness_sweep_preset_has_monotone_plan_variance() {
    let experiment = match skillqueue_cli::build_preset("fairness-sweep") {
        Some(skillqueue_cli::Preset::Experiment(e)) => e,
        _ => unreachable!(),
    };
    let outcome = run_experiment(&experiment).unwrap();
    assert_eq!(outcome.cells.len(), 4);
    let variances: Vec<f64> = outcome
        .cells
        .iter()
        .map(|c| c.plan_load_variance.expect("episodic cells have snapshots"))
        .collect();
    for pair in variances.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-9, "{variances:?}");
    }
    assert!(variances.last().unwrap() < &variances[0], "{variances:?}");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skillqueue"))
}

#[test]
fn validate_subcommand_accepts_good_config() {
    let out = temp_dir("validate");
    let path = out.join("config.toml");
    std::fs::write(&path, minimal_config(&out)).unwrap();
    let status = binary().args(["validate"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn parse_errors_exit_two() {
    let out = temp_dir("parse-error");
    let path = out.join("config.toml");
    std::fs::write(&path, "this is not toml = [").unwrap();
    let status = binary().args(["validate"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // Missing scenario source is also a configuration error.
    std::fs::write(
        &path,
        "[experiment]\nreplications = 1\n[[policies]]\nkind = \"RANDOM\"\n",
    )
    .unwrap();
    let status = binary().args(["validate"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn scenario_errors_exit_three() {
    let out = temp_dir("scenario-error");
    let path = out.join("config.toml");
    std::fs::write(
        &path,
        r#"
[experiment]
replications = 1

[scenario.csv]
calls = "/nonexistent/calls.csv"
schedule = "/nonexistent/schedule.csv"
date = "2001-06-04"

[[policies]]
kind = "RANDOM"
"#,
    )
    .unwrap();
    let status = binary().args(["validate"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn run_subcommand_executes_and_reports() {
    let out = temp_dir("run");
    let path = out.join("config.toml");
    std::fs::write(&path, minimal_config(&out)).unwrap();
    let output = binary().args(["run"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out.join("summary.csv").exists());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("UCBQR"), "{stdout}");
}

#[test]
fn unknown_preset_exits_two() {
    let status = binary()
        .args(["preset", "no-such-preset"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn failed_cells_produce_a_manifest() {
    let out = temp_dir("manifest");
    let outcome = skillqueue_cli::ExperimentOutcome {
        cells: vec![skillqueue_cli::CellResult {
            name: "UCBQR".into(),
            policy: PolicyKind::Ucbqr,
            episode_length_h: 120.0,
            gamma: 0.0,
            mu_init: 1e-3,
            report: None,
            snapshots: Vec::new(),
            plan_load_variance: None,
            empirical_load_variance: None,
            error: Some("solver exceeded its iteration cap after 9000 pivots".into()),
        }],
        output_dir: out.clone(),
        warnings: Vec::new(),
        lines: Vec::new(),
    };
    write_outputs(&outcome).unwrap();
    let manifest = std::fs::read_to_string(out.join("partial_results.json")).unwrap();
    assert!(manifest.contains("UCBQR"));
    assert!(manifest.contains("iteration cap"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("solver exceeded"));
}

#[test]
fn csv_scenario_runs_end_to_end() {
    let out = temp_dir("csv-scenario");
    // Two types, two agent groups, enough served calls to clear a small
    // compatibility threshold; times are seconds of day.
    let mut calls = String::from(
        "date,vru_entry,q_start,ser_start,ser_exit,type,outcome,agent_id,agent_group\n",
    );
    for k in 0..60u32 {
        let t = 21_600 + k * 600;
        let outcome = if k % 10 == 0 { "transfer" } else { "handled" };
        calls.push_str(&format!(
            "2001-06-04,{},{},{},{},1,{outcome},a{k},10\n",
            t,
            t + 5,
            t + 20,
            t + 200
        ));
        calls.push_str(&format!(
            "2001-06-04,{},{},{},{},2,handled,b{k},20\n",
            t + 300,
            t + 305,
            t + 330,
            t + 500
        ));
    }
    // An abandoned call that must be dropped at ingestion.
    calls.push_str("2001-06-04,30000,30010,,,1,abandon,,\n");
    let mut schedule = String::from("date,hour,agent_group,count\n");
    for hour in 0..24 {
        schedule.push_str(&format!("2001-06-04,{hour},10,2\n"));
        schedule.push_str(&format!("2001-06-04,{hour},20,1\n"));
    }
    std::fs::write(out.join("calls.csv"), calls).unwrap();
    std::fs::write(out.join("schedule.csv"), schedule).unwrap();

    let config_text = format!(
        r#"
[experiment]
replications = 2
base_seed = 3
output_dir = "{out}"

[scenario.csv]
calls = "{calls}"
schedule = "{schedule}"
date = "2001-06-04"
compat_threshold = 10
transform_theta = false

[[policies]]
kind = "FCFS_ALIS"

[[policies]]
kind = "UCBQR"
"#,
        out = out.display(),
        calls = out.join("calls.csv").display(),
        schedule = out.join("schedule.csv").display(),
    );
    let config: ExperimentConfig = toml::from_str(&config_text).unwrap();
    let (scenario, warnings) = config.build_scenario().unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(scenario.config.num_types, 2);
    assert_eq!(scenario.config.num_servers, 2);
    // Payoff of line (type 1 -> group 10): 54 handled of 60 served.
    assert!((scenario.config.payoff[0] - 0.9).abs() < 1e-12);
    assert_eq!(scenario.config.payoff[1], 1.0);

    let outcome = run_experiment(&config).unwrap();
    write_outputs(&outcome).unwrap();
    for cell in &outcome.cells {
        let report = cell.report.as_ref().unwrap();
        // All 120 served calls replay through the simulator.
        assert_eq!(report.total_departures, 120.0, "{}", cell.name);
    }
    assert!(out.join("summary.csv").exists());
}
