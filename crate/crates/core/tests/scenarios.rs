use circumnav_core::scenario::logs::{
    CONTROL_FILE, METRICS_FILE, TARGET_FILE, TRAJECTORY_FILE, UWB_FILE,
};
use circumnav_core::scenario::{
    builtin, compare_estimators, run_scenario, run_to_dir, LogSet, ScenarioConfig, BUILTIN_NAMES,
};
use circumnav_core::Error;

fn config_error(text: &str) -> String {
    match ScenarioConfig::from_toml(text) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn pair_toml() -> String {
    builtin("indoor-pair").unwrap().to_toml().unwrap()
}

#[test]
fn builtins_validate() {
    for name in BUILTIN_NAMES {
        builtin(name).unwrap().validate().unwrap();
    }
    assert!(builtin("nope").is_none());
}

#[test]
fn config_errors_name_the_field() {
    let text = pair_toml().replace("dt = 0.1", "dt = -0.1");
    assert!(config_error(&text).starts_with("world.dt"));

    let text = pair_toml().replace("schema_version = 1", "schema_version = 7");
    assert!(config_error(&text).starts_with("schema_version"));

    let mut cfg = builtin("indoor-pair").unwrap();
    cfg.sensors.uwb.sigma = -1.0;
    let msg = config_error(&cfg.to_toml().unwrap());
    assert!(msg.starts_with("sensors.uwb"), "{msg}");

    let mut cfg = builtin("indoor-pair").unwrap();
    cfg.estimators.target.epsilon = 1.5;
    let msg = config_error(&cfg.to_toml().unwrap());
    assert!(msg.starts_with("estimators.target"), "{msg}");

    let mut cfg = builtin("outdoor-three-failure").unwrap();
    cfg.world.failures[0].agent = circumnav_core::AgentId(9);
    let msg = config_error(&cfg.to_toml().unwrap());
    assert!(msg.starts_with("world.failures[0]"), "{msg}");

    let mut cfg = builtin("indoor-pair").unwrap();
    cfg.comms.policy.loss_probability = 2.0;
    let msg = config_error(&cfg.to_toml().unwrap());
    assert!(msg.starts_with("comms.policy"), "{msg}");
}

#[test]
fn unknown_fields_are_rejected() {
    let text = pair_toml().replace("[world]", "[world]\ngravity = 9.81");
    let msg = config_error(&text);
    assert!(msg.contains("gravity"), "{msg}");
}

#[test]
fn logs_round_trip_and_report_missing_columns() {
    let mut cfg = builtin("indoor-pair").unwrap();
    cfg.world.duration = 5.0;
    cfg.output.window_start = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let metrics = run_to_dir(&cfg, dir.path()).unwrap();
    for f in [
        TRAJECTORY_FILE,
        TARGET_FILE,
        CONTROL_FILE,
        UWB_FILE,
        METRICS_FILE,
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let logs = LogSet::read(dir.path()).unwrap();
    assert_eq!(logs.trajectory.len(), 3 * cfg.steps() as usize);
    assert_eq!(metrics.numerical_failures, 0);

    let path = dir.path().join(TARGET_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("est_error", "estimate_error", 1)).unwrap();
    assert_eq!(
        LogSet::read(dir.path()).unwrap_err(),
        Error::Schema {
            file: TARGET_FILE.to_string(),
            column: "est_error".to_string()
        }
    );
}

#[test]
fn failed_agent_stops_reporting() {
    let cfg = builtin("outdoor-three-failure").unwrap();
    let out = run_scenario(&cfg).unwrap();
    let t_fail = cfg.world.failures[0].t;
    let dead = cfg.world.failures[0].agent.0;
    assert!(out.ended_early_at.is_none());
    assert!(out
        .logs
        .control
        .iter()
        .filter(|r| r.agent == dead)
        .all(|r| r.t < t_fail));
    assert!(out
        .logs
        .trajectory
        .iter()
        .filter(|r| r.body == dead && r.t >= t_fail)
        .all(|r| !r.alive));
}

#[test]
fn seeds_change_noise_but_not_shape() {
    let mut a = builtin("indoor-pair").unwrap();
    a.world.duration = 3.0;
    let mut b = a.clone();
    b.seed += 1;
    let (la, lb) = (
        run_scenario(&a).unwrap().logs,
        run_scenario(&b).unwrap().logs,
    );
    assert_eq!(la.uwb.len(), lb.uwb.len());
    assert_ne!(la.uwb, lb.uwb);
}

#[test]
fn comparison_requires_trials() {
    let cfg = builtin("indoor-pair").unwrap();
    assert!(matches!(compare_estimators(&cfg, 0), Err(Error::Config(_))));
}
