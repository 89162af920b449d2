//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use circumnav_core::control::{oscillator_step, ControllerParams};
use circumnav_core::geometry::{asymmetry, min_eigenvalue, vec2, wrap_pi};
use circumnav_core::relative::{
    step_classical_kf, step_modified_kf, RelativeInputs, RelativeParams,
};
use circumnav_core::scenario::{
    builtin, compare_estimators, phase_gap_series, phase_gaps, run_scenario, run_to_dir, LogSet,
    ScenarioConfig, BUILTIN_NAMES,
};
use circumnav_core::sensors::{UwbNoise, UwbPreprocessConfig, UwbStream, VioNoise};
use circumnav_core::target::{
    dkf_predict, dkf_update, output_matrix, FusedMeasurement, FusionMode, TargetEstimate,
    TargetPrior,
};
use circumnav_core::world::{line_of_sight, ProcessNoise};
use circumnav_core::{Mat2, Mat4, Vec2};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn estimator_ordering() -> Outcome {
    let start = Instant::now();
    let cfg = builtin("indoor-pair").unwrap();
    let cmp = compare_estimators(&cfg, 10).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let m = cmp.mean["modified"];
    let c = cmp.mean["classical"];
    let r = cmp.mean["rls"];
    let msg = format!(
        "mean RMSE modified {m:.3} classical {c:.3} rls {r:.3}, modified/classical {:.3} (<= 0.7), {secs:.1} s (<= 60)",
        m / c
    );
    ensure(m < c && m < r && m <= 0.7 * c && secs <= 60.0, msg)
}

fn zero_noise(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.world.target_noise = ProcessNoise::ZERO;
    cfg.world.agent_noise = ProcessNoise::ZERO;
    cfg.sensors.vio = VioNoise {
        disp_std: 0.0,
        yaw_std: 0.0,
    };
    cfg.sensors.uwb = UwbNoise::ZERO;
    cfg.sensors.camera.pixel_noise_std = 0.0;
    cfg.sensors.camera.depth_noise_std = 0.0;
    cfg
}

fn zero_noise_exactness() -> Outcome {
    let cfg = zero_noise(builtin("indoor-pair").unwrap());
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let late = |t: f64| t >= 30.0;
    let rel = out
        .logs
        .relative
        .iter()
        .filter(|r| r.estimator == "modified" && late(r.t))
        .map(|r| r.error)
        .fold(0.0, f64::max);
    let dkf = out
        .logs
        .target
        .iter()
        .filter(|r| late(r.t))
        .filter_map(|r| r.est_error)
        .fold(0.0, f64::max);
    let held: u64 = out.logs.uwb.iter().map(|r| r.held).max().unwrap_or(0);

    let mut stream = UwbStream::new(&UwbPreprocessConfig::default(), cfg.world.dt).unwrap();
    let passthrough = (0..2000).all(|_| stream.preprocess(3.7) == 3.7);

    let msg = format!(
        "after 30 s: relative error max {rel:.4} m (< 0.05), DKF error max {dkf:.4} m (< 0.02); \
         UWB samples held {held}, constant input passed through: {passthrough}"
    );
    ensure(rel < 0.05 && dkf < 0.02 && held == 0 && passthrough, msg)
}

fn random_spd4(rng: &mut ChaCha8Rng, scale: f64) -> Mat4 {
    let a = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    a * a.transpose() * scale + Mat4::identity() * 1e-3
}

fn random_spd2(rng: &mut ChaCha8Rng, scale: f64) -> Mat2 {
    let a = Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    a * a.transpose() * scale + Mat2::identity() * 1e-3
}

fn rand_vec2(rng: &mut ChaCha8Rng, s: f64) -> Vec2 {
    Vector2::new(rng.random_range(-s..s), rng.random_range(-s..s))
}

fn rand_vec4(rng: &mut ChaCha8Rng, s: f64) -> Vector4<f64> {
    Vector4::from_fn(|_, _| rng.random_range(-s..s))
}

fn healthy(p: &Mat4) -> bool {
    asymmetry(p) <= 1e-9 && min_eigenvalue(p) > -1e-9
}

fn covariance_health() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = RelativeParams::default();
    let cfg = params.estimator_config(0.1);
    let mut modified = params.initial_estimate();
    let mut classical = params.initial_estimate();
    let mut target = TargetEstimate {
        x_hat: Vector4::zeros(),
        p: Mat4::identity(),
    };
    let q_i0 = Mat4::identity() * 1e-3;
    let steps = 100_000u64;
    let mut worst_asym = 0.0f64;
    let mut worst_eig = f64::INFINITY;
    let mut unhealthy = 0u64;
    for k in 0..steps {
        let inputs = RelativeInputs {
            d_k: rng.random_range(0.5..10.0),
            d_km1: rng.random_range(0.5..10.0),
            delta_ij: rand_vec2(&mut rng, 0.3),
            u_ij_km1: rand_vec2(&mut rng, 2.0),
        };
        modified =
            step_modified_kf(&modified, &inputs, k, &cfg).map_err(|e| format!("step {k}: {e}"))?;
        classical = step_classical_kf(&classical, &inputs, k, &cfg)
            .map_err(|e| format!("step {k}: {e}"))?;
        let prior = dkf_predict(&target, rand_vec2(&mut rng, 2.0), &q_i0, 0.1);
        let fused = if rng.random_bool(0.8) {
            FusedMeasurement {
                z: rand_vec2(&mut rng, 5.0),
                sigma: random_spd2(&mut rng, 0.05),
                mode: if rng.random_bool(0.5) {
                    FusionMode::Direct
                } else {
                    FusionMode::Indirect
                },
            }
        } else {
            FusedMeasurement::NONE
        };
        let neighbours: Vec<TargetPrior> = (0..rng.random_range(0..3))
            .map(|_| TargetPrior {
                x_bar: prior.x_bar + rand_vec4(&mut rng, 0.5),
                p_minus: random_spd4(&mut rng, 0.5),
            })
            .collect();
        target =
            dkf_update(&prior, &fused, &neighbours, 0.1).map_err(|e| format!("step {k}: {e}"))?;
        for p in [&modified.p, &classical.p, &target.p] {
            worst_asym = worst_asym.max(asymmetry(p));
            worst_eig = worst_eig.min(min_eigenvalue(p));
            unhealthy += u64::from(!healthy(p));
        }
    }

    let mut worst_diff = 0.0f64;
    let c = output_matrix();
    for _ in 0..1000 {
        let prior = TargetPrior {
            x_bar: rand_vec4(&mut rng, 5.0),
            p_minus: random_spd4(&mut rng, 1.0),
        };
        let fused = FusedMeasurement {
            z: rand_vec2(&mut rng, 5.0),
            sigma: random_spd2(&mut rng, 0.2),
            mode: FusionMode::Direct,
        };
        let info = dkf_update(&prior, &fused, &[], 0.5).map_err(|e| e.to_string())?;
        let s = c * prior.p_minus * c.transpose() + fused.sigma;
        let gain = prior.p_minus * c.transpose() * s.try_inverse().unwrap();
        let x = prior.x_bar + gain * (fused.z - c * prior.x_bar);
        let ikc = Mat4::identity() - gain * c;
        let p = ikc * prior.p_minus * ikc.transpose() + gain * fused.sigma * gain.transpose();
        worst_diff = worst_diff
            .max((info.x_hat - x).amax())
            .max((info.p - p).amax());
    }

    let msg = format!(
        "{steps} randomized steps x 3 filters: max asymmetry {worst_asym:.1e}, min eigenvalue {worst_eig:.2e}, \
         {unhealthy} unhealthy; info vs covariance form over 1000 instances: max diff {worst_diff:.1e} (< 1e-8)"
    );
    ensure(unhealthy == 0 && worst_diff < 1e-8, msg)
}

/// Trailing mean over the last `window` seconds, inclusive of `t`.
fn trailing_mean(series: &[(f64, f64)], t: f64, window: f64) -> f64 {
    let vals: Vec<f64> = series
        .iter()
        .filter(|(s, _)| *s > t - window + 1e-9 && *s <= t + 1e-9)
        .map(|(_, e)| *e)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn event_trigger() -> Outcome {
    let start = Instant::now();
    let cfg = builtin("indoor-occlusion").unwrap();
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let logs = &out.logs;
    let obstacles = &cfg.world.obstacles;

    let mut pos: BTreeMap<(u64, usize), Vec2> = BTreeMap::new();
    for r in &logs.trajectory {
        pos.insert((r.k, r.body), vec2(r.x, r.y));
    }
    let mut mismatches = 0usize;
    let mut occluded_steps = Vec::new();
    let mut other_indirect = 0usize;
    for r in &logs.target {
        let los = line_of_sight(pos[&(r.k, r.agent)], pos[&(r.k, 0)], obstacles);
        if !los {
            occluded_steps.push((r.agent, r.t));
        }
        let expect_indirect = !los;
        if (r.mode == FusionMode::Indirect) != expect_indirect {
            mismatches += 1;
        }
        if r.agent == 2 && r.mode != FusionMode::Direct {
            other_indirect += 1;
        }
    }
    if occluded_steps.is_empty() || occluded_steps.iter().any(|(a, _)| *a != 1) {
        return Err(format!(
            "expected only agent 1 to be occluded, got {} occluded steps",
            occluded_steps.len()
        ));
    }
    let t_first = occluded_steps[0].1;
    let t_last = occluded_steps[occluded_steps.len() - 1].1;

    let ee: Vec<(f64, f64)> = logs
        .target
        .iter()
        .filter(|r| r.agent == 1)
        .filter_map(|r| r.est_error.map(|e| (r.t, e)))
        .collect();
    let pre: Vec<f64> = ee
        .iter()
        .filter(|(t, _)| *t >= cfg.output.window_start && *t < t_first)
        .map(|(_, e)| *e)
        .collect();
    let pre_mean = pre.iter().sum::<f64>() / pre.len() as f64;
    let during_max = ee
        .iter()
        .filter(|(t, _)| *t >= t_first && *t <= t_last + 1e-9)
        .map(|(t, _)| trailing_mean(&ee, *t, 1.0))
        .fold(0.0, f64::max);
    let after = trailing_mean(&ee, t_last + 2.0, 1.0);

    let msg = format!(
        "occluded {t_first:.1}-{t_last:.1} s, mode/geometry mismatches {mismatches}, unoccluded agent non-direct steps \
         {other_indirect}; 1 s mean e_e: pre {pre_mean:.4} m, peak {:.2}x (< 3), 2 s after {:.2}x (< 1.5); {secs:.2} s (<= 10)",
        during_max / pre_mean,
        after / pre_mean
    );
    ensure(
        mismatches == 0
            && other_indirect == 0
            && during_max < 3.0 * pre_mean
            && after <= 1.5 * pre_mean
            && secs <= 10.0,
        msg,
    )
}

fn uwb_preprocessing_conformance() -> Outcome {
    let pre = UwbPreprocessConfig::default();
    let dt = 0.1;
    let duration = 10.0;
    let n_samples = (duration * pre.rate_hz).round() as usize;
    let jumps = [37usize, 38, 400, 1203, 1999];
    let raw: Vec<f64> = (0..n_samples)
        .map(|n| {
            let base = 4.0 + 0.05 * (n as f64 / 50.0).sin();
            if jumps.contains(&n) {
                base + 1.5
            } else {
                base
            }
        })
        .collect();

    let mut stream = UwbStream::new(&pre, dt).map_err(|e| e.to_string())?;
    let mut last = raw[0];
    let mut emissions = 0u64;
    let mut worst = 0.0f64;
    let mut held_at = Vec::new();
    for (n, &d) in raw.iter().enumerate() {
        let prev = last;
        if n > 0 {
            if (d - last).abs() <= 3.0 * pre.sigma_star {
                last = pre.beta * last + (1.0 - pre.beta) * d;
            } else {
                held_at.push(n);
            }
        }
        let emitted = stream.push(d);
        let now = stream.last_accepted().unwrap();
        worst = worst.max((now - last).abs());
        if held_at.last() == Some(&n) && now != prev {
            return Err(format!("sample {n} was not held"));
        }
        if let Some(v) = emitted {
            emissions += 1;
            worst = worst.max((v - last).abs());
        }
    }
    let expected = (duration / dt + 1e-9).floor() as u64;
    let msg = format!(
        "held at {held_at:?} (injected {jumps:?}), held_count {}, max deviation from hand recursion {worst:.1e}, \
         {emissions} emissions (expected {expected})",
        stream.held_count()
    );
    ensure(
        held_at == jumps
            && stream.held_count() == jumps.len() as u64
            && worst <= 1e-12
            && emissions == expected,
        msg,
    )
}

fn evenly_spaced(gaps: &[f64], n: usize, tol: f64) -> bool {
    gaps.len() == n && gaps.iter().all(|g| (g - TAU / n as f64).abs() <= tol)
}

fn oscillator() -> Outcome {
    let dt = 0.1;
    let gains = ControllerParams::default()
        .gains(dt, 3)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let steps = (60.0 / dt) as usize;
    let mut converged = 0;
    for _ in 0..100 {
        let mut th: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..TAU)).collect();
        for _ in 0..steps {
            th = th
                .iter()
                .map(|&t| oscillator_step(t, &th, &gains, dt))
                .collect();
        }
        converged += usize::from(evenly_spaced(&phase_gaps(&th), 3, 0.05));
    }

    let cfg = builtin("outdoor-three-failure").unwrap();
    let t_fail = cfg.world.failures[0].t;
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let series = phase_gap_series(&out.logs);
    let reached = series
        .iter()
        .filter(|(_, t, _)| *t >= t_fail)
        .find(|(_, _, g)| evenly_spaced(g, 2, 0.05))
        .map(|(_, t, _)| *t - t_fail);
    let held = reached.is_some_and(|dt_reach| {
        series
            .iter()
            .filter(|(_, t, _)| *t >= t_fail + dt_reach)
            .all(|(_, _, g)| evenly_spaced(g, 2, 0.05))
    });
    let radius_max = out
        .logs
        .control
        .iter()
        .filter(|r| r.t >= cfg.output.window_start)
        .map(|r| r.radius_error.abs())
        .fold(0.0, f64::max);

    let msg = format!(
        "{converged}/100 random starts evenly spaced within 60 s (>= 95); after failure at {t_fail} s the pair reaches \
         pi +- 0.05 in {} and stays: {held}; radius error max {radius_max:.3} m (< 0.3)",
        reached.map_or("never".to_string(), |d| format!("{d:.1} s"))
    );
    ensure(
        converged >= 95 && reached.is_some_and(|d| d <= 60.0) && held && radius_max < 0.3,
        msg,
    )
}

fn formation() -> Outcome {
    let mut cfg = builtin("outdoor-three-failure").unwrap();
    cfg.world.failures.clear();
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let window: Vec<_> = out
        .logs
        .control
        .iter()
        .filter(|r| r.t >= cfg.output.window_start)
        .collect();
    let radius = window
        .iter()
        .map(|r| r.radius_error.abs())
        .fold(0.0, f64::max);
    let yaw = window
        .iter()
        .map(|r| wrap_pi(r.yaw_error).abs())
        .fold(0.0, f64::max);
    let speed = out
        .logs
        .trajectory
        .iter()
        .filter(|r| r.body == 0)
        .map(|r| r.vx.hypot(r.vy))
        .fold(0.0, f64::max);
    let msg = format!(
        "3 agents, target speed <= {speed:.2} m/s, after {} s: radius error max {radius:.3} m (< 0.1), \
         yaw error max {yaw:.3} rad (< 0.05)",
        cfg.output.window_start
    );
    ensure(speed <= 0.3 && radius < 0.1 && yaw < 0.05, msg)
}

fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let bytes = std::fs::read(&path).unwrap();
            let digest = Sha256::digest(&bytes);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            out.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                hex,
            );
        }
    }
    out
}

fn determinism() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in BUILTIN_NAMES {
        let cfg = builtin(name).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_to_dir(&cfg, a.path()).map_err(|e| e.to_string())?;
        run_to_dir(&cfg, b.path()).map_err(|e| e.to_string())?;
        let (ha, hb) = (hash_dir(a.path()), hash_dir(b.path()));
        let same = !ha.is_empty() && ha == hb;
        LogSet::read(a.path()).map_err(|e| e.to_string())?;
        ok &= same;
        lines.push(format!(
            "{name}: {} files {}",
            ha.len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    ensure(ok, lines.join(", "))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("estimator-ordering", estimator_ordering),
        ("zero-noise-exactness", zero_noise_exactness),
        ("covariance-health", covariance_health),
        ("event-trigger", event_trigger),
        ("uwb-preprocessing", uwb_preprocessing_conformance),
        ("oscillator-reconfiguration", oscillator),
        ("formation-convergence", formation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name} [{secs:.1} s] {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1} s] {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
