//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dplr::data::{generate_synthetic, SyntheticSpec};
use dplr::experiments::{
    compute_epsilon_sweep, decision_boundary, prepare_trial, run_epsilon_sweep, run_sigma_sweep,
    train_arm, Epsilon, ExperimentConfig,
};
use dplr::logreg::{classify, log_loss, loss_gradient};
use dplr::noise::{calibrate_sigma, empirical_dp_check, gaussian_mechanism, gaussian_sigma};
use dplr::stats::{bootstrap_mean_quantile, mean, nearly_non_decreasing, std_error};
use dplr::{
    clip_gradient, gradient_descent, noisy_gradient_descent, ClipThreshold, ClippingMode, Dataset,
    DpTrainConfig, GaussianNoiseSpec, ModelParams, PrivacyBudget, PrivacyPair, RngState,
    TrainConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn random_instance(rng: &mut RngState) -> (ModelParams, Dataset) {
    let d = 1 + rng.below(5);
    let m = 1 + rng.below(50);
    let scale = 2.0;
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| scale * rng.standard_normal()).collect())
        .collect();
    let labels: Vec<u8> = (0..m).map(|_| rng.below(2) as u8).collect();
    let params = ModelParams::new(
        (0..d).map(|_| rng.standard_normal()).collect(),
        rng.standard_normal(),
    );
    (params, Dataset::new(rows, labels, "fd").unwrap())
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let h = 1e-6;
    let mut rng = RngState::from_seed(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (params, data) = random_instance(&mut rng);
        let analytic = loss_gradient(&params, &data).map_err(e)?;
        let theta = params.to_augmented();
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let lp = log_loss(&ModelParams::from_augmented(&plus), &data).map_err(e)?;
            let lm = log_loss(&ModelParams::from_augmented(&minus), &data).map_err(e)?;
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-5, format!("worst relative error {worst:.3e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "worst relative error {worst:.2e} over 100 instances"
    ))
}

fn clipping_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = RngState::from_seed(202);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for i in 0..10_000 {
        let d = 1 + rng.below(8);
        let scale = 10f64.powf(4.0 * rng.uniform() - 2.0);
        let g: Vec<f64> = (0..d).map(|_| scale * rng.standard_normal()).collect();
        let c = 10f64.powf(2.0 * rng.uniform() - 1.0);
        let out = clip_gradient(&g, c);
        ensure(
            norm(&out) <= c,
            format!("vector {i}: norm {} above {c}", norm(&out)),
        )?;
        ensure(
            clip_gradient(&out, c) == out,
            format!("vector {i}: not idempotent"),
        )?;
        let ng = norm(&g);
        if ng <= c {
            ensure(out == g, format!("vector {i}: changed inside the ball"))?;
        } else {
            let cos = g.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>() / (ng * norm(&out));
            ensure(
                (cos - 1.0).abs() < 1e-12,
                format!("vector {i}: direction changed, cos {cos}"),
            )?;
            ensure(
                ((norm(&out) - c) / c).abs() < 1e-12,
                format!("vector {i}: not on the sphere"),
            )?;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok("10000 vectors".into())
}

fn sigma_calibration() -> Outcome {
    let sigma = calibrate_sigma(1.0, 400, 0.1, 1e-5).map_err(e)?;
    ensure((sigma - 0.24224).abs() <= 1e-5, format!("sigma {sigma}"))?;
    let via_sensitivity =
        gaussian_sigma(2.0 / 400.0, PrivacyPair::new(0.1, 1e-5).map_err(e)?).map_err(e)?;
    ensure(
        (via_sensitivity - sigma).abs() < 1e-12,
        "sensitivity route disagrees",
    )?;

    let clips = [0.5, 1.0, 2.0];
    let ns = [100, 400, 1600];
    let epss = [0.1, 1.0, 10.0];
    let deltas = [1e-7, 1e-5, 1e-3];
    let s = |c: usize, n: usize, ep: usize, d: usize| {
        calibrate_sigma(clips[c], ns[n], epss[ep], deltas[d]).unwrap()
    };
    let mut checked = 0;
    for c in 0..3 {
        for n in 0..3 {
            for ep in 0..3 {
                for d in 0..3 {
                    let here = s(c, n, ep, d);
                    if c < 2 {
                        ensure(s(c + 1, n, ep, d) > here, "not increasing in C")?;
                        checked += 1;
                    }
                    if n < 2 {
                        ensure(s(c, n + 1, ep, d) < here, "not decreasing in n")?;
                        checked += 1;
                    }
                    if ep < 2 {
                        ensure(s(c, n, ep + 1, d) < here, "not decreasing in epsilon")?;
                        checked += 1;
                    }
                    if d < 2 {
                        ensure(s(c, n, ep, d + 1) < here, "not decreasing in delta")?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "sigma = {sigma:.7}, {checked} monotone pairs on the 3^4 grid"
    ))
}

fn noise_statistics() -> Outcome {
    let start = Instant::now();
    let sigma = 0.5;
    let fx = [1.5];
    let n = 100_000;
    let spec = GaussianNoiseSpec::new(sigma, 1).map_err(e)?;
    let mut rng = RngState::from_seed(404);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        xs.push(gaussian_mechanism(&fx, spec, &mut rng).map_err(e)?[0]);
    }
    let m = mean(&xs);
    let sd = std_error(&xs) * (n as f64).sqrt();
    let tol = 4.0 * sigma / (n as f64).sqrt();
    ensure(
        (m - fx[0]).abs() <= tol,
        format!("mean {m}, tolerance {tol}"),
    )?;
    ensure((sd - sigma).abs() <= 0.02 * sigma, format!("std {sd}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("mean {m:.5}, std {sd:.5}"))
}

fn empirical_dp() -> Outcome {
    let start = Instant::now();
    let budget = PrivacyPair::new(1.0, 1e-5).map_err(e)?;
    let sigma = gaussian_sigma(1.0, budget).map_err(e)?;
    let n = 100_000;
    let draw = |s: f64, value: f64, seed: u64| -> Result<Vec<f64>, String> {
        let spec = GaussianNoiseSpec::new(s, 1).map_err(e)?;
        let mut rng = RngState::from_seed(seed);
        (0..n)
            .map(|_| {
                gaussian_mechanism(&[value], spec, &mut rng)
                    .map(|v| v[0])
                    .map_err(e)
            })
            .collect()
    };
    let calibrated = empirical_dp_check(
        &draw(sigma, 10.0, 501)?,
        &draw(sigma, 11.0, 502)?,
        budget,
        1000,
    )
    .map_err(e)?;
    ensure(
        calibrated.passed,
        format!("calibrated sigma rejected: {calibrated:?}"),
    )?;
    let weak = empirical_dp_check(
        &draw(sigma / 20.0, 10.0, 503)?,
        &draw(sigma / 20.0, 11.0, 504)?,
        budget,
        1000,
    )
    .map_err(e)?;
    ensure(!weak.passed, format!("sigma/20 accepted: {weak:?}"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "sigma {sigma:.4}: violation {:.4} (slack {:.4}); sigma/20: violation {:.4}",
        calibrated.max_violation, calibrated.slack, weak.max_violation
    ))
}

fn degenerate_equivalence() -> Outcome {
    let data =
        generate_synthetic(&SyntheticSpec::default(), &mut RngState::from_seed(606)).map_err(e)?;
    let base = TrainConfig::new(0.5, 100);
    let (plain, plain_trace) = gradient_descent(&data, &base).map_err(e)?;
    let cfg = DpTrainConfig::new(base, ClipThreshold::Disabled, ClippingMode::PerExampleMean);
    let budget = PrivacyBudget::explicit_sigma(0.0, 100).map_err(e)?;
    let (noisy, noisy_trace) =
        noisy_gradient_descent(&data, &cfg, &budget, &mut RngState::from_seed(1)).map_err(e)?;
    let bits = |p: &ModelParams| {
        p.to_augmented()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    ensure(bits(&plain) == bits(&noisy), "parameters differ")?;
    let tbits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(
        tbits(&plain_trace.losses) == tbits(&noisy_trace.losses),
        "loss traces differ",
    )?;
    Ok("parameters and traces bitwise equal".into())
}

fn trend_config() -> ExperimentConfig {
    ExperimentConfig {
        epsilon_grid: [0.01, 0.1, 0.5, 1.0, 5.0]
            .into_iter()
            .map(Epsilon::Finite)
            .chain([Epsilon::NoPrivacy])
            .collect(),
        seeds: (1..=20).collect(),
        ..ExperimentConfig::default()
    }
}

fn utility_trend() -> Outcome {
    let start = Instant::now();
    let cfg = trend_config();
    let rows = compute_epsilon_sweep(&cfg).map_err(e)?;
    ensure(rows.iter().all(|r| r.n_failed == 0), "some runs diverged")?;
    let plain: Vec<f64> = rows.iter().map(|r| r.mean_accuracy_no_pretrain).collect();
    let pre: Vec<f64> = rows.iter().map(|r| r.mean_accuracy_pretrain).collect();
    ensure(
        nearly_non_decreasing(&plain, 0.02),
        format!("accuracy not monotone in epsilon: {plain:?}"),
    )?;
    ensure(
        nearly_non_decreasing(&pre, 0.02),
        format!("pre-trained accuracy not monotone in epsilon: {pre:?}"),
    )?;

    let mut gd = Vec::new();
    for &seed in &cfg.seeds {
        let trial = prepare_trial(&cfg, None, seed, false).map_err(e)?;
        let (p, _) = gradient_descent(&trial.train, &TrainConfig::new(cfg.alpha, cfg.iterations))
            .map_err(e)?;
        gd.push(dplr::accuracy(&p, &trial.eval, cfg.threshold).map_err(e)?);
    }
    let gd_mean = mean(&gd);
    let no_privacy = *plain.last().unwrap();
    ensure(
        (no_privacy - gd_mean).abs() <= 0.03,
        format!("no-privacy {no_privacy} vs plain GD {gd_mean}"),
    )?;
    within(start.elapsed(), 120.0)?;
    let shown: Vec<String> = plain.iter().map(|a| format!("{a:.3}")).collect();
    Ok(format!(
        "accuracy [{}], plain GD {gd_mean:.3}",
        shown.join(", ")
    ))
}

fn pretraining_enhancement() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        epsilon_grid: vec![Epsilon::Finite(0.01), Epsilon::Finite(1.0)],
        seeds: (1..=50).collect(),
        ..ExperimentConfig::default()
    };
    let rows = compute_epsilon_sweep(&cfg).map_err(e)?;
    ensure(rows.iter().all(|r| r.n_failed == 0), "some runs diverged")?;
    let (low, high) = (&rows[0], &rows[1]);
    let diffs: Vec<f64> = high.outcomes.iter().map(|o| o.enhancement()).collect();
    let q05 = bootstrap_mean_quantile(&diffs, 10_000, 0.05, &mut RngState::from_seed(99));
    ensure(
        q05 > 0.0,
        format!(
            "eps=1: enhancement {:.4}, bootstrap 5% quantile {q05:.4}",
            high.enhancement
        ),
    )?;
    ensure(
        low.enhancement.abs() <= 2.0 * low.se_enhancement,
        format!(
            "eps=0.01: enhancement {:.4} with se {:.4}",
            low.enhancement, low.se_enhancement
        ),
    )?;
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "eps=1: {:+.4} (bootstrap 5% {q05:+.4}); eps=0.01: {:+.4} (se {:.4})",
        high.enhancement, low.enhancement, low.se_enhancement
    ))
}

fn loss_curves() -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut rippled = 0;
    for seed in 1..=20u64 {
        let trial = prepare_trial(&cfg, None, seed, false).map_err(e)?;
        let (_, trace) =
            gradient_descent(&trial.train, &TrainConfig::new(cfg.alpha, cfg.iterations))
                .map_err(e)?;
        let rise = trace
            .losses
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(
            rise <= 1e-12,
            format!("seed {seed}: plain loss rose by {rise:e}"),
        )?;

        let budget = cfg
            .budget_for(Epsilon::Finite(1.0), trial.train.len())
            .map_err(e)?;
        let (_, dp_trace) = train_arm(&cfg, &trial, &budget, false).map_err(e)?;
        if dp_trace.losses.windows(2).any(|w| w[1] > w[0]) {
            rippled += 1;
        }
    }
    ensure(
        rippled >= 18,
        format!("{rippled}/20 private traces show an increase"),
    )?;
    Ok(format!(
        "plain traces non-increasing; {rippled}/20 private traces show an increase"
    ))
}

fn boundary_export() -> Outcome {
    let cfg = ExperimentConfig::default();
    let trial = prepare_trial(&cfg, None, 7, false).map_err(e)?;
    let (params, _) = gradient_descent(&trial.train, &TrainConfig::new(0.5, 100)).map_err(e)?;
    let export = decision_boundary(&params, &trial.train, 50, 0.5).map_err(e)?;
    let ends = export.endpoints.ok_or("no endpoints")?;
    for p in ends {
        let r = params.weights[0] * p[0] + params.weights[1] * p[1] + params.intercept;
        ensure(r.abs() < 1e-9, format!("endpoint residual {r:e}"))?;
    }
    ensure(
        export.grid.len() == 2500,
        format!("grid has {} points", export.grid.len()),
    )?;
    for g in &export.grid {
        ensure(
            classify(&params, &g.x, 0.5).map_err(e)? == g.label,
            format!("label mismatch at {:?}", g.x),
        )?;
    }
    Ok("endpoints on the line, 2500 grid labels match".into())
}

fn reproducibility() -> Outcome {
    let read_all = |dir: &std::path::Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(e)?
            .map(|ent| {
                let ent = ent.map_err(e)?;
                Ok((
                    ent.file_name().to_string_lossy().into_owned(),
                    std::fs::read(ent.path()).map_err(e)?,
                ))
            })
            .collect::<Result<_, String>>()?;
        files.sort();
        Ok(files)
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(e)?;
        let cfg = ExperimentConfig {
            seeds: (1..=5).collect(),
            output_dir: dir.path().to_path_buf(),
            ..trend_config()
        };
        run_epsilon_sweep(&cfg).map_err(e)?;
        run_sigma_sweep(&cfg).map_err(e)?;
        runs.push(read_all(dir.path())?);
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure(
        names.contains(&"sweep.csv") && names.contains(&"sigma_sweep.csv"),
        format!("artifacts {names:?}"),
    )?;
    ensure(runs[0] == runs[1], "artifacts differ between runs")?;
    Ok(format!("{} artifacts byte-identical", names.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("gradient oracle", gradient_oracle),
        ("clipping suite", clipping_suite),
        ("sigma calibration", sigma_calibration),
        ("noise statistics", noise_statistics),
        ("empirical differential privacy", empirical_dp),
        ("degenerate equivalence", degenerate_equivalence),
        ("privacy/utility trend", utility_trend),
        ("pre-training enhancement", pretraining_enhancement),
        ("loss curves", loss_curves),
        ("boundary export", boundary_export),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {}: {name}: {detail} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {why} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
