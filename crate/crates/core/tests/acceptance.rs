//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use optivote::channel::{lambda_eff, lambda_oracle, ChannelDraw, ChannelParams};
use optivote::config::{ChannelConfig, Config};
use optivote::learner::{Arch, Dataset, Model};
use optivote::montecarlo::{
    params_for_snr, verify_energy_means, verify_error_bound, FLIP_GRID, NODE_GRID, SNR_GRID,
};
use optivote::orchestrator::{load_datasets, run_with_data, Scheme};
use optivote::phy::{detect_mv, majority_vote, superpose, Sign, SignVector};
use optivote::power::PowerParams;
use optivote::rng::RandomStream;
use optivote::theory::{convergence_bound, q_bound, TheoryInputs};
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
        .install(f)
}

fn default_channel() -> ChannelParams {
    ChannelConfig::default().params().expect("default channel")
}

fn energy_moments() -> Outcome {
    let channel = default_channel();
    let power = PowerParams::default();
    let started = Instant::now();
    let reports = single_threaded(|| {
        let mut all = Vec::new();
        for (mp, mm) in [(5, 5), (7, 3), (0, 4)] {
            all.extend(
                verify_energy_means(&channel, &power, mp, mm, 1_000_000, 1)
                    .map_err(|e| e.to_string())?,
            );
        }
        Ok::<_, String>(all)
    })?;
    let elapsed = started.elapsed();
    for r in &reports {
        ensure(r.pass, || {
            format!(
                "{}: empirical {:.6} vs {:.6} (se {:.2e})",
                r.name, r.empirical, r.theoretical, r.standard_error
            )
        })?;
    }
    ensure(elapsed <= Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    let worst = reports
        .iter()
        .filter(|r| r.standard_error > 0.0 && !r.name.ends_with(".theta"))
        .map(|r| (r.empirical - r.theoretical).abs() / r.standard_error)
        .fold(0.0, f64::max);
    Ok(format!(
        "{} moment checks, worst |z| = {worst:.2}, {:.1}s single-threaded",
        reports.len(),
        elapsed.as_secs_f64()
    ))
}

fn lambda_closed_form() -> Outcome {
    let started = Instant::now();
    let mut rng = RandomStream::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d_min = 200e3 + 800e3 * rng.uniform();
        let d_max = d_min + 100e3 + 2_000e3 * rng.uniform();
        let params = ChannelParams::new(
            d_min,
            d_max,
            (800.0 + 1000.0 * rng.uniform()) * 1e-9,
            0.1 + 0.9 * rng.uniform(),
            0.3 + 4.7 * rng.uniform(),
            0.1,
        )
        .and_then(|p| p.with_c_fspl(d_min * d_min * (0.5 + rng.uniform())))
        .map_err(|e| e.to_string())?;
        let closed = lambda_eff(&params);
        let oracle = lambda_oracle(&params).map_err(|e| e.to_string())?;
        let rel = ((closed - oracle) / oracle).abs();
        ensure(rel <= 1e-6, || {
            format!("{params:?}: closed {closed} oracle {oracle} rel {rel:e}")
        })?;
        worst = worst.max(rel);
    }
    let elapsed = started.elapsed();
    ensure(elapsed <= Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "20 random points, worst relative error {worst:.1e}, {:.3}s",
        elapsed.as_secs_f64()
    ))
}

fn error_bound_dominance() -> Outcome {
    let base = default_channel();
    let power = PowerParams::default();
    let mut worst_margin = f64::INFINITY;
    let mut points = 0;
    for xi in SNR_GRID {
        let channel = params_for_snr(&base, power.p_avg, xi).map_err(|e| e.to_string())?;
        for m in NODE_GRID {
            for q in FLIP_GRID {
                let r = verify_error_bound(m, q, &channel, &power, 100_000, 3)
                    .map_err(|e| e.to_string())?;
                ensure(r.pass, || {
                    format!(
                        "{}: rate {:.5} > bound {:.5} + 3 se ({:.1e})",
                        r.name, r.empirical, r.theoretical, r.standard_error
                    )
                })?;
                worst_margin = worst_margin.min(r.theoretical - r.empirical);
                points += 1;
            }
        }
    }
    Ok(format!(
        "{points} grid points, 0 violations, smallest bound - rate = {worst_margin:.4}"
    ))
}

fn flip_bound() -> Outcome {
    let boundary = 2.0 / 3f64.sqrt();
    // alpha = 1, d_b = 1 makes the ratio equal to |g|.
    let at = q_bound(boundary, 1.0, 1).map_err(|e| e.to_string())?;
    let below = 0.5 - boundary / (2.0 * 3f64.sqrt());
    let above = (2.0 / 9.0) / (boundary * boundary);
    ensure((at - 1.0 / 6.0).abs() <= 1e-12, || {
        format!("q at boundary = {at}")
    })?;
    ensure(
        (below - 1.0 / 6.0).abs() <= 1e-12 && (above - 1.0 / 6.0).abs() <= 1e-12,
        || format!("branches {below} / {above}"),
    )?;
    let eps = 1e-9;
    let left = q_bound(boundary - eps, 1.0, 1).map_err(|e| e.to_string())?;
    let right = q_bound(boundary + eps, 1.0, 1).map_err(|e| e.to_string())?;
    ensure((left - right).abs() <= 1e-8, || {
        format!("jump {left} vs {right}")
    })?;

    let normal = Normal::standard();
    let d_b = 16usize;
    let alpha = 1.0;
    let mut min_gap = f64::INFINITY;
    for i in 0..50 {
        let r = 0.01 + 5.99 * i as f64 / 49.0;
        let g = r * alpha / (d_b as f64).sqrt();
        let q = q_bound(g, alpha, d_b).map_err(|e| e.to_string())?;
        let exact = normal.cdf(-r);
        ensure(q <= 0.5, || format!("q({r}) = {q} > 1/2"))?;
        ensure(q >= exact, || format!("q({r}) = {q} < Phi(-r) = {exact}"))?;
        min_gap = min_gap.min(q - exact);
    }
    Ok(format!("boundary value 1/6 to 1e-12, <= 1/2, dominates Phi(-r) on 50 points (min gap {min_gap:.2e})"))
}

fn phy_equivalence() -> Outcome {
    let started = Instant::now();
    let mut checked = 0usize;
    for m in 1..=12usize {
        let powers = vec![1.0; m];
        let draws = vec![ChannelDraw::unit(0.37); m];
        let mut rng = RandomStream::new(0);
        for pattern in 0u32..(1 << m) {
            let plus = pattern.count_ones() as usize;
            if 2 * plus == m {
                continue;
            }
            let signs: Vec<Sign> = (0..m)
                .map(|k| {
                    if pattern >> k & 1 == 1 {
                        Sign::Plus
                    } else {
                        Sign::Minus
                    }
                })
                .collect();
            let pair =
                superpose(&signs, &powers, &draws, 0.0, &mut rng).map_err(|e| e.to_string())?;
            let detected = detect_mv(&[pair]);
            let locals: Vec<SignVector> = signs.iter().map(|s| SignVector::new(vec![*s])).collect();
            let exact = majority_vote(&locals);
            ensure(detected == exact, || {
                format!("M={m} pattern {pattern:b}: {detected:?} vs {exact:?}")
            })?;
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed <= Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{checked} patterns for M = 1..12 agree, {:.3}s",
        elapsed.as_secs_f64()
    ))
}

fn convergence_evaluator() -> Outcome {
    let inputs = |xi: f64, n: usize| TheoryInputs {
        num_nodes: 20,
        xi_snr: xi,
        batch_size: None,
        alpha: vec![2.0],
        g_abs: vec![],
        l1_smoothness: 10.0,
        gamma: 4,
        initial_gap: 5.0,
        rounds: n,
    };
    let value = convergence_bound(&inputs(1.0, 400)).map_err(|e| e.to_string())?;
    // delta = (1 + 2/20)/2 = 0.55;
    // [0.55 * sqrt(10) * (5 + 2) + (2 sqrt 2 / 3) * 2 * 2] / 20
    let hand = (0.55 * 10f64.sqrt() * 7.0 + 2.0 * 2f64.sqrt() / 3.0 * 2.0 * 2.0) / 20.0;
    ensure((value - hand).abs() <= 1e-9, || {
        format!("{value} vs hand {hand}")
    })?;
    ensure((hand - 0.797_300_258).abs() < 1e-9, || {
        format!("hand value {hand}")
    })?;

    let xis = [0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0];
    let ns = [12usize, 48, 100, 400, 1000, 10_000];
    for &n in &ns {
        let vals: Vec<f64> = xis
            .iter()
            .map(|&x| convergence_bound(&inputs(x, n)).unwrap())
            .collect();
        ensure(vals.windows(2).all(|w| w[1] < w[0]), || {
            format!("not decreasing in xi at N={n}: {vals:?}")
        })?;
    }
    for &xi in &xis {
        let vals: Vec<f64> = ns
            .iter()
            .map(|&n| convergence_bound(&inputs(xi, n)).unwrap())
            .collect();
        ensure(vals.windows(2).all(|w| w[1] < w[0]), || {
            format!("not decreasing in N at xi={xi}: {vals:?}")
        })?;
    }
    Ok(format!(
        "bound = {value:.9} (hand {hand:.9}); strictly decreasing in xi and N on a 7x6 grid"
    ))
}

fn acceptance_config(scheme: Scheme, xi_p: f64, rho: Option<f64>) -> Config {
    let mut v = json!({
        "channel": {"xi_p": xi_p},
        "learner": {"dataset": {"kind": "synthetic", "num_classes": 10, "n_train": 2000, "n_test": 1000, "dim": 20, "separation": 4.0}},
        "run": {"M": 20, "m": 4, "rounds": 200, "eta": 0.05, "scheme": scheme, "seed": 0}
    });
    if let Some(rho) = rho {
        v["power"] = json!({"rho": rho});
    }
    Config::from_value(v).expect("acceptance config")
}

fn data_for(cfg: &Config) -> (Dataset, Dataset) {
    load_datasets(cfg).expect("dataset")
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let run = |scheme, xi_p| -> Result<f64, String> {
        let cfg = acceptance_config(scheme, xi_p, None);
        let (train, test) = data_for(&cfg);
        Ok(run_with_data(&cfg, &train, &test)
            .map_err(|e| e.to_string())?
            .final_accuracy)
    };
    let opti = run(Scheme::Optivote, 1.5)?;
    let ideal = run(Scheme::IdealMv, 1.5)?;
    let opti_het = run(Scheme::Optivote, 0.8)?;
    let air_het = run(Scheme::FedavgAir, 0.8)?;
    let elapsed = started.elapsed();
    ensure(opti >= 0.85, || format!("optivote accuracy {opti}"))?;
    ensure(ideal - opti <= 0.05, || {
        format!("optivote {opti} vs ideal_mv {ideal}")
    })?;
    ensure(opti_het - air_het >= 0.15, || {
        format!("xi_p=0.8: optivote {opti_het} vs fedavg_air {air_het}")
    })?;
    ensure(elapsed <= Duration::from_secs(120), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "optivote {opti:.3}, ideal_mv {ideal:.3}; at xi_p=0.8 optivote {opti_het:.3} vs fedavg_air {air_het:.3}; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn power_invariants() -> Outcome {
    let mut rounds = 0;
    for (seed, rho, xi_p) in [(0u64, 0.05, 1.5), (1, 0.5, 0.8), (2, 2.0, 1.5)] {
        let mut cfg = acceptance_config(Scheme::Optivote, xi_p, Some(rho));
        cfg.run.seed = seed;
        cfg.run.rounds = 60;
        let (train, test) = data_for(&cfg);
        let s = run_with_data(&cfg, &train, &test).map_err(|e| e.to_string())?;
        for rec in &s.power_log {
            ensure(
                rec.powers
                    .iter()
                    .all(|p| (cfg.power.p_min..=cfg.power.p_max).contains(p)),
                || format!("rho={rho} round {}: power out of range", rec.round),
            )?;
            if let Some(sum) = rec.increment_sum {
                ensure(sum.abs() <= 1e-9, || {
                    format!("rho={rho} round {}: increments sum to {sum:e}", rec.round)
                })?;
            }
            rounds += 1;
        }
    }
    let mut zero = acceptance_config(Scheme::Optivote, 1.5, Some(0.0));
    zero.run.rounds = 60;
    let mut fixed = zero.clone();
    fixed.run.scheme = Scheme::OptivoteFixedPower;
    let (train, test) = data_for(&zero);
    let a = run_with_data(&zero, &train, &test).map_err(|e| e.to_string())?;
    let b = run_with_data(&fixed, &train, &test).map_err(|e| e.to_string())?;
    ensure(a.rounds == b.rounds && a.model == b.model, || {
        "rho=0 differs from fixed power".into()
    })?;
    Ok(format!("{rounds} round records in bounds with zero-sum increments; rho=0 == fixed power bit-exactly"))
}

fn simulate_via_binary(config: &Path, out: &Path, threads: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_optivote"))
        .args(["--threads", &threads.to_string(), "simulate", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("OPTIVOTE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        String::from_utf8_lossy(&status.stderr).into_owned()
    })?;
    std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = acceptance_config(Scheme::Optivote, 0.8, None);
    cfg.run.rounds = 40;
    cfg.run.seed = 11;
    let config = dir.path().join("config.json");
    std::fs::write(&config, cfg.to_json_pretty()).map_err(|e| e.to_string())?;
    let runs = [(1, "a"), (1, "b"), (4, "c"), (8, "d")]
        .iter()
        .map(|(t, name)| simulate_via_binary(&config, &dir.path().join(name), *t))
        .collect::<Result<Vec<_>, _>>()?;
    ensure(runs.windows(2).all(|w| w[0] == w[1]), || {
        "metrics.csv differs between executions".into()
    })?;
    ensure(!runs[0].is_empty(), || "empty metrics".into())?;
    Ok(format!(
        "4 executions (1, 1, 4, 8 threads) wrote identical metrics.csv ({} bytes)",
        runs[0].len()
    ))
}

fn gradient_oracle() -> Outcome {
    let mut rng = RandomStream::new(77);
    let data = optivote::learner::make_synthetic(4, 40, 6, 2.0, 3).map_err(|e| e.to_string())?;
    let batch: Vec<usize> = (0..data.len()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for arch in [Arch::Logistic, Arch::Mlp { hidden: vec![8, 5] }] {
        let mut model =
            Model::random(arch.clone(), 6, 4, 0.5, &mut rng).map_err(|e| e.to_string())?;
        let (_, grad) = model
            .loss_and_grad(&data, &batch)
            .map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let j = rng.below(model.num_params());
            let w0 = model.params()[j];
            model.params_mut()[j] = w0 + h;
            let up = model.loss(&data, &batch).map_err(|e| e.to_string())?;
            model.params_mut()[j] = w0 - h;
            let down = model.loss(&data, &batch).map_err(|e| e.to_string())?;
            model.params_mut()[j] = w0;
            let fd = (up - down) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-6);
            ensure(rel <= 1e-4, || {
                format!(
                    "{arch:?} param {j}: analytic {} vs fd {fd} (rel {rel:e})",
                    grad[j]
                )
            })?;
            worst = worst.max(rel);
        }
    }
    Ok(format!(
        "200 probes (logistic + MLP), worst relative error {worst:.1e}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("energy moments", energy_moments),
        ("lambda closed form vs quadrature", lambda_closed_form),
        ("error bound dominance", error_bound_dominance),
        ("flip-probability bound", flip_bound),
        ("PHY majority equivalence", phy_equivalence),
        ("convergence bound evaluator", convergence_evaluator),
        ("end-to-end learning", end_to_end),
        ("power-control invariants", power_invariants),
        ("determinism across threads", determinism),
        ("gradient oracle", gradient_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("acceptance {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} FAIL  {name}: {detail}", i + 1);
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
