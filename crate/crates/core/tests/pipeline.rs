//! Library-level properties of the simulator that span several modules.

use optivote::channel::{sample_channel, ChannelParams};
use optivote::config::Config;
use optivote::orchestrator::{run, select_active, Scheme};
use optivote::rng::RandomStream;
use serde_json::json;

#[test]
fn selection_is_uniform() {
    let (num_nodes, m, trials) = (20, 4, 50_000);
    let mut counts = vec![0usize; num_nodes];
    for t in 0..trials {
        for k in select_active(num_nodes, m, &mut RandomStream::derive(1, &[t])).unwrap() {
            counts[k] += 1;
        }
    }
    let p = m as f64 / num_nodes as f64;
    let expect = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    for (k, c) in counts.iter().enumerate() {
        assert!(
            (*c as f64 - expect).abs() < 4.5 * sd,
            "node {k}: {c} vs {expect}"
        );
    }
}

#[test]
fn homogeneous_channel_matches_ideal_vote() {
    // No jitter, a point-mass distance shell and no noise: every scheme that
    // votes through the channel should reproduce ideal_mv exactly.
    let base = json!({
        "channel": {"d_min_km": 1000, "d_max_km": 1000.000001, "xi_p": 1000.0, "sigma_n2": 0.0},
        "learner": {"dataset": {"kind": "synthetic", "num_classes": 4, "n_train": 400, "n_test": 100, "dim": 6, "separation": 3.0}},
        "run": {"M": 6, "m": 5, "rounds": 15, "d_b": 8, "seed": 2}
    });
    let with = |scheme: Scheme| {
        let mut v = base.clone();
        v["run"]["scheme"] = json!(scheme);
        run(&Config::from_value(v).unwrap()).unwrap()
    };
    let ideal = with(Scheme::IdealMv);
    let fixed = with(Scheme::OptivoteFixedPower);
    assert!(fixed.rounds.iter().all(|r| r.mv_error_rate == 0.0));
    assert_eq!(ideal.model, fixed.model);
}

#[test]
fn noisy_channel_makes_vote_errors() {
    let cfg = Config::from_value(json!({
        "channel": {"sigma_n2": 50.0},
        "run": {"rounds": 10, "scheme": "optivote_fixed_power"}
    }))
    .unwrap();
    let s = run(&cfg).unwrap();
    let mean: f64 = s.rounds.iter().map(|r| r.mv_error_rate).sum::<f64>() / s.rounds.len() as f64;
    assert!(mean > 0.05, "mean error {mean}");
}

#[test]
fn channel_streams_are_independent_of_draw_order() {
    let params = ChannelParams::new(500e3, 2000e3, 1550e-9, 0.9, 1.5, 0.1).unwrap();
    let a: Vec<_> = (0..5u64)
        .map(|k| sample_channel(&params, &mut RandomStream::derive(3, &[2, 0, k])))
        .collect();
    let b: Vec<_> = (0..5u64)
        .rev()
        .map(|k| sample_channel(&params, &mut RandomStream::derive(3, &[2, 0, k])))
        .collect();
    assert!(a.iter().zip(b.iter().rev()).all(|(x, y)| x == y));
}

#[test]
fn noniid_partition_trains() {
    let cfg = Config::from_value(json!({
        "learner": {"partition": {"mode": "noniid", "labels_per_node": 2}},
        "run": {"rounds": 150, "scheme": "optivote", "seed": 1}
    }))
    .unwrap();
    let s = run(&cfg).unwrap();
    assert!(s.final_accuracy > 0.5, "accuracy {}", s.final_accuracy);
}
