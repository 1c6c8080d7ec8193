//! End-to-end federated rounds.
//!
//! Per round: sample the active nodes, compute their local gradients, quantize
//! to signs, draw one channel per node, aggregate under the chosen scheme,
//! broadcast the decision (error-free downlink), apply it to the global model
//! and evaluate. OptiVote additionally scores every active node against the
//! previous round's decision and steps the power recursion.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel, ChannelDraw};
use crate::config::{Config, DatasetConfig};
use crate::error::{Error, Result};
use crate::learner::{
    evaluate, load_mnist_idx, local_update, make_synthetic, partition, sign_quantize, Dataset,
    GradientVector, Model,
};
use crate::phy::{
    detect_mv, frame_map, majority_vote, superpose_all, write_slot_rows, MvDecision, Sign,
    SlotEnergyPair, SLOT_CSV_HEADER,
};
use crate::power::{consistency_score, update_powers_scoped, PowerState};
use crate::rng::{tag, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// PPM-MV with importance-aware power control.
    #[default]
    Optivote,
    /// PPM-MV with every node at `p_avg`.
    OptivoteFixedPower,
    /// Exact majority vote of the transmitted signs.
    IdealMv,
    /// Uncompensated analog superposition of full gradients.
    FedavgAir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub mv_error_rate: f64,
    pub mean_power: f64,
    pub mean_consistency: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "round,train_loss,test_accuracy,mv_error_rate,mean_power,mean_consistency";

/// Power state after a round's update.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRecord {
    pub round: usize,
    pub powers: Vec<f64>,
    pub scores: Vec<f64>,
    /// Sum of the pre-projection increments; `None` when no update ran.
    pub increment_sum: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub learning_rate: f64,
    pub num_params: usize,
    pub frames_per_round: usize,
    pub rounds: Vec<RoundMetrics>,
    pub final_accuracy: f64,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub model: Model,
    #[serde(skip)]
    pub power_log: Vec<PowerRecord>,
    #[serde(skip)]
    pub slot_log: Vec<(usize, Vec<SlotEnergyPair>)>,
}

/// Uniform sample of `m` distinct node ids out of `num_nodes`, ascending.
pub fn select_active(num_nodes: usize, m: usize, rng: &mut RandomStream) -> Result<Vec<usize>> {
    if m == 0 || m > num_nodes {
        return Err(Error::usage(format!(
            "cannot select {m} of {num_nodes} nodes"
        )));
    }
    let mut ids: Vec<usize> = (0..num_nodes).collect();
    for i in 0..m {
        let j = i + rng.below(num_nodes - i);
        ids.swap(i, j);
    }
    ids.truncate(m);
    ids.sort_unstable();
    Ok(ids)
}

/// `(1/m) sum_k P_k I_k g_k + n`, `n ~ N(0, sigma_n2)` per coordinate.
pub fn aggregate_fedavg_air(
    gradients: &[GradientVector],
    powers: &[f64],
    draws: &[ChannelDraw],
    sigma_n2: f64,
    rng: &mut RandomStream,
) -> Result<GradientVector> {
    let m = gradients.len();
    if m == 0 {
        return Err(Error::usage("analog aggregation needs at least one node"));
    }
    if powers.len() != m || draws.len() != m {
        return Err(Error::usage("gradients, powers and draws differ in length"));
    }
    let q = gradients[0].len();
    if gradients.iter().any(|g| g.len() != q) {
        return Err(Error::usage("gradients differ in length"));
    }
    let mut acc = vec![0.0; q];
    for ((g, p), d) in gradients.iter().zip(powers).zip(draws) {
        let w = p * d.intensity;
        acc.iter_mut()
            .zip(g.as_slice())
            .for_each(|(a, x)| *a += w * x);
    }
    let sd = sigma_n2.sqrt();
    for a in acc.iter_mut() {
        *a /= m as f64;
        if sd > 0.0 {
            *a += sd * rng.standard_normal();
        }
    }
    Ok(GradientVector::new(acc))
}

/// Builds `(train, test)` from the dataset block.
pub fn load_datasets(cfg: &Config) -> Result<(Dataset, Dataset)> {
    match &cfg.learner.dataset {
        DatasetConfig::Synthetic {
            num_classes,
            n_train,
            n_test,
            dim,
            separation,
        } => {
            let seed = RandomStream::derive(cfg.run.seed, &[tag::DATASET]).next_u64();
            let all = make_synthetic(*num_classes, n_train + n_test, *dim, *separation, seed)?;
            all.split_at(*n_train)
        }
        DatasetConfig::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            max_train,
            max_test,
        } => {
            let truncate = |ds: Dataset, cap: &Option<usize>| -> Result<Dataset> {
                match cap {
                    Some(n) if *n < ds.len() => {
                        let idx: Vec<usize> = (0..*n).collect();
                        ds.subset(&idx, ds.name.clone())
                    }
                    _ => Ok(ds),
                }
            };
            let train = truncate(load_mnist_idx(train_images, train_labels)?, max_train)?;
            let test = truncate(load_mnist_idx(test_images, test_labels)?, max_test)?;
            Ok((train, test))
        }
    }
}

/// Runs the configured experiment. Deterministic in the configuration; the
/// rayon thread count does not affect any result.
pub fn run(cfg: &Config) -> Result<RunSummary> {
    cfg.validate()?;
    let (train, test) = load_datasets(cfg)?;
    run_with_data(cfg, &train, &test)
}

pub fn run_with_data(cfg: &Config, train: &Dataset, test: &Dataset) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let channel = cfg.channel.params()?;
    let power = cfg.power.params()?;
    let run = &cfg.run;
    let seed = run.seed;
    let eta = cfg.learning_rate()?;

    let parts = partition(
        train,
        run.num_nodes,
        cfg.learner.partition,
        RandomStream::derive(seed, &[tag::PARTITION]).next_u64(),
    )?;
    if let Some(empty) = parts.iter().position(Vec::is_empty) {
        return Err(Error::config(
            "learner.partition",
            format!("node {empty} received no training samples"),
        ));
    }
    let mut model = Model::init(
        cfg.learner.model.clone(),
        train.dim(),
        train.num_classes(),
        &mut RandomStream::derive(seed, &[tag::MODEL_INIT]),
    )?;
    let q = model.num_params();
    let frame_capacity = run.frame_capacity.unwrap_or(2 * q);
    let frames_per_round = if q == 0 {
        0
    } else {
        frame_map(q - 1, frame_capacity)?.frame + 1
    };

    let mut state = PowerState::initial(run.num_nodes, &power);
    let mut prev_mv: Option<MvDecision> = None;
    let mut metrics = Vec::with_capacity(run.rounds);
    let mut power_log = Vec::with_capacity(run.rounds);
    let mut slot_log = Vec::new();

    for n in 0..run.rounds {
        let round = n as u64;
        let active = select_active(
            run.num_nodes,
            run.active_nodes,
            &mut RandomStream::derive(seed, &[tag::SELECTION, round]),
        )?;

        let gradients: Vec<GradientVector> = active
            .par_iter()
            .map(|&k| {
                let mut rng = RandomStream::derive(seed, &[tag::GRADIENT, round, k as u64]);
                local_update(
                    &model,
                    train,
                    &parts[k],
                    run.batch_size,
                    cfg.learner.local_steps,
                    eta,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        let signs = gradients
            .iter()
            .map(sign_quantize)
            .collect::<Result<Vec<_>>>()?;
        let ideal = majority_vote(&signs);

        let draws: Vec<ChannelDraw> = active
            .iter()
            .map(|&k| {
                sample_channel(
                    &channel,
                    &mut RandomStream::derive(seed, &[tag::CHANNEL, round, k as u64]),
                )
            })
            .collect();
        let tx_powers: Vec<f64> = match run.scheme {
            Scheme::Optivote => active.iter().map(|&k| state.powers()[k]).collect(),
            _ => vec![power.p_avg; active.len()],
        };

        let decision = match run.scheme {
            Scheme::IdealMv => {
                model.step_signs(&ideal, eta)?;
                ideal.clone()
            }
            Scheme::Optivote | Scheme::OptivoteFixedPower => {
                let mut noise = RandomStream::derive(seed, &[tag::SLOT_NOISE, round]);
                let pairs =
                    superpose_all(&signs, &tx_powers, &draws, channel.sigma_n2, &mut noise)?;
                let mv = detect_mv(&pairs);
                model.step_signs(&mv, eta)?;
                if cfg.output.dump_slots {
                    slot_log.push((n, pairs));
                }
                mv
            }
            Scheme::FedavgAir => {
                let mut noise = RandomStream::derive(seed, &[tag::ANALOG_NOISE, round]);
                let agg = aggregate_fedavg_air(
                    &gradients,
                    &tx_powers,
                    &draws,
                    channel.sigma_n2,
                    &mut noise,
                )?;
                model.step_gradient(agg.as_slice(), eta)?;
                MvDecision::new(
                    agg.as_slice()
                        .iter()
                        .map(|&x| if x < 0.0 { Sign::Minus } else { Sign::Plus })
                        .collect(),
                )
            }
        };
        if model.params().iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("model diverged in round {n}")));
        }
        let mv_error_rate = decision.disagreement(&ideal);

        let mut increment_sum = None;
        if let Some(prev) = &prev_mv {
            let mut scores = state.scores().to_vec();
            for (&k, s) in active.iter().zip(&signs) {
                scores[k] = consistency_score(s, prev)?;
            }
            state = if run.scheme == Scheme::Optivote {
                let up =
                    update_powers_scoped(&state, &scores, &power, cfg.power.abar_scope, &active)?;
                increment_sum = Some(up.increments.iter().sum());
                up.state
            } else {
                PowerState::from_parts(state.powers().to_vec(), scores)?
            };
        }
        power_log.push(PowerRecord {
            round: n,
            powers: state.powers().to_vec(),
            scores: state.scores().to_vec(),
            increment_sum,
        });
        prev_mv = Some(decision);

        let (train_loss, _) = evaluate(&model, train)?;
        let (_, test_accuracy) = evaluate(&model, test)?;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training loss in round {n}"
            )));
        }
        metrics.push(RoundMetrics {
            round: n,
            train_loss,
            test_accuracy,
            mv_error_rate,
            mean_power: state.mean_power(),
            mean_consistency: state.mean_score(),
        });
    }

    let final_accuracy = match metrics.last() {
        Some(m) => m.test_accuracy,
        None => evaluate(&model, test)?.1,
    };
    Ok(RunSummary {
        config_hash: cfg.hash(),
        seed,
        scheme: run.scheme,
        learning_rate: eta,
        num_params: q,
        frames_per_round,
        rounds: metrics,
        final_accuracy,
        wall_time_s: started.elapsed().as_secs_f64(),
        model,
        power_log,
        slot_log,
    })
}

pub fn write_metrics_csv<W: Write>(out: &mut W, metrics: &[RoundMetrics]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.round,
            m.train_loss,
            m.test_accuracy,
            m.mv_error_rate,
            m.mean_power,
            m.mean_consistency
        )?;
    }
    Ok(())
}

pub fn write_power_csv<W: Write>(out: &mut W, log: &[PowerRecord]) -> std::io::Result<()> {
    writeln!(out, "round,node_id,p,a")?;
    for rec in log {
        for (k, (p, a)) in rec.powers.iter().zip(&rec.scores).enumerate() {
            writeln!(out, "{},{k},{p},{a}", rec.round)?;
        }
    }
    Ok(())
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `summary.json`, `resolved_config.json` and, when
/// enabled, `power.csv` and `slots.csv` into `cfg.output.dir`.
pub fn write_outputs(cfg: &Config, summary: &RunSummary) -> Result<()> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("metrics.csv");
    let mut f = create(&path)?;
    write_metrics_csv(&mut f, &summary.rounds).map_err(io(&path))?;
    f.flush().map_err(io(&path))?;

    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(io(&path))?;

    let path = dir.join("resolved_config.json");
    std::fs::write(&path, cfg.to_json_pretty() + "\n").map_err(io(&path))?;

    if cfg.output.dump_power {
        let path = dir.join("power.csv");
        let mut f = create(&path)?;
        write_power_csv(&mut f, &summary.power_log).map_err(io(&path))?;
        f.flush().map_err(io(&path))?;
    }
    if cfg.output.dump_slots {
        let path = dir.join("slots.csv");
        let mut f = create(&path)?;
        writeln!(f, "{SLOT_CSV_HEADER}").map_err(io(&path))?;
        for (round, pairs) in &summary.slot_log {
            write_slot_rows(&mut f, *round, pairs).map_err(io(&path))?;
        }
        f.flush().map_err(io(&path))?;
    }
    Ok(())
}

/// Runs and writes all outputs.
pub fn simulate(cfg: &Config) -> Result<RunSummary> {
    let summary = run(cfg)?;
    write_outputs(cfg, &summary)?;
    Ok(summary)
}
