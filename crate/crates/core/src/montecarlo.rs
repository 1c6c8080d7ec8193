//! Monte Carlo checks tying the simulator to the closed forms.
//!
//! Samples are split into fixed-size chunks, each with its own stream derived
//! from `(seed, check name, chunk index)`. Chunks run in parallel and their
//! partial sums are combined in chunk order, so a report is bit-identical for
//! any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{lambda_eff, sample_channel, ChannelParams};
use crate::error::{Error, Result};
use crate::phy::{superpose_weighted, Sign};
use crate::power::PowerParams;
use crate::rng::{tag, RandomStream};
use crate::theory;

const CHUNK: usize = 8192;

/// How a report's `pass` flag is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceRule {
    /// `|empirical - theoretical| <= 3 SE`.
    WithinThreeSe,
    /// `empirical <= theoretical + 3 SE`.
    BelowPlusThreeSe,
    /// `empirical + 3 SE < theoretical`.
    StrictlyBelowThreeSe,
    /// `|empirical / theoretical - 1| <= tol`.
    Relative(f64),
}

impl ToleranceRule {
    pub fn passes(&self, empirical: f64, theoretical: f64, se: f64) -> bool {
        match *self {
            ToleranceRule::WithinThreeSe => (empirical - theoretical).abs() <= 3.0 * se,
            ToleranceRule::BelowPlusThreeSe => empirical <= theoretical + 3.0 * se,
            ToleranceRule::StrictlyBelowThreeSe => empirical + 3.0 * se < theoretical,
            ToleranceRule::Relative(tol) => (empirical / theoretical - 1.0).abs() <= tol,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            ToleranceRule::WithinThreeSe => "|empirical - theoretical| <= 3*SE".into(),
            ToleranceRule::BelowPlusThreeSe => "empirical <= theoretical + 3*SE".into(),
            ToleranceRule::StrictlyBelowThreeSe => "empirical + 3*SE < theoretical".into(),
            ToleranceRule::Relative(tol) => format!("|empirical/theoretical - 1| <= {tol}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub name: String,
    pub samples: usize,
    pub empirical: f64,
    pub theoretical: f64,
    pub standard_error: f64,
    pub pass: bool,
    pub tolerance_rule: String,
}

impl McReport {
    pub fn new(
        name: impl Into<String>,
        samples: usize,
        empirical: f64,
        theoretical: f64,
        standard_error: f64,
        rule: ToleranceRule,
    ) -> Self {
        McReport {
            name: name.into(),
            samples,
            empirical,
            theoretical,
            standard_error,
            pass: rule.passes(empirical, theoretical, standard_error),
            tolerance_rule: rule.describe(),
        }
    }
}

/// Running first and second moments.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Sample standard deviation over `sqrt(n)`.
    fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

fn name_key(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Runs `body(rng, count)` over fixed chunks and folds the results in order.
fn chunked<T, F>(seed: u64, name: &str, samples: usize, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RandomStream, usize) -> T + Sync,
{
    let key = name_key(name);
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RandomStream::derive(seed, &[tag::MONTE_CARLO, key, c as u64]);
            let count = CHUNK.min(samples - c * CHUNK);
            body(&mut rng, count)
        })
        .collect()
}

fn check_samples(samples: usize, min: usize) -> Result<()> {
    if samples < min {
        return Err(Error::usage(format!(
            "need at least {min} samples, got {samples}"
        )));
    }
    Ok(())
}

/// Checks the expected slot energies for a fixed vote split at constant
/// power `p_avg`, plus the per-node received energy `E[P I]` against `theta`.
pub fn verify_energy_means(
    channel: &ChannelParams,
    power: &PowerParams,
    m_plus: usize,
    m_minus: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<McReport>> {
    check_samples(samples, 10_000)?;
    channel.validate()?;
    let lambda = lambda_eff(channel);
    let theta = theory::theta(power.p_avg, lambda)?;
    let (mu_plus, mu_minus) = theory::energy_means(m_plus, m_minus, theta, channel.sigma_n2);
    let m = m_plus + m_minus;
    let mut signs = vec![Sign::Plus; m_plus];
    signs.extend(std::iter::repeat_n(Sign::Minus, m_minus));
    let name = format!("energy_means[M+={m_plus},M-={m_minus}]");

    let parts = chunked(seed, &name, samples, |rng, count| {
        let mut plus = Moments::default();
        let mut minus = Moments::default();
        let mut per_node = Moments::default();
        let mut weights = vec![0.0; m];
        for _ in 0..count {
            for w in weights.iter_mut() {
                *w = power.p_avg * sample_channel(channel, rng).intensity;
                per_node.push(*w);
            }
            let pair = superpose_weighted(&signs, &weights, channel.sigma_n2, rng);
            plus.push(pair.e_plus());
            minus.push(pair.e_minus());
        }
        (plus, minus, per_node)
    });
    let (plus, minus, per_node) = parts.into_iter().fold(
        (Moments::default(), Moments::default(), Moments::default()),
        |(a, b, c), (x, y, z)| (a.merge(x), b.merge(y), c.merge(z)),
    );

    let mut reports = vec![
        McReport::new(
            format!("{name}.mu_plus"),
            samples,
            plus.mean(),
            mu_plus,
            plus.standard_error(),
            ToleranceRule::WithinThreeSe,
        ),
        McReport::new(
            format!("{name}.mu_minus"),
            samples,
            minus.mean(),
            mu_minus,
            minus.standard_error(),
            ToleranceRule::WithinThreeSe,
        ),
    ];
    if m > 0 {
        reports.push(McReport::new(
            format!("{name}.theta"),
            per_node.n,
            per_node.mean(),
            theta,
            per_node.standard_error(),
            ToleranceRule::Relative(0.01),
        ));
    }
    Ok(reports)
}

/// Channel parameters whose noise variance realizes effective SNR `xi` at
/// constant power `p_avg`.
pub fn params_for_snr(channel: &ChannelParams, p_avg: f64, xi: f64) -> Result<ChannelParams> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::usage("xi must be positive and finite"));
    }
    let theta = theory::theta(p_avg, lambda_eff(channel))?;
    channel.with_sigma_n2(theta / xi)
}

fn effective_snr(channel: &ChannelParams, power: &PowerParams) -> Result<f64> {
    let theta = theory::theta(power.p_avg, lambda_eff(channel))?;
    if channel.sigma_n2 == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(theta / channel.sigma_n2)
    }
}

/// Counts `(flips, total)` where each node votes correctly (`+1`) w.p.
/// `1 - q`, votes are superposed over fresh channel draws and detected.
/// With `condition_majority`, only trials whose realized `M+ > M/2` count.
#[allow(clippy::too_many_arguments)]
fn simulate_flips(
    m: usize,
    q: f64,
    channel: &ChannelParams,
    power: &PowerParams,
    samples: usize,
    seed: u64,
    name: &str,
    condition_majority: bool,
) -> (usize, usize) {
    let parts = chunked(seed, name, samples, |rng, count| {
        let mut flips = 0usize;
        let mut kept = 0usize;
        let mut signs = vec![Sign::Plus; m];
        let mut weights = vec![0.0; m];
        for _ in 0..count {
            let mut plus = 0;
            for (s, w) in signs.iter_mut().zip(weights.iter_mut()) {
                *s = if rng.bernoulli(q) {
                    Sign::Minus
                } else {
                    Sign::Plus
                };
                if *s == Sign::Plus {
                    plus += 1;
                }
                *w = power.p_avg * sample_channel(channel, rng).intensity;
            }
            let pair = superpose_weighted(&signs, &weights, channel.sigma_n2, rng);
            if condition_majority && 2 * plus <= m {
                continue;
            }
            kept += 1;
            if pair.delta() < 0.0 {
                flips += 1;
            }
        }
        (flips, kept)
    });
    parts
        .into_iter()
        .fold((0, 0), |(a, b), (x, y)| (a + x, b + y))
}

fn proportion_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Empirical MV flip rate against the closed-form error bound.
pub fn verify_error_bound(
    m: usize,
    q: f64,
    channel: &ChannelParams,
    power: &PowerParams,
    samples: usize,
    seed: u64,
) -> Result<McReport> {
    check_samples(samples, 10_000)?;
    if !(0.0..0.5).contains(&q) {
        return Err(Error::usage("q must lie in [0, 1/2)"));
    }
    let xi = effective_snr(channel, power)?;
    let bound = theory::error_bound(m, xi, q)?;
    let name = format!("error_bound[M={m},xi={xi:.4},q={q}]");
    let (flips, n) = simulate_flips(m, q, channel, power, samples, seed, &name, false);
    let rate = flips as f64 / n as f64;
    Ok(McReport::new(
        name,
        n,
        rate,
        bound,
        proportion_se(rate, n),
        ToleranceRule::BelowPlusThreeSe,
    ))
}

/// Empirical sign-flip rate of a mean of `d_b` Gaussian draws around `g`.
pub fn verify_q_bound(
    g_abs: f64,
    alpha: f64,
    batch_size: usize,
    samples: usize,
    seed: u64,
) -> Result<McReport> {
    check_samples(samples, 1_000)?;
    let bound = theory::q_bound(g_abs, alpha, batch_size)?;
    let name = format!("q_bound[g={g_abs},alpha={alpha},d_b={batch_size}]");
    let parts = chunked(seed, &name, samples, |rng, count| {
        let mut flips = 0usize;
        for _ in 0..count {
            let noise: f64 = (0..batch_size)
                .map(|_| alpha * rng.standard_normal())
                .sum::<f64>()
                / batch_size as f64;
            // True sign is +1 (g >= 0); a flip is a negative estimate.
            if g_abs + noise < 0.0 {
                flips += 1;
            }
        }
        flips
    });
    let flips: usize = parts.into_iter().sum();
    let rate = flips as f64 / samples as f64;
    Ok(McReport::new(
        name,
        samples,
        rate,
        bound,
        proportion_se(rate, samples),
        ToleranceRule::BelowPlusThreeSe,
    ))
}

/// Error rate conditioned on a strict correct majority stays below 1/2.
pub fn verify_corollary1(
    m: usize,
    q: f64,
    channel: &ChannelParams,
    power: &PowerParams,
    samples: usize,
    seed: u64,
) -> Result<McReport> {
    check_samples(samples, 1_000)?;
    if !(0.0..0.5).contains(&q) || m == 0 {
        return Err(Error::usage("need q in [0, 1/2) and M >= 1"));
    }
    let name = format!("corollary1[M={m},q={q},sigma_n2={}]", channel.sigma_n2);
    let (flips, kept) = simulate_flips(m, q, channel, power, samples, seed, &name, true);
    let rate = if kept == 0 {
        0.0
    } else {
        flips as f64 / kept as f64
    };
    Ok(McReport::new(
        name,
        kept,
        rate,
        0.5,
        proportion_se(rate, kept),
        ToleranceRule::StrictlyBelowThreeSe,
    ))
}

/// Grid used by the default verification suite.
pub const SNR_GRID: [f64; 4] = [0.5, 1.0, 5.0, 20.0];
pub const NODE_GRID: [usize; 3] = [4, 10, 50];
pub const FLIP_GRID: [f64; 3] = [0.05, 0.2, 0.4];

/// `50` ratios `|g| sqrt(d_b) / alpha` spanning both branches of the bound.
pub fn q_ratio_grid() -> Vec<f64> {
    (0..50).map(|k| 0.1 * (k + 1) as f64).collect()
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub channel: ChannelParams,
    pub power: PowerParams,
    pub samples: usize,
    pub seed: u64,
}

/// The full verification suite: energy moments, the error-bound grid, the
/// flip-bound grid and the majority corollary.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<McReport>> {
    let mut reports = Vec::new();
    for (mp, mm) in [(5, 5), (7, 3), (0, 4)] {
        reports.extend(verify_energy_means(
            &cfg.channel,
            &cfg.power,
            mp,
            mm,
            cfg.samples,
            cfg.seed,
        )?);
    }
    for xi in SNR_GRID {
        let ch = params_for_snr(&cfg.channel, cfg.power.p_avg, xi)?;
        for m in NODE_GRID {
            for q in FLIP_GRID {
                reports.push(verify_error_bound(
                    m,
                    q,
                    &ch,
                    &cfg.power,
                    cfg.samples,
                    cfg.seed,
                )?);
            }
        }
    }
    let d_b = 16;
    let alpha = 1.0;
    for r in q_ratio_grid() {
        let g = r * alpha / (d_b as f64).sqrt();
        reports.push(verify_q_bound(g, alpha, d_b, cfg.samples, cfg.seed)?);
    }
    for (m, q) in [(101, 0.49), (11, 0.1)] {
        reports.push(verify_corollary1(
            m,
            q,
            &cfg.channel,
            &cfg.power,
            cfg.samples,
            cfg.seed,
        )?);
    }
    Ok(reports)
}
