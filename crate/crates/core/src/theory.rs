//! Closed-form evaluation of the energy-detection moments, the MV error
//! bounds, the per-node sign-flip bound and the convergence bound.
//!
//! All functions are pure and reject inputs outside their domain with a
//! usage error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::phy::{RECEIVER_GAIN, SYMBOL_AMPLITUDE};

/// Symbols feeding the convergence bound and its companions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Number of voting nodes `M`.
    pub num_nodes: usize,
    /// Effective SNR `theta / sigma_n2`.
    pub xi_snr: f64,
    /// Mini-batch size; must equal `rounds / gamma` when given.
    pub batch_size: Option<usize>,
    /// Per-coordinate gradient-noise scale (`alpha_i`, a.k.a. `sigma_i`).
    pub alpha: Vec<f64>,
    /// Per-coordinate true-gradient magnitudes `|g_i|`.
    #[serde(default)]
    pub g_abs: Vec<f64>,
    /// `||L||_1`.
    pub l1_smoothness: f64,
    pub gamma: usize,
    /// `F(w0) - F*`.
    pub initial_gap: f64,
    /// Number of rounds `N`.
    pub rounds: usize,
}

impl TheoryInputs {
    /// `xi = theta / sigma_n2`.
    pub fn snr(theta: f64, sigma_n2: f64) -> Result<f64> {
        if !(sigma_n2 > 0.0) {
            return Err(Error::usage("sigma_n2 must be positive for a finite SNR"));
        }
        Ok(theta / sigma_n2)
    }

    fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::usage("M must be at least 1"));
        }
        check_xi(self.xi_snr)?;
        if self.gamma == 0 {
            return Err(Error::usage("gamma must be a positive integer"));
        }
        if self.rounds == 0 {
            return Err(Error::usage("N must be at least 1"));
        }
        if self.alpha.iter().chain(&self.g_abs).any(|v| !(*v >= 0.0)) {
            return Err(Error::usage("alpha and |g| must be non-negative"));
        }
        if !(self.l1_smoothness >= 0.0) || !(self.initial_gap >= 0.0) {
            return Err(Error::usage("||L||_1 and F(w0) - F* must be non-negative"));
        }
        Ok(())
    }

    fn checked_batch(&self) -> Result<usize> {
        if !self.rounds.is_multiple_of(self.gamma) {
            return Err(Error::usage(format!(
                "N = {} is not divisible by gamma = {}",
                self.rounds, self.gamma
            )));
        }
        let d_b = self.rounds / self.gamma;
        match self.batch_size {
            Some(b) if b != d_b => Err(Error::usage(format!(
                "batch size {b} differs from N / gamma = {d_b}"
            ))),
            _ => Ok(d_b),
        }
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("xi must be positive, got {xi}")))
    }
}

/// Received energy per node `C_R sqrt(E_s) p_avg lambda`.
pub fn theta(p_avg: f64, lambda: f64) -> Result<f64> {
    if !(p_avg > 0.0 && lambda > 0.0) {
        return Err(Error::usage("p_avg and lambda must be positive"));
    }
    Ok(RECEIVER_GAIN * SYMBOL_AMPLITUDE * p_avg * lambda)
}

/// Expected slot energies `(M+ theta + sigma_n2, M- theta + sigma_n2)`.
pub fn energy_means(m_plus: usize, m_minus: usize, theta: f64, sigma_n2: f64) -> (f64, f64) {
    (
        m_plus as f64 * theta + sigma_n2,
        m_minus as f64 * theta + sigma_n2,
    )
}

/// MV error bound `(M q + 1/xi) / (M + 2/xi)`.
pub fn error_bound(m: usize, xi: f64, q: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::usage("M must be at least 1"));
    }
    check_xi(xi)?;
    if !(0.0..=0.5).contains(&q) {
        return Err(Error::usage(format!("q must lie in [0, 1/2], got {q}")));
    }
    let m = m as f64;
    let inv = 1.0 / xi;
    Ok((m * q + inv) / (m + 2.0 * inv))
}

/// Gauss-inequality bound on one node's sign-flip probability.
pub fn q_bound(g_abs: f64, alpha: f64, batch_size: usize) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::usage("alpha must be positive"));
    }
    if batch_size == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    if !(g_abs >= 0.0) {
        return Err(Error::usage("|g| must be non-negative"));
    }
    if g_abs == 0.0 {
        return Ok(0.5);
    }
    let ratio = g_abs * (batch_size as f64).sqrt() / alpha;
    if ratio > 2.0 / 3f64.sqrt() {
        Ok(2.0 / 9.0 / (ratio * ratio))
    } else {
        Ok(0.5 - ratio / (2.0 * 3f64.sqrt()))
    }
}

/// MV error bound with `q` replaced by `sqrt(2) alpha / (3 |g| sqrt(d_b))`,
/// clamped to `[0, 1]`.
pub fn error_bound_full(
    m: usize,
    xi: f64,
    g_abs: f64,
    alpha: f64,
    batch_size: usize,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::usage("M must be at least 1"));
    }
    check_xi(xi)?;
    if !(alpha >= 0.0 && g_abs >= 0.0) || batch_size == 0 {
        return Err(Error::usage("need alpha, |g| >= 0 and batch size >= 1"));
    }
    let q = if g_abs == 0.0 {
        if alpha == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        2f64.sqrt() * alpha / (3.0 * g_abs * (batch_size as f64).sqrt())
    };
    let mf = m as f64;
    let inv = 1.0 / xi;
    let raw = if q.is_infinite() {
        1.0
    } else {
        (mf * q + inv) / (mf + 2.0 * inv)
    };
    Ok(raw.clamp(0.0, 1.0))
}

/// Strict majority with an informative aggregate.
pub fn corollary1_check(m_plus: usize, m: usize, p_err: f64) -> Result<bool> {
    if m_plus > m {
        return Err(Error::usage("M+ cannot exceed M"));
    }
    Ok(2 * m_plus > m && p_err < 0.5)
}

/// `delta = (1 + 2/(xi M)) / sqrt(gamma)`.
pub fn convergence_delta(inputs: &TheoryInputs) -> f64 {
    (1.0 + 2.0 / (inputs.xi_snr * inputs.num_nodes as f64)) / (inputs.gamma as f64).sqrt()
}

/// Upper bound on the average l1 gradient norm over `N` rounds:
/// `[delta sqrt(||L||_1) (gap + gamma/2) + (2 sqrt 2 / 3) sqrt(gamma) ||alpha||_1] / sqrt(N)`.
pub fn convergence_bound(inputs: &TheoryInputs) -> Result<f64> {
    inputs.validate()?;
    inputs.checked_batch()?;
    let delta = convergence_delta(inputs);
    let gamma = inputs.gamma as f64;
    let alpha_l1: f64 = inputs.alpha.iter().sum();
    let bracket = delta * inputs.l1_smoothness.sqrt() * (inputs.initial_gap + gamma / 2.0)
        + 2.0 * 2f64.sqrt() / 3.0 * gamma.sqrt() * alpha_l1;
    Ok(bracket / (inputs.rounds as f64).sqrt())
}

/// The same bound assembled term by term as in the proof's final display.
pub fn convergence_bound_appendix(inputs: &TheoryInputs) -> Result<f64> {
    inputs.validate()?;
    inputs.checked_batch()?;
    let n = inputs.rounds as f64;
    let gamma = inputs.gamma as f64;
    let factor = 1.0 + 2.0 / (inputs.num_nodes as f64 * inputs.xi_snr);
    let l_root = inputs.l1_smoothness.sqrt();
    let alpha_l1: f64 = inputs.alpha.iter().sum();
    Ok(factor * gamma.sqrt() / (2.0 * n.sqrt()) * l_root
        + factor * l_root * n.sqrt() / (n * gamma.sqrt()) * inputs.initial_gap
        + 2.0 * 2f64.sqrt() * gamma.sqrt() * alpha_l1 / (3.0 * n.sqrt()))
}

/// Learning rate `1 / sqrt(||L||_1 d_b)`.
pub fn theorem1_learning_rate(l1_smoothness: f64, batch_size: usize) -> Result<f64> {
    if !(l1_smoothness > 0.0) || batch_size == 0 {
        return Err(Error::usage("need ||L||_1 > 0 and batch size >= 1"));
    }
    Ok(1.0 / (l1_smoothness * batch_size as f64).sqrt())
}

/// Operation names accepted by [`evaluate_op`].
pub const OPERATIONS: &[&str] = &[
    "theta",
    "energy_means",
    "error_bound",
    "q_bound",
    "error_bound_full",
    "corollary1_check",
    "convergence_bound",
    "convergence_bound_appendix",
];

/// Evaluates a named operation from flat numeric arguments, returning a JSON
/// object of named results. Used by the `theory` and `sweep` commands.
///
/// Argument names: `p_avg`, `lambda`, `m_plus`, `m_minus`, `theta`,
/// `sigma_n2`, `M`, `xi`, `q`, `g`, `alpha`, `d_b`, `p_err`, `N`, `gamma`,
/// `L1`, `gap`, `sigma_l1`. `xi` may be replaced by `theta` and `sigma_n2`.
pub fn evaluate_op(op: &str, args: &BTreeMap<String, f64>) -> Result<Value> {
    let get = |k: &str| -> Result<f64> {
        args.get(k)
            .copied()
            .ok_or_else(|| Error::usage(format!("operation `{op}` needs --{k}")))
    };
    let count = |k: &str| -> Result<usize> {
        let v = get(k)?;
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::usage(format!(
                "--{k} must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    let xi = || -> Result<f64> {
        match args.get("xi") {
            Some(v) => Ok(*v),
            None => TheoryInputs::snr(get("theta")?, get("sigma_n2")?),
        }
    };
    let value = match op {
        "theta" => json!({ "theta": theta(get("p_avg")?, get("lambda")?)? }),
        "energy_means" => {
            let (mp, mm) = energy_means(
                count("m_plus")?,
                count("m_minus")?,
                get("theta")?,
                get("sigma_n2")?,
            );
            json!({ "mu_plus": mp, "mu_minus": mm })
        }
        "error_bound" => json!({ "error_bound": error_bound(count("M")?, xi()?, get("q")?)? }),
        "q_bound" => json!({ "q_bound": q_bound(get("g")?, get("alpha")?, count("d_b")?)? }),
        "error_bound_full" => json!({
            "error_bound_full": error_bound_full(count("M")?, xi()?, get("g")?, get("alpha")?, count("d_b")?)?
        }),
        "corollary1_check" => json!({
            "corollary1_check": corollary1_check(count("m_plus")?, count("M")?, get("p_err")?)?
        }),
        "convergence_bound" | "convergence_bound_appendix" => {
            let inputs = TheoryInputs {
                num_nodes: count("M")?,
                xi_snr: xi()?,
                batch_size: args.get("d_b").map(|v| *v as usize),
                alpha: vec![get("sigma_l1")?],
                g_abs: Vec::new(),
                l1_smoothness: get("L1")?,
                gamma: count("gamma")?,
                initial_gap: get("gap")?,
                rounds: count("N")?,
            };
            let b = if op == "convergence_bound" {
                convergence_bound(&inputs)?
            } else {
                convergence_bound_appendix(&inputs)?
            };
            json!({ op: b, "delta": convergence_delta(&inputs) })
        }
        other => {
            return Err(Error::usage(format!(
                "unknown operation `{other}`; expected one of {}",
                OPERATIONS.join(", ")
            )))
        }
    };
    Ok(value)
}
