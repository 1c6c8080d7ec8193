//! PPM majority-vote transmitter and non-coherent differential energy receiver.
//!
//! Each gradient coordinate owns an adjacent slot pair `(tau+, tau-)`. A node
//! voting `+1` puts a unit-energy pulse in `tau+`, a node voting `-1` in
//! `tau-`. The receiver only sees the two accumulated slot energies and
//! decides by the sign of their difference; it never needs per-node CSI.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelDraw;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Receiver gain `C_R`.
pub const RECEIVER_GAIN: f64 = 1.0;
/// Normalized symbol amplitude `sqrt(E_s)`.
pub const SYMBOL_AMPLITUDE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    /// Sign of `x` with `sign(0) = +1`. NaN is rejected.
    pub fn of(x: f64) -> Result<Sign> {
        if x.is_nan() {
            Err(Error::Numeric("sign of NaN".into()))
        } else if x < 0.0 {
            Ok(Sign::Minus)
        } else {
            Ok(Sign::Plus)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// One-bit quantized gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignVector(Vec<Sign>);

impl SignVector {
    pub fn new(signs: Vec<Sign>) -> Self {
        SignVector(signs)
    }

    /// Builds from `{-1, +1}` integers; anything else is a usage error.
    pub fn from_i8(values: &[i8]) -> Result<Self> {
        values
            .iter()
            .map(|&v| match v {
                1 => Ok(Sign::Plus),
                -1 => Ok(Sign::Minus),
                other => Err(Error::usage(format!("sign must be +1 or -1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(SignVector)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[Sign] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Sign {
        self.0[i]
    }
}

/// Per-coordinate majority-vote decision broadcast by the aggregator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MvDecision(Vec<Sign>);

impl MvDecision {
    pub fn new(votes: Vec<Sign>) -> Self {
        MvDecision(votes)
    }

    pub fn votes(&self) -> &[Sign] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of coordinates where `self` and `other` disagree.
    pub fn disagreement(&self, other: &MvDecision) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let diff = self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count();
        diff as f64 / self.0.len() as f64
    }
}

/// Accumulated energies of one coordinate's slot pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotEnergyPair {
    e_plus: f64,
    e_minus: f64,
    delta: f64,
}

impl SlotEnergyPair {
    pub fn new(e_plus: f64, e_minus: f64) -> Self {
        SlotEnergyPair {
            e_plus,
            e_minus,
            delta: e_plus - e_minus,
        }
    }

    pub fn e_plus(&self) -> f64 {
        self.e_plus
    }

    pub fn e_minus(&self) -> f64 {
        self.e_minus
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Slot amplitudes `(t at tau+, t at tau-)` for one sign.
pub fn ppm_encode(sign: Sign) -> (f64, f64) {
    match sign {
        Sign::Plus => (SYMBOL_AMPLITUDE, 0.0),
        Sign::Minus => (0.0, SYMBOL_AMPLITUDE),
    }
}

/// Slot-argmax decode of a single pulse pair; ties go to `+1`.
pub fn ppm_decode(slots: (f64, f64)) -> Sign {
    if slots.0 >= slots.1 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Noise energy collected in one slot: the square-law energy `n^2` of a
/// zero-mean Gaussian sample `n ~ N(0, sigma_n2)`. Its mean is `sigma_n2`.
pub fn slot_noise(sigma_n2: f64, rng: &mut RandomStream) -> f64 {
    if sigma_n2 == 0.0 {
        return 0.0;
    }
    let n = sigma_n2.sqrt() * rng.standard_normal();
    n * n
}

/// Effective per-node contribution `C_R P_m I_m sqrt(E_s)`.
pub fn node_weights(powers: &[f64], draws: &[ChannelDraw]) -> Result<Vec<f64>> {
    if powers.len() != draws.len() {
        return Err(Error::usage(format!(
            "{} powers but {} channel draws",
            powers.len(),
            draws.len()
        )));
    }
    if let Some(p) = powers.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::usage(format!(
            "transmit power must be positive, got {p}"
        )));
    }
    Ok(powers
        .iter()
        .zip(draws)
        .map(|(p, d)| RECEIVER_GAIN * p * d.intensity * SYMBOL_AMPLITUDE)
        .collect())
}

/// Superposes one coordinate's votes from all active nodes into a slot pair.
pub fn superpose(
    signs: &[Sign],
    powers: &[f64],
    draws: &[ChannelDraw],
    sigma_n2: f64,
    rng: &mut RandomStream,
) -> Result<SlotEnergyPair> {
    if signs.len() != powers.len() {
        return Err(Error::usage(format!(
            "{} signs but {} powers",
            signs.len(),
            powers.len()
        )));
    }
    let weights = node_weights(powers, draws)?;
    Ok(superpose_weighted(signs, &weights, sigma_n2, rng))
}

pub(crate) fn superpose_weighted(
    signs: &[Sign],
    weights: &[f64],
    sigma_n2: f64,
    rng: &mut RandomStream,
) -> SlotEnergyPair {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for (s, w) in signs.iter().zip(weights) {
        let (tp, tm) = ppm_encode(*s);
        plus += w * tp;
        minus += w * tm;
    }
    plus += slot_noise(sigma_n2, rng);
    minus += slot_noise(sigma_n2, rng);
    SlotEnergyPair::new(plus, minus)
}

/// Superposes every coordinate of the active nodes' sign vectors.
///
/// Noise is drawn coordinate by coordinate from `rng`, `tau+` before `tau-`.
pub fn superpose_all(
    local_signs: &[SignVector],
    powers: &[f64],
    draws: &[ChannelDraw],
    sigma_n2: f64,
    rng: &mut RandomStream,
) -> Result<Vec<SlotEnergyPair>> {
    if local_signs.len() != powers.len() {
        return Err(Error::usage(format!(
            "{} sign vectors but {} powers",
            local_signs.len(),
            powers.len()
        )));
    }
    let q = local_signs.first().map_or(0, SignVector::len);
    if local_signs.iter().any(|s| s.len() != q) {
        return Err(Error::usage("sign vectors differ in length"));
    }
    let weights = node_weights(powers, draws)?;
    let mut column = Vec::with_capacity(local_signs.len());
    Ok((0..q)
        .map(|i| {
            column.clear();
            column.extend(local_signs.iter().map(|s| s.get(i)));
            superpose_weighted(&column, &weights, sigma_n2, rng)
        })
        .collect())
}

/// Differential energy detection: `sign(e+ - e-)`, ties resolving to `+1`.
pub fn detect_mv(pairs: &[SlotEnergyPair]) -> MvDecision {
    MvDecision(
        pairs
            .iter()
            .map(|p| {
                if p.delta() < 0.0 {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            })
            .collect(),
    )
}

/// Exact majority vote of the transmitted signs; ties resolve to `+1`.
pub fn majority_vote(local_signs: &[SignVector]) -> MvDecision {
    let q = local_signs.first().map_or(0, SignVector::len);
    let votes = (0..q)
        .map(|i| {
            let tally: i64 = local_signs.iter().map(|s| s.get(i).as_i8() as i64).sum();
            if tally < 0 {
                Sign::Minus
            } else {
                Sign::Plus
            }
        })
        .collect();
    MvDecision(votes)
}

/// Location of a coordinate's slot pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotAssignment {
    pub frame: usize,
    pub tau_plus: usize,
    pub tau_minus: usize,
}

/// Maps coordinate `i` onto adjacent slots; coordinates beyond one frame
/// spill into subsequent frames.
pub fn frame_map(i: usize, frame_capacity: usize) -> Result<SlotAssignment> {
    if frame_capacity < 2 || !frame_capacity.is_multiple_of(2) {
        return Err(Error::usage(format!(
            "frame capacity must be even and at least 2, got {frame_capacity}"
        )));
    }
    let pairs = frame_capacity / 2;
    let tau_plus = 2 * (i % pairs);
    Ok(SlotAssignment {
        frame: i / pairs,
        tau_plus,
        tau_minus: tau_plus + 1,
    })
}

/// Writes `round,coord,e_plus,e_minus,delta` rows.
pub fn write_slot_rows<W: Write>(
    out: &mut W,
    round: usize,
    pairs: &[SlotEnergyPair],
) -> std::io::Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        writeln!(
            out,
            "{round},{i},{},{},{}",
            p.e_plus(),
            p.e_minus(),
            p.delta()
        )?;
    }
    Ok(())
}

pub const SLOT_CSV_HEADER: &str = "round,coord,e_plus,e_minus,delta";
