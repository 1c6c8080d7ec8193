//! Stochastic inter-satellite FSO channel.
//!
//! The intensity attenuation of a link is `I = h_l * h_p`, where
//! `h_l = C_FSPL / d^2` is free-space path loss at a distance drawn from a
//! uniform spherical shell `[d_min, d_max]` and `h_p` is the pointing loss of a
//! zero-boresight jitter model with density `xi^2 / a0^{xi^2} h^{xi^2 - 1}` on
//! `(0, a0]`. Both are sampled by inverse CDF. Fading is block-constant: one
//! draw per node per round, shared by both PPM slots of every coordinate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Minimum inter-satellite distance (m).
    pub d_min: f64,
    /// Maximum inter-satellite distance (m).
    pub d_max: f64,
    /// Optical carrier wavelength (m).
    pub lambda_opt: f64,
    /// Maximum collected-power fraction at zero displacement.
    pub a0: f64,
    /// Pointing-jitter shape parameter.
    pub xi_p: f64,
    /// Receiver noise variance (energy units).
    pub sigma_n2: f64,
    /// Free-space path-loss constant (m^2).
    pub c_fspl: f64,
}

impl ChannelParams {
    /// Builds parameters with the physical path-loss constant `(lambda_opt / 4 pi)^2`.
    pub fn new(
        d_min: f64,
        d_max: f64,
        lambda_opt: f64,
        a0: f64,
        xi_p: f64,
        sigma_n2: f64,
    ) -> Result<Self> {
        let params = ChannelParams {
            d_min,
            d_max,
            lambda_opt,
            a0,
            xi_p,
            sigma_n2,
            c_fspl: physical_c_fspl(lambda_opt),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_c_fspl(mut self, c_fspl: f64) -> Result<Self> {
        self.c_fspl = c_fspl;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma_n2(mut self, sigma_n2: f64) -> Result<Self> {
        self.sigma_n2 = sigma_n2;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("channel.{field}"), msg));
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return bad("d_min", "must be positive and finite");
        }
        if !(self.d_max > self.d_min && self.d_max.is_finite()) {
            return bad("d_max", "must exceed d_min");
        }
        if !(self.lambda_opt > 0.0 && self.lambda_opt.is_finite()) {
            return bad("lambda_opt", "must be positive");
        }
        if !(self.a0 > 0.0 && self.a0 <= 1.0) {
            return bad("a0", "must lie in (0, 1]");
        }
        if !(self.xi_p > 0.0 && self.xi_p.is_finite()) {
            return bad("xi_p", "must be positive and finite");
        }
        if !(self.sigma_n2 >= 0.0 && self.sigma_n2.is_finite()) {
            return bad("sigma_n2", "must be non-negative");
        }
        if !(self.c_fspl > 0.0 && self.c_fspl.is_finite()) {
            return bad("c_fspl", "must be positive");
        }
        Ok(())
    }

    /// Largest attainable intensity, reached at `d_min` with perfect pointing.
    pub fn max_intensity(&self) -> f64 {
        self.a0 * self.c_fspl / (self.d_min * self.d_min)
    }
}

/// `(lambda_opt / 4 pi)^2`.
pub fn physical_c_fspl(lambda_opt: f64) -> f64 {
    let r = lambda_opt / (4.0 * PI);
    r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelDraw {
    pub distance: f64,
    pub h_l: f64,
    pub h_p: f64,
    pub intensity: f64,
}

impl ChannelDraw {
    /// A fixed draw with the given intensity, for tests and ideal channels.
    pub fn unit(intensity: f64) -> Self {
        ChannelDraw {
            distance: 1.0,
            h_l: intensity,
            h_p: 1.0,
            intensity,
        }
    }
}

/// Inverse CDF of the shell distance law at `u` in `[0, 1]`.
pub fn distance_at(params: &ChannelParams, u: f64) -> f64 {
    let lo = params.d_min.powi(3);
    let hi = params.d_max.powi(3);
    (lo + u * (hi - lo))
        .cbrt()
        .clamp(params.d_min, params.d_max)
}

/// Inverse CDF of the pointing-loss law at `u` in `(0, 1]`.
pub fn pointing_at(params: &ChannelParams, u: f64) -> f64 {
    params.a0 * u.powf(1.0 / (params.xi_p * params.xi_p))
}

pub fn sample_distance(params: &ChannelParams, rng: &mut RandomStream) -> f64 {
    distance_at(params, rng.uniform())
}

pub fn sample_pointing(params: &ChannelParams, rng: &mut RandomStream) -> f64 {
    // u in (0, 1] keeps h_p strictly positive.
    let h = pointing_at(params, rng.uniform_open0());
    if h > 0.0 {
        h
    } else {
        f64::MIN_POSITIVE
    }
}

pub fn sample_channel(params: &ChannelParams, rng: &mut RandomStream) -> ChannelDraw {
    let distance = sample_distance(params, rng);
    let h_p = sample_pointing(params, rng);
    let h_l = params.c_fspl / (distance * distance);
    ChannelDraw {
        distance,
        h_l,
        h_p,
        intensity: h_l * h_p,
    }
}

/// Ensemble-average path loss `E[h_l]` over the shell.
pub fn geometric_efficiency(params: &ChannelParams) -> f64 {
    let (lo, hi) = (params.d_min, params.d_max);
    3.0 * params.c_fspl * (hi - lo) / (hi.powi(3) - lo.powi(3))
}

/// Mean pointing loss `E[h_p] = a0 xi^2 / (xi^2 + 1)`.
pub fn pointing_efficiency(params: &ChannelParams) -> f64 {
    let x2 = params.xi_p * params.xi_p;
    params.a0 * x2 / (x2 + 1.0)
}

/// Closed-form mean intensity `lambda = E[h_l] E[h_p]`.
pub fn lambda_eff(params: &ChannelParams) -> f64 {
    geometric_efficiency(params) * pointing_efficiency(params)
}

/// Mean intensity computed by numerical quadrature of both densities.
///
/// Independent of [`lambda_eff`]; used to cross-check it.
pub fn lambda_oracle(params: &ChannelParams) -> Result<f64> {
    params.validate()?;
    const TOL: f64 = 1e-11;
    let (lo, hi) = (params.d_min, params.d_max);
    let norm = hi.powi(3) - lo.powi(3);
    let shell_pdf = |d: f64| 3.0 * d * d / norm;
    let e_hl = quad::integrate(|d| params.c_fspl / (d * d) * shell_pdf(d), lo, hi, TOL)?;

    let x2 = params.xi_p * params.xi_p;
    let a0 = params.a0;
    let jitter_pdf = |h: f64| {
        if h <= 0.0 {
            0.0
        } else {
            x2 / a0.powf(x2) * h.powf(x2 - 1.0)
        }
    };
    let e_hp = quad::integrate(|h| h * jitter_pdf(h), 0.0, a0, TOL)?;
    Ok(e_hl * e_hp)
}
