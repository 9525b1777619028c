//! Average transmit energy per bit of the scheduled virtual users.
//!
//! With successive interference cancellation the per-bit energy of a VU
//! population with gain cdf `P` at spectral efficiency `C` is
//!
//! ```text
//! E = (1/C) ∫_eps^inf (2^(C P(x)) - 1) / x^2 dx
//! ```
//!
//! Gains below `eps` are treated as `eps`, which keeps `E` finite for gain
//! laws with mass near zero. The integral is evaluated in `t = ln x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::vu::PiecewiseCdf;

const X_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    /// Energy per bit, normalized to unit noise density.
    pub eb_n0_linear: f64,
    pub eb_n0_db: f64,
    pub cutoff_eps: f64,
    /// Share of the energy collected on `[eps, 10 eps]`.
    pub tail_estimate: f64,
    /// Part of the energy spent on VUs with gain below `eps`.
    pub below_cutoff: f64,
    /// Halving `eps` moved the result by more than 1 %.
    pub divergent: bool,
}

pub fn to_db(x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(10.0 * x.log10())
    } else {
        Err(Error::Domain(format!("cannot express {x} in dB")))
    }
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn log_integral<D: PiecewiseCdf + ?Sized>(cdf: &D, c: f64, lo: f64, hi: f64, breaks: &[f64]) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let f = |t: f64| {
        let p = cdf.cdf(t.exp());
        (c * p * std::f64::consts::LN_2).exp_m1() * (-t).exp()
    };
    let tol = Tolerance { abs: 1e-13, rel: 1e-10, max_panels: 8000 };
    Ok(quad::integrate(f, lo.ln(), hi.ln(), breaks, tol)?.value / c)
}

/// Energy per bit for gain cdf `cdf`, spectral efficiency `c` and gain floor `eps`.
pub fn system_energy<D: PiecewiseCdf + ?Sized>(cdf: &D, c: f64, eps: f64) -> Result<EnergyResult> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("spectral efficiency {c}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("gain floor {eps}")));
    }
    let bp = cdf.breakpoints();
    let top = bp.iter().copied().filter(|x| x.is_finite()).fold(X_MAX, |a, b| a.max(100.0 * b));
    let breaks: Vec<f64> = bp.iter().filter(|x| **x > 0.0 && x.is_finite()).map(|x| x.ln()).collect();

    let split = (10.0 * eps).min(top);
    let near = log_integral(cdf, c, eps, split, &breaks)?;
    let far = log_integral(cdf, c, split, top, &breaks)?;
    // beyond `top` the cdf is taken as 1
    let tail = (2f64.powf(c) - 1.0) / (c * top);
    let energy = near + far + tail;
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::Domain(format!("energy evaluated to {energy}")));
    }
    let extra = log_integral(cdf, c, 0.5 * eps, eps, &breaks)?;
    Ok(EnergyResult {
        eb_n0_linear: energy,
        eb_n0_db: to_db(energy)?,
        cutoff_eps: eps,
        tail_estimate: near / energy,
        below_cutoff: (c * cdf.cdf(eps) * std::f64::consts::LN_2).exp_m1() / (c * eps),
        divergent: extra > 0.01 * energy,
    })
}

/// Quantile-space evaluation of the same energy:
/// `ln2 ∫_{P(eps)}^1 2^(C u) / Q(u) du + (2^(C P(eps)) - 1) / (C eps)`.
pub fn system_energy_quantile<D: PiecewiseCdf + ?Sized>(cdf: &D, c: f64, eps: f64) -> Result<f64> {
    if !(c > 0.0 && eps > 0.0) {
        return Err(Error::Domain("non-positive rate or floor".into()));
    }
    let bp = cdf.breakpoints();
    let top = bp.iter().copied().filter(|x| x.is_finite()).fold(X_MAX, |a, b| a.max(100.0 * b));
    let quantile = |u: f64| {
        let (mut lo, mut hi) = (eps.ln(), top.ln());
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf.cdf(mid.exp()) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi.exp()
    };
    let u0 = cdf.cdf(eps);
    let u1 = cdf.cdf(top);
    let mut breaks: Vec<f64> = bp.iter().map(|&x| cdf.cdf(x)).collect();
    breaks.extend(bp.iter().map(|&x| cdf.cdf(x * (1.0 - 1e-12))));
    let ln2 = std::f64::consts::LN_2;
    let body = quad::integrate(
        |u| ln2 * (c * u * ln2).exp() / quantile(u),
        u0,
        u1,
        &breaks,
        Tolerance { abs: 1e-13, rel: 1e-9, max_panels: 8000 },
    )?
    .value;
    let clamp = (c * u0 * ln2).exp_m1() / (c * eps);
    let tail = (2f64.powf(c) - 2f64.powf(c * u1)) / (c * top);
    Ok(body + clamp + tail)
}
