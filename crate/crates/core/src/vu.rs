//! Fading and gain distributions of the scheduled virtual users (VUs).
//!
//! Every scheduled packet is one VU. In state `p` a fading draw `y` in
//! `(kappa_pq, kappa_p(q-1)]` schedules `mu - q + 1` packets, so the VU
//! fading density is the fading density reweighted by the stationary
//! expected packet count at `y`:
//!
//! ```text
//! p_VU(y) = c * w(y) * p_f(y),    w(y) = sum_p pi_p * #{q : kappa_pq < y}
//! ```
//!
//! `w` is piecewise constant on the merged threshold grid, which gives exact
//! band arithmetic for the cdf and its running integral. The product-channel
//! gain cdf follows by averaging over the uniform-in-area path loss.

use crate::chain::{StationaryDist, ThresholdSet};
use crate::channel::{FadingModel, PathLossModel};
use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::scheme::{describe, sse_targets, SchemeKind};

/// A cdf on `[0, inf)` with known kink/jump locations.
pub trait PiecewiseCdf {
    fn cdf(&self, x: f64) -> f64;

    /// Points where the cdf is not smooth, ascending.
    fn breakpoints(&self) -> Vec<f64>;
}

impl<T: PiecewiseCdf + ?Sized> PiecewiseCdf for &T {
    fn cdf(&self, x: f64) -> f64 {
        (**self).cdf(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
}

/// Unit step at `at`: a deterministic positive variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub at: f64,
}

impl PiecewiseCdf for PointMass {
    fn cdf(&self, x: f64) -> f64 {
        if x >= self.at {
            1.0
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.at]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VuDistribution {
    scheme: SchemeKind,
    fading: FadingModel,
    buffer: usize,
    thresholds: ThresholdSet,
    pi: Vec<f64>,
    /// Band starts, `grid[0] = 0`; the last band is unbounded.
    grid: Vec<f64>,
    /// Unnormalized expected packet count per band.
    weights: Vec<f64>,
    /// Normalized cdf at each band start.
    mass_at: Vec<f64>,
    /// `∫_0^{grid[k]} P_VU(y) dy`.
    integral_at: Vec<f64>,
    norm_const: f64,
}

impl VuDistribution {
    pub fn new(
        scheme: SchemeKind,
        thresholds: &ThresholdSet,
        pi: &StationaryDist,
        buffer: usize,
        fading: FadingModel,
    ) -> Result<Self> {
        if thresholds.n_states() != pi.len() {
            return Err(Error::Normalization("threshold and stationary dimensions differ".into()));
        }
        let mut marks: Vec<(f64, f64)> = Vec::new();
        for (p, ks) in thresholds.kappa.iter().enumerate() {
            let w = pi.get(p);
            if w <= 0.0 {
                continue;
            }
            for &k in ks {
                if k.is_finite() {
                    marks.push((k.max(0.0), w));
                }
            }
        }
        marks.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut grid = vec![0.0];
        let mut weights = Vec::new();
        let mut acc = 0.0;
        let mut i = 0;
        // zero thresholds count for every y > 0
        while i < marks.len() && marks[i].0 == 0.0 {
            acc += marks[i].1;
            i += 1;
        }
        weights.push(acc);
        while i < marks.len() {
            let t = marks[i].0;
            while i < marks.len() && marks[i].0 == t {
                acc += marks[i].1;
                i += 1;
            }
            grid.push(t);
            weights.push(acc);
        }

        let bands = grid.len();
        let mut raw_mass = Vec::with_capacity(bands + 1);
        raw_mass.push(0.0);
        for k in 0..bands {
            let hi = grid.get(k + 1).copied().unwrap_or(f64::INFINITY);
            let m = weights[k] * fading.cdf_diff(grid[k], hi);
            raw_mass.push(raw_mass[k] + m);
        }
        let total = raw_mass[bands];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Normalization(format!("expected packets per slot is {total}")));
        }
        let norm_const = 1.0 / total;
        let mass_at: Vec<f64> = raw_mass[..bands].iter().map(|m| m * norm_const).collect();

        let mut dist = Self {
            scheme,
            fading,
            buffer,
            thresholds: thresholds.clone(),
            pi: pi.pi.clone(),
            grid,
            weights,
            mass_at,
            integral_at: Vec::new(),
            norm_const,
        };
        let mut integral_at = Vec::with_capacity(bands);
        integral_at.push(0.0);
        for k in 0..bands - 1 {
            let step = dist.band_integral(k, dist.grid[k], dist.grid[k + 1]);
            integral_at.push(integral_at[k] + step);
        }
        dist.integral_at = integral_at;

        let top = dist.cdf_by_states(f64::INFINITY);
        if (top - 1.0).abs() > 1e-6 {
            return Err(Error::Normalization(format!("per-state cdf reaches {top} at infinity")));
        }
        Ok(dist)
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn fading(&self) -> FadingModel {
        self.fading
    }

    /// Global normalization `c`, the reciprocal of the mean packets per slot.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    pub fn mean_packets_per_slot(&self) -> f64 {
        1.0 / self.norm_const
    }

    pub fn thresholds(&self) -> &ThresholdSet {
        &self.thresholds
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn band(&self, y: f64) -> usize {
        self.grid.partition_point(|&t| t <= y).saturating_sub(1)
    }

    fn band_end(&self, k: usize) -> f64 {
        self.grid.get(k + 1).copied().unwrap_or(f64::INFINITY)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.norm_const * self.weights[self.band(y)] * self.fading.pdf(y)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let k = self.band(y);
        let v = self.mass_at[k] + self.norm_const * self.weights[k] * self.fading.cdf_diff(self.grid[k], y);
        v.min(1.0)
    }

    /// Scheme-specific route: `c * sum_p pi_p P_f(y | p)` using the per-state
    /// conditional cdf registered for the scheme.
    pub fn cdf_by_states(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let form = describe(self.scheme).state_cdf;
        let total: f64 = self
            .pi
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, &w)| w * form(self.thresholds.state(p), p.min(self.buffer), &self.fading, y))
            .sum();
        total * self.norm_const
    }

    fn band_integral(&self, k: usize, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        self.mass_at[k] * (hi - lo) + self.norm_const * self.weights[k] * self.fading.excess_integral(self.grid[k], lo, hi)
    }

    /// `∫_a^b P_VU(y) dy` for `0 <= a <= b < inf`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        let ka = self.band(a);
        let kb = self.band(b);
        if ka == kb {
            return self.band_integral(ka, a, b);
        }
        let head = self.band_integral(ka, a, self.band_end(ka));
        let middle = self.integral_at[kb] - self.integral_at[ka + 1];
        let tail = self.band_integral(kb, self.grid[kb], b);
        head + middle + tail
    }
}

impl PiecewiseCdf for VuDistribution {
    fn cdf(&self, x: f64) -> f64 {
        VuDistribution::cdf(self, x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.grid[1..].to_vec()
    }
}

fn band_mass(fading: &FadingModel, lo: f64, hi: f64, y: f64) -> f64 {
    fading.cdf_diff(lo, hi.min(y))
}

/// Best scheme: every target owns the band `(kappa_q, kappa_(q-1)]` and sends
/// `mu - q + 1` packets there.
pub fn state_cdf_best(kappa: &[f64], mu: usize, fading: &FadingModel, y: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut acc = 0.0;
    for (q, &k) in kappa.iter().enumerate().take(mu + 1) {
        acc += (mu - q + 1) as f64 * band_mass(fading, k, upper, y);
        upper = k;
    }
    acc
}

/// One-or-all: `mu + 1` packets above `kappa_0`, one packet on
/// `(kappa_mu, kappa_0]`, nothing below.
pub fn state_cdf_ooa(kappa: &[f64], mu: usize, fading: &FadingModel, y: f64) -> f64 {
    let k0 = kappa[0];
    let km = kappa[mu];
    let p = |v: f64| fading.cdf(v);
    if y <= km {
        0.0
    } else if y <= k0 {
        p(y) - p(km)
    } else {
        (mu + 1) as f64 * p(y) - mu as f64 * p(k0) - p(km)
    }
}

/// SSE scheme. Target vectors of length up to three use their expanded
/// piecewise forms; longer ones telescope over the allowed targets.
pub fn state_cdf_sse(kappa: &[f64], mu: usize, fading: &FadingModel, y: f64) -> f64 {
    let targets = sse_targets(mu);
    let p = |v: f64| fading.cdf(v);
    let km = kappa[mu];
    if y <= km {
        return 0.0;
    }
    let k0 = kappa[0];
    let m = mu as f64;
    match targets.len() {
        1 => p(y) - p(km),
        2 => {
            if y > k0 {
                (m + 1.0) * p(y) - p(k0) - p(kappa[1])
            } else {
                p(y) - p(km)
            }
        }
        3 => {
            let k1 = kappa[1];
            if y > k0 {
                (m + 1.0) * p(y) - p(k0) - (m - 1.0) * p(k1) - p(km)
            } else if y > k1 {
                m * p(y) - (m - 1.0) * p(k1) - p(km)
            } else {
                p(y) - p(km)
            }
        }
        _ => {
            let mut upper = f64::INFINITY;
            let mut acc = 0.0;
            for &q in &targets {
                let k = kappa[q];
                acc += (mu - q + 1) as f64 * band_mass(fading, k, upper, y);
                upper = k;
            }
            acc
        }
    }
}

/// How the gain cdf is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductRoute {
    /// Exact band integrals; valid for `alpha = 2`.
    ClosedForm,
    /// Adaptive quadrature of the single-integral form.
    Quadrature,
}

/// Gain cdf `P_h,VU(x)` of scheduled VUs under path loss times fading.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductChannelCdf {
    vu: VuDistribution,
    pathloss: PathLossModel,
    route: ProductRoute,
}

/// Picks the closed form when `alpha = 2` and quadrature otherwise.
pub fn product_channel_cdf(vu: VuDistribution, pathloss: PathLossModel) -> ProductChannelCdf {
    let route = if pathloss.alpha == 2.0 {
        ProductRoute::ClosedForm
    } else {
        ProductRoute::Quadrature
    };
    ProductChannelCdf { vu, pathloss, route }
}

impl ProductChannelCdf {
    pub fn with_route(vu: VuDistribution, pathloss: PathLossModel, route: ProductRoute) -> Result<Self> {
        if route == ProductRoute::ClosedForm && pathloss.alpha != 2.0 {
            return Err(Error::Domain("closed form needs alpha = 2".into()));
        }
        Ok(Self { vu, pathloss, route })
    }

    pub fn vu(&self) -> &VuDistribution {
        &self.vu
    }

    pub fn pathloss(&self) -> &PathLossModel {
        &self.pathloss
    }

    pub fn route(&self) -> ProductRoute {
        self.route
    }

    pub fn try_cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        match self.route {
            ProductRoute::ClosedForm => {
                let d2 = self.pathloss.delta * self.pathloss.delta;
                if d2 >= 1.0 {
                    return Ok(self.vu.cdf(x));
                }
                let v = self.vu.integral(x * d2, x) / (x * (1.0 - d2));
                Ok(v.clamp(0.0, 1.0))
            }
            ProductRoute::Quadrature => product_cdf_quadrature(&self.vu, &self.pathloss, x),
        }
    }
}

impl PiecewiseCdf for ProductChannelCdf {
    fn cdf(&self, x: f64) -> f64 {
        // the closed form cannot fail; quadrature failures fall back to the
        // best available estimate, which callers can check via `try_cdf`
        self.try_cdf(x).unwrap_or_else(|_| product_cdf_quadrature_loose(&self.vu, &self.pathloss, x))
    }

    fn breakpoints(&self) -> Vec<f64> {
        gain_breakpoints(&self.vu.breakpoints(), &self.pathloss)
    }
}

fn gain_breakpoints(fading_breaks: &[f64], pathloss: &PathLossModel) -> Vec<f64> {
    let up = pathloss.upper();
    let mut v: Vec<f64> = fading_breaks
        .iter()
        .flat_map(|&t| [t, t * up])
        .filter(|x| x.is_finite() && *x > 0.0)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Gain cdf of `s * f` for an arbitrary fading cdf, by quadrature of
/// `(1 / (z (1 - delta^2))) ∫_{z delta^2}^{z} F(y^(alpha/2)) dy`, `z = x^(2/alpha)`.
pub fn product_cdf_quadrature<D: PiecewiseCdf + ?Sized>(fading: &D, pathloss: &PathLossModel, x: f64) -> Result<f64> {
    product_cdf_quadrature_tol(fading, pathloss, x, Tolerance { abs: 1e-15, rel: 1e-10, max_panels: 4000 })
}

fn product_cdf_quadrature_loose<D: PiecewiseCdf + ?Sized>(fading: &D, pathloss: &PathLossModel, x: f64) -> f64 {
    let tol = Tolerance { abs: 1e-12, rel: 1e-6, max_panels: 20_000 };
    product_cdf_quadrature_tol(fading, pathloss, x, tol).unwrap_or(f64::NAN)
}

fn product_cdf_quadrature_tol<D: PiecewiseCdf + ?Sized>(
    fading: &D,
    pathloss: &PathLossModel,
    x: f64,
    tol: Tolerance,
) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let d2 = pathloss.delta * pathloss.delta;
    if d2 >= 1.0 {
        return Ok(fading.cdf(x));
    }
    let half = pathloss.alpha / 2.0;
    let z = x.powf(1.0 / half);
    // log substitution keeps panels matched to the scale of the fading law
    let breaks: Vec<f64> = fading.breakpoints().iter().filter(|t| **t > 0.0).map(|t| t.ln() / half).collect();
    let est = quad::integrate(|s| fading.cdf((s * half).exp()) * s.exp(), (z * d2).ln(), z.ln(), &breaks, tol)?;
    Ok((est.value / (z * (1.0 - d2))).clamp(0.0, 1.0))
}

/// Gain cdf for a generic fading distribution, always by quadrature.
#[derive(Debug, Clone)]
pub struct QuadratureProductCdf<D> {
    pub fading: D,
    pub pathloss: PathLossModel,
}

impl<D: PiecewiseCdf> PiecewiseCdf for QuadratureProductCdf<D> {
    fn cdf(&self, x: f64) -> f64 {
        product_cdf_quadrature(&self.fading, &self.pathloss, x)
            .unwrap_or_else(|_| product_cdf_quadrature_loose(&self.fading, &self.pathloss, x))
    }

    fn breakpoints(&self) -> Vec<f64> {
        gain_breakpoints(&self.fading.breakpoints(), &self.pathloss)
    }
}
