//! Channel primitives: unit-mean Rayleigh block fading and the path-loss law
//! of users spread uniformly over a disc with a forbidden inner region.
//!
//! Gains are products `h = s * f` of a static path loss `s >= 1` (normalized
//! to one at the cell border) and a fading power `f` redrawn every slot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Small-scale fading power distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FadingModel {
    /// Exponentially distributed power with mean one, `P_f(y) = 1 - exp(-y)`.
    #[default]
    RayleighUnitMean,
}

impl FadingModel {
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            FadingModel::RayleighUnitMean => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-y).exp_m1()
                }
            }
        }
    }

    /// `1 - cdf(y)`, computed without cancellation.
    pub fn survival(&self, y: f64) -> f64 {
        match self {
            FadingModel::RayleighUnitMean => {
                if y <= 0.0 {
                    1.0
                } else {
                    (-y).exp()
                }
            }
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match self {
            FadingModel::RayleighUnitMean => {
                if y < 0.0 {
                    0.0
                } else {
                    (-y).exp()
                }
            }
        }
    }

    /// Inverse cdf on `[0, 1)`.
    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("fading quantile needs u in [0, 1), got {u}")));
        }
        match self {
            FadingModel::RayleighUnitMean => Ok(-(-u).ln_1p()),
        }
    }

    /// Inverse of the survival function: the `y` with `Pr(f > y) = s`.
    /// Returns `+inf` for `s = 0`.
    pub fn inv_survival(&self, s: f64) -> f64 {
        match self {
            FadingModel::RayleighUnitMean => {
                if s <= 0.0 {
                    f64::INFINITY
                } else if s >= 1.0 {
                    0.0
                } else {
                    -s.ln()
                }
            }
        }
    }

    /// `P_f(hi) - P_f(lo)` for `lo <= hi`, accurate when both lie far in the tail.
    pub fn cdf_diff(&self, lo: f64, hi: f64) -> f64 {
        match self {
            FadingModel::RayleighUnitMean => {
                let lo = lo.max(0.0);
                if hi <= lo {
                    return 0.0;
                }
                if hi.is_infinite() {
                    return (-lo).exp();
                }
                -(-lo).exp() * (-(hi - lo)).exp_m1()
            }
        }
    }

    /// `∫_lo^hi (P_f(y) - P_f(base)) dy` for `base <= lo <= hi`.
    ///
    /// Every term of the expansion is nonnegative, so the result keeps full
    /// relative precision for short intervals near zero.
    pub fn excess_integral(&self, base: f64, lo: f64, hi: f64) -> f64 {
        match self {
            FadingModel::RayleighUnitMean => {
                if hi <= lo {
                    return 0.0;
                }
                let a = lo - base;
                let h = hi - lo;
                let head = h * (-(-a).exp_m1());
                let tail = (-a).exp() * phi(h);
                (-base.max(0.0)).exp() * (head + tail)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        // u in [0, 1) keeps the quantile finite
        self.inv_cdf(u).unwrap_or(0.0)
    }
}

/// `h - 1 + exp(-h)`, with a series branch for small `h`.
pub(crate) fn phi(h: f64) -> f64 {
    if h < 1e-3 {
        let h2 = h * h;
        h2 * (0.5 - h / 6.0 + h2 / 24.0 - h2 * h / 120.0)
    } else {
        h + (-h).exp_m1()
    }
}

/// Path-loss distribution for users uniformly placed in a unit disc minus a
/// forbidden disc of radius `delta` around the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub delta: f64,
    pub alpha: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            delta: 0.01,
            alpha: 2.0,
        }
    }
}

impl PathLossModel {
    pub fn new(delta: f64, alpha: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1], got {delta}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { delta, alpha })
    }

    /// Largest attainable path-loss gain, `delta^-alpha`.
    pub fn upper(&self) -> f64 {
        self.delta.powf(-self.alpha)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 1.0 {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let d2 = self.delta * self.delta;
        1.0 - (x.powf(-2.0 / self.alpha) - d2) / (1.0 - d2)
    }

    pub fn inv_cdf(&self, u: f64) -> f64 {
        let d2 = self.delta * self.delta;
        let u = u.clamp(0.0, 1.0);
        let r2 = d2 + (1.0 - u) * (1.0 - d2);
        r2.powf(-self.alpha / 2.0).min(self.upper())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inv_cdf(rng.gen())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserGain {
    pub pathloss: f64,
    pub fading: f64,
    pub gain: f64,
}

/// Draws an independent (path loss, fading) pair by inverse-cdf sampling.
pub fn sample_user_gain<R: Rng + ?Sized>(
    rng: &mut R,
    pathloss: &PathLossModel,
    fading: &FadingModel,
) -> UserGain {
    let s = pathloss.sample(rng);
    let f = fading.sample(rng);
    UserGain {
        pathloss: s,
        fading: f,
        gain: s * f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn rayleigh_closed_forms() {
        let f = FadingModel::RayleighUnitMean;
        assert_eq!(f.cdf(0.0), 0.0);
        assert!((f.cdf(1.0) - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!((f.inv_cdf(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(f.inv_cdf(1.0).is_err());
        assert!(f.inv_cdf(-0.1).is_err());
        for &y in &[1e-9, 0.3, 2.0] {
            let back = f.inv_cdf(f.cdf(y)).unwrap();
            assert!((back - y).abs() <= 1e-12 * y.max(1.0), "{y} -> {back}");
        }
        for &y in &[0.3, 17.0, 300.0] {
            assert!((f.inv_survival(f.survival(y)) - y).abs() <= 1e-12 * y);
        }
        assert_eq!(f.inv_survival(0.0), f64::INFINITY);
        assert!((f.inv_survival(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn excess_integral_matches_direct_form() {
        let f = FadingModel::RayleighUnitMean;
        // ∫_lo^hi (e^-base - e^-y) dy
        let direct = |b: f64, lo: f64, hi: f64| (hi - lo) * (-b).exp() - ((-lo).exp() - (-hi).exp());
        for &(b, lo, hi) in &[(0.0, 0.0, 1.0), (0.5, 0.7, 3.0), (1.0, 1.0, 1.5), (2.0, 4.0, 9.0)] {
            let got = f.excess_integral(b, lo, hi);
            assert!((got - direct(b, lo, hi)).abs() < 1e-13, "{b} {lo} {hi}");
        }
        // tiny interval at the origin: y^2/2 to leading order
        let tiny = f.excess_integral(0.0, 0.0, 1e-7);
        assert!((tiny - 0.5e-14).abs() / 0.5e-14 < 1e-6);
    }

    #[test]
    fn pathloss_cdf_branches() {
        let pl = PathLossModel::default();
        assert_eq!(pl.cdf(0.5), 0.0);
        assert_eq!(pl.cdf(1.0), 0.0);
        assert_eq!(pl.cdf(pl.upper()), 1.0);
        let expected = 1.0 - (0.5 - 1e-4) / 0.9999;
        assert!((pl.cdf(2.0) - expected).abs() < 1e-14);
        assert!((pl.cdf(2.0) - 0.50005).abs() < 1e-5);
        for &u in &[0.0, 0.1, 0.5, 0.9, 0.999] {
            assert!((pl.cdf(pl.inv_cdf(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn pathloss_rejects_bad_parameters() {
        assert!(PathLossModel::new(0.0, 2.0).is_err());
        assert!(PathLossModel::new(1.5, 2.0).is_err());
        assert!(PathLossModel::new(0.1, -1.0).is_err());
        assert!(PathLossModel::new(1.0, 3.0).is_ok());
    }

    #[test]
    fn unit_forbidden_radius_pins_pathloss() {
        let pl = PathLossModel::new(1.0, 2.0).unwrap();
        let mut rng = substream(3, "placement");
        for _ in 0..1000 {
            assert_eq!(pl.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let pl = PathLossModel::default();
        let f = FadingModel::RayleighUnitMean;
        let draw = |seed| {
            let mut rng = substream(seed, "fading");
            (0..50).map(|_| sample_user_gain(&mut rng, &pl, &f).gain).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }
}
