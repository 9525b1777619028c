//! Finite-K slot-level uplink simulation of the threshold scheduler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anneal::ChannelModels;
use crate::chain::{SchemeSpec, ThresholdSet};
use crate::energy::to_db;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub users: usize,
    /// Measured slots, after the warm-up.
    pub slots: usize,
    pub warmup: usize,
    pub seed: u64,
    pub spec: SchemeSpec,
    pub thresholds: ThresholdSet,
    pub channel: ChannelModels,
}

impl SimConfig {
    pub fn new(users: usize, slots: usize, seed: u64, spec: SchemeSpec, thresholds: ThresholdSet, channel: ChannelModels) -> Self {
        Self {
            users,
            slots,
            warmup: 1000,
            seed,
            spec,
            thresholds,
            channel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.slots == 0 {
            return Err(Error::Config("simulation needs at least one user and one slot".into()));
        }
        if self.thresholds.n_states() != self.spec.n_states() {
            return Err(Error::Config("thresholds do not match the chain".into()));
        }
        for p in 0..self.spec.n_states() {
            if self.thresholds.state(p).len() != self.spec.mu(p) + 1 {
                return Err(Error::Config(format!("state {p} has the wrong number of thresholds")));
            }
        }
        self.thresholds.validate()
    }
}

/// Whole-run packet accounting, warm-up included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketLedger {
    pub arrivals: u64,
    pub sent: u64,
    pub dropped: u64,
    pub buffered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub empirical_theta_r: f64,
    pub max_successive_drops: usize,
    pub empirical_eb_n0_linear: f64,
    pub empirical_eb_n0_db: f64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    /// User-slot counts per state over the measured slots.
    pub state_occupancy: Vec<u64>,
    /// VUs whose gain fell below the floor and was raised to it.
    pub clamped: u64,
    pub ledger: PacketLedger,
}

impl SimReport {
    pub fn occupancy_frequencies(&self) -> Vec<f64> {
        let total: u64 = self.state_occupancy.iter().sum();
        self.state_occupancy.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// Total-variation distance between the empirical occupancy and `pi`.
    pub fn occupancy_tv(&self, pi: &[f64]) -> f64 {
        0.5 * self
            .occupancy_frequencies()
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Outcome of one user in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub next: usize,
    pub packets: usize,
}

/// Threshold decision in state `p` for fading `f`: schedule toward the
/// first `q` with `kappa_pq < f`, else move forward.
pub fn step_user(p: usize, f: f64, thresholds: &ThresholdSet, spec: &SchemeSpec) -> Step {
    let mu = spec.mu(p);
    let kappa = thresholds.state(p);
    match kappa.iter().position(|&k| k < f) {
        Some(q) => Step { next: q, packets: mu - q + 1 },
        None if p < spec.termination() => Step { next: p + 1, packets: 0 },
        // a zero fading draw in the termination state still sends one packet
        None => Step { next: mu, packets: 1 },
    }
}

/// SIC energy of VUs sorted by ascending gain, each at rate `rate`:
/// `sum_k (2^(k R) - 2^((k-1) R)) / h_k`.
pub fn sic_energy(gains: &[f64], rate: f64) -> Result<f64> {
    if gains.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Domain("SIC gains must be positive".into()));
    }
    if gains.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("SIC gains must be sorted ascending".into()));
    }
    Ok(sic_energy_sorted(gains, rate))
}

fn sic_energy_sorted(gains: &[f64], rate: f64) -> f64 {
    let mut below = 1.0;
    let mut total = 0.0;
    for (k, &h) in gains.iter().enumerate() {
        let level = ((k + 1) as f64 * rate).exp2();
        total += (level - below) / h;
        below = level;
    }
    total
}

pub fn run_sim(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let ch = &cfg.channel;
    let n_states = spec.n_states();
    let mut placement = substream(cfg.seed, "placement");
    let mut fading = substream(cfg.seed, "fading");
    let pathloss: Vec<f64> = (0..cfg.users).map(|_| ch.pathloss.sample(&mut placement)).collect();

    let mut state = vec![0usize; cfg.users];
    let mut run = vec![0usize; cfg.users];
    let mut occupancy = vec![0u64; n_states];
    let mut ledger = PacketLedger { arrivals: 0, sent: 0, dropped: 0, buffered: 0 };
    let (mut sent, mut dropped, mut clamped) = (0u64, 0u64, 0u64);
    let mut max_run = 0;
    let mut energy = 0.0;
    let rate = spec.spectral_efficiency / cfg.users as f64;
    let mut pool: Vec<f64> = Vec::with_capacity(cfg.users * (spec.buffer + 1));

    for slot in 0..cfg.warmup + cfg.slots {
        let measured = slot >= cfg.warmup;
        pool.clear();
        for u in 0..cfg.users {
            let p = state[u];
            if measured {
                occupancy[p] += 1;
            }
            let f: f64 = ch.fading.sample(&mut fading);
            let step = step_user(p, f, &cfg.thresholds, spec);
            ledger.arrivals += 1;
            if step.packets > 0 {
                run[u] = 0;
                ledger.sent += step.packets as u64;
                let h = pathloss[u] * f;
                let g = if h < ch.eps {
                    if measured {
                        clamped += step.packets as u64;
                    }
                    ch.eps
                } else {
                    h
                };
                if measured {
                    sent += step.packets as u64;
                    pool.extend(std::iter::repeat_n(g, step.packets));
                }
            } else if p >= spec.buffer {
                run[u] += 1;
                max_run = max_run.max(run[u]);
                ledger.dropped += 1;
                if measured {
                    dropped += 1;
                }
            }
            state[u] = step.next;
        }
        if measured && !pool.is_empty() {
            pool.sort_unstable_by(f64::total_cmp);
            energy += sic_energy_sorted(&pool, rate);
        }
    }
    ledger.buffered = state.iter().map(|&p| spec.mu(p) as u64).sum();

    let bits = sent as f64 * rate;
    let per_bit = if bits > 0.0 { energy / bits } else { 0.0 };
    Ok(SimReport {
        empirical_theta_r: dropped as f64 / (cfg.users as f64 * cfg.slots as f64),
        max_successive_drops: max_run,
        empirical_eb_n0_linear: per_bit,
        empirical_eb_n0_db: if per_bit > 0.0 { to_db(per_bit)? } else { f64::NEG_INFINITY },
        packets_sent: sent,
        packets_dropped: dropped,
        state_occupancy: occupancy,
        clamped,
        ledger,
    })
}

/// Independent replications with seeds `seed, seed + 1, ...`.
pub fn run_replications(cfg: &SimConfig, count: usize) -> Result<Vec<SimReport>> {
    let one = |r: usize| {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(r as u64);
        run_sim(&c)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(one).collect()
    }
}

/// Draws a shuffled copy of `gains`; used to check tie-order invariance.
pub fn shuffled<R: Rng + ?Sized>(gains: &[f64], rng: &mut R) -> Vec<f64> {
    let mut v = gains.to_vec();
    for i in (1..v.len()).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::SchemeKind;

    #[test]
    fn sic_energy_examples() {
        assert!((sic_energy(&[1.0], 0.5).unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(sic_energy(&[], 0.5).unwrap(), 0.0);
        let two = sic_energy(&[1.0, 2.0], 0.5).unwrap();
        let expect = (2f64.sqrt() - 1.0) + (2.0 - 2f64.sqrt()) / 2.0;
        assert!((two - expect).abs() < 1e-15);
        assert!((two - 0.7071).abs() < 1e-4);
        assert!(sic_energy(&[2.0, 1.0], 0.5).is_err());
        assert!(sic_energy(&[0.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn decision_rule_lookup() {
        let spec = SchemeSpec::new(SchemeKind::Best, 3, 1, 0.1, 0.5).unwrap();
        let mut kappa: Vec<Vec<f64>> = (0..=4).map(|p| vec![1.0; p.min(3) + 1]).collect();
        kappa[2] = vec![2.0, 1.0, 0.5];
        kappa[4] = vec![3.0, 2.0, 1.0, 0.0];
        let t = ThresholdSet { kappa };
        assert_eq!(step_user(2, 1.5, &t, &spec), Step { next: 1, packets: 2 });
        assert_eq!(step_user(2, 2.5, &t, &spec), Step { next: 0, packets: 3 });
        assert_eq!(step_user(2, 0.4, &t, &spec), Step { next: 3, packets: 0 });
        assert_eq!(step_user(2, 0.5, &t, &spec), Step { next: 3, packets: 0 });
        assert_eq!(step_user(4, 1e-9, &t, &spec), Step { next: 3, packets: 1 });
        assert_eq!(step_user(4, 0.0, &t, &spec), Step { next: 3, packets: 1 });
    }
}
