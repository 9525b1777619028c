//! Simulated annealing over valid transition matrices with the fast-annealing
//! schedule `T_j = T0 / (c_sa j + 1)` and Metropolis acceptance.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{build_mask, drop_rate, stationary, thresholds_from_probs, SchemeSpec, StationaryDist, ThresholdSet, TransitionMatrix};
use crate::channel::{FadingModel, PathLossModel};
use crate::energy::{system_energy, EnergyResult};
use crate::error::{Error, Result};
use crate::rng::{indexed_substream, StreamRng};
use crate::vu::{product_channel_cdf, VuDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    #[serde(rename = "T0")]
    pub t0: f64,
    pub c_sa: f64,
    pub temp_steps: usize,
    /// Candidates per temperature; `None` means `50 (M + 1)`.
    pub iters_per_temp: Option<usize>,
    pub step_scale: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            c_sa: 10.0,
            temp_steps: 100,
            iters_per_temp: None,
            step_scale: 0.03,
            seed: 0,
            restarts: 4,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::Config(format!("T0 must be positive, got {}", self.t0)));
        }
        if !(self.c_sa > 0.0 && self.c_sa.is_finite()) {
            return Err(Error::Config(format!("c_sa must be positive, got {}", self.c_sa)));
        }
        if self.temp_steps == 0 || self.restarts == 0 || self.iters_per_temp == Some(0) {
            return Err(Error::Config("annealing counts must be at least 1".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(Error::Config(format!("step_scale must lie in (0, 1], got {}", self.step_scale)));
        }
        Ok(())
    }

    pub fn candidates_per_temp(&self, spec: &SchemeSpec) -> usize {
        self.iters_per_temp.unwrap_or(50 * spec.n_states())
    }
}

/// Channel description shared by the optimizer and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModels {
    pub fading: FadingModel,
    pub pathloss: PathLossModel,
    /// Gain floor of the energy integral.
    pub eps: f64,
}

impl Default for ChannelModels {
    fn default() -> Self {
        Self {
            fading: FadingModel::default(),
            pathloss: PathLossModel::default(),
            eps: 1e-6,
        }
    }
}

/// Everything derived from one transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub pi: StationaryDist,
    pub theta_r: f64,
    pub thresholds: ThresholdSet,
    pub energy: EnergyResult,
}

/// Matrix → stationary law → thresholds → VU law → gain cdf → energy.
pub fn evaluate(spec: &SchemeSpec, q: &TransitionMatrix, channel: &ChannelModels) -> Result<Evaluation> {
    let pi = stationary(q)?;
    let theta_r = drop_rate(q, &pi);
    energy_of(spec, q, pi, theta_r, channel)
}

fn energy_of(
    spec: &SchemeSpec,
    q: &TransitionMatrix,
    pi: StationaryDist,
    theta_r: f64,
    channel: &ChannelModels,
) -> Result<Evaluation> {
    let thresholds = thresholds_from_probs(q, &channel.fading)?;
    let vu = VuDistribution::new(spec.scheme, &thresholds, &pi, spec.buffer, channel.fading)?;
    let gain = product_channel_cdf(vu, channel.pathloss);
    let energy = system_energy(&gain, spec.spectral_efficiency, channel.eps)?;
    Ok(Evaluation { pi, theta_r, thresholds, energy })
}

pub fn fa_temperature(t0: f64, c_sa: f64, j: usize) -> f64 {
    t0 / (c_sa * j as f64 + 1.0)
}

/// Adds `step` to `alpha_{p,target}` (clamped to `[0, 1]`) and rebalances the
/// row: the forward entry absorbs the residual below `M`, row `M` is
/// rescaled. `None` if the forward entry would turn negative.
pub fn perturb_entry(q: &TransitionMatrix, p: usize, target: usize, step: f64) -> Option<TransitionMatrix> {
    let m = q.termination();
    let old = q.get(p, target);
    let new = (old + step).clamp(0.0, 1.0);
    let mut out = q.clone();
    out.set(p, target, new);
    if p < m {
        let sched = out.scheduling_mass(p);
        let fwd = 1.0 - sched;
        if fwd < -1e-12 {
            return None;
        }
        out.set(p, p + 1, if fwd < 1e-15 { 0.0 } else { fwd });
    } else {
        let sched = out.scheduling_mass(p);
        if !(sched > 0.0) {
            return None;
        }
        let mu = q.structure().mu(p);
        for dst in 0..=mu {
            let v = out.get(p, dst);
            out.set(p, dst, v / sched);
        }
    }
    Some(out)
}

fn free_states(q: &TransitionMatrix) -> Vec<usize> {
    let m = q.termination();
    (0..=m).filter(|&p| p < m || q.structure().targets(p).len() > 1).collect()
}

/// Random single-entry move; retries up to 100 times.
pub fn perturb<R: Rng + ?Sized>(q: &TransitionMatrix, step_scale: f64, rng: &mut R) -> Result<TransitionMatrix> {
    let states = free_states(q);
    if states.is_empty() {
        return Err(Error::Infeasible("the structure has no free transition probability".into()));
    }
    for _ in 0..100 {
        let p = states[rng.gen_range(0..states.len())];
        let targets = q.structure().targets(p);
        let target = targets[rng.gen_range(0..targets.len())];
        let step = rng.gen_range(-step_scale..=step_scale);
        if let Some(c) = perturb_entry(q, p, target, step) {
            return Ok(c);
        }
    }
    Err(Error::Infeasible("no valid perturbation within 100 retries".into()))
}

/// Moves a share `1 - keep` of every drop entry onto the row's scheduling
/// targets in proportion to their mass (uniformly if they have none).
fn scale_drops(q: &TransitionMatrix, keep: f64) -> TransitionMatrix {
    let mut out = q.clone();
    let m = q.termination();
    for p in q.buffer()..m {
        let fwd = q.forward(p);
        let moved = fwd * (1.0 - keep);
        let targets = q.structure().targets(p);
        let sched = q.scheduling_mass(p);
        for &t in targets {
            let share = if sched > 0.0 { q.get(p, t) / sched } else { 1.0 / targets.len() as f64 };
            out.set(p, t, q.get(p, t) + moved * share);
        }
        out.set(p, p + 1, fwd * keep);
    }
    out
}

/// Largest drop scaling that meets the drop target.
fn repair(q: &TransitionMatrix, theta_tar: f64) -> Result<TransitionMatrix> {
    let rate = |m: &TransitionMatrix| -> Result<f64> { Ok(drop_rate(m, &stationary(m)?)) };
    if rate(q)? <= theta_tar {
        return Ok(q.clone());
    }
    let floor = scale_drops(q, 0.0);
    if rate(&floor)? > theta_tar {
        return Err(Error::Infeasible(format!("no matrix reaches drop rate {theta_tar}")));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if rate(&scale_drops(q, mid))? <= theta_tar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(scale_drops(q, lo))
}

fn random_matrix<R: Rng + ?Sized>(spec: &SchemeSpec, rng: &mut R) -> TransitionMatrix {
    let structure = Arc::new(build_mask(spec));
    let mut q = TransitionMatrix::zeros(structure.clone());
    let m = structure.termination();
    for p in 0..=m {
        let targets = structure.targets(p);
        let mut w: Vec<f64> = (0..targets.len() + usize::from(p < m)).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        for (i, &t) in targets.iter().enumerate() {
            q.set(p, t, w[i]);
        }
        if p < m {
            q.set(p, p + 1, w[targets.len()]);
        }
    }
    q
}

/// Starting matrix of the given restart: the uniform matrix for restart 0,
/// a random one otherwise, repaired to meet the drop target.
pub fn initial_matrix<R: Rng + ?Sized>(spec: &SchemeSpec, restart: usize, constrained: bool, rng: &mut R) -> Result<TransitionMatrix> {
    let q = if restart == 0 {
        TransitionMatrix::uniform(Arc::new(build_mask(spec)))
    } else {
        random_matrix(spec, rng)
    };
    if constrained {
        repair(&q, spec.theta_tar)
    } else {
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealResult {
    pub spec: SchemeSpec,
    pub q_star: TransitionMatrix,
    pub eval_star: Evaluation,
    /// Configuration held by the chain when the schedule ended.
    pub q_final: TransitionMatrix,
    pub energy_final: f64,
    /// Best energy among accepted moves only; equals the global best unless
    /// the best candidate was rejected by the muting step.
    pub energy_accepted_best: f64,
    pub theta_lim: Option<f64>,
    pub delta: Option<f64>,
    /// Best-so-far energy after each temperature step of the winning restart.
    pub trace: Vec<f64>,
    pub seed: u64,
    pub restart: usize,
    pub candidates: usize,
    pub infeasible: usize,
    pub constrained: bool,
}

impl AnnealResult {
    pub fn energy_star(&self) -> &EnergyResult {
        &self.eval_star.energy
    }

    pub fn theta_r_star(&self) -> f64 {
        self.eval_star.theta_r
    }
}

fn run_chain(spec: &SchemeSpec, sa: &SaConfig, channel: &ChannelModels, constrained: bool, restart: usize) -> Result<AnnealResult> {
    let mut rng: StreamRng = indexed_substream(sa.seed, "optimizer", restart as u64);
    let start = initial_matrix(spec, restart, constrained, &mut rng)?;
    let first = evaluate(spec, &start, channel)?;

    let mut current = start.clone();
    let mut current_energy = first.energy.eb_n0_linear;
    let mut best = start;
    let mut best_eval = first;
    let mut accepted_best = current_energy;
    let per_temp = sa.candidates_per_temp(spec);
    let mut trace = Vec::with_capacity(sa.temp_steps);
    let mut candidates = 0;
    let mut infeasible = 0;

    for j in 0..sa.temp_steps {
        let temp = fa_temperature(sa.t0, sa.c_sa, j);
        for _ in 0..per_temp {
            let cand = perturb(&current, sa.step_scale, &mut rng)?;
            candidates += 1;
            let Ok(pi) = stationary(&cand) else {
                infeasible += 1;
                continue;
            };
            let theta = drop_rate(&cand, &pi);
            if constrained && theta > spec.theta_tar {
                infeasible += 1;
                continue;
            }
            let Ok(ev) = energy_of(spec, &cand, pi, theta, channel) else {
                infeasible += 1;
                continue;
            };
            let e = ev.energy.eb_n0_linear;
            let accept = e <= current_energy || rng.gen::<f64>() < (-(e - current_energy) / temp).exp();
            if e < best_eval.energy.eb_n0_linear {
                best = cand.clone();
                best_eval = ev;
            }
            if accept {
                current = cand;
                current_energy = e;
                accepted_best = accepted_best.min(e);
            }
        }
        trace.push(best_eval.energy.eb_n0_linear);
    }

    Ok(AnnealResult {
        spec: *spec,
        q_star: best,
        eval_star: best_eval,
        q_final: current,
        energy_final: current_energy,
        energy_accepted_best: accepted_best,
        theta_lim: None,
        delta: None,
        trace,
        seed: sa.seed,
        restart,
        candidates,
        infeasible,
        constrained,
    })
}

fn run_restarts(spec: &SchemeSpec, sa: &SaConfig, channel: &ChannelModels, constrained: bool) -> Result<AnnealResult> {
    spec.validate()?;
    sa.validate()?;
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<AnnealResult>> = {
        use rayon::prelude::*;
        (0..sa.restarts).into_par_iter().map(|r| run_chain(spec, sa, channel, constrained, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<AnnealResult>> = (0..sa.restarts).map(|r| run_chain(spec, sa, channel, constrained, r)).collect();

    let mut winner: Option<AnnealResult> = None;
    for run in runs {
        let run = run?;
        let better = winner
            .as_ref()
            .is_none_or(|w| run.eval_star.energy.eb_n0_linear < w.eval_star.energy.eb_n0_linear);
        if better {
            winner = Some(run);
        }
    }
    Ok(winner.expect("at least one restart"))
}

/// Minimizes the system energy subject to the drop target of `spec`.
pub fn anneal(spec: &SchemeSpec, sa: &SaConfig, channel: &ChannelModels) -> Result<AnnealResult> {
    run_restarts(spec, sa, channel, true)
}

/// Energy-minimal solution under the continuity constraint alone.
pub fn anneal_unconstrained(spec: &SchemeSpec, sa: &SaConfig, channel: &ChannelModels) -> Result<AnnealResult> {
    run_restarts(spec, sa, channel, false)
}

/// Drop rate of the energy-minimal policy without a drop target.
pub fn theta_lim(spec: &SchemeSpec, sa: &SaConfig, channel: &ChannelModels) -> Result<f64> {
    Ok(anneal_unconstrained(spec, sa, channel)?.theta_r_star())
}

/// `1 - theta_r / min(theta_tar, theta_lim)`.
pub fn delta_measure(theta_r_star: f64, theta_tar: f64, theta_lim: f64) -> Result<f64> {
    let denom = theta_tar.min(theta_lim);
    if !(denom > 0.0) {
        return Err(Error::Domain("min(theta_tar, theta_lim) must be positive".into()));
    }
    Ok(1.0 - theta_r_star / denom)
}

/// Constrained anneal followed by the `theta_lim` run and the `delta` measure.
pub fn anneal_with_diagnostics(spec: &SchemeSpec, sa: &SaConfig, channel: &ChannelModels) -> Result<AnnealResult> {
    let mut res = anneal(spec, sa, channel)?;
    let lim = theta_lim(spec, sa, channel)?;
    res.theta_lim = Some(lim);
    res.delta = delta_measure(res.theta_r_star(), spec.theta_tar, lim).ok();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::scheme::SchemeKind;

    fn two_state(a00: f64) -> TransitionMatrix {
        let spec = SchemeSpec::new(SchemeKind::Best, 0, 1, 0.1, 0.5).unwrap();
        TransitionMatrix::from_rows(Arc::new(build_mask(&spec)), &[vec![a00, 1.0 - a00], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn fast_annealing_schedule() {
        assert_eq!(fa_temperature(3.0, 7.0, 0), 3.0);
        assert_eq!(fa_temperature(10.0, 1.0, 4), 2.0);
        assert_eq!(fa_temperature(1.0, 0.5, 2), 0.5);
    }

    #[test]
    fn step_rebalances_forward_entry() {
        let q = perturb_entry(&two_state(0.5), 0, 0, 0.1).unwrap();
        assert!((q.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((q.get(0, 1) - 0.4).abs() < 1e-15);
        let full = perturb_entry(&two_state(0.95), 0, 0, 0.1).unwrap();
        assert_eq!(full.get(0, 1), 0.0);
    }

    #[test]
    fn termination_row_is_rescaled() {
        let spec = SchemeSpec::new(SchemeKind::Best, 1, 1, 0.1, 0.5).unwrap();
        let q = TransitionMatrix::uniform(Arc::new(build_mask(&spec)));
        let c = perturb_entry(&q, 2, 0, 0.3).unwrap();
        assert!((c.scheduling_mass(2) - 1.0).abs() < 1e-15);
        assert!((c.get(2, 0) - 0.8 / 1.3).abs() < 1e-15);
        c.validate(1e-12).unwrap();
    }

    #[test]
    fn overfull_row_is_refused() {
        let spec = SchemeSpec::new(SchemeKind::Best, 1, 1, 0.1, 0.5).unwrap();
        let q = TransitionMatrix::from_rows(
            Arc::new(build_mask(&spec)),
            &[vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0]],
        )
        .unwrap();
        assert!(perturb_entry(&q, 1, 0, 0.2).is_none());
    }

    #[test]
    fn repair_meets_target() {
        let spec = SchemeSpec::new(SchemeKind::Best, 1, 2, 0.01, 0.5).unwrap();
        let q = initial_matrix(&spec, 0, true, &mut substream(1, "t")).unwrap();
        let theta = drop_rate(&q, &stationary(&q).unwrap());
        assert!(theta <= 0.01 && theta > 0.009, "{theta}");
        q.validate(1e-12).unwrap();
        let r = initial_matrix(&spec, 3, true, &mut substream(1, "t")).unwrap();
        r.validate(1e-12).unwrap();
    }

    #[test]
    fn delta_measure_cases() {
        assert_eq!(delta_measure(0.1, 0.1, 0.3).unwrap(), 0.0);
        assert!((delta_measure(0.018, 0.02, 0.3).unwrap() - 0.1).abs() < 1e-12);
        assert!((delta_measure(0.09, 0.5, 0.1).unwrap() - 0.1).abs() < 1e-12);
        assert!(delta_measure(0.0, 0.0, 0.3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SaConfig::default().validate().is_ok());
        assert!(SaConfig { step_scale: 0.0, ..Default::default() }.validate().is_err());
        assert!(SaConfig { step_scale: 1.5, ..Default::default() }.validate().is_err());
        assert!(SaConfig { restarts: 0, ..Default::default() }.validate().is_err());
        assert!(SaConfig { t0: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_drop_target_forces_always_transmit() {
        let spec = SchemeSpec::new(SchemeKind::Best, 0, 1, 0.0, 0.5).unwrap();
        let sa = SaConfig { temp_steps: 5, iters_per_temp: Some(20), ..Default::default() };
        let ch = ChannelModels::default();
        let res = anneal(&spec, &sa, &ch).unwrap();
        assert_eq!(res.theta_r_star(), 0.0);
        let always = evaluate(&spec, &two_state(1.0), &ch).unwrap();
        assert_eq!(res.energy_star().eb_n0_linear, always.energy.eb_n0_linear);
    }

    #[test]
    fn trace_is_nonincreasing_and_run_is_reproducible() {
        let spec = SchemeSpec::new(SchemeKind::Ooa, 1, 1, 0.05, 0.5).unwrap();
        let sa = SaConfig { temp_steps: 10, iters_per_temp: Some(30), seed: 9, restarts: 2, ..Default::default() };
        let ch = ChannelModels::default();
        let a = anneal(&spec, &sa, &ch).unwrap();
        let b = anneal(&spec, &sa, &ch).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.theta_r_star() <= 0.05 + 1e-12);
        a.q_star.validate(1e-9).unwrap();
        assert!(a.energy_accepted_best >= a.energy_star().eb_n0_linear);
    }
}
