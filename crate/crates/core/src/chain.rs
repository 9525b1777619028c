//! Per-user Markov chain over the composite state `p = d + b` (successive
//! drops plus buffered packets), its transition structure for each scheme,
//! stationary law and the drop/buffer functionals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::FadingModel;
use crate::error::{Error, Result};
use crate::scheme::SchemeKind;

/// Shape of the scheduling problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub scheme: SchemeKind,
    /// Buffer slots `B`.
    #[serde(rename = "B")]
    pub buffer: usize,
    /// Maximum successive drops `N`.
    #[serde(rename = "N")]
    pub continuity: usize,
    /// Target long-run drop rate.
    pub theta_tar: f64,
    /// Spectral efficiency in bits/s/Hz.
    #[serde(rename = "C")]
    pub spectral_efficiency: f64,
}

impl SchemeSpec {
    pub fn new(
        scheme: SchemeKind,
        buffer: usize,
        continuity: usize,
        theta_tar: f64,
        spectral_efficiency: f64,
    ) -> Result<Self> {
        let spec = Self {
            scheme,
            buffer,
            continuity,
            theta_tar,
            spectral_efficiency,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.buffer + self.continuity == 0 {
            return Err(Error::Config("B + N must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta_tar) {
            return Err(Error::Config(format!("theta_tar must lie in [0, 1], got {}", self.theta_tar)));
        }
        if !(self.spectral_efficiency > 0.0 && self.spectral_efficiency.is_finite()) {
            return Err(Error::Config(format!(
                "spectral efficiency must be positive, got {}",
                self.spectral_efficiency
            )));
        }
        Ok(())
    }

    /// Termination state `M = B + N`.
    pub fn termination(&self) -> usize {
        self.buffer + self.continuity
    }

    pub fn n_states(&self) -> usize {
        self.termination() + 1
    }

    pub fn mu(&self, p: usize) -> usize {
        p.min(self.buffer)
    }
}

/// Positional role of an entry `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionKind {
    Schedule,
    Buffer,
    Drop,
    Forbidden,
}

/// Structural zeros and entry roles for one `(scheme, B, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub scheme: SchemeKind,
    pub buffer: usize,
    pub continuity: usize,
    n: usize,
    mask: Vec<bool>,
    kinds: Vec<TransitionKind>,
    targets: Vec<Vec<usize>>,
}

impl Structure {
    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn termination(&self) -> usize {
        self.n - 1
    }

    pub fn mu(&self, p: usize) -> usize {
        p.min(self.buffer)
    }

    pub fn allowed(&self, p: usize, q: usize) -> bool {
        self.mask[p * self.n + q]
    }

    pub fn kind(&self, p: usize, q: usize) -> TransitionKind {
        self.kinds[p * self.n + q]
    }

    /// Allowed scheduling targets of state `p`, ascending.
    pub fn targets(&self, p: usize) -> &[usize] {
        &self.targets[p]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Count of free probabilities (row M loses one to normalization).
    pub fn free_parameters(&self) -> usize {
        let m = self.termination();
        (0..=m).map(|p| self.targets[p].len()).sum::<usize>() - 1
    }
}

/// Builds the allowed-transition mask and entry roles for `spec`.
pub fn build_mask(spec: &SchemeSpec) -> Structure {
    let n = spec.n_states();
    let m = n - 1;
    let b = spec.buffer;
    let mut mask = vec![false; n * n];
    let mut kinds = vec![TransitionKind::Forbidden; n * n];
    let mut targets = Vec::with_capacity(n);
    for p in 0..n {
        let mu = p.min(b);
        for q in 0..=mu {
            kinds[p * n + q] = TransitionKind::Schedule;
        }
        let t = spec.scheme.targets(mu);
        for &q in &t {
            mask[p * n + q] = true;
        }
        targets.push(t);
        if p < m {
            kinds[p * n + p + 1] = if p < b {
                TransitionKind::Buffer
            } else {
                TransitionKind::Drop
            };
            mask[p * n + p + 1] = true;
        }
    }
    Structure {
        scheme: spec.scheme,
        buffer: b,
        continuity: spec.continuity,
        n,
        mask,
        kinds,
        targets,
    }
}

/// Packets sent on the transition `p -> q`: `min(p, B) - q + 1`.
pub fn packets_scheduled(p: usize, q: usize, buffer: usize) -> Result<usize> {
    let mu = p.min(buffer);
    if q > mu {
        return Err(Error::NotScheduling { p, q, mu });
    }
    Ok(mu - q + 1)
}

/// Row-stochastic matrix over the chain states, tied to its structure.
#[derive(Clone, PartialEq)]
pub struct TransitionMatrix {
    structure: Arc<Structure>,
    entries: Vec<f64>,
}

impl fmt::Debug for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "TransitionMatrix({}, B={}, N={})", self.structure.scheme, self.buffer(), self.structure.continuity)?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            writeln!(f, "  [{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

impl TransitionMatrix {
    pub fn zeros(structure: Arc<Structure>) -> Self {
        let n = structure.n_states();
        Self {
            structure,
            entries: vec![0.0; n * n],
        }
    }

    /// Equal mass on every allowed scheduling target and on the forward
    /// entry; row M splits its mass over its targets.
    pub fn uniform(structure: Arc<Structure>) -> Self {
        let mut q = Self::zeros(structure.clone());
        let m = structure.termination();
        for p in 0..=m {
            let t = structure.targets(p);
            let share = if p < m {
                1.0 / (t.len() + 1) as f64
            } else {
                1.0 / t.len() as f64
            };
            for &dst in t {
                q.set(p, dst, share);
            }
            if p < m {
                q.set(p, p + 1, share);
            }
        }
        q
    }

    pub fn from_rows(structure: Arc<Structure>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = structure.n_states();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix(format!("expected a {n}x{n} matrix")));
        }
        let q = Self {
            structure,
            entries: rows.iter().flatten().copied().collect(),
        };
        q.validate(1e-9)?;
        Ok(q)
    }

    pub fn structure(&self) -> &Arc<Structure> {
        &self.structure
    }

    pub fn n_states(&self) -> usize {
        self.structure.n_states()
    }

    pub fn buffer(&self) -> usize {
        self.structure.buffer
    }

    pub fn termination(&self) -> usize {
        self.structure.termination()
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.entries[p * self.n_states() + q]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, v: f64) {
        let n = self.n_states();
        self.entries[p * n + q] = v;
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let n = self.n_states();
        &self.entries[p * n..(p + 1) * n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states()).map(|p| self.row(p).to_vec()).collect()
    }

    /// `alpha_{p,p+1}`; zero for the termination state.
    pub fn forward(&self, p: usize) -> f64 {
        if p < self.termination() {
            self.get(p, p + 1)
        } else {
            0.0
        }
    }

    pub fn scheduling_mass(&self, p: usize) -> f64 {
        let mu = self.structure.mu(p);
        self.row(p)[..=mu].iter().sum()
    }

    /// Checks entry ranges (C1), row sums (C3), the structural mask and the
    /// absence of forward mass in the termination state.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.n_states();
        let m = self.termination();
        for p in 0..n {
            let mut sum = 0.0;
            for q in 0..n {
                let v = self.get(p, q);
                if !(v >= -tol && v <= 1.0 + tol) {
                    return Err(Error::InvalidMatrix(format!("entry ({p}, {q}) = {v} outside [0, 1]")));
                }
                if v > tol && !self.structure.allowed(p, q) {
                    return Err(Error::InvalidMatrix(format!("entry ({p}, {q}) = {v} is structurally zero")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidMatrix(format!("row {p} sums to {sum}")));
            }
            let sched = self.scheduling_mass(p);
            if sched > 1.0 + tol {
                return Err(Error::InvalidMatrix(format!("row {p} schedules mass {sched}")));
            }
        }
        if self.scheduling_mass(m) < 1.0 - tol {
            return Err(Error::InvalidMatrix("termination state must always transmit".into()));
        }
        Ok(())
    }

    /// Re-tags the same entries under another structure (e.g. an OOA matrix
    /// viewed as a Best matrix). Fails if an entry becomes forbidden.
    pub fn with_structure(&self, structure: Arc<Structure>) -> Result<Self> {
        if structure.n_states() != self.n_states() || structure.buffer != self.buffer() {
            return Err(Error::InvalidMatrix("structure dimensions differ".into()));
        }
        let q = Self {
            structure,
            entries: self.entries.clone(),
        };
        q.validate(1e-12)?;
        Ok(q)
    }
}

/// Stationary law of a transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
}

impl StationaryDist {
    pub fn get(&self, p: usize) -> f64 {
        self.pi[p]
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

fn reach_from(q: &TransitionMatrix, start: usize) -> Vec<bool> {
    let n = q.n_states();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for (t, &v) in q.row(s).iter().enumerate() {
            if v > 0.0 && !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Stationary distribution of the recurrent class entered from the empty
/// state 0. States outside that class get zero mass.
pub fn stationary(q: &TransitionMatrix) -> Result<StationaryDist> {
    let n = q.n_states();
    let from_zero = reach_from(q, 0);
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| if from_zero[s] { reach_from(q, s) } else { vec![false; n] })
        .collect();
    let recurrent = |s: usize| (0..n).all(|t| !reach[s][t] || reach[t][s]);
    let root = (0..n)
        .find(|&s| from_zero[s] && recurrent(s))
        .ok_or_else(|| Error::Stationary("no recurrent class reachable from state 0".into()))?;
    let class: Vec<usize> = (0..n).filter(|&t| reach[root][t]).collect();
    let k = class.len();

    // pi (P - I) = 0 with the last balance equation replaced by sum(pi) = 1
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for (i, &si) in class.iter().enumerate() {
        for (j, &sj) in class.iter().enumerate() {
            a[j * k + i] = q.get(si, sj) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..k {
        a[(k - 1) * k + i] = 1.0;
    }
    b[k - 1] = 1.0;
    let x = solve_dense(&mut a, &mut b, k)
        .ok_or_else(|| Error::Stationary("singular balance system".into()))?;

    let mut pi = vec![0.0; n];
    for (i, &s) in class.iter().enumerate() {
        pi[s] = x[i].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Stationary(format!("degenerate solution (mass {total})")));
    }
    pi.iter_mut().for_each(|v| *v /= total);

    for t in 0..n {
        let flow: f64 = (0..n).map(|s| pi[s] * q.get(s, t)).sum();
        if (flow - pi[t]).abs() > 1e-10 {
            return Err(Error::Stationary(format!(
                "balance residual {:e} at state {t}",
                (flow - pi[t]).abs()
            )));
        }
    }
    Ok(StationaryDist { pi })
}

/// Gaussian elimination with partial pivoting; `a` is row-major `k x k`.
fn solve_dense(a: &mut [f64], b: &mut [f64], k: usize) -> Option<Vec<f64>> {
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))?;
        if a[piv * k + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
            }
            b.swap(piv, col);
        }
        let d = a[col * k + col];
        for i in col + 1..k {
            let f = a[i * k + col] / d;
            if f != 0.0 {
                for j in col..k {
                    a[i * k + j] -= f * a[col * k + j];
                }
                b[i] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i * k + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * k + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Long-run drop rate: forward mass out of the dropping states `B..M-1`.
pub fn drop_rate(q: &TransitionMatrix, pi: &StationaryDist) -> f64 {
    let m = q.termination();
    (q.buffer()..m).map(|p| q.forward(p) * pi.get(p)).sum()
}

/// Rate at which unscheduled packets enter state `B`: `alpha_{B-1,B} pi_{B-1}`.
pub fn buffer_feed_rate(q: &TransitionMatrix, pi: &StationaryDist) -> Result<f64> {
    let b = q.buffer();
    if b == 0 {
        return Err(Error::Domain("buffer feed rate needs B >= 1".into()));
    }
    Ok(q.forward(b - 1) * pi.get(b - 1))
}

/// Alternative expression `1 - sum_{p<B} sum_{q<=p} alpha_pq pi_p`, kept as
/// a diagnostic; it does not coincide with [`buffer_feed_rate`] in general.
pub fn buffer_feed_rate_complement(q: &TransitionMatrix, pi: &StationaryDist) -> Result<f64> {
    let b = q.buffer();
    if b == 0 {
        return Err(Error::Domain("buffer feed rate needs B >= 1".into()));
    }
    let scheduled: f64 = (0..b).map(|p| q.scheduling_mass(p) * pi.get(p)).sum();
    Ok(1.0 - scheduled)
}

/// Per-state fading thresholds `kappa_{p,0} >= ... >= kappa_{p,mu}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub kappa: Vec<Vec<f64>>,
}

impl ThresholdSet {
    pub fn state(&self, p: usize) -> &[f64] {
        &self.kappa[p]
    }

    pub fn n_states(&self) -> usize {
        self.kappa.len()
    }

    /// Non-increasing within each state, nonnegative, zero at `(M, mu_M)`.
    pub fn validate(&self) -> Result<()> {
        for (p, k) in self.kappa.iter().enumerate() {
            if k.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(Error::InvalidMatrix(format!("negative threshold in state {p}")));
            }
            if k.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidMatrix(format!("thresholds of state {p} increase")));
            }
        }
        match self.kappa.last().and_then(|k| k.last()) {
            Some(&v) if v == 0.0 => Ok(()),
            _ => Err(Error::InvalidMatrix("termination threshold must be zero".into())),
        }
    }
}

/// Maps transition probabilities to fading thresholds:
/// `kappa_pq = F^-1(1 - sum_{m<=q} alpha_pm)`.
pub fn thresholds_from_probs(q: &TransitionMatrix, fading: &FadingModel) -> Result<ThresholdSet> {
    let m = q.termination();
    let mut kappa = Vec::with_capacity(m + 1);
    for p in 0..=m {
        let mu = q.structure().mu(p);
        let row = q.row(p);
        let scale = if p == m {
            let total: f64 = row[..=mu].iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidMatrix("termination state schedules nothing".into()));
            }
            total
        } else {
            1.0
        };
        let mut cum = 0.0;
        let mut ks = Vec::with_capacity(mu + 1);
        for &a in &row[..=mu] {
            cum += a / scale;
            if cum > 1.0 + 1e-12 {
                return Err(Error::SchedulingMassExceedsOne { state: p, mass: cum });
            }
            ks.push(fading.inv_survival(cum.min(1.0)));
        }
        if p == m {
            ks[mu] = 0.0;
        }
        kappa.push(ks);
    }
    Ok(ThresholdSet { kappa })
}

/// Inverse of [`thresholds_from_probs`].
pub fn probs_from_thresholds(
    thresholds: &ThresholdSet,
    structure: Arc<Structure>,
    fading: &FadingModel,
) -> Result<TransitionMatrix> {
    let m = structure.termination();
    if thresholds.n_states() != m + 1 {
        return Err(Error::InvalidMatrix("threshold set does not match the structure".into()));
    }
    let mut q = TransitionMatrix::zeros(structure.clone());
    for p in 0..=m {
        let k = thresholds.state(p);
        let mu = structure.mu(p);
        if k.len() != mu + 1 {
            return Err(Error::InvalidMatrix(format!("state {p} needs {} thresholds", mu + 1)));
        }
        let mut upper = f64::INFINITY;
        for (dst, &kap) in k.iter().enumerate() {
            q.set(p, dst, fading.cdf_diff(kap, upper));
            upper = kap;
        }
        if p < m {
            q.set(p, p + 1, fading.cdf(k[mu]));
        }
    }
    Ok(q)
}

/// Pair of thresholds scheduling the same packet count whose ordering
/// `kappa_pq <= kappa_{p-1,q-1}` is broken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub p: usize,
    pub q: usize,
    pub excess: f64,
}

/// Diagnostic for the same-packet-count ordering across neighbouring states.
pub fn same_count_ordering_violations(thresholds: &ThresholdSet, buffer: usize) -> Vec<OrderingViolation> {
    let mut out = Vec::new();
    for p in 1..thresholds.n_states() {
        let mu = p.min(buffer);
        let prev = thresholds.state(p - 1);
        for q in 1..=mu {
            if q - 1 >= prev.len() {
                continue;
            }
            let here = thresholds.state(p)[q];
            let there = prev[q - 1];
            if here.is_finite() && here > there {
                out.push(OrderingViolation {
                    p,
                    q,
                    excess: here - there,
                });
            }
        }
    }
    out
}
