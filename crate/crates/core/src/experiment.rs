//! Experiment configuration and the optimize / sweep / validate drivers
//! behind the command-line tool.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anneal::{anneal, delta_measure, theta_lim, AnnealResult, ChannelModels, SaConfig};
use crate::chain::{same_count_ordering_violations, OrderingViolation, SchemeSpec};
use crate::channel::{FadingModel, PathLossModel};
use crate::error::{Error, Result};
use crate::scheme::SchemeKind;
use crate::sim::{run_replications, SimConfig};

/// Version of the sweep CSV layout and of the JSON records.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    #[serde(rename = "K")]
    pub users: usize,
    pub slots: usize,
    pub warmup: usize,
    pub replications: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            users: 200,
            slots: 100_000,
            warmup: 1000,
            replications: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub scheme: Option<Vec<SchemeKind>>,
    #[serde(rename = "B")]
    pub buffer: Option<Vec<usize>>,
    #[serde(rename = "N")]
    pub continuity: Option<Vec<usize>>,
    pub theta_tar: Option<Vec<f64>>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.scheme.is_none() && self.buffer.is_none() && self.continuity.is_none() && self.theta_tar.is_none()
    }
}

/// Full experiment description. Every field has a default, so a config file
/// only lists what differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeKind,
    #[serde(rename = "B")]
    pub buffer: usize,
    #[serde(rename = "N")]
    pub continuity: usize,
    pub theta_tar: f64,
    #[serde(rename = "C")]
    pub spectral_efficiency: f64,
    pub delta: f64,
    pub alpha: f64,
    pub eps: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub c_sa: f64,
    pub temp_steps: usize,
    pub iters_per_temp: Option<usize>,
    pub step_scale: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Also run the unconstrained anneal for `theta_lim` and `delta`.
    pub diagnostics: bool,
    pub sim: Option<SimSettings>,
    pub sweep: Option<SweepAxes>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sa = SaConfig::default();
        let ch = ChannelModels::default();
        Self {
            scheme: SchemeKind::Best,
            buffer: 3,
            continuity: 3,
            theta_tar: 0.1,
            spectral_efficiency: 0.5,
            delta: ch.pathloss.delta,
            alpha: ch.pathloss.alpha,
            eps: ch.eps,
            t0: sa.t0,
            c_sa: sa.c_sa,
            temp_steps: sa.temp_steps,
            iters_per_temp: sa.iters_per_temp,
            step_scale: sa.step_scale,
            seed: sa.seed,
            restarts: sa.restarts,
            diagnostics: true,
            sim: None,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<SchemeSpec> {
        SchemeSpec::new(self.scheme, self.buffer, self.continuity, self.theta_tar, self.spectral_efficiency)
    }

    pub fn sa(&self) -> SaConfig {
        SaConfig {
            t0: self.t0,
            c_sa: self.c_sa,
            temp_steps: self.temp_steps,
            iters_per_temp: self.iters_per_temp,
            step_scale: self.step_scale,
            seed: self.seed,
            restarts: self.restarts,
        }
    }

    pub fn channel(&self) -> Result<ChannelModels> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(ChannelModels {
            fading: FadingModel::RayleighUnitMean,
            pathloss: PathLossModel::new(self.delta, self.alpha).map_err(|e| Error::Config(e.to_string()))?,
            eps: self.eps,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.sa().validate()?;
        self.channel()?;
        if let Some(sim) = &self.sim {
            if sim.users == 0 || sim.slots == 0 || sim.replications == 0 {
                return Err(Error::Config("sim K, slots and replications must be at least 1".into()));
            }
        }
        if let Some(axes) = &self.sweep {
            let empty = |n: Option<usize>| n == Some(0);
            if empty(axes.scheme.as_ref().map(Vec::len))
                || empty(axes.buffer.as_ref().map(Vec::len))
                || empty(axes.continuity.as_ref().map(Vec::len))
                || empty(axes.theta_tar.as_ref().map(Vec::len))
            {
                return Err(Error::Config("sweep axes must not be empty lists".into()));
            }
        }
        Ok(())
    }

    /// Grid points of the sweep in lexicographic axis order
    /// (scheme, B, N, theta_tar), each axis sorted and deduplicated.
    pub fn grid(&self) -> Result<Vec<ExperimentConfig>> {
        let axes = self.sweep.clone().unwrap_or_default();
        if axes.is_empty() {
            return Err(Error::Config("sweep needs at least one axis".into()));
        }
        let mut schemes = axes.scheme.unwrap_or_else(|| vec![self.scheme]);
        schemes.sort();
        schemes.dedup();
        let mut bs = axes.buffer.unwrap_or_else(|| vec![self.buffer]);
        bs.sort_unstable();
        bs.dedup();
        let mut ns = axes.continuity.unwrap_or_else(|| vec![self.continuity]);
        ns.sort_unstable();
        ns.dedup();
        let mut thetas = axes.theta_tar.unwrap_or_else(|| vec![self.theta_tar]);
        if thetas.iter().any(|t| t.is_nan()) {
            return Err(Error::Config("theta_tar axis contains NaN".into()));
        }
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();

        let mut out = Vec::new();
        for &scheme in &schemes {
            for &buffer in &bs {
                for &continuity in &ns {
                    for &theta_tar in &thetas {
                        out.push(ExperimentConfig {
                            scheme,
                            buffer,
                            continuity,
                            theta_tar,
                            sweep: None,
                            ..self.clone()
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRecord {
    pub schema_version: u32,
    pub inputs: ExperimentConfig,
    /// Row-major optimized transition matrix.
    pub q_star: Vec<Vec<f64>>,
    /// Per-state thresholds; `null` stands for an unbounded threshold.
    pub thresholds: Vec<Vec<Option<f64>>>,
    pub theta_r_star: f64,
    pub theta_lim: Option<f64>,
    pub delta_measure: Option<f64>,
    pub eb_n0_linear: f64,
    pub eb_n0_db: f64,
    pub tail_estimate: f64,
    pub divergence_warning: bool,
    /// Same-packet-count threshold pairs that break the expected ordering.
    pub ordering_violations: Vec<OrderingViolation>,
    pub seed: u64,
    pub candidates: usize,
    pub wall_ms: u64,
}

impl OptimizeRecord {
    fn from_result(cfg: &ExperimentConfig, res: &AnnealResult, wall_ms: u64) -> Self {
        let e = res.energy_star();
        Self {
            schema_version: SCHEMA_VERSION,
            inputs: ExperimentConfig { sweep: None, ..cfg.clone() },
            q_star: res.q_star.rows(),
            thresholds: res
                .eval_star
                .thresholds
                .kappa
                .iter()
                .map(|ks| ks.iter().map(|&k| k.is_finite().then_some(k)).collect())
                .collect(),
            theta_r_star: res.theta_r_star(),
            theta_lim: res.theta_lim,
            delta_measure: res.delta,
            eb_n0_linear: e.eb_n0_linear,
            eb_n0_db: round3(e.eb_n0_db),
            tail_estimate: e.tail_estimate,
            divergence_warning: e.divergent,
            ordering_violations: same_count_ordering_violations(&res.eval_star.thresholds, cfg.buffer),
            seed: res.seed,
            candidates: res.candidates,
            wall_ms,
        }
    }
}

/// Runs the annealer (and the diagnostics when enabled) for one config.
pub fn optimize(cfg: &ExperimentConfig) -> Result<(OptimizeRecord, AnnealResult)> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.spec()?;
    let sa = cfg.sa();
    let ch = cfg.channel()?;
    let mut res = anneal(&spec, &sa, &ch)?;
    if cfg.diagnostics {
        let lim = theta_lim(&spec, &sa, &ch)?;
        res.theta_lim = Some(lim);
        res.delta = delta_measure(res.theta_r_star(), spec.theta_tar, lim).ok();
    }
    let wall = start.elapsed().as_millis() as u64;
    Ok((OptimizeRecord::from_result(cfg, &res, wall), res))
}

/// One sweep CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub scheme: SchemeKind,
    #[serde(rename = "B")]
    pub buffer: usize,
    #[serde(rename = "N")]
    pub continuity: usize,
    pub theta_tar: f64,
    #[serde(rename = "C")]
    pub spectral_efficiency: f64,
    pub delta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub eb_n0_db: Option<f64>,
    pub theta_r_star: Option<f64>,
    pub theta_lim: Option<f64>,
    pub delta_measure: Option<f64>,
    pub iters: Option<usize>,
    pub wall_ms: Option<u64>,
    pub error: Option<String>,
}

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 16] = [
    "schema_version",
    "scheme",
    "B",
    "N",
    "theta_tar",
    "C",
    "delta",
    "alpha",
    "seed",
    "eb_n0_db",
    "theta_r_star",
    "theta_lim",
    "delta_measure",
    "iters",
    "wall_ms",
    "error",
];

fn sweep_point(cfg: &ExperimentConfig) -> SweepRow {
    let mut row = SweepRow {
        schema_version: SCHEMA_VERSION,
        scheme: cfg.scheme,
        buffer: cfg.buffer,
        continuity: cfg.continuity,
        theta_tar: cfg.theta_tar,
        spectral_efficiency: cfg.spectral_efficiency,
        delta: cfg.delta,
        alpha: cfg.alpha,
        seed: cfg.seed,
        eb_n0_db: None,
        theta_r_star: None,
        theta_lim: None,
        delta_measure: None,
        iters: None,
        wall_ms: None,
        error: None,
    };
    match optimize(cfg) {
        Ok((rec, _)) => {
            row.eb_n0_db = Some(rec.eb_n0_db);
            row.theta_r_star = Some(rec.theta_r_star);
            row.theta_lim = rec.theta_lim;
            row.delta_measure = rec.delta_measure;
            row.iters = Some(rec.candidates);
            row.wall_ms = Some(rec.wall_ms);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Evaluates every grid point on `workers` threads; rows come back in grid
/// order regardless of completion order.
pub fn sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(pool.install(|| grid.par_iter().map(sweep_point).collect()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(grid.iter().map(sweep_point).collect())
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    if rows.is_empty() {
        w.write_record(SWEEP_COLUMNS).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRecord {
    pub schema_version: u32,
    pub optimize: OptimizeRecord,
    pub sim: SimSettings,
    pub analytic_theta_r: f64,
    pub empirical_theta_r: Vec<f64>,
    pub analytic_eb_n0_db: f64,
    pub empirical_eb_n0_db: Vec<f64>,
    pub occupancy_tv: Vec<f64>,
    pub max_successive_drops: usize,
    pub clamped: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Optimizes, then simulates the resulting thresholds and compares.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidateRecord> {
    cfg.validate()?;
    let settings = cfg.sim.clone().ok_or_else(|| Error::Config("validate needs a `sim` section".into()))?;
    let (record, res) = optimize(cfg)?;
    let spec = cfg.spec()?;
    let mut sim = SimConfig::new(settings.users, settings.slots, cfg.seed, spec, res.eval_star.thresholds.clone(), cfg.channel()?);
    sim.warmup = settings.warmup;
    let reports = run_replications(&sim, settings.replications)?;

    let analytic_theta = res.theta_r_star();
    let analytic_db = res.energy_star().eb_n0_db;
    let theta: Vec<f64> = reports.iter().map(|r| r.empirical_theta_r).collect();
    let energy: Vec<f64> = reports.iter().map(|r| r.empirical_eb_n0_db).collect();
    let tv: Vec<f64> = reports.iter().map(|r| r.occupancy_tv(&res.eval_star.pi.pi)).collect();
    let max_drops = reports.iter().map(|r| r.max_successive_drops).max().unwrap_or(0);
    let worst = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x)).fold(0.0, f64::max);

    let checks = vec![
        check("theta_r_gap", worst(&theta, &|x| (x - analytic_theta).abs()), 0.005),
        check("occupancy_tv", worst(&tv, &|x| x), 0.01),
        check("successive_drops", max_drops as f64, spec.continuity as f64),
        check("energy_gap_db", worst(&energy, &|x| (x - analytic_db).abs()), 1.0),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidateRecord {
        schema_version: SCHEMA_VERSION,
        optimize: record,
        sim: settings,
        analytic_theta_r: analytic_theta,
        empirical_theta_r: theta,
        analytic_eb_n0_db: analytic_db,
        empirical_eb_n0_db: energy,
        occupancy_tv: tv,
        max_successive_drops: max_drops,
        clamped: reports.iter().map(|r| r.clamped).sum(),
        checks,
        pass,
    })
}
