//! WebAssembly bindings for the browser demo. Every entry point takes and
//! returns a JSON string so the page needs no extra glue.

use std::sync::Arc;

use madrop_core::anneal::{anneal, evaluate, ChannelModels, SaConfig};
use madrop_core::chain::{build_mask, SchemeSpec, TransitionMatrix};
use madrop_core::channel::PathLossModel;
use madrop_core::vu::{product_channel_cdf, VuDistribution};
use madrop_core::SchemeKind;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Request {
    pub scheme: SchemeKind,
    #[serde(rename = "B")]
    pub buffer: usize,
    #[serde(rename = "N")]
    pub continuity: usize,
    pub theta_tar: f64,
    #[serde(rename = "C")]
    pub spectral_efficiency: f64,
    pub delta: f64,
    pub eps: f64,
    pub temp_steps: usize,
    pub iters_per_temp: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    /// Matrix to analyse instead of optimizing one.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Drop targets for the energy curve.
    pub thetas: Vec<f64>,
}

impl Default for Request {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::Best,
            buffer: 1,
            continuity: 2,
            theta_tar: 0.02,
            spectral_efficiency: 0.5,
            delta: 0.01,
            eps: 1e-6,
            temp_steps: 30,
            iters_per_temp: None,
            restarts: 1,
            seed: 0,
            matrix: None,
            thetas: vec![0.0, 0.01, 0.02, 0.03, 0.05, 0.075, 0.1],
        }
    }
}

impl Request {
    fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    fn spec(&self, theta_tar: f64) -> Result<SchemeSpec, String> {
        SchemeSpec::new(self.scheme, self.buffer, self.continuity, theta_tar, self.spectral_efficiency).map_err(|e| e.to_string())
    }

    fn channel(&self) -> Result<ChannelModels, String> {
        Ok(ChannelModels {
            pathloss: PathLossModel::new(self.delta, 2.0).map_err(|e| e.to_string())?,
            eps: self.eps,
            ..ChannelModels::default()
        })
    }

    fn sa(&self) -> SaConfig {
        SaConfig {
            temp_steps: self.temp_steps.max(1),
            iters_per_temp: self.iters_per_temp,
            restarts: self.restarts.max(1),
            seed: self.seed,
            ..SaConfig::default()
        }
    }

    fn matrix(&self, spec: &SchemeSpec) -> Result<TransitionMatrix, String> {
        let structure = Arc::new(build_mask(spec));
        match &self.matrix {
            Some(rows) => TransitionMatrix::from_rows(structure, rows).map_err(|e| e.to_string()),
            None => Ok(anneal(spec, &self.sa(), &self.channel()?).map_err(|e| e.to_string())?.q_star),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct OptimizeReply {
    pub eb_n0_db: f64,
    pub theta_r: f64,
    pub matrix: Vec<Vec<f64>>,
    pub thresholds: Vec<Vec<Option<f64>>>,
    pub trace_db: Vec<f64>,
    pub candidates: usize,
}

#[derive(Debug, Serialize)]
pub struct CurvesReply {
    pub fading_x: Vec<f64>,
    pub fading_cdf: Vec<f64>,
    pub vu_cdf: Vec<f64>,
    pub vu_pdf: Vec<f64>,
    pub gain_x: Vec<f64>,
    pub gain_cdf: Vec<f64>,
    pub eb_n0_db: f64,
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub theta_tar: f64,
    pub eb_n0_db: Option<f64>,
    pub theta_r: Option<f64>,
}

fn to_json(v: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

pub fn optimize_json(request: &str) -> Result<String, String> {
    let req = Request::parse(request)?;
    let spec = req.spec(req.theta_tar)?;
    let res = anneal(&spec, &req.sa(), &req.channel()?).map_err(|e| e.to_string())?;
    to_json(&OptimizeReply {
        eb_n0_db: res.energy_star().eb_n0_db,
        theta_r: res.theta_r_star(),
        matrix: res.q_star.rows(),
        thresholds: res
            .eval_star
            .thresholds
            .kappa
            .iter()
            .map(|ks| ks.iter().map(|&k| k.is_finite().then_some(k)).collect())
            .collect(),
        trace_db: res.trace.iter().map(|e| 10.0 * e.log10()).collect(),
        candidates: res.candidates,
    })
}

pub fn vu_curves_json(request: &str) -> Result<String, String> {
    let req = Request::parse(request)?;
    let spec = req.spec(req.theta_tar)?;
    let ch = req.channel()?;
    let q = req.matrix(&spec)?;
    let ev = evaluate(&spec, &q, &ch).map_err(|e| e.to_string())?;
    let vu = VuDistribution::new(spec.scheme, &ev.thresholds, &ev.pi, spec.buffer, ch.fading).map_err(|e| e.to_string())?;
    let fading_x = log_grid(1e-3, 20.0, 160);
    let gain_x = log_grid(1e-4, 1e5, 160);
    let gain = product_channel_cdf(vu.clone(), ch.pathloss);
    let gain_cdf = gain_x
        .iter()
        .map(|&x| gain.try_cdf(x))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| e.to_string())?;
    to_json(&CurvesReply {
        fading_cdf: fading_x.iter().map(|&y| ch.fading.cdf(y)).collect(),
        vu_cdf: fading_x.iter().map(|&y| vu.cdf(y)).collect(),
        vu_pdf: fading_x.iter().map(|&y| vu.pdf(y)).collect(),
        fading_x,
        gain_x,
        gain_cdf,
        eb_n0_db: ev.energy.eb_n0_db,
    })
}

pub fn energy_vs_theta_json(request: &str) -> Result<String, String> {
    let req = Request::parse(request)?;
    let ch = req.channel()?;
    let sa = req.sa();
    let mut out = Vec::with_capacity(req.thetas.len());
    for &theta in &req.thetas {
        let spec = req.spec(theta)?;
        let point = match anneal(&spec, &sa, &ch) {
            Ok(r) => CurvePoint {
                theta_tar: theta,
                eb_n0_db: Some(r.energy_star().eb_n0_db),
                theta_r: Some(r.theta_r_star()),
            },
            Err(_) => CurvePoint {
                theta_tar: theta,
                eb_n0_db: None,
                theta_r: None,
            },
        };
        out.push(point);
    }
    to_json(&out)
}

/// Optimizes one configuration.
#[wasm_bindgen]
pub fn optimize(request: &str) -> Result<String, JsError> {
    optimize_json(request).map_err(|e| JsError::new(&e))
}

/// Fading, VU and gain distributions of a given or freshly optimized matrix.
#[wasm_bindgen]
pub fn vu_curves(request: &str) -> Result<String, JsError> {
    vu_curves_json(request).map_err(|e| JsError::new(&e))
}

/// Optimized energy for each drop target in `thetas`.
#[wasm_bindgen]
pub fn energy_vs_theta(request: &str) -> Result<String, JsError> {
    energy_vs_theta_json(request).map_err(|e| JsError::new(&e))
}
