//! Layered successive screening (S-LUCB) and its weighted variants.
//!
//! Each client keeps `S+1` layers of ridge statistics. A pull walks down the
//! layers: layer 0 screens out clearly bad arms, then each layer either
//! explores (picks the widest arm whose width exceeds the layer threshold
//! `w̄_s`) or, when every candidate is already precise enough, keeps only arms
//! within `2w̄_s` of the best estimate and descends. The reward is recorded in
//! the layer where the arm was chosen.

use serde::{Deserialize, Serialize};

use crate::config::{AlgoConfig, Variant};
use crate::error::{Error, Result};
use crate::linalg::{check_vector, DeltaStats, RidgeStats};

/// Layer count and per-layer constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSchedule {
    /// Index of the last layer (`S`); there are `S+1` layers.
    pub last_layer: usize,
    /// Width thresholds `w̄_0 … w̄_S`, halving per layer.
    pub widths: Vec<f64>,
    /// Confidence multipliers `α_0 … α_S`.
    pub alphas: Vec<f64>,
}

impl LayerSchedule {
    pub fn layers(&self) -> usize {
        self.last_layer + 1
    }
}

/// Clipping parameters for the variance-adaptive weight `1/σ̄²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBarParams {
    /// Floor `ρ = 1/√T`.
    pub rho: f64,
    /// Slope `γ = R^{1/2}/d^{1/4}` on `√‖x‖_{A⁻¹}`.
    pub gamma: f64,
}

impl SigmaBarParams {
    pub fn from_config(cfg: &AlgoConfig) -> Self {
        Self {
            rho: 1.0 / (cfg.horizon as f64).sqrt(),
            gamma: cfg.noise_bound.sqrt() / (cfg.dim as f64).powf(0.25),
        }
    }
}

/// `ln d`, replaced by 1 for `d = 1` where it would vanish.
fn ln_dim(d: f64) -> f64 {
    if d >= 2.0 {
        d.ln()
    } else {
        1.0
    }
}

fn standard_alphas(cfg: &AlgoConfig, layers: usize) -> (f64, f64) {
    let d = cfg.dim as f64;
    let m = cfg.clients as f64;
    let t = cfg.horizon as f64;
    let k = cfg.arms as f64;
    let a0 = 1.0 + (d * (2.0 * m * m * t / cfg.delta).ln()).max(0.0).sqrt();
    let a1 = 1.0
        + (2.0 * (2.0 * k * m * t * ln_dim(d) / cfg.delta).ln())
            .max(0.0)
            .sqrt();
    debug_assert!(layers >= 2);
    (a0, a1)
}

/// Bernstein-type self-normalized radius `β_T` with `σ = R`, `ε = R/T` and the
/// max-term bounded by `R`.
pub fn bernstein_radius(cfg: &AlgoConfig) -> f64 {
    let d = cfg.dim as f64;
    let t = cfg.horizon as f64;
    let r = cfg.noise_bound;
    let eps = r / t;
    let log_term = (32.0 * ((r / eps).ln() + 1.0) * t * t / cfg.delta).ln();
    12.0 * (r * r * d * (1.0 + t / d).ln() * log_term).sqrt()
        + 24.0 * log_term * r
        + 6.0 * log_term * eps
}

/// Layer count, width thresholds and confidence multipliers for `cfg`.
pub fn build_schedule(cfg: &AlgoConfig) -> Result<LayerSchedule> {
    cfg.validate()?;
    let d = cfg.dim as f64;
    let t = cfg.horizon as f64;
    let (last_layer, w0) = match cfg.variant {
        Variant::Standard | Variant::CorruptionRobust => {
            ((d.log2().ceil() as usize).max(1), d.powf(1.5) / t.sqrt())
        }
        Variant::VarianceAdaptive => {
            let r = cfg.noise_bound;
            let s = (r.log2() + t.log2()).ceil();
            ((s.max(1.0)) as usize, d * r * r)
        }
    };
    let layers = last_layer + 1;
    let (mut a0, mut a1) = standard_alphas(cfg, layers);
    match cfg.variant {
        Variant::Standard => {}
        Variant::VarianceAdaptive => a0 = bernstein_radius(cfg) + 1.0,
        Variant::CorruptionRobust => {
            // γ·C_p with γ = √d/C_p; no inflation when there is no budget.
            if cfg.corruption_budget > 0.0 {
                a0 += d.sqrt();
                a1 += d.sqrt();
            }
        }
    }
    let widths = (0..layers).map(|s| w0 * 0.5f64.powi(s as i32)).collect();
    let mut alphas = vec![a1; layers];
    alphas[0] = a0;
    Ok(LayerSchedule {
        last_layer,
        widths,
        alphas,
    })
}

/// `γ = √d / C_p` for the corruption weight, or `None` when `C_p = 0`.
pub fn corruption_gamma(cfg: &AlgoConfig) -> Option<f64> {
    (cfg.corruption_budget > 0.0).then(|| (cfg.dim as f64).sqrt() / cfg.corruption_budget)
}

/// Which statistics a client decides from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    /// Last-synced statistics only.
    Lazy,
    /// Synced statistics plus unsent local deltas.
    Fresh,
}

/// Per-client layered statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    synced: Vec<RidgeStats>,
    pending: Vec<DeltaStats>,
    // synced + pending, maintained by rank-1 updates
    local: Vec<RidgeStats>,
}

impl ClientState {
    pub fn new(id: usize, layers: usize, dim: usize, lambda: f64) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("at least one layer required".into()));
        }
        let base = RidgeStats::with_lambda(dim, lambda)?;
        Ok(Self {
            id,
            synced: vec![base.clone(); layers],
            pending: vec![DeltaStats::zeros(dim)?; layers],
            local: vec![base; layers],
        })
    }

    pub fn layers(&self) -> usize {
        self.synced.len()
    }

    pub fn dim(&self) -> usize {
        self.synced[0].dim()
    }

    pub fn synced(&self, layer: usize) -> &RidgeStats {
        &self.synced[layer]
    }

    pub fn pending(&self, layer: usize) -> &DeltaStats {
        &self.pending[layer]
    }

    /// Synced plus pending statistics for `layer`.
    pub fn local(&self, layer: usize) -> &RidgeStats {
        &self.local[layer]
    }

    pub fn view(&self, layer: usize, mode: SelectMode) -> &RidgeStats {
        match mode {
            SelectMode::Lazy => &self.synced[layer],
            SelectMode::Fresh => &self.local[layer],
        }
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                max: self.layers() - 1,
            });
        }
        Ok(())
    }

    /// Adds `weight·x xᵀ`, `weight·r·x` to the pending delta of `layer`.
    pub fn record(&mut self, layer: usize, x: &[f64], r: f64, weight: f64) -> Result<()> {
        self.check_layer(layer)?;
        self.pending[layer].add(x, r, weight)?;
        self.local[layer].update(x, r, weight)
    }

    /// Replaces the synced statistics of `layer` and clears its delta.
    pub(crate) fn install(&mut self, layer: usize, stats: RidgeStats) {
        self.local[layer] = stats.clone();
        self.synced[layer] = stats;
        self.pending[layer].reset();
    }
}

/// Estimated rewards `r̂ = θ̂ᵀx` and widths `α‖x‖_{A⁻¹}` for every arm.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEstimates {
    pub rewards: Vec<f64>,
    pub widths: Vec<f64>,
}

impl LayerEstimates {
    pub fn compute(stats: &RidgeStats, alpha: f64, contexts: &[Vec<f64>]) -> Result<Self> {
        let theta = stats.theta();
        let mut rewards = Vec::with_capacity(contexts.len());
        let mut widths = Vec::with_capacity(contexts.len());
        for x in contexts {
            check_vector(x, stats.dim())?;
            rewards.push(theta.iter().zip(x).map(|(a, b)| a * b).sum());
            widths.push(alpha * stats.weighted_norm(x)?);
        }
        Ok(Self { rewards, widths })
    }
}

/// Outcome of one layered selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub action: usize,
    pub layer: usize,
    pub width_at_selection: f64,
    /// Candidate sets `𝒜_0, 𝒜_1, …` for every visited layer.
    pub candidate_trace: Vec<Vec<usize>>,
}

/// `{a : r̂_a + w_a ≥ max_b (r̂_b − w_b)}`.
pub fn initial_screen(rewards: &[f64], widths: &[f64]) -> Vec<usize> {
    let floor = rewards
        .iter()
        .zip(widths)
        .map(|(r, w)| r - w)
        .fold(f64::NEG_INFINITY, f64::max);
    (0..rewards.len())
        .filter(|&a| rewards[a] + widths[a] >= floor)
        .collect()
}

/// `{a ∈ candidates : r̂_a ≥ max_{b ∈ candidates} r̂_b − 2w̄}`.
pub fn layer_filter(candidates: &[usize], rewards: &[f64], width_bar: f64) -> Vec<usize> {
    let best = candidates
        .iter()
        .map(|&a| rewards[a])
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .copied()
        .filter(|&a| rewards[a] >= best - 2.0 * width_bar)
        .collect()
}

/// Runs the layered screening for one pull. Ties go to the lowest arm index.
pub fn slucb_select(
    state: &ClientState,
    schedule: &LayerSchedule,
    contexts: &[Vec<f64>],
    mode: SelectMode,
) -> Result<SelectionResult> {
    slucb_select_traced(state, schedule, contexts, mode, |_, _| {})
}

/// [`slucb_select`] that reports the estimates of every visited layer.
pub fn slucb_select_traced<F>(
    state: &ClientState,
    schedule: &LayerSchedule,
    contexts: &[Vec<f64>],
    mode: SelectMode,
    mut on_layer: F,
) -> Result<SelectionResult>
where
    F: FnMut(usize, &LayerEstimates),
{
    if contexts.is_empty() {
        return Err(Error::InvalidArgument("empty context list".into()));
    }
    if state.layers() != schedule.layers() {
        return Err(Error::InvalidArgument(format!(
            "client has {} layers, schedule has {}",
            state.layers(),
            schedule.layers()
        )));
    }
    let mut s = 0;
    let mut est = LayerEstimates::compute(state.view(0, mode), schedule.alphas[0], contexts)?;
    on_layer(0, &est);
    let mut candidates = initial_screen(&est.rewards, &est.widths);
    let mut trace = vec![candidates.clone()];
    loop {
        if s == schedule.last_layer {
            let action = candidates[0];
            return Ok(SelectionResult {
                action,
                layer: s,
                width_at_selection: est.widths[action],
                candidate_trace: trace,
            });
        }
        let threshold = schedule.widths[s];
        let mut widest: Option<usize> = None;
        for &a in &candidates {
            if est.widths[a] > threshold && widest.is_none_or(|b| est.widths[a] > est.widths[b]) {
                widest = Some(a);
            }
        }
        if let Some(action) = widest {
            return Ok(SelectionResult {
                action,
                layer: s,
                width_at_selection: est.widths[action],
                candidate_trace: trace,
            });
        }
        candidates = layer_filter(&candidates, &est.rewards, threshold);
        trace.push(candidates.clone());
        s += 1;
        est = LayerEstimates::compute(state.view(s, mode), schedule.alphas[s], contexts)?;
        on_layer(s, &est);
    }
}

/// Unit-weight update of the layer where the arm was chosen.
pub fn slucb_update(state: &mut ClientState, layer: usize, x: &[f64], r: f64) -> Result<()> {
    state.record(layer, x, r, 1.0)
}

/// `σ̄ = max{σ_t, ρ, γ·√‖x‖_{A⁻¹}}`.
pub fn sigma_bar(sigma_t: f64, params: &SigmaBarParams, width_norm: f64) -> f64 {
    sigma_t
        .max(params.rho)
        .max(params.gamma * width_norm.max(0.0).sqrt())
}

/// Update weighted by `1/σ̄²`.
pub fn vslucb_update(
    state: &mut ClientState,
    layer: usize,
    x: &[f64],
    r: f64,
    sigma_bar: f64,
) -> Result<()> {
    if !(sigma_bar.is_finite() && sigma_bar > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma_bar must be positive, got {sigma_bar}"
        )));
    }
    state.record(layer, x, r, 1.0 / (sigma_bar * sigma_bar))
}

/// `η = min{1, γ/‖x‖_{A⁻¹}}`; 1 when the norm is zero.
pub fn corruption_weight(gamma: f64, width_norm: f64) -> f64 {
    if width_norm <= gamma || width_norm == 0.0 {
        1.0
    } else {
        gamma / width_norm
    }
}

/// Update weighted by `η ∈ (0, 1]`.
pub fn cslucb_update(
    state: &mut ClientState,
    layer: usize,
    x: &[f64],
    r: f64,
    eta: f64,
) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eta must lie in (0, 1], got {eta}"
        )));
    }
    state.record(layer, x, r, eta)
}
