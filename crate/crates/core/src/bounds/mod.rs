//! Worst-case deviation between the lossy interferometer and the best
//! product-form lossless one.
//!
//! For a pair of mixing angles `(α, β)` the inner problem maximises the
//! probability deviation (`e_P`) or the CHSH deviation (`e_I`) over the
//! measurement angles and every state allowed by the trust level. The outer
//! problem minimises that maximum over `(α, β) ∈ [0, π/2]²`: a coarse grid
//! followed by a Nelder–Mead refinement from the best cell.
//!
//! Inner maxima are multistart local searches. The start points depend only
//! on `(seed, stream, start index)`, so every `(α, β)` sees the same starts
//! and adding starts can only raise a maximum. A grid cell whose running
//! maximum already exceeds the best cell so far is abandoned early.

pub mod local;
pub(crate) mod eval;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chsh::AngleSettings;
use crate::complex::Mat4;
use crate::error::{Error, Result};
use crate::optics::{ComponentSet, Measured, RealOptics, TildeOptics};
use crate::quantum::{
    cholesky_state, model_state_unchecked, CholeskyAngles, DensityMatrix, Outcome, StateParams,
    CHOLESKY_ANGLES,
};
use crate::rng::{stream, stream_rng};

use eval::{ei_value, ep_value, PhaseSplit};
pub use local::{Domain, LocalResult, LocalSettings};

/// Which state parameters the adversary may choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustKind {
    /// Any two-qubit density matrix.
    GeneralRho,
    /// Model state with free `δ, π₁, π₂, v`.
    FreeDeltaPiV,
    /// Model state with free `δ, v`.
    FreeDeltaV,
    /// Model state with free `v`.
    FreeV,
}

impl TrustKind {
    pub const ALL: [TrustKind; 4] = [
        TrustKind::GeneralRho,
        TrustKind::FreeDeltaPiV,
        TrustKind::FreeDeltaV,
        TrustKind::FreeV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrustKind::GeneralRho => "general_rho",
            TrustKind::FreeDeltaPiV => "free_delta_pi_v",
            TrustKind::FreeDeltaV => "free_delta_v",
            TrustKind::FreeV => "free_v",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "trust level {s:?}; expected one of general_rho, free_delta_pi_v, free_delta_v, free_v"
                ))
            })
    }
}

/// A trust level together with the values of its fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustLevel {
    pub kind: TrustKind,
    pub delta: f64,
    pub pi1: f64,
    pub pi2: f64,
}

impl TrustLevel {
    /// Fixed parameters at their nominal value 0.
    pub fn new(kind: TrustKind) -> Self {
        Self {
            kind,
            delta: 0.0,
            pi1: 0.0,
            pi2: 0.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            TrustKind::GeneralRho => CHOLESKY_ANGLES,
            TrustKind::FreeDeltaPiV => 4,
            TrustKind::FreeDeltaV => 2,
            TrustKind::FreeV => 1,
        }
    }

    /// Domains of the state coordinates. Model states use `[v, δ, π₁, π₂]`
    /// truncated to the free ones.
    pub fn state_domains(&self) -> Vec<Domain> {
        match self.kind {
            TrustKind::GeneralRho => (0..CHOLESKY_ANGLES)
                .map(|i| {
                    let (lo, hi) = CholeskyAngles::domain(i);
                    if i == CHOLESKY_ANGLES - 1 {
                        Domain::Periodic(lo, hi)
                    } else {
                        Domain::Interval(lo, hi)
                    }
                })
                .collect(),
            _ => {
                let mut d = vec![Domain::Interval(0.0, 1.0)];
                d.extend(std::iter::repeat_n(Domain::Periodic(0.0, TAU), self.state_dim() - 1));
                d
            }
        }
    }

    /// Density matrix at state coordinates `z`.
    pub fn state(&self, z: &[f64], t0n: f64, t1n: f64) -> DensityMatrix {
        match self.kind {
            TrustKind::GeneralRho => {
                let mut eta = [0.0; CHOLESKY_ANGLES];
                eta.copy_from_slice(&z[..CHOLESKY_ANGLES]);
                cholesky_state(&CholeskyAngles { eta })
            }
            kind => {
                let v = z[0].clamp(0.0, 1.0);
                let (delta, pi1, pi2) = match kind {
                    TrustKind::FreeDeltaPiV => (z[1], z[2], z[3]),
                    TrustKind::FreeDeltaV => (z[1], self.pi1, self.pi2),
                    _ => (self.delta, self.pi1, self.pi2),
                };
                model_state_unchecked(&StateParams {
                    v,
                    delta,
                    pi1,
                    pi2,
                    t0n,
                    t1n,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub n_starts_ep: usize,
    pub n_starts_ei: usize,
    /// Points per axis of the `(α, β)` grid.
    pub alpha_beta_grid: usize,
    /// Objective evaluations of the Nelder–Mead refinement.
    pub refine_evals: usize,
    pub local: LocalSettings,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts_ep: 200,
            n_starts_ei: 400,
            alpha_beta_grid: 9,
            refine_evals: 40,
            local: LocalSettings::default(),
            seed: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            n_starts_ep: 3000,
            n_starts_ei: 10_000,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_starts_ep == 0 || self.n_starts_ei == 0 {
            return Err(Error::InvalidParameter("n_starts must be at least 1".into()));
        }
        if self.alpha_beta_grid < 2 {
            return Err(Error::InvalidParameter("alpha/beta grid needs 2 points per axis".into()));
        }
        let l = &self.local;
        if !(l.tol > 0.0 && l.fd_step > 0.0 && l.max_step > 0.0) || l.max_iter == 0 {
            return Err(Error::InvalidParameter("local search tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    EP,
    EI,
}

/// Arg-max of an inner problem.
///
/// For `e_P` the point is `[φ, θ, state…]` and `channel` the outcome; for
/// `e_I` it is `[φ₀, φ₁, θ₀, θ₁, state…]` with angles indexed by setting bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub channel: Option<u8>,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerMax {
    pub value: f64,
    pub witness: Witness,
    pub starts_run: usize,
    /// Stopped early because the running maximum passed the threshold; the
    /// value is then only a lower bound.
    pub pruned: bool,
}

/// One inner-maximum evaluation of the outer search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterPoint {
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub kind: BoundKind,
    pub value: f64,
    /// Spread from component uncertainties, filled by [`propagate_errors`].
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub witness: Witness,
    pub n_starts: usize,
    pub history: Vec<OuterPoint>,
}

/// The inner problem for a trust level and component set.
#[derive(Debug, Clone)]
pub struct Problem {
    kind: BoundKind,
    trust: TrustLevel,
    real: PhaseSplit,
    t0n: f64,
    t1n: f64,
    domains: Vec<Domain>,
}

impl Problem {
    pub fn new(kind: BoundKind, trust: TrustLevel, c: &ComponentSet) -> Result<Self> {
        c.validate()?;
        Ok(Self::new_unchecked(kind, trust, c))
    }

    fn new_unchecked(kind: BoundKind, trust: TrustLevel, c: &ComponentSet) -> Self {
        let (t0n, t1n) = c.normalized_transmissions();
        let n_angles = match kind {
            BoundKind::EP => 2,
            BoundKind::EI => 4,
        };
        let mut domains = vec![Domain::Periodic(0.0, TAU); n_angles];
        domains.extend(trust.state_domains());
        Self {
            kind,
            trust,
            real: PhaseSplit::real(c),
            t0n,
            t1n,
            domains,
        }
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    fn n_angles(&self) -> usize {
        match self.kind {
            BoundKind::EP => 2,
            BoundKind::EI => 4,
        }
    }

    fn rho(&self, z: &[f64]) -> Mat4 {
        *self.trust.state(&z[self.n_angles()..], self.t0n, self.t1n).matrix()
    }

    fn value(&self, tilde: &PhaseSplit, z: &[f64], channel: usize) -> f64 {
        let rho = self.rho(z);
        match self.kind {
            BoundKind::EP => ep_value(&self.real, tilde, &rho, z[0], z[1], channel),
            BoundKind::EI => ei_value(&self.real, tilde, &rho, [z[0], z[1]], [z[2], z[3]]),
        }
    }

    /// Objective at a witness for mixing angles `(α, β)`.
    pub fn evaluate(&self, alpha: f64, beta: f64, w: &Witness) -> Result<f64> {
        let tilde = PhaseSplit::tilde(&TildeOptics::new(alpha, beta)?);
        let k = usize::from(w.channel.unwrap_or(1) - 1);
        Ok(self.value(&tilde, &w.point, k))
    }

    fn start_point(&self, seed: u64, index: usize) -> (Vec<f64>, usize) {
        let tag = match self.kind {
            BoundKind::EP => stream::EP_STARTS,
            BoundKind::EI => stream::EI_STARTS,
        };
        let mut rng = stream_rng(seed, tag, index as u64);
        let z = self
            .domains
            .iter()
            .map(|d| {
                let (lo, hi) = d.bounds();
                rng.random_range(lo..hi)
            })
            .collect();
        (z, index % 4)
    }

    /// Multistart maximum at `(α, β)`. With `prune = Some(t)` the search
    /// stops as soon as the running maximum exceeds `t`.
    pub fn max_at(
        &self,
        alpha: f64,
        beta: f64,
        n_starts: usize,
        cfg: &OptimizerConfig,
        prune: Option<f64>,
    ) -> Result<InnerMax> {
        let tilde = PhaseSplit::tilde(&TildeOptics::new(alpha, beta)?);
        let mut best = InnerMax {
            value: f64::NEG_INFINITY,
            witness: Witness {
                channel: None,
                point: Vec::new(),
            },
            starts_run: 0,
            pruned: false,
        };
        for s in 0..n_starts {
            let (z0, k) = self.start_point(cfg.seed, s);
            let r = local::maximize(|z| self.value(&tilde, z, k), &z0, &self.domains, &cfg.local);
            if !r.value.is_finite() {
                return Err(Error::OptimizerDiverged(format!(
                    "start {s} at (α, β) = ({alpha:.4}, {beta:.4}) never reached a feasible point"
                )));
            }
            best.starts_run = s + 1;
            if r.value > best.value {
                best.value = r.value;
                best.witness = Witness {
                    channel: (self.kind == BoundKind::EP).then_some(k as u8 + 1),
                    point: r.x,
                };
            }
            if let Some(t) = prune {
                if best.value > t {
                    best.pruned = true;
                    break;
                }
            }
        }
        Ok(best)
    }

    fn n_starts(&self, cfg: &OptimizerConfig) -> usize {
        match self.kind {
            BoundKind::EP => cfg.n_starts_ep,
            BoundKind::EI => cfg.n_starts_ei,
        }
    }

    /// Outer minimisation over `(α, β)`.
    pub fn solve(&self, cfg: &OptimizerConfig) -> Result<BoundEstimate> {
        cfg.validate()?;
        let n = self.n_starts(cfg);
        let g = cfg.alpha_beta_grid;
        let spacing = FRAC_PI_2 / (g - 1) as f64;
        let grid: Vec<(f64, f64)> = (0..g * g)
            .map(|idx| ((idx / g) as f64 * spacing, (idx % g) as f64 * spacing))
            .collect();
        let center = (0..grid.len())
            .min_by(|&a, &b| {
                let d = |i: usize| (grid[i].0 - FRAC_PI_4).hypot(grid[i].1 - FRAC_PI_4);
                d(a).total_cmp(&d(b)).then(a.cmp(&b))
            })
            .expect("grid is not empty");
        let order = std::iter::once(center).chain((0..grid.len()).filter(|&i| i != center));

        let mut history = Vec::new();
        let mut best: Option<(usize, InnerMax)> = None;
        for idx in order {
            let (a, b) = grid[idx];
            let prune = best.as_ref().map(|(_, m)| m.value);
            let m = self.max_at(a, b, n, cfg, prune)?;
            history.push(OuterPoint {
                alpha: a,
                beta: b,
                value: m.value,
                pruned: m.pruned,
            });
            if m.pruned {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bi, bm)) => m.value < bm.value || (m.value == bm.value && idx < *bi),
            };
            if better {
                best = Some((idx, m));
            }
        }
        let (idx, m) = best.expect("at least one grid cell evaluated");
        let (alpha, beta, m) = self.refine(grid[idx], m, spacing / 2.0, n, cfg, &mut history)?;
        Ok(BoundEstimate {
            kind: self.kind,
            value: m.value,
            sigma: 0.0,
            alpha,
            beta,
            witness: m.witness,
            n_starts: n,
            history,
        })
    }

    /// Nelder–Mead on `[0, π/2]²` from a grid cell. Trial points are pruned
    /// against the worst vertex: a pruned value exceeds it, which is all the
    /// simplex rules need to know.
    fn refine(
        &self,
        start: (f64, f64),
        start_max: InnerMax,
        step: f64,
        n: usize,
        cfg: &OptimizerConfig,
        history: &mut Vec<OuterPoint>,
    ) -> Result<(f64, f64, InnerMax)> {
        let clamp = |p: [f64; 2]| [p[0].clamp(0.0, FRAC_PI_2), p[1].clamp(0.0, FRAC_PI_2)];
        let mut evals = 0usize;
        let mut eval = |p: [f64; 2], prune: Option<f64>, evals: &mut usize| -> Result<InnerMax> {
            *evals += 1;
            let m = self.max_at(p[0], p[1], n, cfg, prune)?;
            history.push(OuterPoint {
                alpha: p[0],
                beta: p[1],
                value: m.value,
                pruned: m.pruned,
            });
            Ok(m)
        };
        let offset = |x: f64| if x + step <= FRAC_PI_2 { x + step } else { x - step };
        let p0 = [start.0, start.1];
        let p1 = [offset(start.0), start.1];
        let p2 = [start.0, offset(start.1)];
        let m1 = eval(p1, None, &mut evals)?;
        let m2 = eval(p2, None, &mut evals)?;
        let mut simplex = vec![(p0, start_max), (p1, m1), (p2, m2)];

        while evals < cfg.refine_evals {
            simplex.sort_by(|a, b| a.1.value.total_cmp(&b.1.value));
            let diameter = simplex[1..]
                .iter()
                .map(|(p, _)| (p[0] - simplex[0].0[0]).hypot(p[1] - simplex[0].0[1]))
                .fold(0.0, f64::max);
            if diameter < 1e-4 {
                break;
            }
            let (fb, fs, fw) = (simplex[0].1.value, simplex[1].1.value, simplex[2].1.value);
            let c = [
                (simplex[0].0[0] + simplex[1].0[0]) / 2.0,
                (simplex[0].0[1] + simplex[1].0[1]) / 2.0,
            ];
            let w = simplex[2].0;
            let along = |t: f64| clamp([c[0] + t * (c[0] - w[0]), c[1] + t * (c[1] - w[1])]);

            let pr = along(1.0);
            let mr = eval(pr, Some(fw), &mut evals)?;
            if mr.value < fb {
                let pe = along(2.0);
                let me = eval(pe, Some(mr.value), &mut evals)?;
                simplex[2] = if me.value < mr.value { (pe, me) } else { (pr, mr) };
                continue;
            }
            if mr.value < fs {
                simplex[2] = (pr, mr);
                continue;
            }
            let (pc, threshold) = if mr.value < fw {
                (along(0.5), mr.value)
            } else {
                (along(-0.5), fw)
            };
            let mc = eval(pc, Some(threshold), &mut evals)?;
            if mc.value <= threshold && !mc.pruned {
                simplex[2] = (pc, mc);
                continue;
            }
            // Shrink towards the best vertex.
            let b = simplex[0].0;
            for v in 1..3 {
                let p = simplex[v].0;
                let q = [(b[0] + p[0]) / 2.0, (b[1] + p[1]) / 2.0];
                let mq = eval(q, None, &mut evals)?;
                simplex[v] = (q, mq);
            }
        }
        simplex.sort_by(|a, b| a.1.value.total_cmp(&b.1.value));
        let (p, m) = simplex.swap_remove(0);
        Ok((p[0], p[1], m))
    }
}

/// `|P_real(out) − P̃(out)|` at one point; `−∞` when the lossy stage
/// absorbs the state.
pub fn objective_ep(
    rho: &DensityMatrix,
    phi: f64,
    theta: f64,
    out: Outcome,
    alpha: f64,
    beta: f64,
    c: &ComponentSet,
) -> Result<f64> {
    let tilde = TildeOptics::new(alpha, beta)?;
    let real = match RealOptics::new(c)?.probabilities(rho, phi, theta) {
        Ok(p) => p,
        Err(Error::SurvivalTraceZero { .. }) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let ideal = tilde.probabilities(rho, phi, theta);
    Ok((real[out.index()] - ideal[out.index()]).abs())
}

/// `|I_real − Ĩ|` at one point; `−∞` when the lossy stage absorbs the state.
pub fn objective_ei(
    rho: &DensityMatrix,
    s: &AngleSettings,
    alpha: f64,
    beta: f64,
    c: &ComponentSet,
) -> Result<f64> {
    let tilde = TildeOptics::new(alpha, beta)?;
    let optics = RealOptics::new(c)?;
    let mut real = [[0.0; 4]; 4];
    let mut ideal = [[0.0; 4]; 4];
    for st in crate::ingest::Setting::ALL {
        let (phi, theta) = s.angles(st);
        real[st.index()] = match optics.probabilities(rho, phi, theta) {
            Ok(p) => p,
            Err(Error::SurvivalTraceZero { .. }) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        ideal[st.index()] = tilde.probabilities(rho, phi, theta);
    }
    Ok((crate::chsh::chsh_value(&real) - crate::chsh::chsh_value(&ideal)).abs())
}

pub fn compute_e_p(trust: TrustLevel, c: &ComponentSet, cfg: &OptimizerConfig) -> Result<BoundEstimate> {
    Problem::new(BoundKind::EP, trust, c)?.solve(cfg)
}

pub fn compute_e_i(trust: TrustLevel, c: &ComponentSet, cfg: &OptimizerConfig) -> Result<BoundEstimate> {
    Problem::new(BoundKind::EI, trust, c)?.solve(cfg)
}

/// Default Monte Carlo sample count for error propagation.
pub const DEFAULT_MC_SAMPLES: usize = 4000;

/// Draws a component set with every coefficient normal around its measured
/// value (negative draws are clipped to 0).
pub fn sample_components<R: rand::Rng>(c: &ComponentSet, rng: &mut R) -> ComponentSet {
    let mut s = *c;
    for m in s.coefficients_mut() {
        if m.sigma > 0.0 {
            let d = Normal::new(m.value, m.sigma).expect("finite sigma");
            *m = Measured::new(d.sample(rng).max(0.0), m.sigma);
        }
    }
    s
}

/// Standard deviation of the objective at a fixed witness when the
/// components are redrawn from their measurement uncertainties.
pub fn propagate_errors(
    trust: TrustLevel,
    c: &ComponentSet,
    bound: &BoundEstimate,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    if n_mc < 2 {
        return Err(Error::InvalidParameter(format!("n_mc = {n_mc} < 2")));
    }
    let tilde = PhaseSplit::tilde(&TildeOptics::new(bound.alpha, bound.beta)?);
    let k = usize::from(bound.witness.channel.unwrap_or(1) - 1);
    let mut rng = stream_rng(seed, stream::MONTE_CARLO, bound.kind as u64);
    let mut values = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let sampled = sample_components(c, &mut rng);
        let p = Problem::new_unchecked(bound.kind, trust, &sampled);
        let v = p.value(&tilde, &bound.witness.point, k);
        if v.is_finite() {
            values.push(v);
        }
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData("no feasible Monte Carlo samples".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}

/// Both bounds for one trust level, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub trust: TrustLevel,
    pub e_p: BoundEstimate,
    pub e_i: BoundEstimate,
    pub config: OptimizerConfig,
    pub n_mc: usize,
    pub component_hash: String,
}

impl BoundResult {
    pub fn pair(&self) -> crate::chsh::BoundPair {
        crate::chsh::BoundPair {
            e_p: Measured::new(self.e_p.value, self.e_p.sigma),
            e_i: Measured::new(self.e_i.value, self.e_i.sigma),
        }
    }
}

/// Runs both searches and the error propagation.
pub fn compute_bounds(
    trust: TrustLevel,
    c: &ComponentSet,
    cfg: &OptimizerConfig,
    n_mc: usize,
) -> Result<BoundResult> {
    let mut e_p = compute_e_p(trust, c, cfg)?;
    let mut e_i = compute_e_i(trust, c, cfg)?;
    e_p.sigma = propagate_errors(trust, c, &e_p, n_mc, cfg.seed)?;
    e_i.sigma = propagate_errors(trust, c, &e_i, n_mc, cfg.seed)?;
    Ok(BoundResult {
        trust,
        e_p,
        e_i,
        config: *cfg,
        n_mc,
        component_hash: crate::config::component_hash(c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::StateParams;

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            n_starts_ep: 4,
            n_starts_ei: 4,
            alpha_beta_grid: 3,
            refine_evals: 6,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn public_objectives_match_fast_path() {
        let c = crate::config::bundled_components();
        for kind in TrustKind::ALL {
            let trust = TrustLevel::new(kind);
            let p = Problem::new(BoundKind::EP, trust, &c).unwrap();
            let (z, k) = p.start_point(3, 5);
            let rho = trust.state(&z[2..], p.t0n, p.t1n);
            let slow = objective_ep(&rho, z[0], z[1], Outcome::ALL[k], 0.5, 0.9, &c).unwrap();
            let fast = p
                .evaluate(0.5, 0.9, &Witness { channel: Some(k as u8 + 1), point: z })
                .unwrap();
            assert!((slow - fast).abs() < 1e-12);

            let p = Problem::new(BoundKind::EI, trust, &c).unwrap();
            let (z, _) = p.start_point(3, 6);
            let rho = trust.state(&z[4..], p.t0n, p.t1n);
            let s = AngleSettings {
                phi: [z[0], z[1]],
                theta: [z[2], z[3]],
            };
            let slow = objective_ei(&rho, &s, 0.3, 1.2, &c).unwrap();
            let fast = p.evaluate(0.3, 1.2, &Witness { channel: None, point: z }).unwrap();
            assert!((slow - fast).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_components_give_zero_objective() {
        let c = ComponentSet::ideal();
        let rho = DensityMatrix::ideal_spe();
        for out in Outcome::ALL {
            let v = objective_ep(&rho, 0.4, 1.1, out, FRAC_PI_4, FRAC_PI_4, &c).unwrap();
            assert!(v < 1e-12);
        }
    }

    #[test]
    fn outcome_max_dominates_single_outcome() {
        let c = crate::config::bundled_components();
        let p = StateParams::new(0.9, 0.3, 0.0, 0.0, 0.7, 0.0f64.max(1.0 - 0.49).sqrt()).unwrap();
        let rho = crate::quantum::model_state(&p).unwrap();
        let vals: Vec<f64> = Outcome::ALL
            .iter()
            .map(|&o| objective_ep(&rho, 1.0, 0.2, o, 0.7, 0.7, &c).unwrap())
            .collect();
        let m = vals.iter().copied().fold(0.0, f64::max);
        assert!(vals.iter().all(|&v| v <= m && (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn ideal_bounds_vanish() {
        let c = ComponentSet::ideal();
        let r = compute_e_p(TrustLevel::new(TrustKind::FreeV), &c, &quick()).unwrap();
        assert!(r.value < 1e-9, "{}", r.value);
        assert!((r.alpha - FRAC_PI_4).abs() < 1e-12 && (r.beta - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn more_starts_never_lower_the_maximum() {
        let c = crate::config::bundled_components();
        let p = Problem::new(BoundKind::EP, TrustLevel::new(TrustKind::FreeDeltaV), &c).unwrap();
        let cfg = quick();
        let a = p.max_at(0.7, 0.7, 3, &cfg, None).unwrap();
        let b = p.max_at(0.7, 0.7, 6, &cfg, None).unwrap();
        assert!(b.value >= a.value);
        let again = p.max_at(0.7, 0.7, 3, &cfg, None).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn witness_reproduces_bound() {
        let c = crate::config::bundled_components();
        let trust = TrustLevel::new(TrustKind::FreeV);
        let r = compute_e_i(trust, &c, &quick()).unwrap();
        let p = Problem::new(BoundKind::EI, trust, &c).unwrap();
        let v = p.evaluate(r.alpha, r.beta, &r.witness).unwrap();
        assert!((v - r.value).abs() < 1e-12);
        for h in &r.history {
            if !h.pruned {
                assert!(h.value >= r.value - 1e-12);
            }
        }
    }

    #[test]
    fn zero_uncertainty_gives_zero_spread() {
        let mut c = crate::config::bundled_components();
        for m in c.coefficients_mut() {
            m.sigma = 0.0;
        }
        let trust = TrustLevel::new(TrustKind::FreeV);
        let r = compute_e_p(trust, &c, &quick()).unwrap();
        assert!(propagate_errors(trust, &c, &r, 50, 1).unwrap() < 1e-12);
    }

    #[test]
    fn trust_names_round_trip() {
        for k in TrustKind::ALL {
            assert_eq!(TrustKind::parse(k.name()).unwrap(), k);
        }
        assert!(TrustKind::parse("everything").is_err());
    }
}
