//! Detector memory as a four-state Markov chain.
//!
//! A detected symbol can be followed by an afterpulse on the same detector
//! (probability `p_a`) or, when the next photon arrives within the dead time
//! `T_d`, by a click forced onto another detector. With `x = λ_eff·T_d` the
//! transition law is
//!
//! ```text
//! P_ij = p_a δ_ij + (1 − p_a) [ (1 − x) p_j + x q_ij ]
//! q_ii = p_i²,   q_ij = (1 + p_i) p_j  (i ≠ j)
//! ```
//!
//! where `p` are the memoryless outcome probabilities to be estimated.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::SymbolSequence;
use crate::rng::{stream, stream_rng};

/// Largest afterpulse probability the model accepts.
pub const MAX_AFTERPULSE: f64 = 0.01;
/// Above this load factor the first-order dead-time model is questionable.
pub const LOAD_FACTOR_WARN: f64 = 0.05;

const SIMPLEX_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Dead time in seconds.
    pub t_dead_s: f64,
    /// Afterpulse probability.
    pub p_after: f64,
    /// Effective detected rate in Hz.
    pub lambda_eff_hz: f64,
}

impl DetectorParams {
    pub fn new(t_dead_s: f64, p_after: f64, lambda_eff_hz: f64) -> Result<Self> {
        if !(t_dead_s >= 0.0 && t_dead_s.is_finite()) {
            return Err(Error::InvalidParameter(format!("dead time {t_dead_s} s")));
        }
        if !(0.0..=MAX_AFTERPULSE).contains(&p_after) {
            return Err(Error::InvalidParameter(format!(
                "afterpulse probability {p_after} outside [0, {MAX_AFTERPULSE}]"
            )));
        }
        if !(lambda_eff_hz >= 0.0 && lambda_eff_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate {lambda_eff_hz} Hz")));
        }
        Ok(Self {
            t_dead_s,
            p_after,
            lambda_eff_hz,
        })
    }

    /// A detector without memory.
    pub fn memoryless() -> Self {
        Self {
            t_dead_s: 0.0,
            p_after: 0.0,
            lambda_eff_hz: 0.0,
        }
    }

    /// `λ_eff · T_d`.
    pub fn load_factor(&self) -> f64 {
        self.lambda_eff_hz * self.t_dead_s
    }

    pub fn validity_warning(&self) -> Option<String> {
        let x = self.load_factor();
        (x > LOAD_FACTOR_WARN).then(|| {
            format!("load factor λT_d = {x:.4} exceeds {LOAD_FACTOR_WARN}; dead-time model is first order")
        })
    }
}

pub type Stochastic = [[f64; 4]; 4];

fn check_distribution(p: &[f64; 4]) -> Result<()> {
    if p.iter().any(|&x| !(x >= -SIMPLEX_TOL && x <= 1.0 + SIMPLEX_TOL)) {
        return Err(Error::InvalidParameter(format!("probabilities {p:?}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!("probabilities sum to {s}")));
    }
    Ok(())
}

/// Dead-time kernel `q`.
pub fn dead_time_kernel(p: &[f64; 4]) -> Stochastic {
    let mut q = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            q[i][j] = if i == j { p[i] * p[i] } else { (1.0 + p[i]) * p[j] };
        }
    }
    q
}

fn transition_unchecked(p: &[f64; 4], pa: f64, x: f64) -> Stochastic {
    let q = dead_time_kernel(p);
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let diag = if i == j { pa } else { 0.0 };
            m[i][j] = diag + (1.0 - pa) * ((1.0 - x) * p[j] + x * q[i][j]);
        }
    }
    m
}

pub fn transition_matrix(p: &[f64; 4], d: &DetectorParams) -> Result<Stochastic> {
    check_distribution(p)?;
    Ok(transition_unchecked(p, d.p_after, d.load_factor()))
}

/// Stationary law of a stochastic matrix by power iteration.
pub fn stationary_distribution(m: &Stochastic) -> [f64; 4] {
    let mut pi = [0.25; 4];
    for _ in 0..10_000 {
        let mut next = [0.0; 4];
        for (i, row) in m.iter().enumerate() {
            for j in 0..4 {
                next[j] += pi[i] * row[j];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let delta = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if delta < 1e-16 {
            break;
        }
    }
    pi
}

fn sample_row<R: rand::Rng>(rng: &mut R, row: &[f64; 4]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &w) in row.iter().enumerate() {
        acc += w;
        if u < acc {
            return j as u8 + 1;
        }
    }
    // Rounding left u above the cumulative sum: take the last likely state.
    row.iter().rposition(|&w| w > 0.0).unwrap_or(3) as u8 + 1
}

/// Draws `n` symbols of the chain, starting from its stationary law.
pub fn simulate_chain(p: &[f64; 4], d: &DetectorParams, n: usize, seed: u64) -> Result<SymbolSequence> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("chain length {n} < 2")));
    }
    let m = transition_matrix(p, d)?;
    let mut rng = stream_rng(seed, stream::CHAIN, 0);
    let mut symbols = Vec::with_capacity(n);
    let mut s = sample_row(&mut rng, &stationary_distribution(&m));
    symbols.push(s);
    for _ in 1..n {
        s = sample_row(&mut rng, &m[usize::from(s - 1)]);
        symbols.push(s);
    }
    SymbolSequence::from_symbols(symbols)
}

/// Transition tallies `N_ij` and the first symbol of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub n: [[u64; 4]; 4],
    /// Channel of the first symbol.
    pub first: u8,
}

impl TransitionCounts {
    pub fn from_symbols(symbols: &[u8]) -> Result<Self> {
        let first = *symbols
            .first()
            .ok_or_else(|| Error::DegenerateData("empty sequence".into()))?;
        let mut n = [[0u64; 4]; 4];
        for w in symbols.windows(2) {
            n[usize::from(w[0] - 1)][usize::from(w[1] - 1)] += 1;
        }
        Ok(Self { n, first })
    }

    pub fn total(&self) -> u64 {
        self.n.iter().flatten().sum()
    }

    /// How often each channel occurs in the sequence.
    pub fn occurrences(&self) -> [u64; 4] {
        let mut c = [0u64; 4];
        for row in &self.n {
            for (j, &v) in row.iter().enumerate() {
                c[j] += v;
            }
        }
        c[usize::from(self.first - 1)] += 1;
        c
    }
}

/// Maximum-likelihood outcome probabilities with confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub p_hat: [f64; 4],
    pub ci_low: [f64; 4],
    pub ci_high: [f64; 4],
    pub std_error: [f64; 4],
    /// Channels never observed; their estimate is pinned to 0 with a
    /// one-sided interval.
    pub pinned: [bool; 4],
    pub level: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

struct Likelihood<'a> {
    counts: &'a TransitionCounts,
    pa: f64,
    x: f64,
    active: Vec<usize>,
}

impl Likelihood<'_> {
    /// Softmax over the active channels; `z[0]` of the first active channel
    /// is fixed to zero.
    fn probabilities(&self, z: &[f64]) -> [f64; 4] {
        let zmax = z.iter().copied().fold(0.0, f64::max);
        let mut e = vec![(-zmax).exp()];
        e.extend(z.iter().map(|v| (v - zmax).exp()));
        let s: f64 = e.iter().sum();
        let mut p = [0.0; 4];
        for (k, &c) in self.active.iter().enumerate() {
            p[c] = e[k] / s;
        }
        p
    }

    fn value(&self, p: &[f64; 4]) -> f64 {
        let m = transition_unchecked(p, self.pa, self.x);
        let mut l = p[usize::from(self.counts.first - 1)].ln();
        for i in 0..4 {
            for j in 0..4 {
                let n = self.counts.n[i][j];
                if n > 0 {
                    l += n as f64 * m[i][j].ln();
                }
            }
        }
        l
    }

    /// `∂l/∂p_k`.
    fn grad_p(&self, p: &[f64; 4]) -> [f64; 4] {
        let m = transition_unchecked(p, self.pa, self.x);
        let mut g = [0.0; 4];
        let f = usize::from(self.counts.first - 1);
        g[f] += 1.0 / p[f];
        let scale = 1.0 - self.pa;
        for i in 0..4 {
            for j in 0..4 {
                let n = self.counts.n[i][j];
                if n == 0 {
                    continue;
                }
                let w = n as f64 / m[i][j] * scale;
                // ∂P_ij/∂p_j through (1−x)p_j and q_ij.
                if i == j {
                    g[i] += w * ((1.0 - self.x) + self.x * 2.0 * p[i]);
                } else {
                    g[j] += w * ((1.0 - self.x) + self.x * (1.0 + p[i]));
                    g[i] += w * self.x * p[j];
                }
            }
        }
        g
    }

    /// Gradient in the free softmax coordinates.
    fn grad_z(&self, z: &[f64]) -> Vec<f64> {
        let p = self.probabilities(z);
        let g = self.grad_p(&p);
        let mean: f64 = self.active.iter().map(|&c| g[c] * p[c]).sum();
        self.active[1..]
            .iter()
            .map(|&c| p[c] * (g[c] - mean))
            .collect()
    }

    fn hessian_z(&self, z: &[f64]) -> DMatrix<f64> {
        let d = z.len();
        let h = 1e-5;
        let mut hess = DMatrix::zeros(d, d);
        let mut zz = z.to_vec();
        for c in 0..d {
            zz[c] = z[c] + h;
            let gp = self.grad_z(&zz);
            zz[c] = z[c] - h;
            let gm = self.grad_z(&zz);
            zz[c] = z[c];
            for r in 0..d {
                hess[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
            }
        }
        (&hess + hess.transpose()) * 0.5
    }
}

/// Normalised-gradient tolerance of the Newton ascent.
pub const MLE_TOL: f64 = 1e-10;
/// Newton-decrement stop: predicted log-likelihood gain below this.
const MLE_DECREMENT_TOL: f64 = 1e-9;
const MLE_MAX_ITER: usize = 200;

/// Maximises the chain log-likelihood `log p_{x₁} + Σ N_ij log P_ij(p)`
/// over the probability simplex.
pub fn mle_estimate(counts: &TransitionCounts, d: &DetectorParams, level: f64) -> Result<ProbEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level {level}")));
    }
    let occ = counts.occurrences();
    let n_symbols: u64 = counts.total() + 1;
    let active: Vec<usize> = (0..4).filter(|&c| occ[c] > 0).collect();
    let lik = Likelihood {
        counts,
        pa: d.p_after,
        x: d.load_factor(),
        active: active.clone(),
    };

    // Start from the i.i.d. estimate.
    let base = (occ[active[0]] as f64).ln();
    let mut z: Vec<f64> = active[1..]
        .iter()
        .map(|&c| (occ[c] as f64).ln() - base)
        .collect();
    let norm = n_symbols as f64;
    let mut l = lik.value(&lik.probabilities(&z));
    let mut iterations = 0;
    let mut converged = z.is_empty();
    while !converged && iterations < MLE_MAX_ITER {
        iterations += 1;
        let g = lik.grad_z(&z);
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) / norm < MLE_TOL {
            converged = true;
            break;
        }
        let hess = lik.hessian_z(&z);
        let gv = DVector::from_vec(g.clone());
        let (step, newton) = match (-&hess).cholesky() {
            Some(ch) => (ch.solve(&gv), true),
            None => (gv.clone() / norm, false),
        };
        if newton && 0.5 * gv.dot(&step) < MLE_DECREMENT_TOL {
            converged = true;
            break;
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let lt = lik.value(&lik.probabilities(&trial));
            if lt >= l || t < 1e-12 {
                if lt >= l {
                    z = trial;
                    l = lt;
                }
                break;
            }
            t *= 0.5;
        }
        if t < 1e-12 {
            // No ascent possible at working precision.
            converged = true;
        }
    }
    if !converged {
        return Err(Error::OptimizerDiverged(format!(
            "MLE did not converge in {MLE_MAX_ITER} iterations"
        )));
    }

    let p_hat = lik.probabilities(&z);
    let quantile = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0);
    let mut std_error = [0.0; 4];
    if !z.is_empty() {
        let info = -lik.hessian_z(&z);
        let cov_z = info
            .try_inverse()
            .ok_or_else(|| Error::DegenerateData("singular observed information".into()))?;
        let m = active.len();
        let mut jac = DMatrix::zeros(m, m - 1);
        for (r, &cr) in active.iter().enumerate() {
            for (c, &cc) in active[1..].iter().enumerate() {
                let delta = if cr == cc { 1.0 } else { 0.0 };
                jac[(r, c)] = p_hat[cr] * (delta - p_hat[cc]);
            }
        }
        let cov_p = &jac * cov_z * jac.transpose();
        for (r, &cr) in active.iter().enumerate() {
            std_error[cr] = cov_p[(r, r)].max(0.0).sqrt();
        }
    }

    let mut ci_low = [0.0; 4];
    let mut ci_high = [0.0; 4];
    let mut pinned = [false; 4];
    for c in 0..4 {
        if occ[c] == 0 {
            // Zero events in n draws: exact one-sided bound.
            pinned[c] = true;
            ci_high[c] = 1.0 - (1.0 - level).powf(1.0 / norm);
        } else {
            ci_low[c] = (p_hat[c] - quantile * std_error[c]).max(0.0);
            ci_high[c] = (p_hat[c] + quantile * std_error[c]).min(1.0);
        }
    }
    Ok(ProbEstimate {
        p_hat,
        ci_low,
        ci_high,
        std_error,
        pinned,
        level,
        log_likelihood: l,
        iterations,
    })
}

/// Markov-corrected estimate of a symbol sequence.
pub fn estimate_sequence(seq: &SymbolSequence, d: &DetectorParams, level: f64) -> Result<ProbEstimate> {
    if seq.is_empty() {
        return Err(Error::DegenerateData("no symbols".into()));
    }
    mle_estimate(&TransitionCounts::from_symbols(&seq.symbols)?, d, level)
}

/// `M(p_max)`: bound on the probability of any symbol given the previous one.
pub fn guess_correction(p_max: f64, d: &DetectorParams) -> f64 {
    let pa = d.p_after;
    let x = d.load_factor();
    let same = pa + (1.0 - pa) * ((1.0 - x) * p_max + x * p_max * p_max);
    let other = (1.0 - pa) * (p_max + x * p_max * (1.0 - p_max));
    same.max(other)
}

/// Guessing probability bound `p*_guess ≤ M(p_max)` under detector memory.
pub fn effective_guessing(p_max: f64, d: &DetectorParams) -> f64 {
    guess_correction(p_max, d)
}
