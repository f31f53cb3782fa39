//! CHSH correlations, the guessing-probability bound and certification.
//!
//! The correlator of one setting is `E = P(a = b) − P(a ≠ b)`, i.e. channels
//! 1 and 4 against channels 2 and 3, and
//! `I = Σ_{x,y} (−1)^{xy} E(φ_x, θ_y)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{mean_and_sem, Setting, SymbolSequence};
use crate::markov::{effective_guessing, estimate_sequence, DetectorParams};
use crate::optics::{ComponentSet, Measured, RealOptics};
use crate::quantum::{ideal_probabilities, DensityMatrix};

pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// Minimum events per setting and sub-interval.
pub const MIN_EVENTS_PER_SUBINTERVAL: u64 = 100;

/// Default confidence level of Markov-corrected probability intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Measurement angles indexed by the setting bits: `phi[x]`, `theta[y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSettings {
    pub phi: [f64; 2],
    pub theta: [f64; 2],
}

impl AngleSettings {
    /// Maximal-violation angles. The momentum angle `3π/8` carries `x = 1`
    /// and `5π/8` carries `x = 0`, so the minus sign falls on the
    /// `(3π/8, π/4)` acquisition.
    pub fn reference() -> Self {
        Self {
            phi: [5.0 * PI / 8.0, 3.0 * PI / 8.0],
            theta: [0.0, PI / 4.0],
        }
    }

    pub fn angles(&self, s: Setting) -> (f64, f64) {
        (self.phi[usize::from(s.x)], self.theta[usize::from(s.y)])
    }
}

/// `(−1)^{xy}`.
pub fn sign(s: Setting) -> f64 {
    if s.x == 1 && s.y == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `P(a = b) − P(a ≠ b)` from channel probabilities.
pub fn correlator(p: &[f64; 4]) -> f64 {
    p[0] + p[3] - p[1] - p[2]
}

/// `I` from per-setting channel probabilities indexed by [`Setting::index`].
pub fn chsh_value(probs: &[[f64; 4]; 4]) -> f64 {
    Setting::ALL
        .iter()
        .map(|&s| sign(s) * correlator(&probs[s.index()]))
        .sum()
}

pub fn chsh_ideal(rho: &DensityMatrix, s: &AngleSettings) -> f64 {
    let mut probs = [[0.0; 4]; 4];
    for st in Setting::ALL {
        let (phi, theta) = s.angles(st);
        probs[st.index()] = ideal_probabilities(rho, phi, theta);
    }
    chsh_value(&probs)
}

pub fn chsh_real(rho: &DensityMatrix, s: &AngleSettings, c: &ComponentSet) -> Result<f64> {
    let optics = RealOptics::new(c)?;
    let mut probs = [[0.0; 4]; 4];
    for st in Setting::ALL {
        let (phi, theta) = s.angles(st);
        probs[st.index()] = optics.probabilities(rho, phi, theta)?;
    }
    Ok(chsh_value(&probs))
}

/// Detector counts of the four acquisitions, indexed by [`Setting::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub counts: [[u64; 4]; 4],
    pub duration_s: [f64; 4],
}

impl CountTable {
    pub fn total(&self, s: Setting) -> u64 {
        self.counts[s.index()].iter().sum()
    }

    pub fn n_raw(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.duration_s.iter().sum()
    }

    pub fn probabilities(&self, s: Setting) -> [f64; 4] {
        let n = self.total(s) as f64;
        self.counts[s.index()].map(|c| c as f64 / n)
    }

    /// Builds a table from binned sequences.
    pub fn from_sequences(seqs: &[SymbolSequence; 4]) -> Self {
        let mut counts = [[0u64; 4]; 4];
        let mut duration_s = [0.0; 4];
        for (k, seq) in seqs.iter().enumerate() {
            counts[k] = seq.channel_counts();
            duration_s[k] = seq.n_bins_total as f64 * seq.bin_ns as f64 * 1e-9;
        }
        Self { counts, duration_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    /// Multinomial counting error of the pooled counts.
    Multinomial,
    /// Standard error of the mean over equal sub-intervals.
    Subintervals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    /// Headline estimate (Markov-corrected when a detector model is given).
    pub i_hat: f64,
    pub std_error: f64,
    pub method: UncertaintyMethod,
    /// Estimate from raw relative frequencies.
    pub i_raw: f64,
    /// `i_hat − i_raw`, the shift caused by the memory correction.
    pub markov_shift: f64,
    pub raw_probabilities: [[f64; 4]; 4],
    pub corrected_probabilities: Option<[[f64; 4]; 4]>,
    /// Standard errors of the raw probabilities.
    pub probability_std: [[f64; 4]; 4],
    /// Per-sub-interval values of `I`.
    pub subinterval_values: Vec<f64>,
    /// Multinomial standard error, reported alongside the headline.
    pub multinomial_std: f64,
    pub n_raw: u64,
}

fn multinomial_std(counts: &CountTable) -> f64 {
    Setting::ALL
        .iter()
        .map(|&s| {
            let e = correlator(&counts.probabilities(s));
            (1.0 - e * e) / counts.total(s) as f64
        })
        .sum::<f64>()
        .sqrt()
}

/// Estimate from pooled counts alone, with the multinomial standard error.
pub fn estimate_chsh(counts: &CountTable, k: usize) -> Result<ChshEstimate> {
    let need = k as u64 * MIN_EVENTS_PER_SUBINTERVAL;
    for s in Setting::ALL {
        if counts.total(s) < need.max(1) {
            return Err(Error::InsufficientData(format!(
                "setting {s} has {} events, need {need}",
                counts.total(s)
            )));
        }
    }
    let mut raw = [[0.0; 4]; 4];
    let mut pstd = [[0.0; 4]; 4];
    for s in Setting::ALL {
        let p = counts.probabilities(s);
        let n = counts.total(s) as f64;
        raw[s.index()] = p;
        pstd[s.index()] = p.map(|q| (q * (1.0 - q) / n).sqrt());
    }
    let i = chsh_value(&raw);
    let sigma = multinomial_std(counts);
    Ok(ChshEstimate {
        i_hat: i,
        std_error: sigma,
        method: UncertaintyMethod::Multinomial,
        i_raw: i,
        markov_shift: 0.0,
        raw_probabilities: raw,
        corrected_probabilities: None,
        probability_std: pstd,
        subinterval_values: Vec::new(),
        multinomial_std: sigma,
        n_raw: counts.n_raw(),
    })
}

/// Estimate from the four symbol sequences (indexed by [`Setting::index`]).
///
/// The uncertainty is the standard error of the mean over `k` sub-intervals.
/// With a detector model the per-setting probabilities are replaced by their
/// Markov maximum-likelihood estimates.
pub fn estimate_chsh_from_sequences(
    seqs: &[SymbolSequence; 4],
    k: usize,
    det: Option<&DetectorParams>,
) -> Result<ChshEstimate> {
    let table = CountTable::from_sequences(seqs);
    let need = k as u64 * MIN_EVENTS_PER_SUBINTERVAL;
    for s in Setting::ALL {
        if table.total(s) < need.max(1) {
            return Err(Error::InsufficientData(format!(
                "setting {s} has {} symbols, need {need}",
                table.total(s)
            )));
        }
    }

    let mut per_slice = vec![[[0.0; 4]; 4]; k];
    let mut raw = [[0.0; 4]; 4];
    let mut pstd = [[0.0; 4]; 4];
    for (idx, seq) in seqs.iter().enumerate() {
        let slices: Vec<[f64; 4]> = seq
            .slices(k)?
            .into_iter()
            .map(crate::ingest::frequencies)
            .collect();
        let (mean, sem) = mean_and_sem(&slices);
        raw[idx] = mean;
        pstd[idx] = sem;
        for (j, f) in slices.into_iter().enumerate() {
            per_slice[j][idx] = f;
        }
    }
    let values: Vec<f64> = per_slice.iter().map(chsh_value).collect();
    let kf = k as f64;
    let i_raw = values.iter().sum::<f64>() / kf;
    let var = values.iter().map(|v| (v - i_raw).powi(2)).sum::<f64>() / (kf - 1.0);
    let std_error = (var / kf).sqrt();

    let (i_hat, corrected) = match det {
        Some(d) => {
            let mut p = [[0.0; 4]; 4];
            for (idx, seq) in seqs.iter().enumerate() {
                p[idx] = estimate_sequence(seq, d, DEFAULT_LEVEL)?.p_hat;
            }
            (chsh_value(&p), Some(p))
        }
        None => (i_raw, None),
    };

    Ok(ChshEstimate {
        i_hat,
        std_error,
        method: UncertaintyMethod::Subintervals,
        i_raw,
        markov_shift: i_hat - i_raw,
        raw_probabilities: raw,
        corrected_probabilities: corrected,
        probability_std: pstd,
        subinterval_values: values,
        multinomial_std: multinomial_std(&table),
        n_raw: table.n_raw(),
    })
}

/// Outcome of the guessing-probability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessingBound {
    /// Bound on the guessing probability, at most 1.
    pub p: f64,
    /// No entropy can be certified.
    pub vacuous: bool,
}

/// `½ + ½·√(2 − (|Î| − e_I)²/4) + e_P`.
pub fn guessing_bound(i_hat: f64, e_i: f64, e_p: f64) -> Result<GuessingBound> {
    if !(i_hat.is_finite() && e_i >= 0.0 && e_p >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "guessing bound inputs Î={i_hat}, e_I={e_i}, e_P={e_p}"
        )));
    }
    let s = i_hat.abs() - e_i;
    if s > TSIRELSON + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "|Î| − e_I = {s} exceeds the Tsirelson bound"
        )));
    }
    if s <= 2.0 {
        return Ok(GuessingBound { p: 1.0, vacuous: true });
    }
    let s = s.min(TSIRELSON);
    let p = 0.5 + 0.5 * (2.0 - s * s / 4.0).max(0.0).sqrt() + e_p;
    if p >= 1.0 {
        Ok(GuessingBound { p: 1.0, vacuous: true })
    } else {
        Ok(GuessingBound { p, vacuous: false })
    }
}

/// Min-entropy in bits per symbol from the bound chain.
fn h_min(i_hat: f64, e_i: f64, e_p: f64, det: &DetectorParams) -> Result<(GuessingBound, f64, f64)> {
    let g = guessing_bound(i_hat, e_i, e_p)?;
    if g.vacuous {
        return Ok((g, 1.0, 0.0));
    }
    let star = effective_guessing(g.p, det).min(1.0);
    let h = if star >= 1.0 { 0.0 } else { -star.log2() };
    Ok((g, star, h))
}

/// The bounds consumed by certification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub e_p: Measured,
    pub e_i: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub i_hat: f64,
    pub i_std: f64,
    pub e_p: f64,
    pub e_p_std: f64,
    pub e_i: f64,
    pub e_i_std: f64,
    /// Guessing bound without detector memory.
    pub p_guess: f64,
    /// Guessing bound including detector memory.
    pub p_guess_star: f64,
    /// Certified min-entropy, bits per symbol.
    pub h_min_star: f64,
    pub h_min_std: f64,
    pub vacuous: bool,
    pub load_factor: f64,
    pub n_raw: u64,
    pub duration_s: f64,
    pub bits_per_second: f64,
}

/// Combines a CHSH estimate, non-ideality bounds and the detector model.
///
/// The min-entropy uncertainty propagates the standard errors of `Î`, `e_I`
/// and `e_P` to first order by central differences.
pub fn certify(
    chsh: &ChshEstimate,
    bounds: &BoundPair,
    det: &DetectorParams,
    duration_s: f64,
) -> Result<CertificationResult> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidParameter(format!("duration {duration_s} s")));
    }
    let i = chsh.i_hat.abs();
    let (e_i, e_p) = (bounds.e_i.value, bounds.e_p.value);
    let (g, star, h) = h_min(i, e_i, e_p, det)?;

    let h_at = |i: f64, ei: f64, ep: f64| {
        h_min(i.min(TSIRELSON + ei), ei.max(0.0), ep.max(0.0), det).map(|r| r.2)
    };
    let mut var = 0.0;
    if !g.vacuous {
        for (k, sigma) in [chsh.std_error, bounds.e_i.sigma, bounds.e_p.sigma]
            .into_iter()
            .enumerate()
        {
            if sigma <= 0.0 {
                continue;
            }
            let step = sigma * 1e-3;
            let mut hi = [i, e_i, e_p];
            let mut lo = [i, e_i, e_p];
            hi[k] += step;
            lo[k] -= step;
            let d = (h_at(hi[0], hi[1], hi[2])? - h_at(lo[0], lo[1], lo[2])?) / (2.0 * step);
            var += (d * sigma).powi(2);
        }
    }
    let n_raw = chsh.n_raw;
    Ok(CertificationResult {
        i_hat: chsh.i_hat,
        i_std: chsh.std_error,
        e_p,
        e_p_std: bounds.e_p.sigma,
        e_i,
        e_i_std: bounds.e_i.sigma,
        p_guess: g.p,
        p_guess_star: star,
        h_min_star: h,
        h_min_std: var.sqrt(),
        vacuous: g.vacuous,
        load_factor: det.load_factor(),
        n_raw,
        duration_s,
        bits_per_second: n_raw as f64 * h / duration_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{model_state, StateParams};

    #[test]
    fn ideal_state_saturates_tsirelson() {
        let i = chsh_ideal(&DensityMatrix::ideal_spe(), &AngleSettings::reference());
        assert!((i.abs() - TSIRELSON).abs() < 1e-9, "{i}");
    }

    #[test]
    fn mixed_state_gives_zero() {
        let rho = DensityMatrix::maximally_mixed();
        assert!(chsh_ideal(&rho, &AngleSettings::reference()).abs() < 1e-12);
        let c = crate::config::bundled_components();
        // Unequal losses bias the mixed state but cannot create violation.
        assert!(chsh_real(&rho, &AngleSettings::reference(), &c).unwrap().abs() < 2.0);
    }

    #[test]
    fn real_chsh_reduces_and_degrades() {
        let rho = DensityMatrix::ideal_spe();
        let s = AngleSettings::reference();
        let ideal = chsh_real(&rho, &s, &ComponentSet::ideal()).unwrap();
        assert!((ideal - chsh_ideal(&rho, &s)).abs() < 1e-10);
        let real = chsh_real(&rho, &s, &crate::config::bundled_components()).unwrap();
        assert!(real.abs() > 2.0 && real.abs() < TSIRELSON, "{real}");
    }

    #[test]
    fn separable_states_respect_classical_bound() {
        let grid: Vec<f64> = (0..20).map(|k| k as f64 * PI / 10.0).collect();
        let p = StateParams::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        let rho = model_state(&p).unwrap();
        for &a in &grid {
            for &b in &grid {
                let s = AngleSettings {
                    phi: [a, b],
                    theta: [b, a],
                };
                assert!(chsh_ideal(&rho, &s).abs() <= 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn uniform_counts_give_zero() {
        let t = CountTable {
            counts: [[1000; 4]; 4],
            duration_s: [1.0; 4],
        };
        assert_eq!(estimate_chsh(&t, 5).unwrap().i_hat, 0.0);
        let small = CountTable {
            counts: [[10; 4]; 4],
            duration_s: [1.0; 4],
        };
        assert!(matches!(estimate_chsh(&small, 5), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn guessing_bound_examples() {
        let g = guessing_bound(TSIRELSON, 0.0, 0.0).unwrap();
        assert!((g.p - 0.5).abs() < 1e-7 && !g.vacuous);
        let g = guessing_bound(2.656, 0.0, 0.0).unwrap();
        assert!((g.p - 0.7431).abs() < 5e-5);
        assert!((-g.p.log2() - 0.4285).abs() < 5e-4);
        let g = guessing_bound(2.0, 0.0, 0.0).unwrap();
        assert!(g.vacuous && g.p == 1.0);
        assert!(guessing_bound(2.5, 0.6, 0.0).unwrap().vacuous);
        assert!(guessing_bound(3.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn vacuous_certification_has_zero_entropy() {
        let t = CountTable {
            counts: [[4000, 1000, 1000, 4000]; 4],
            duration_s: [1.0; 4],
        };
        let mut est = estimate_chsh(&t, 5).unwrap();
        est.i_hat = 2.6;
        let b = BoundPair {
            e_p: Measured::exact(0.0),
            e_i: Measured::exact(1.0),
        };
        let r = certify(&est, &b, &DetectorParams::memoryless(), 4.0).unwrap();
        assert!(r.vacuous);
        assert_eq!(r.h_min_star, 0.0);
        assert_eq!(r.bits_per_second, 0.0);
    }
}
