//! Forward model of an acquisition: Poisson photon arrivals, channel choice
//! by the detection probabilities, per-detector dead time and afterpulses.

use rand::RngExt;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::chsh::{chsh_value, AngleSettings};
use crate::error::{Error, Result};
use crate::ingest::{EventRecord, Setting};
use crate::optics::{ComponentSet, RealOptics};
use crate::quantum::{ideal_probabilities, model_state, DensityMatrix, StateParams};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub dead_time_ns: u64,
    pub afterpulse_probability: f64,
    /// Delay of an afterpulse after the end of the dead time.
    pub afterpulse_delay_ns: u64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            dead_time_ns: 0,
            afterpulse_probability: 0.0,
            afterpulse_delay_ns: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Rate of photons reaching the detectors, Hz.
    pub rate_hz: f64,
    pub duration_s: f64,
    pub detector: DetectorModel,
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate {} Hz", self.rate_hz)));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration {} s", self.duration_s)));
        }
        if !(0.0..1.0).contains(&self.detector.afterpulse_probability) {
            return Err(Error::InvalidParameter("afterpulse probability".into()));
        }
        Ok(())
    }

    pub fn duration_ns(&self) -> u64 {
        (self.duration_s * 1e9).round() as u64
    }
}

fn pick_channel(u: f64, p: &[f64; 4]) -> u8 {
    let mut acc = 0.0;
    for (k, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return k as u8 + 1;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(3) as u8 + 1
}

/// Time-ordered detection events over `[0, duration)`.
///
/// A photon hitting a detector that is still dead is lost. Every click,
/// afterpulses included, may trigger one afterpulse on the same detector at
/// `t + T_d + delay`.
pub fn simulate_events(probs: &[f64; 4], params: &SimulationParams, seed: u64, index: u64) -> Result<Vec<EventRecord>> {
    params.validate()?;
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("probabilities {probs:?}")));
    }
    let mut rng = stream_rng(seed, stream::SIMULATE, index);
    let gap = Exp::new(params.rate_hz * 1e-9).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let end = params.duration_ns();
    let det = params.detector;

    let mut events = Vec::new();
    let mut dead_until = [0u64; 4];
    // At most one afterpulse pending per detector.
    let mut pending: [Option<u64>; 4] = [None; 4];
    let mut next_photon = gap.sample(&mut rng);

    loop {
        let (ap_ch, ap_time) = pending
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.map(|t| (k, t)))
            .min_by_key(|&(_, t)| t)
            .unwrap_or((0, u64::MAX));
        let photon_ns = next_photon.floor() as u64;
        let (ch, time) = if ap_time <= photon_ns {
            pending[ap_ch] = None;
            (ap_ch, ap_time)
        } else {
            next_photon += gap.sample(&mut rng);
            let u: f64 = rng.random();
            (usize::from(pick_channel(u, probs) - 1), photon_ns)
        };
        if time >= end {
            if ap_time == u64::MAX || ap_time >= end {
                break;
            }
            continue;
        }
        if time < dead_until[ch] {
            continue;
        }
        events.push(EventRecord {
            timestamp_ns: time,
            channel: ch as u8 + 1,
        });
        dead_until[ch] = time + det.dead_time_ns;
        if det.afterpulse_probability > 0.0 && pending[ch].is_none() {
            let u: f64 = rng.random();
            if u < det.afterpulse_probability {
                pending[ch] = Some(time + det.dead_time_ns + det.afterpulse_delay_ns);
            }
        }
    }
    Ok(events)
}

/// Source and optics of a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub state: StateSpec,
    /// Lossy components; `None` simulates the ideal interferometer.
    pub components: Option<ComponentSet>,
    pub angles: AngleSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub v: f64,
    pub delta: f64,
    pub pi1: f64,
    pub pi2: f64,
}

impl StateSpec {
    pub fn ideal() -> Self {
        Self {
            v: 1.0,
            delta: 0.0,
            pi1: 0.0,
            pi2: 0.0,
        }
    }
}

impl Scenario {
    fn state(&self) -> Result<DensityMatrix> {
        let (t0n, t1n) = match &self.components {
            Some(c) => c.normalized_transmissions(),
            None => {
                let s = StateParams::ideal();
                (s.t0n, s.t1n)
            }
        };
        let s = self.state;
        model_state(&StateParams::new(s.v, s.delta, s.pi1, s.pi2, t0n, t1n)?)
    }

    /// Detection probabilities of each setting, indexed by [`Setting::index`].
    pub fn probabilities(&self) -> Result<[[f64; 4]; 4]> {
        let rho = self.state()?;
        let optics = self.components.as_ref().map(RealOptics::new).transpose()?;
        let mut out = [[0.0; 4]; 4];
        for s in Setting::ALL {
            let (phi, theta) = self.angles.angles(s);
            out[s.index()] = match &optics {
                Some(o) => o.probabilities(&rho, phi, theta)?,
                None => ideal_probabilities(&rho, phi, theta),
            };
        }
        Ok(out)
    }
}

/// Visibility at which the scenario's CHSH value has magnitude `target`,
/// found by bisection on `[0, 1]` (the magnitude grows with `v`).
pub fn fit_visibility(scenario: &Scenario, target: f64) -> Result<f64> {
    let chsh_at = |v: f64| -> Result<f64> {
        let mut sc = scenario.clone();
        sc.state.v = v;
        Ok(chsh_value(&sc.probabilities()?).abs())
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let top = chsh_at(hi)?;
    if !(target >= chsh_at(lo)? && target <= top) {
        return Err(Error::InvalidParameter(format!(
            "target |I| = {target} outside the reachable range (max {top:.6})"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if chsh_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Events of all four settings, indexed by [`Setting::index`].
pub fn simulate_acquisitions(scenario: &Scenario, params: &SimulationParams, seed: u64) -> Result<[Vec<EventRecord>; 4]> {
    let probs = scenario.probabilities()?;
    let mut out: [Vec<EventRecord>; 4] = Default::default();
    for s in Setting::ALL {
        out[s.index()] = simulate_events(&probs[s.index()], params, seed, s.index() as u64)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rate: f64, det: DetectorModel) -> SimulationParams {
        SimulationParams {
            rate_hz: rate,
            duration_s: 0.1,
            detector: det,
        }
    }

    #[test]
    fn events_are_sorted_and_in_window() {
        let det = DetectorModel {
            dead_time_ns: 22,
            afterpulse_probability: 0.005,
            afterpulse_delay_ns: 1000,
        };
        let ev = simulate_events(&[0.1, 0.2, 0.3, 0.4], &params(2e5, det), 3, 0).unwrap();
        assert!(ev.windows(2).all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
        assert!(ev.iter().all(|e| e.timestamp_ns < 100_000_000 && (1..=4).contains(&e.channel)));
        let n = ev.len() as f64;
        assert!((n - 2e4).abs() < 5.0 * 2e4f64.sqrt(), "{n}");
    }

    #[test]
    fn dead_time_spaces_clicks_on_one_detector() {
        let det = DetectorModel {
            dead_time_ns: 5000,
            afterpulse_probability: 0.0,
            afterpulse_delay_ns: 0,
        };
        let ev = simulate_events(&[1.0, 0.0, 0.0, 0.0], &params(1e6, det), 1, 0).unwrap();
        assert!(ev.windows(2).all(|w| w[1].timestamp_ns - w[0].timestamp_ns >= 5000));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = params(1e5, DetectorModel::ideal());
        let a = simulate_events(&[0.25; 4], &p, 11, 2).unwrap();
        assert_eq!(a, simulate_events(&[0.25; 4], &p, 11, 2).unwrap());
        assert_ne!(a, simulate_events(&[0.25; 4], &p, 12, 2).unwrap());
    }

    #[test]
    fn visibility_fit_hits_target() {
        let sc = Scenario {
            state: StateSpec::ideal(),
            components: Some(crate::config::bundled_components()),
            angles: AngleSettings::reference(),
        };
        let v = fit_visibility(&sc, 2.656).unwrap();
        let mut fitted = sc.clone();
        fitted.state.v = v;
        assert!((chsh_value(&fitted.probabilities().unwrap()).abs() - 2.656).abs() < 1e-9);
        assert!(v > 0.9 && v < 1.0, "{v}");
        assert!(fit_visibility(&sc, 3.0).is_err());
    }

    #[test]
    fn scenario_probabilities_are_normalised() {
        let sc = Scenario {
            state: StateSpec { v: 0.9, delta: 0.2, pi1: 0.0, pi2: 0.1 },
            components: Some(crate::config::bundled_components()),
            angles: AngleSettings::reference(),
        };
        for p in sc.probabilities().unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
