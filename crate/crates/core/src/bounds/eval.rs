//! Fast objective evaluation for the bound searches.
//!
//! Both rotation stages factor as `(I₂⊗U_θ)·M(φ)` with
//! `M(φ) = e^{2iφ}K₀ + K₁`, so the state is conjugated once per momentum
//! angle and the polarisation rotation only enters through the 2×2 diagonal
//! blocks of `M ρ M†`.

use crate::complex::{Mat2, Mat4, C64};
use crate::ingest::Setting;
use crate::optics::{ComponentSet, RealOptics, TildeOptics, SURVIVAL_THRESHOLD};

use crate::chsh::sign;

/// `M(φ) = e^{2iφ}K₀ + K₁`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PhaseSplit {
    k0: Mat4,
    k1: Mat4,
}

fn row_mask(m: &Mat4, keep_path0: bool) -> Mat4 {
    let mut out = *m;
    let rows = if keep_path0 { [2, 3] } else { [0, 1] };
    for r in rows {
        for j in 0..4 {
            out.set(r, j, C64::new(0.0, 0.0));
        }
    }
    out
}

impl PhaseSplit {
    pub(crate) fn real(c: &ComponentSet) -> Self {
        let optics = RealOptics::new_unchecked(c);
        let (bs2, mb) = optics.parts();
        Self {
            k0: bs2 * row_mask(&mb, true),
            k1: bs2 * row_mask(&mb, false),
        }
    }

    pub(crate) fn tilde(t: &TildeOptics) -> Self {
        let (bs2, mb) = t.parts();
        let id = Mat2::identity();
        let p0 = Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]);
        let p1 = Mat2::from_real([[0.0, 0.0], [0.0, 1.0]]);
        Self {
            k0: (bs2 * p0 * mb).kron(&id),
            k1: (bs2 * p1 * mb).kron(&id),
        }
    }

    /// `M(φ) ρ M(φ)†`.
    #[inline]
    pub(crate) fn evolve(&self, rho: &Mat4, phi: f64) -> Mat4 {
        let ph = C64::from_polar(1.0, 2.0 * phi);
        let m = self.k0.scale(ph) + self.k1;
        m.conjugate(rho)
    }
}

/// Diagonal of `(I⊗U_θ) N (I⊗U_θ)†` for Hermitian `N`.
#[inline]
pub(crate) fn polarization_weights(n: &Mat4, theta: f64) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    let mut w = [0.0; 4];
    for a in [0, 2] {
        let b00 = n.get(a, a).re;
        let b11 = n.get(a + 1, a + 1).re;
        let cross = 2.0 * n.get(a, a + 1).re * c * s;
        w[a] = c * c * b00 + cross + s * s * b11;
        w[a + 1] = s * s * b00 - cross + c * c * b11;
    }
    w
}

#[inline]
fn trace_re(n: &Mat4) -> f64 {
    (0..4).map(|i| n.get(i, i).re).sum()
}

#[inline]
fn correlator(w: &[f64; 4]) -> f64 {
    w[0] + w[3] - w[1] - w[2]
}

/// `|P_real(k) − P̃(k)|`, or `−∞` when the lossy stage absorbs everything.
#[inline]
pub(crate) fn ep_value(real: &PhaseSplit, tilde: &PhaseSplit, rho: &Mat4, phi: f64, theta: f64, k: usize) -> f64 {
    let nr = real.evolve(rho, phi);
    let tr = trace_re(&nr);
    if tr <= SURVIVAL_THRESHOLD {
        return f64::NEG_INFINITY;
    }
    let wr = polarization_weights(&nr, theta)[k] / tr;
    let wt = polarization_weights(&tilde.evolve(rho, phi), theta)[k];
    (wr - wt).abs()
}

/// `|I_real − Ĩ|` at angles `phi[x]`, `theta[y]`.
#[inline]
pub(crate) fn ei_value(real: &PhaseSplit, tilde: &PhaseSplit, rho: &Mat4, phi: [f64; 2], theta: [f64; 2]) -> f64 {
    let mut diff = 0.0;
    for x in 0..2u8 {
        let nr = real.evolve(rho, phi[usize::from(x)]);
        let tr = trace_re(&nr);
        if tr <= SURVIVAL_THRESHOLD {
            return f64::NEG_INFINITY;
        }
        let nt = tilde.evolve(rho, phi[usize::from(x)]);
        for y in 0..2u8 {
            let th = theta[usize::from(y)];
            let er = correlator(&polarization_weights(&nr, th)) / tr;
            let et = correlator(&polarization_weights(&nt, th));
            diff += sign(Setting { x, y }) * (er - et);
        }
    }
    diff.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{ideal_probabilities, model_state, DensityMatrix, StateParams};

    #[test]
    fn split_reproduces_full_operators() {
        let c = crate::config::bundled_components();
        let real = PhaseSplit::real(&c);
        let full = RealOptics::new(&c).unwrap();
        let t = TildeOptics::new(0.61, 0.93).unwrap();
        let tilde = PhaseSplit::tilde(&t);
        let p = StateParams::new(0.8, 0.4, 0.2, 1.1, 0.6, 0.8).unwrap();
        let rho = model_state(&p).unwrap();
        for (phi, theta) in [(0.0, 0.0), (1.2, 0.3), (3.9, 5.1)] {
            let nr = real.evolve(rho.matrix(), phi);
            let w = polarization_weights(&nr, theta);
            let tr: f64 = w.iter().sum();
            let expected = full.probabilities(&rho, phi, theta).unwrap();
            for k in 0..4 {
                assert!((w[k] / tr - expected[k]).abs() < 1e-12);
            }
            let wt = polarization_weights(&tilde.evolve(rho.matrix(), phi), theta);
            let et = t.probabilities(&rho, phi, theta);
            for k in 0..4 {
                assert!((wt[k] - et[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn balanced_tilde_matches_ideal_rotation() {
        let tilde = PhaseSplit::tilde(&TildeOptics::new(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4).unwrap());
        let rho = DensityMatrix::ideal_spe();
        let w = polarization_weights(&tilde.evolve(rho.matrix(), 0.7), 0.2);
        let p = ideal_probabilities(&rho, 0.7, 0.2);
        for k in 0..4 {
            assert!((w[k] - p[k]).abs() < 1e-12);
        }
    }
}
