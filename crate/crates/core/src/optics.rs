//! Lossy, polarisation-dependent model of the rotation stage.
//!
//! Beam splitters and delay-line mirrors transmit the two polarisations with
//! different amplitudes, so the interferometer no longer acts as a product
//! operator on momentum ⊗ polarisation and it is not unitary. Detection
//! statistics are renormalised by the surviving trace.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use serde::{Deserialize, Serialize};

use crate::complex::{Mat2, Mat4, C64, I, ZERO};
use crate::error::{Error, Result};
use crate::quantum::{
    clamp_probability, mirror_swap, phase_shift, polarization_rotation, DensityMatrix, Outcome,
};

/// Below this surviving trace a configuration is treated as fully lossy.
pub const SURVIVAL_THRESHOLD: f64 = 1e-12;

const COEFF_TOL: f64 = 1e-12;

/// A measured quantity with its standard uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub const fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub const fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    /// Amplitude `√P` of a measured power coefficient, with first-order
    /// uncertainty `σ_P / (2√P)`.
    pub fn amplitude_from_power(power: Measured) -> Result<Self> {
        if power.value < 0.0 || power.sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "power coefficient {} ± {}",
                power.value, power.sigma
            )));
        }
        let amp = power.value.sqrt();
        let sigma = if amp > 0.0 { power.sigma / (2.0 * amp) } else { 0.0 };
        Ok(Self::new(amp, sigma))
    }
}

/// Amplitude transmission/reflection coefficients of one beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterParams {
    pub tv: Measured,
    pub rv: Measured,
    pub th: Measured,
    pub rh: Measured,
}

impl BeamSplitterParams {
    pub fn new(tv: Measured, rv: Measured, th: Measured, rh: Measured) -> Result<Self> {
        let p = Self { tv, rv, th, rh };
        p.validate()?;
        Ok(p)
    }

    pub fn balanced() -> Self {
        let s = Measured::exact(FRAC_1_SQRT_2);
        Self {
            tv: s,
            rv: s,
            th: s,
            rh: s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.tv.value, self.rv.value, self.th.value, self.rh.value];
        if vals.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "negative beam splitter coefficient in {vals:?}"
            )));
        }
        let v = self.tv.value.powi(2) + self.rv.value.powi(2);
        let h = self.th.value.powi(2) + self.rh.value.powi(2);
        if v > 1.0 + COEFF_TOL || h > 1.0 + COEFF_TOL {
            return Err(Error::InvalidParameter(format!(
                "beam splitter gains more than unity (V {v}, H {h})"
            )));
        }
        Ok(())
    }
}

/// Amplitude transmissions of the two delay lines, per polarisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorParams {
    pub gv1: Measured,
    pub gh1: Measured,
    pub gv2: Measured,
    pub gh2: Measured,
}

impl MirrorParams {
    pub fn new(gv1: Measured, gh1: Measured, gv2: Measured, gh2: Measured) -> Result<Self> {
        let p = Self { gv1, gh1, gv2, gh2 };
        p.validate()?;
        Ok(p)
    }

    pub fn lossless() -> Self {
        let one = Measured::exact(1.0);
        Self {
            gv1: one,
            gh1: one,
            gv2: one,
            gh2: one,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.gv1.value, self.gh1.value, self.gv2.value, self.gh2.value];
        if vals.iter().any(|g| g.abs() > 1.0 + COEFF_TOL || !g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mirror transmission above unity in {vals:?}"
            )));
        }
        Ok(())
    }
}

/// Every optical coefficient the model needs, stored at amplitude level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub bs1: BeamSplitterParams,
    pub bs2: BeamSplitterParams,
    pub mirror: MirrorParams,
    /// Generation-stage amplitude transmission of path `|0⟩`.
    pub t0: Measured,
    /// Generation-stage amplitude transmission of path `|1⟩`.
    pub t1: Measured,
}

impl ComponentSet {
    /// Lossless balanced components: the ideal interferometer.
    pub fn ideal() -> Self {
        Self {
            bs1: BeamSplitterParams::balanced(),
            bs2: BeamSplitterParams::balanced(),
            mirror: MirrorParams::lossless(),
            t0: Measured::exact(FRAC_1_SQRT_2),
            t1: Measured::exact(FRAC_1_SQRT_2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bs1.validate()?;
        self.bs2.validate()?;
        self.mirror.validate()?;
        if self.t0.value < 0.0 || self.t1.value < 0.0 || self.t0.value + self.t1.value == 0.0 {
            return Err(Error::InvalidParameter("generation transmissions".into()));
        }
        Ok(())
    }

    /// `(t₀ₙ, t₁ₙ)` normalised so that `t₀ₙ² + t₁ₙ² = 1`.
    pub fn normalized_transmissions(&self) -> (f64, f64) {
        crate::quantum::StateParams::normalized_transmissions(self.t0.value, self.t1.value)
    }

    /// All coefficients, in a fixed order, as mutable references.
    pub(crate) fn coefficients_mut(&mut self) -> [&mut Measured; 14] {
        let Self {
            bs1,
            bs2,
            mirror,
            t0,
            t1,
        } = self;
        [
            &mut bs1.tv,
            &mut bs1.rv,
            &mut bs1.th,
            &mut bs1.rh,
            &mut bs2.tv,
            &mut bs2.rv,
            &mut bs2.th,
            &mut bs2.rh,
            &mut mirror.gv1,
            &mut mirror.gh1,
            &mut mirror.gv2,
            &mut mirror.gh2,
            t0,
            t1,
        ]
    }
}

fn beam_splitter_matrix(tv: f64, rv: f64, th: f64, rh: f64) -> Mat4 {
    let t = |x: f64| C64::new(x, 0.0);
    let r = |x: f64| I * x;
    Mat4::from_rows([
        [t(tv), ZERO, r(rv), ZERO],
        [ZERO, t(th), ZERO, r(rh)],
        [r(rv), ZERO, t(tv), ZERO],
        [ZERO, r(rh), ZERO, t(th)],
    ])
}

/// Lossy polarisation-dependent beam splitter, with real transmissions and
/// reflections carrying a factor `i`.
pub fn real_bs(p: &BeamSplitterParams) -> Result<Mat4> {
    p.validate()?;
    Ok(beam_splitter_matrix(
        p.tv.value, p.rv.value, p.th.value, p.rh.value,
    ))
}

/// Delay-line mirrors: swap the paths and attenuate each polarisation.
pub fn real_mirror(p: &MirrorParams) -> Result<Mat4> {
    p.validate()?;
    let g = |x: f64| C64::new(x, 0.0);
    Ok(Mat4::from_rows([
        [ZERO, ZERO, g(p.gv1.value), ZERO],
        [ZERO, ZERO, ZERO, g(p.gh1.value)],
        [g(p.gv2.value), ZERO, ZERO, ZERO],
        [ZERO, g(p.gh2.value), ZERO, ZERO],
    ]))
}

/// Applies `(I₂ ⊗ U_θ)` from the left.
#[inline]
fn apply_polarization(m: &Mat4, theta: f64) -> Mat4 {
    let (s, c) = theta.sin_cos();
    let mut out = Mat4::zeros();
    for block in [0, 2] {
        for j in 0..4 {
            let top = m.get(block, j);
            let bottom = m.get(block + 1, j);
            out.set(block, j, top * c + bottom * s);
            out.set(block + 1, j, bottom * c - top * s);
        }
    }
    out
}

/// Applies `(V(φ) ⊗ I₂)` from the left: the path-0 rows pick up `e^{2iφ}`.
#[inline]
fn apply_phase(m: &Mat4, phi: f64) -> Mat4 {
    let ph = C64::from_polar(1.0, 2.0 * phi);
    let mut out = *m;
    for i in 0..2 {
        for j in 0..4 {
            out.set(i, j, m.get(i, j) * ph);
        }
    }
    out
}

/// Precomputed lossy rotation stage for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RealOptics {
    bs2: Mat4,
    mirror_bs1: Mat4,
}

impl RealOptics {
    pub fn new(c: &ComponentSet) -> Result<Self> {
        c.validate()?;
        Ok(Self::new_unchecked(c))
    }

    pub(crate) fn new_unchecked(c: &ComponentSet) -> Self {
        let bs = |p: &BeamSplitterParams| {
            beam_splitter_matrix(p.tv.value, p.rv.value, p.th.value, p.rh.value)
        };
        let m = &c.mirror;
        let g = |x: f64| C64::new(x, 0.0);
        let mirror = Mat4::from_rows([
            [ZERO, ZERO, g(m.gv1.value), ZERO],
            [ZERO, ZERO, ZERO, g(m.gh1.value)],
            [g(m.gv2.value), ZERO, ZERO, ZERO],
            [ZERO, g(m.gh2.value), ZERO, ZERO],
        ]);
        Self {
            bs2: bs(&c.bs2),
            mirror_bs1: mirror * bs(&c.bs1),
        }
    }

    /// `(U_BS₂, U_Mr·U_BS₁)`.
    pub(crate) fn parts(&self) -> (Mat4, Mat4) {
        (self.bs2, self.mirror_bs1)
    }

    /// `U_real(φ, θ) = (I₂⊗U_θ) U_BS₂ (V(φ)⊗I₂) U_Mr U_BS₁`.
    #[inline]
    pub fn unitary(&self, phi: f64, theta: f64) -> Mat4 {
        apply_polarization(&(self.bs2 * apply_phase(&self.mirror_bs1, phi)), theta)
    }

    /// Renormalised detection probabilities, indexed by [`Outcome::index`].
    #[inline]
    pub fn probabilities(&self, rho: &DensityMatrix, phi: f64, theta: f64) -> Result<[f64; 4]> {
        let w = rho.detection_weights(&self.unitary(phi, theta));
        let total: f64 = w.iter().sum();
        if total <= SURVIVAL_THRESHOLD {
            return Err(Error::SurvivalTraceZero { trace: total });
        }
        Ok(w.map(|x| clamp_probability(x / total)))
    }
}

/// Lossy rotation operator for the given components.
pub fn u_real(phi: f64, theta: f64, c: &ComponentSet) -> Result<Mat4> {
    Ok(RealOptics::new(c)?.unitary(phi, theta))
}

fn tilde_splitter(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::from_rows([[C64::new(c, 0.0), I * s], [I * s, C64::new(c, 0.0)]])
}

/// Product-form comparison model with lossless splitters of mixing angles
/// `α` (first) and `β` (second).
#[derive(Debug, Clone, Copy)]
pub struct TildeOptics {
    alpha: f64,
    beta: f64,
    bs2: Mat2,
    mirror_bs1: Mat2,
}

impl TildeOptics {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let dom = 0.0..=FRAC_PI_2;
        if !dom.contains(&alpha) || !dom.contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "(alpha, beta) = ({alpha}, {beta}) outside [0, π/2]²"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            bs2: tilde_splitter(beta),
            mirror_bs1: mirror_swap() * tilde_splitter(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `(B̃(β), σ_x·B̃(α))`.
    pub(crate) fn parts(&self) -> (Mat2, Mat2) {
        (self.bs2, self.mirror_bs1)
    }

    /// Momentum factor of the product operator.
    pub fn momentum_operator(&self, phi: f64) -> Mat2 {
        self.bs2 * phase_shift(phi) * self.mirror_bs1
    }

    #[inline]
    pub fn unitary(&self, phi: f64, theta: f64) -> Mat4 {
        self.momentum_operator(phi).kron(&polarization_rotation(theta))
    }

    /// Unnormalised (the operator is unitary) outcome probabilities.
    #[inline]
    pub fn probabilities(&self, rho: &DensityMatrix, phi: f64, theta: f64) -> [f64; 4] {
        rho.detection_weights(&self.unitary(phi, theta))
            .map(clamp_probability)
    }
}

/// `Ũ(φ, θ; α, β) = (I⊗U_θ) B̃(β) (V(φ)⊗I) (V_Mr⊗I) B̃(α)`.
pub fn u_ideal_tilde(phi: f64, theta: f64, alpha: f64, beta: f64) -> Result<Mat4> {
    Ok(TildeOptics::new(alpha, beta)?.unitary(phi, theta))
}

/// Detection probability through the lossy stage, renormalised by the
/// surviving trace `Tr[U ρ U†]`.
pub fn real_probability(
    rho: &DensityMatrix,
    phi: f64,
    theta: f64,
    out: Outcome,
    c: &ComponentSet,
) -> Result<f64> {
    Ok(real_probabilities(rho, phi, theta, c)?[out.index()])
}

pub fn real_probabilities(
    rho: &DensityMatrix,
    phi: f64,
    theta: f64,
    c: &ComponentSet,
) -> Result<[f64; 4]> {
    RealOptics::new(c)?.probabilities(rho, phi, theta)
}
