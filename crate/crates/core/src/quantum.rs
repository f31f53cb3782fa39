//! Ideal two-qubit description of the single-photon entangled state.
//!
//! The photon carries a momentum qubit (path `0`/`1`) and a polarisation
//! qubit (`V`/`H`). The global basis order is `(|0V⟩, |0H⟩, |1V⟩, |1H⟩)`,
//! i.e. index `2a + b` with momentum bit `a` and polarisation bit `b`, and all
//! tensor products are taken momentum ⊗ polarisation.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::complex::{Mat2, Mat4, C64, I, MATRIX_TOL, ONE, ZERO};
use crate::error::{Error, Result};

/// Eigenvalue floor for positive semidefiniteness.
pub const PSD_FLOOR: f64 = -1e-10;

/// Slack beyond which a probability outside `[0, 1]` signals a model bug.
pub const PROBABILITY_SLACK: f64 = 1e-9;

/// A detection outcome: momentum bit `a` and polarisation bit `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub a: u8,
    pub b: u8,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome { a: 0, b: 0 },
        Outcome { a: 0, b: 1 },
        Outcome { a: 1, b: 0 },
        Outcome { a: 1, b: 1 },
    ];

    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a > 1 || b > 1 {
            return Err(Error::InvalidParameter(format!("outcome bits ({a},{b})")));
        }
        Ok(Self { a, b })
    }

    /// Detector channel: 1↔|0V⟩, 2↔|0H⟩, 3↔|1V⟩, 4↔|1H⟩.
    pub fn from_channel(channel: u8) -> Result<Self> {
        match channel {
            1..=4 => Ok(Self::from_index(usize::from(channel - 1))),
            _ => Err(Error::InvalidParameter(format!("channel {channel}"))),
        }
    }

    pub(crate) fn from_index(idx: usize) -> Self {
        Self::ALL[idx]
    }

    /// Position in the global basis.
    pub fn index(self) -> usize {
        usize::from(2 * self.a + self.b)
    }

    pub fn channel(self) -> u8 {
        2 * self.a + self.b + 1
    }

    pub fn bits_agree(self) -> bool {
        self.a == self.b
    }
}

/// Lossless balanced beam splitter acting on the momentum qubit.
pub fn balanced_beam_splitter() -> Mat2 {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let is = I * FRAC_1_SQRT_2;
    Mat2::from_rows([[s, is], [is, s]])
}

/// Phase shifter `diag(e^{2iφ}, 1)`; the arm phase difference is `2φ`.
pub fn phase_shift(phi: f64) -> Mat2 {
    Mat2::diagonal([C64::from_polar(1.0, 2.0 * phi), ONE])
}

/// Path swap performed by the interferometer mirrors.
pub fn mirror_swap() -> Mat2 {
    Mat2::from_real([[0.0, 1.0], [1.0, 0.0]])
}

/// `U_φ = i e^{iφ} [[cos φ, sin φ], [−sin φ, cos φ]]`, the momentum rotation
/// realised by an ideal Mach-Zehnder interferometer.
pub fn momentum_rotation(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    let pref = I * C64::from_polar(1.0, phi);
    Mat2::from_real([[c, s], [-s, c]]).scale(pref)
}

/// Real rotation `[[cos θ, sin θ], [−sin θ, cos θ]]` from the half-wave plates.
pub fn polarization_rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::from_real([[c, s], [-s, c]])
}

/// `U_φ ⊗ U_θ`.
pub fn ideal_rotation(phi: f64, theta: f64) -> Mat4 {
    momentum_rotation(phi).kron(&polarization_rotation(theta))
}

/// Clamp a computed probability into `[0, 1]`.
///
/// Values outside by more than [`PROBABILITY_SLACK`] indicate a broken model
/// and trip a debug assertion.
pub fn clamp_probability(p: f64) -> f64 {
    debug_assert!(
        p >= -PROBABILITY_SLACK && p <= 1.0 + PROBABILITY_SLACK,
        "probability {p} outside [0,1]"
    );
    p.clamp(0.0, 1.0)
}

/// A two-qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    mat: Mat4,
}

impl DensityMatrix {
    pub fn new(mat: Mat4) -> Result<Self> {
        if !mat.is_hermitian(MATRIX_TOL) {
            return Err(Error::InvalidState("not Hermitian".into()));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > MATRIX_TOL || tr.im.abs() > MATRIX_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min_ev = mat.hermitian_eigenvalues()[0];
        if min_ev < PSD_FLOOR {
            return Err(Error::InvalidState(format!("eigenvalue {min_ev:.3e}")));
        }
        Ok(Self { mat })
    }

    /// Wrap a matrix that is a density matrix by construction.
    pub(crate) fn new_unchecked(mat: Mat4) -> Self {
        Self { mat }
    }

    /// Projector onto a normalised pure state.
    pub fn pure(psi: [C64; 4]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > MATRIX_TOL {
            return Err(Error::InvalidState(format!("state norm² {norm}")));
        }
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.set(i, j, psi[i] * psi[j].conj());
            }
        }
        Ok(Self { mat: m })
    }

    pub fn basis(out: Outcome) -> Self {
        let mut m = Mat4::zeros();
        m.set(out.index(), out.index(), ONE);
        Self { mat: m }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            mat: Mat4::identity().scale(C64::new(0.25, 0.0)),
        }
    }

    /// `(|0V⟩ + |1H⟩)/√2`.
    pub fn ideal_spe() -> Self {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        Self::pure([s, ZERO, ZERO, s]).expect("normalised")
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.mat
    }

    /// `U ρ U†`, without renormalisation.
    pub fn evolve(&self, u: &Mat4) -> Mat4 {
        u.conjugate(&self.mat)
    }

    /// Diagonal of `U ρ U†` in the detection basis.
    #[inline]
    pub fn detection_weights(&self, u: &Mat4) -> [f64; 4] {
        let rho = self.mat.as_rows();
        let rows = u.as_rows();
        let mut w = [0.0; 4];
        for (k, wk) in w.iter_mut().enumerate() {
            let row = &rows[k];
            let mut acc = ZERO;
            for i in 0..4 {
                if row[i] == ZERO {
                    continue;
                }
                let mut inner = ZERO;
                for j in 0..4 {
                    inner += rho[i][j] * row[j].conj();
                }
                acc += row[i] * inner;
            }
            *wk = acc.re;
        }
        w
    }
}

/// Probability of `out` after the ideal rotations `U_φ ⊗ U_θ`:
/// `Tr[(U_φ⊗U_θ) ρ (U_φ⊗U_θ)† · P_a⊗P_b]`.
pub fn ideal_probability(rho: &DensityMatrix, phi: f64, theta: f64, out: Outcome) -> f64 {
    ideal_probabilities(rho, phi, theta)[out.index()]
}

/// All four ideal outcome probabilities, indexed by [`Outcome::index`].
pub fn ideal_probabilities(rho: &DensityMatrix, phi: f64, theta: f64) -> [f64; 4] {
    rho.detection_weights(&ideal_rotation(phi, theta))
        .map(clamp_probability)
}

/// Parameters of the trusted state model
/// `ρ = R(π₁,π₂) [v|ψ(δ)⟩⟨ψ(δ)| + (1−v)/4 · I] R(π₁,π₂)†`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    pub v: f64,
    pub delta: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub t0n: f64,
    pub t1n: f64,
}

impl StateParams {
    pub fn new(v: f64, delta: f64, pi1: f64, pi2: f64, t0n: f64, t1n: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("visibility {v} outside [0,1]")));
        }
        if t0n < 0.0 || t1n < 0.0 || (t0n * t0n + t1n * t1n - 1.0).abs() > MATRIX_TOL {
            return Err(Error::InvalidParameter(format!(
                "normalised transmissions ({t0n}, {t1n})"
            )));
        }
        if ![delta, pi1, pi2].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite angle".into()));
        }
        Ok(Self {
            v,
            delta,
            pi1,
            pi2,
            t0n,
            t1n,
        })
    }

    /// The ideal state `(|0V⟩ + |1H⟩)/√2`.
    pub fn ideal() -> Self {
        Self {
            v: 1.0,
            delta: 0.0,
            pi1: 0.0,
            pi2: 0.0,
            t0n: FRAC_1_SQRT_2,
            t1n: FRAC_1_SQRT_2,
        }
    }

    /// Normalise raw path amplitudes `t₀, t₁` to `t₀ₙ² + t₁ₙ² = 1`.
    pub fn normalized_transmissions(t0: f64, t1: f64) -> (f64, f64) {
        let n = t0.hypot(t1);
        (t0 / n, t1 / n)
    }
}

/// Wave-plate error rotation `R(π₁, π₂)`, block diagonal in the path index.
pub fn waveplate_rotation(pi1: f64, pi2: f64) -> Mat4 {
    let (s1, c1) = pi1.sin_cos();
    let (s2, c2) = pi2.sin_cos();
    Mat4::from_real([
        [c1, s1, 0.0, 0.0],
        [-s1, c1, 0.0, 0.0],
        [0.0, 0.0, c2, s2],
        [0.0, 0.0, -s2, c2],
    ])
}

/// Noisy entangled state before the wave-plate errors.
fn source_state(v: f64, delta: f64, t0n: f64, t1n: f64) -> Mat4 {
    let mix = (1.0 - v) / 4.0;
    let coh = C64::from_polar(v * t0n * t1n, delta);
    let mut m = Mat4::diagonal([
        C64::new(v * t0n * t0n + mix, 0.0),
        C64::new(mix, 0.0),
        C64::new(mix, 0.0),
        C64::new(v * t1n * t1n + mix, 0.0),
    ]);
    m.set(0, 3, coh.conj());
    m.set(3, 0, coh);
    m
}

/// Density matrix of the trusted state model.
pub fn model_state(p: &StateParams) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p.v) {
        return Err(Error::InvalidParameter(format!("visibility {} outside [0,1]", p.v)));
    }
    Ok(model_state_unchecked(p))
}

pub(crate) fn model_state_unchecked(p: &StateParams) -> DensityMatrix {
    let r = waveplate_rotation(p.pi1, p.pi2);
    DensityMatrix::new_unchecked(r.conjugate(&source_state(p.v, p.delta, p.t0n, p.t1n)))
}

/// Number of hyperspherical angles parameterising a general state.
pub const CHOLESKY_ANGLES: usize = 15;

/// Hyperspherical angles of the 16 Cholesky coordinates.
///
/// `eta[0..4]` lie in `[0, π/2]` so the Cholesky diagonal stays
/// non-negative, `eta[4..14]` in `[0, π]` and `eta[14]` in `[0, 2π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CholeskyAngles {
    pub eta: [f64; CHOLESKY_ANGLES],
}

impl CholeskyAngles {
    pub fn new(eta: [f64; CHOLESKY_ANGLES]) -> Result<Self> {
        for (i, &e) in eta.iter().enumerate() {
            let (lo, hi) = Self::domain(i);
            if !(lo..=hi).contains(&e) {
                return Err(Error::InvalidParameter(format!(
                    "eta[{i}] = {e} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { eta })
    }

    pub fn domain(i: usize) -> (f64, f64) {
        match i {
            0..=3 => (0.0, FRAC_PI_2),
            4..=13 => (0.0, PI),
            _ => (0.0, 2.0 * PI),
        }
    }

    /// Points on the unit 15-sphere: `x₁ = cos η₁`,
    /// `x_k = cos η_k ∏_{j<k} sin η_j`, `x₁₆ = ∏ sin η_j`.
    pub fn coordinates(&self) -> [f64; 16] {
        let mut x = [0.0; 16];
        let mut sines = 1.0;
        for (i, &e) in self.eta.iter().enumerate() {
            let (s, c) = e.sin_cos();
            x[i] = c * sines;
            sines *= s;
        }
        x[15] = sines;
        x
    }
}

/// General state `ρ = (A + iB)†(A + iB)` from hyperspherical Cholesky
/// coordinates with unit radius.
pub fn cholesky_state(angles: &CholeskyAngles) -> DensityMatrix {
    let x = angles.coordinates();
    let re = |v: f64| C64::new(v, 0.0);
    let c = |a: f64, b: f64| C64::new(a, b);
    let t = Mat4::from_rows([
        [re(x[0]), c(x[4], x[10]), c(x[7], x[13]), c(x[9], x[15])],
        [ZERO, re(x[1]), c(x[5], x[11]), c(x[8], x[14])],
        [ZERO, ZERO, re(x[2]), c(x[6], x[12])],
        [ZERO, ZERO, ZERO, re(x[3])],
    ]);
    DensityMatrix::new_unchecked(t.dagger() * t)
}
