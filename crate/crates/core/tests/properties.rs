use std::f64::consts::{PI, SQRT_2};

use proptest::prelude::*;
use proptest::strategy::ValueTree;

use speqrng::chsh::{chsh_ideal, chsh_real, guessing_bound, AngleSettings, TSIRELSON};
use speqrng::config::bundled_components;
use speqrng::extract::{toeplitz_hash, BitBuffer};
use speqrng::ingest::{bin_events, read_qsym, write_qsym, EventRecord, SymbolSequence};
use speqrng::markov::{dead_time_kernel, guess_correction, transition_matrix, DetectorParams};
use speqrng::optics::{real_probabilities, ComponentSet};
use speqrng::quantum::{
    cholesky_state, ideal_probabilities, ideal_rotation, model_state, CholeskyAngles, DensityMatrix, StateParams,
    CHOLESKY_ANGLES,
};

fn cholesky_angles() -> impl Strategy<Value = CholeskyAngles> {
    prop::array::uniform15(0.0f64..1.0).prop_map(|u| {
        let mut eta = [0.0; CHOLESKY_ANGLES];
        for (i, e) in eta.iter_mut().enumerate() {
            let (lo, hi) = CholeskyAngles::domain(i);
            *e = lo + u[i] * (hi - lo);
        }
        CholeskyAngles::new(eta).unwrap()
    })
}

fn angle() -> impl Strategy<Value = f64> {
    0.0..2.0 * PI
}

fn angle_settings() -> impl Strategy<Value = AngleSettings> {
    (angle(), angle(), angle(), angle()).prop_map(|(a, b, c, d)| AngleSettings {
        phi: [a, b],
        theta: [c, d],
    })
}

fn distribution() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0f64..1.0).prop_filter_map("nonzero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.map(|x| x / s))
    })
}

fn detector() -> impl Strategy<Value = DetectorParams> {
    (0.0f64..=0.01, 0.0f64..=0.05).prop_map(|(pa, x)| DetectorParams::new(22e-9, pa, x / 22e-9).unwrap())
}

/// Every amplitude coefficient multiplied by `s`.
fn scaled(c: &ComponentSet, s: f64) -> ComponentSet {
    let mut out = *c;
    for bs in [&mut out.bs1, &mut out.bs2] {
        for m in [&mut bs.tv, &mut bs.rv, &mut bs.th, &mut bs.rh] {
            m.value *= s;
        }
    }
    for m in [&mut out.mirror.gv1, &mut out.mirror.gh1, &mut out.mirror.gv2, &mut out.mirror.gh2] {
        m.value *= s;
    }
    out.t0.value *= s;
    out.t1.value *= s;
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ideal_rotation_is_unitary(phi in angle(), theta in angle()) {
        prop_assert!(ideal_rotation(phi, theta).is_unitary(1e-12));
    }

    #[test]
    fn probabilities_are_normalised(eta in cholesky_angles(), phi in angle(), theta in angle()) {
        let rho = cholesky_state(&eta);
        for p in [
            ideal_probabilities(&rho, phi, theta),
            real_probabilities(&rho, phi, theta, &bundled_components()).unwrap(),
        ] {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn ideal_probabilities_are_affine_in_visibility(
        v in 0.0f64..=1.0,
        delta in angle(),
        pi1 in angle(),
        pi2 in angle(),
        phi in angle(),
        theta in angle(),
    ) {
        let t = 0.5f64.sqrt();
        let at = |v: f64| {
            let rho = model_state(&StateParams::new(v, delta, pi1, pi2, t, t).unwrap()).unwrap();
            ideal_probabilities(&rho, phi, theta)
        };
        let (p0, p1, pv) = (at(0.0), at(1.0), at(v));
        for k in 0..4 {
            prop_assert!((pv[k] - ((1.0 - v) * p0[k] + v * p1[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn real_probabilities_ignore_common_scaling(
        eta in cholesky_angles(),
        phi in angle(),
        theta in angle(),
        s in 0.3f64..=1.0,
    ) {
        let c = bundled_components();
        let rho = cholesky_state(&eta);
        let a = real_probabilities(&rho, phi, theta, &c).unwrap();
        let b = real_probabilities(&rho, phi, theta, &scaled(&c, s)).unwrap();
        for k in 0..4 {
            prop_assert!((a[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn guessing_bound_is_monotone(
        i in 2.0f64..TSIRELSON,
        di in 0.0f64..0.3,
        e_i in 0.0f64..0.5,
        de_i in 0.0f64..0.1,
        e_p in 0.0f64..0.1,
        de_p in 0.0f64..0.05,
    ) {
        let g = |i: f64, ei: f64, ep: f64| guessing_bound(i, ei, ep).unwrap().p;
        let base = g(i, e_i, e_p);
        prop_assert!(g((i + di).min(TSIRELSON), e_i, e_p) <= base + 1e-15);
        prop_assert!(g(i, e_i + de_i, e_p) >= base - 1e-15);
        prop_assert!(g(i, e_i, e_p + de_p) >= base - 1e-15);
        prop_assert!((0.5..=1.0).contains(&base));
    }

    #[test]
    fn transition_rows_are_stochastic(p in distribution(), d in detector()) {
        let m = transition_matrix(&p, &d).unwrap();
        let q = dead_time_kernel(&p);
        for i in 0..4 {
            prop_assert!((m[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((q[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(m[i].iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn guess_correction_dominates_and_is_monotone(p in 0.0f64..=1.0, dp in 0.0f64..0.2, d in detector()) {
        let m = guess_correction(p, &d);
        prop_assert!(m >= (1.0 - d.p_after) * p - 1e-15);
        prop_assert!(guess_correction((p + dp).min(1.0), &d) >= m - 1e-15);
    }

    #[test]
    fn toeplitz_hash_is_linear(
        x in prop::collection::vec(any::<bool>(), 1..300),
        mask in prop::collection::vec(any::<bool>(), 300),
        seed_bits in prop::collection::vec(any::<bool>(), 600),
        m_frac in 0.05f64..1.0,
    ) {
        let n = x.len();
        let m = ((n as f64 * m_frac).ceil() as usize).max(1);
        let a = BitBuffer::from_bits(x.iter().copied());
        let b = BitBuffer::from_bits(mask[..n].iter().copied());
        let seed = BitBuffer::from_bits(seed_bits[..n + m - 1].iter().copied());
        let ta = toeplitz_hash(&a, m, &seed).unwrap();
        let tb = toeplitz_hash(&b, m, &seed).unwrap();
        let tab = toeplitz_hash(&(&a ^ &b), m, &seed).unwrap();
        prop_assert_eq!(tab, &ta ^ &tb);
    }

    #[test]
    fn binning_conserves_bins(
        gaps in prop::collection::vec((0u64..3000, 1u8..=4), 0..400),
        bin_ns in 1u64..2000,
        extra in 0u64..5000,
    ) {
        let mut t = 0;
        let events: Vec<EventRecord> = gaps
            .iter()
            .map(|&(g, c)| {
                t += g;
                EventRecord { timestamp_ns: t, channel: c }
            })
            .collect();
        let duration = t / 2 + extra + 1;
        let seq = bin_events(events.clone(), bin_ns, duration).unwrap();
        prop_assert_eq!(seq.n_bins_total, seq.n_empty + seq.n_multi + seq.len() as u64);
        let inside = events.iter().filter(|e| e.timestamp_ns / bin_ns < seq.n_bins_total).count();
        prop_assert_eq!(inside as u64 + seq.n_outside, events.len() as u64);
        prop_assert!(seq.len() + 2 * seq.n_multi as usize <= inside);
    }

    #[test]
    fn qsym_round_trip(symbols in prop::collection::vec(1u8..=4, 0..500), bin_ns in 1u64..100_000) {
        let mut seq = SymbolSequence::from_symbols(symbols).unwrap();
        seq.bin_ns = bin_ns;
        let mut buf = Vec::new();
        write_qsym(&mut buf, &seq).unwrap();
        prop_assert_eq!(buf.len(), 16 + seq.len());
        let back = read_qsym(buf.as_slice()).unwrap();
        prop_assert_eq!(back.symbols, seq.symbols);
        prop_assert_eq!(back.bin_ns, bin_ns);
    }
}

#[test]
fn tsirelson_holds_for_random_states() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (cholesky_angles(), angle_settings());
    let c = bundled_components();
    for _ in 0..1000 {
        let (eta, s) = strategy.new_tree(&mut runner).unwrap().current();
        let rho = cholesky_state(&eta);
        assert!(chsh_ideal(&rho, &s).abs() <= TSIRELSON + 1e-9);
        assert!(chsh_real(&rho, &s, &c).unwrap().abs() <= TSIRELSON + 1e-9);
    }
}

#[test]
fn maximal_violation_needs_the_entangled_state() {
    let s = AngleSettings::reference();
    assert!((chsh_ideal(&DensityMatrix::ideal_spe(), &s).abs() - 2.0 * SQRT_2).abs() < 1e-12);
    let separable = model_state(&StateParams::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0).unwrap()).unwrap();
    assert!(chsh_ideal(&separable, &s).abs() <= 2.0 + 1e-12);
}
