use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use serde::Deserialize;

use speqrng::bounds::{compute_e_i, compute_e_p, propagate_errors, OptimizerConfig, TrustKind, TrustLevel};
use speqrng::chsh::{estimate_chsh_from_sequences, AngleSettings};
use speqrng::config::bundled_components;
use speqrng::ingest::{
    bin_events, effective_rate, read_events, subinterval_probabilities, EventRecord, Setting, SymbolSequence,
};
use speqrng::markov::{estimate_sequence, simulate_chain, DetectorParams};
use speqrng::optics::ComponentSet;
use speqrng::simulate::{simulate_acquisitions, simulate_events, DetectorModel, Scenario, SimulationParams, StateSpec};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Deserialize)]
struct Truth {
    bin_ns: u64,
    duration_ns: u64,
    n_bins_total: u64,
    n_empty: u64,
    n_multi: u64,
    counts: [u64; 4],
    n_events: usize,
}

#[test]
fn fixture_binning_matches_ground_truth() {
    let truth: Truth = serde_json::from_reader(File::open(fixture("synthetic_truth.json")).unwrap()).unwrap();
    let events = read_events(BufReader::new(File::open(fixture("synthetic_events.csv")).unwrap())).unwrap();
    assert_eq!(events.len(), truth.n_events);
    let seq = bin_events(events, truth.bin_ns, truth.duration_ns).unwrap();
    assert_eq!(seq.channel_counts(), truth.counts);
    assert_eq!(seq.n_bins_total, truth.n_bins_total);
    assert_eq!(seq.n_empty, truth.n_empty);
    assert_eq!(seq.n_multi, truth.n_multi);
}

#[test]
fn rebinning_a_reconstructed_stream_is_idempotent() {
    let events = read_events(BufReader::new(File::open(fixture("synthetic_events.csv")).unwrap())).unwrap();
    let seq = bin_events(events, 1000, 5_000_000).unwrap();
    let rebuilt: Vec<EventRecord> = seq
        .symbols
        .iter()
        .zip(&seq.bin_index)
        .map(|(&c, &b)| EventRecord {
            timestamp_ns: b * seq.bin_ns + 17,
            channel: c,
        })
        .collect();
    let again = bin_events(rebuilt, 1000, 5_000_000).unwrap();
    assert_eq!(again.symbols, seq.symbols);
    assert_eq!(again.bin_index, seq.bin_index);
}

fn poisson_stream(rate_hz: f64, duration_s: f64, seed: u64) -> Vec<EventRecord> {
    let params = SimulationParams {
        rate_hz,
        duration_s,
        detector: DetectorModel::ideal(),
    };
    simulate_events(&[0.25; 4], &params, seed, 0).unwrap()
}

#[test]
fn multi_detection_fraction_follows_poisson_thinning() {
    let (rate, bin_ns) = (175e3, 1000u64);
    let seq = bin_events(poisson_stream(rate, 10.0, 3), bin_ns, 10_000_000_000).unwrap();
    let mu = rate * bin_ns as f64 * 1e-9;
    let occupied = 1.0 - (-mu).exp();
    let expected = (occupied - mu * (-mu).exp()) / occupied;
    let n = (seq.n_multi + seq.len() as u64) as f64;
    let sigma = (expected * (1.0 - expected) / n).sqrt();
    assert!((seq.multi_fraction() - expected).abs() < 3.0 * sigma, "{} vs {expected}", seq.multi_fraction());
}

#[test]
fn effective_rate_of_a_known_stream() {
    let seq = bin_events(poisson_stream(50e3, 4.0, 9), 1000, 4_000_000_000).unwrap();
    let mu: f64 = 50e3 * 1e-6;
    let expected = 4e6 * mu * (-mu).exp() / 4.0;
    let rate = effective_rate(&seq, 4.0).unwrap();
    assert!((rate - expected).abs() < 3.0 * (expected / 4.0).sqrt(), "{rate} vs {expected}");
}

#[test]
fn subinterval_means_match_global_frequencies() {
    let seq = bin_events(poisson_stream(100e3, 2.0, 4), 1000, 2_000_000_000).unwrap();
    let stats = subinterval_probabilities(&seq, 5).unwrap();
    let n = seq.len() as f64;
    let global = seq.channel_counts().map(|c| c as f64 / n);
    for k in 0..4 {
        assert!((stats.mean[k] - global[k]).abs() < 3.0 * stats.std_error[k] + 1e-12);
    }
}

#[test]
fn memoryless_chain_frequencies_are_binomial() {
    let p = [0.5, 0.5, 0.0, 0.0];
    let seq = simulate_chain(&p, &DetectorParams::memoryless(), 100_000, 5).unwrap();
    let counts = seq.channel_counts();
    let sigma = (1e5f64 * 0.25).sqrt();
    assert!((counts[0] as f64 - 5e4).abs() < 3.0 * sigma);
    assert_eq!(counts[2] + counts[3], 0);
}

#[test]
fn markov_correction_is_small_at_measured_load() {
    let p = [0.0756, 0.4473, 0.4533, 0.0238];
    let d = DetectorParams::new(22e-9, 0.005, 170e3).unwrap();
    let seq = simulate_chain(&p, &d, 1_000_000, 12).unwrap();
    let est = estimate_sequence(&seq, &d, 0.95).unwrap();
    let n = seq.len() as f64;
    let raw = seq.channel_counts().map(|c| c as f64 / n);
    for k in 0..4 {
        assert!((est.p_hat[k] - raw[k]).abs() < 1e-3, "{:?} vs {raw:?}", est.p_hat);
    }
}

fn run_scenario(state: StateSpec, seed: u64) -> (f64, f64) {
    let scenario = Scenario {
        state,
        components: None,
        angles: AngleSettings::reference(),
    };
    let params = SimulationParams {
        rate_hz: 150e3,
        duration_s: 1.0,
        detector: DetectorModel::ideal(),
    };
    let events = simulate_acquisitions(&scenario, &params, seed).unwrap();
    let seqs: [SymbolSequence; 4] = std::array::from_fn(|k| {
        let mut s = bin_events(events[k].iter().copied(), 1000, 1_000_000_000).unwrap();
        s.setting = Some(Setting::ALL[k]);
        s
    });
    let est = estimate_chsh_from_sequences(&seqs, 5, None).unwrap();
    (est.i_hat, est.multinomial_std)
}

#[test]
fn simulated_acquisitions_recover_chsh() {
    let (i, s) = run_scenario(StateSpec::ideal(), 21);
    assert!((i.abs() - 2.0 * 2f64.sqrt()).abs() < 4.0 * s, "{i} ± {s}");
    let (i, s) = run_scenario(StateSpec { v: 0.0, ..StateSpec::ideal() }, 22);
    assert!(i.abs() < 4.0 * s, "{i} ± {s}");
}

fn moderate() -> OptimizerConfig {
    OptimizerConfig {
        n_starts_ep: 30,
        n_starts_ei: 40,
        alpha_beta_grid: 5,
        refine_evals: 20,
        ..OptimizerConfig::default()
    }
}

#[test]
fn e_i_shrinks_with_trust() {
    let c = bundled_components();
    let values: Vec<f64> = TrustKind::ALL
        .iter()
        .map(|&k| compute_e_i(TrustLevel::new(k), &c, &moderate()).unwrap().value)
        .collect();
    for w in values.windows(2) {
        assert!(w[0] >= w[1] - 0.01, "{values:?}");
    }
}

#[test]
fn ideal_components_null_bounds() {
    let c = ComponentSet::ideal();
    let quick = OptimizerConfig {
        n_starts_ep: 5,
        n_starts_ei: 5,
        alpha_beta_grid: 3,
        refine_evals: 10,
        ..OptimizerConfig::default()
    };
    for k in TrustKind::ALL {
        let t = TrustLevel::new(k);
        assert!(compute_e_p(t, &c, &quick).unwrap().value < 1e-9);
        assert!(compute_e_i(t, &c, &quick).unwrap().value < 1e-9);
    }
}

#[test]
fn doubling_component_uncertainty_doubles_spread() {
    let c = bundled_components();
    let trust = TrustLevel::new(TrustKind::FreeV);
    let bound = compute_e_p(trust, &c, &moderate()).unwrap();
    let mut wide = c;
    for bs in [&mut wide.bs1, &mut wide.bs2] {
        for m in [&mut bs.tv, &mut bs.rv, &mut bs.th, &mut bs.rh] {
            m.sigma *= 2.0;
        }
    }
    for m in [&mut wide.mirror.gv1, &mut wide.mirror.gh1, &mut wide.mirror.gv2, &mut wide.mirror.gh2] {
        m.sigma *= 2.0;
    }
    wide.t0.sigma *= 2.0;
    wide.t1.sigma *= 2.0;
    let s1 = propagate_errors(trust, &c, &bound, 2000, 3).unwrap();
    let s2 = propagate_errors(trust, &wide, &bound, 2000, 3).unwrap();
    assert!((s2 / s1 - 2.0).abs() < 0.5, "{s1} {s2}");
}
