use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use speqrng::bounds::{compute_bounds, BoundResult, OptimizerConfig, TrustKind, TrustLevel};
use speqrng::chsh::{
    certify as certify_result, estimate_chsh, estimate_chsh_from_sequences, BoundPair, CertificationResult,
    ChshEstimate, CountTable,
};
use speqrng::config::{component_hash, sha256_hex, Config};
use speqrng::extract::{generate_seed, marginal_bits, output_length, seed_length, toeplitz_hash, BitBuffer};
use speqrng::ingest::{subinterval_probabilities, write_events, write_qsym, Setting, SubintervalStats};
use speqrng::markov::DetectorParams;
use speqrng::optics::{ComponentSet, Measured};
use speqrng::simulate::{
    fit_visibility, simulate_acquisitions, DetectorModel, Scenario, SimulationParams, StateSpec,
};
use speqrng::Error;

use crate::error::{CliResult, Stage};
use crate::inputs::{events_file_name, load_acquisitions, load_sequence, symbols_file_name};
use crate::report::{self, Header};
use crate::{BoundsArgs, CertifyArgs, ChshArgs, DataArgs, ExtractArgs, GlobalArgs, IngestArgs, OptimizerArgs, SimulateArgs};

pub struct Context {
    pub config: Config,
    pub config_hash: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paper_scale: bool,
}

impl Context {
    pub fn new(g: &GlobalArgs) -> CliResult<Self> {
        let config = match &g.config {
            Some(p) => Config::load(p).stage("config")?,
            None => Config::bundled(),
        };
        Ok(Self {
            config_hash: config.hash(),
            config,
            seed: g.seed,
            out_dir: g.out_dir.clone(),
            paper_scale: g.paper_scale,
        })
    }

    fn header(&self, command: &str) -> Header {
        Header::new(command, self.seed, &self.config_hash)
    }

    fn components(&self) -> CliResult<ComponentSet> {
        self.config.components().stage("config")
    }

    fn bin_ns(&self, flag: Option<u64>) -> u64 {
        flag.unwrap_or(self.config.acquisition.bin_ns)
    }

    fn subintervals(&self, flag: Option<usize>) -> usize {
        flag.unwrap_or(self.config.acquisition.subintervals)
    }

    fn optimizer(&self, a: &OptimizerArgs) -> CliResult<OptimizerConfig> {
        let mut cfg = if self.paper_scale {
            OptimizerConfig::paper_scale(self.seed)
        } else {
            OptimizerConfig {
                seed: self.seed,
                ..OptimizerConfig::default()
            }
        };
        if let Some(n) = a.starts_ep {
            cfg.n_starts_ep = n;
        }
        if let Some(n) = a.starts_ei {
            cfg.n_starts_ei = n;
        }
        if let Some(n) = a.grid {
            cfg.alpha_beta_grid = n;
        }
        if let Some(n) = a.refine_evals {
            cfg.refine_evals = n;
        }
        cfg.validate().stage("bounds")?;
        Ok(cfg)
    }
}

fn parse_trust(name: &str) -> CliResult<TrustLevel> {
    let kind = TrustKind::parse(name)
        .map_err(|e| Error::Config(e.to_string()))
        .stage("config")?;
    Ok(TrustLevel::new(kind))
}

#[derive(Debug, Serialize)]
struct SettingFile {
    setting: String,
    file: String,
    n_events: usize,
    true_probabilities: [f64; 4],
}

#[derive(Debug, Serialize)]
struct Manifest {
    scenario: Scenario,
    simulation: SimulationParams,
    true_chsh: f64,
    settings: Vec<SettingFile>,
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> CliResult<PathBuf> {
    let components = if a.ideal_components { None } else { Some(ctx.components()?) };
    let mut scenario = Scenario {
        state: StateSpec {
            v: a.v,
            delta: a.delta,
            pi1: a.pi1,
            pi2: a.pi2,
        },
        components,
        angles: ctx.config.angles.settings(),
    };
    if let Some(target) = a.target_chsh {
        scenario.state.v = fit_visibility(&scenario, target).stage("simulate")?;
    }
    let det = &ctx.config.detector;
    let detector = if a.ideal_detector {
        DetectorModel::ideal()
    } else {
        DetectorModel {
            dead_time_ns: det.dead_time_ns.round() as u64,
            afterpulse_probability: det.afterpulse_probability,
            afterpulse_delay_ns: a.afterpulse_delay_ns,
        }
    };
    let params = SimulationParams {
        rate_hz: a.rate_hz,
        duration_s: a.duration_s,
        detector,
    };
    let probs = scenario.probabilities().stage("simulate")?;
    let events = simulate_acquisitions(&scenario, &params, ctx.seed).stage("simulate")?;

    std::fs::create_dir_all(&ctx.out_dir).stage("simulate")?;
    let mut settings = Vec::new();
    for s in Setting::ALL {
        let name = events_file_name(s);
        let mut w = BufWriter::new(File::create(ctx.out_dir.join(&name)).stage("simulate")?);
        write_events(&mut w, &events[s.index()]).stage("simulate")?;
        w.flush().stage("simulate")?;
        settings.push(SettingFile {
            setting: s.to_string(),
            file: name,
            n_events: events[s.index()].len(),
            true_probabilities: probs[s.index()],
        });
    }
    let manifest = Manifest {
        true_chsh: speqrng::chsh::chsh_value(&probs),
        scenario,
        simulation: params,
        settings,
    };
    report::write(&ctx.out_dir, "manifest", &ctx.header("simulate"), &manifest)
}

#[derive(Debug, Serialize)]
struct IngestReport {
    setting: String,
    input: String,
    bin_ns: u64,
    duration_s: f64,
    n_bins_total: u64,
    n_empty: u64,
    n_multi: u64,
    n_outside: u64,
    n_symbols: usize,
    multi_fraction: f64,
    counts: [u64; 4],
    effective_rate_hz: f64,
    subintervals: SubintervalStats,
    qsym: Option<String>,
}

pub fn ingest(ctx: &Context, a: &IngestArgs) -> CliResult<PathBuf> {
    let setting = Setting::parse(&a.setting).stage("ingest")?;
    let mut seq = load_sequence(&a.input, ctx.bin_ns(a.bin_ns), a.duration_s)?;
    seq.setting = Some(setting);
    let duration_s = seq.n_bins_total as f64 * seq.bin_ns as f64 * 1e-9;
    let stats = subinterval_probabilities(&seq, ctx.subintervals(a.subintervals)).stage("ingest")?;
    let qsym = if a.qsym {
        std::fs::create_dir_all(&ctx.out_dir).stage("ingest")?;
        let name = symbols_file_name(setting);
        let mut w = BufWriter::new(File::create(ctx.out_dir.join(&name)).stage("ingest")?);
        write_qsym(&mut w, &seq).stage("ingest")?;
        w.flush().stage("ingest")?;
        Some(name)
    } else {
        None
    };
    let r = IngestReport {
        setting: setting.to_string(),
        input: a.input.display().to_string(),
        bin_ns: seq.bin_ns,
        duration_s,
        n_bins_total: seq.n_bins_total,
        n_empty: seq.n_empty,
        n_multi: seq.n_multi,
        n_outside: seq.n_outside,
        n_symbols: seq.len(),
        multi_fraction: seq.multi_fraction(),
        counts: seq.channel_counts(),
        effective_rate_hz: speqrng::ingest::effective_rate(&seq, duration_s).stage("ingest")?,
        subintervals: stats,
        qsym,
    };
    let name = format!("ingest_x{}_y{}", setting.x, setting.y);
    report::write(&ctx.out_dir, &name, &ctx.header("ingest"), &r)
}

/// CHSH estimate together with the data it came from.
#[derive(Debug, Serialize)]
struct Analysis {
    source: String,
    counts: CountTable,
    detector: DetectorParams,
    warnings: Vec<String>,
    chsh: ChshEstimate,
}

fn analyse(ctx: &Context, d: &DataArgs) -> CliResult<Analysis> {
    let k = ctx.subintervals(d.subintervals);
    let det_for = |table: &CountTable| -> CliResult<DetectorParams> {
        let rate = table.n_raw() as f64 / table.total_duration_s();
        ctx.config.detector.params(rate).stage("detector")
    };
    let (source, table, detector, chsh) = match &d.events_dir {
        Some(dir) => {
            let seqs = load_acquisitions(dir, ctx.bin_ns(d.bin_ns), d.duration_s)?;
            let table = CountTable::from_sequences(&seqs);
            let det = det_for(&table)?;
            let markov = (!d.no_markov).then_some(&det);
            let chsh = estimate_chsh_from_sequences(&seqs, k, markov).stage("chsh")?;
            (dir.display().to_string(), table, det, chsh)
        }
        None => {
            let table = ctx.config.count_table().stage("config")?;
            let det = det_for(&table)?;
            let chsh = estimate_chsh(&table, k).stage("chsh")?;
            ("configured count table".to_string(), table, det, chsh)
        }
    };
    let warnings = detector.validity_warning().into_iter().collect();
    Ok(Analysis {
        source,
        counts: table,
        detector,
        warnings,
        chsh,
    })
}

pub fn chsh(ctx: &Context, a: &ChshArgs) -> CliResult<PathBuf> {
    let r = analyse(ctx, &a.data)?;
    report::write(&ctx.out_dir, "chsh", &ctx.header("chsh"), &r)
}

/// Report body of `bounds`; also the bound-cache format.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoundCache {
    pub result: BoundResult,
}

#[derive(Debug, Deserialize)]
struct CacheFile {
    results: BoundCache,
}

pub fn bounds(ctx: &Context, a: &BoundsArgs) -> CliResult<PathBuf> {
    let trust = parse_trust(&a.trust)?;
    let components = if a.ideal_components {
        ComponentSet::ideal()
    } else {
        ctx.components()?
    };
    let cfg = ctx.optimizer(&a.optimizer)?;
    let result = compute_bounds(trust, &components, &cfg, a.optimizer.n_mc).stage("bounds")?;
    let name = format!("bounds_{}", trust.kind.name());
    report::write(&ctx.out_dir, &name, &ctx.header("bounds"), &BoundCache { result })
}

pub fn read_bound_cache(path: &Path) -> CliResult<BoundResult> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        .stage("bounds cache")?;
    let f: CacheFile = serde_json::from_str(&text).stage("bounds cache")?;
    Ok(f.results.result)
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    trust: TrustKind,
    bounds_source: String,
    bounds: BoundPair,
    analysis: Analysis,
    certification: CertificationResult,
}

fn bound_pair(ctx: &Context, a: &CertifyArgs, trust: TrustLevel) -> CliResult<(BoundPair, String)> {
    let (mut pair, mut source) = if let Some(path) = &a.bounds {
        let cached = read_bound_cache(path)?;
        if cached.trust.kind != trust.kind {
            return Err(Error::Config(format!(
                "cache holds {} bounds, {} requested",
                cached.trust.kind.name(),
                trust.kind.name()
            )))
            .stage("bounds cache");
        }
        if cached.component_hash != component_hash(&ctx.components()?) {
            return Err(Error::Config("cache was computed for other components".into())).stage("bounds cache");
        }
        (Some(cached.pair()), path.display().to_string())
    } else if a.compute_bounds {
        let cfg = ctx.optimizer(&a.optimizer)?;
        let r = compute_bounds(trust, &ctx.components()?, &cfg, a.optimizer.n_mc).stage("bounds")?;
        (Some(r.pair()), "computed".to_string())
    } else if a.reference_bounds {
        let r = ctx
            .config
            .reference_bound(trust.kind)
            .ok_or_else(|| Error::Config(format!("no reference bounds for {}", trust.kind.name())))
            .stage("config")?;
        (Some(r.pair()), "reference".to_string())
    } else {
        (None, "command line".to_string())
    };
    match (&mut pair, a.e_p, a.e_i) {
        (Some(p), ep, ei) => {
            if let Some(v) = ep {
                p.e_p = Measured::exact(v);
            }
            if let Some(v) = ei {
                p.e_i = Measured::exact(v);
            }
            if ep.is_some() || ei.is_some() {
                source.push_str(" with overrides");
            }
        }
        (None, Some(ep), Some(ei)) => {
            pair = Some(BoundPair {
                e_p: Measured::exact(ep),
                e_i: Measured::exact(ei),
            });
        }
        (None, _, _) => {
            return Err(Error::Config(
                "no bounds: pass --bounds, --compute-bounds, --reference-bounds or both --e-p and --e-i".into(),
            ))
            .stage("bounds");
        }
    }
    Ok((pair.expect("set above"), source))
}

pub fn certify(ctx: &Context, a: &CertifyArgs) -> CliResult<PathBuf> {
    let trust = parse_trust(&a.trust)?;
    let (bounds, bounds_source) = bound_pair(ctx, a, trust)?;
    let analysis = analyse(ctx, &a.data)?;
    let duration = analysis.counts.total_duration_s();
    let certification = certify_result(&analysis.chsh, &bounds, &analysis.detector, duration).stage("certify")?;
    let r = CertifyReport {
        trust: trust.kind,
        bounds_source,
        bounds,
        analysis,
        certification,
    };
    let name = format!("certify_{}", trust.kind.name());
    report::write(&ctx.out_dir, &name, &ctx.header("certify"), &r)
}

#[derive(Debug, Serialize)]
struct ExtractReport {
    input: String,
    h_min: f64,
    epsilon: f64,
    n_raw_bits: usize,
    block_bits: usize,
    n_blocks: usize,
    discarded_bits: usize,
    output_bits_per_block: usize,
    output_bits: usize,
    seed_bits: usize,
    seed_source: String,
    output: String,
    output_sha256: String,
    ones_fraction: f64,
}

pub fn extract(ctx: &Context, a: &ExtractArgs) -> CliResult<PathBuf> {
    let seq = load_sequence(&a.input, ctx.bin_ns(a.bin_ns), a.duration_s)?;
    let raw = marginal_bits(&seq);
    let block = a.block_bits.unwrap_or(raw.len());
    if block == 0 || block > raw.len() {
        return Err(Error::InvalidParameter(format!(
            "block of {block} bits with {} raw bits",
            raw.len()
        )))
        .stage("extract");
    }
    let m = output_length(block, a.h_min, a.epsilon).stage("extract")?;
    let seed_bits = seed_length(block, m);
    let (seed, seed_source) = match &a.seed_file {
        Some(p) => {
            let bytes = std::fs::read(p).stage("extract")?;
            (BitBuffer::from_bytes(&bytes, seed_bits).stage("extract")?, p.display().to_string())
        }
        None => (generate_seed(seed_bits, ctx.seed), format!("derived from seed {}", ctx.seed)),
    };
    let n_blocks = raw.len() / block;
    let mut out = BitBuffer::new();
    for b in 0..n_blocks {
        let y = toeplitz_hash(&raw.slice(b * block, block), m, &seed).stage("extract")?;
        for bit in y.iter() {
            out.push(bit);
        }
    }
    let bytes = out.to_bytes();
    let path = a.output.clone().unwrap_or_else(|| ctx.out_dir.join("extracted.bin"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).stage("extract")?;
    }
    std::fs::write(&path, &bytes).stage("extract")?;
    let r = ExtractReport {
        input: a.input.display().to_string(),
        h_min: a.h_min,
        epsilon: a.epsilon,
        n_raw_bits: raw.len(),
        block_bits: block,
        n_blocks,
        discarded_bits: raw.len() - n_blocks * block,
        output_bits_per_block: m,
        output_bits: out.len(),
        seed_bits,
        seed_source,
        output: path.display().to_string(),
        output_sha256: sha256_hex(&bytes),
        ones_fraction: out.count_ones() as f64 / out.len().max(1) as f64,
    };
    report::write(&ctx.out_dir, "extract", &ctx.header("extract"), &r)
}
