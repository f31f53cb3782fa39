//! Locating and loading per-setting acquisition files.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use speqrng::ingest::{bin_events, is_qsym, read_events, read_qsym, Setting, SymbolSequence};
use speqrng::Error;

use crate::error::{CliResult, Stage};

pub fn events_file_name(s: Setting) -> String {
    format!("events_x{}_y{}.csv", s.x, s.y)
}

pub fn symbols_file_name(s: Setting) -> String {
    format!("symbols_x{}_y{}.qsym", s.x, s.y)
}

/// Reads an event CSV or QSYM file into a binned sequence.
///
/// Event files default to a window ending at the bin after the last event.
/// QSYM files carry no bin count, so `duration_s` is required for them.
pub fn load_sequence(path: &Path, bin_ns: u64, duration_s: Option<f64>) -> CliResult<SymbolSequence> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
        .stage("ingest")?;
    if is_qsym(&bytes) {
        let mut seq = read_qsym(bytes.as_slice()).stage("ingest")?;
        let d = duration_s
            .ok_or_else(|| Error::Config(format!("{}: QSYM input needs --duration-s", path.display())))
            .stage("ingest")?;
        let bins = (d * 1e9 / seq.bin_ns.max(1) as f64).round() as u64;
        if bins < seq.len() as u64 {
            return Err(Error::Config(format!(
                "{}: {} symbols do not fit in {d} s of {} ns bins",
                path.display(),
                seq.len(),
                seq.bin_ns
            )))
            .stage("ingest");
        }
        seq.n_bins_total = bins;
        seq.n_empty = bins - seq.len() as u64;
        return Ok(seq);
    }
    let events = read_events(BufReader::new(bytes.as_slice())).stage("ingest")?;
    let duration_ns = match duration_s {
        Some(d) if d > 0.0 => (d * 1e9).round() as u64,
        Some(d) => return Err(Error::InvalidParameter(format!("duration {d} s"))).stage("ingest"),
        None => events.last().map_or(bin_ns, |e| (e.timestamp_ns / bin_ns + 1) * bin_ns),
    };
    bin_events(events, bin_ns, duration_ns).stage("ingest")
}

/// The file of setting `s` in `dir`, preferring event CSV over QSYM.
pub fn find_setting_file(dir: &Path, s: Setting) -> CliResult<PathBuf> {
    [events_file_name(s), symbols_file_name(s)]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
        .ok_or_else(|| {
            Error::Config(format!(
                "no {} or {} in {}",
                events_file_name(s),
                symbols_file_name(s),
                dir.display()
            ))
        })
        .stage("ingest")
}

/// Sequences of all four settings, indexed by [`Setting::index`].
pub fn load_acquisitions(dir: &Path, bin_ns: u64, duration_s: Option<f64>) -> CliResult<[SymbolSequence; 4]> {
    let mut out: [SymbolSequence; 4] = std::array::from_fn(|_| SymbolSequence::from_symbols(Vec::new()).expect("empty"));
    for s in Setting::ALL {
        let mut seq = load_sequence(&find_setting_file(dir, s)?, bin_ns, duration_s)?;
        seq.setting = Some(s);
        out[s.index()] = seq;
    }
    Ok(out)
}
