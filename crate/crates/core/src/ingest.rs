//! Time-tag ingestion: turn detection events into a symbol sequence.
//!
//! Bins are half-open `[k·w, (k+1)·w)`. A bin with exactly one event yields
//! one symbol (the detector channel); empty bins and bins with two or more
//! events are counted and discarded. No dead-time handling happens here.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single time-tagged detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp_ns: u64,
    pub channel: u8,
}

/// CHSH input bits `(x, y)` of an acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub x: u8,
    pub y: u8,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting { x: 0, y: 0 },
        Setting { x: 0, y: 1 },
        Setting { x: 1, y: 0 },
        Setting { x: 1, y: 1 },
    ];

    pub fn new(x: u8, y: u8) -> Result<Self> {
        if x > 1 || y > 1 {
            return Err(Error::InvalidParameter(format!("setting ({x},{y})")));
        }
        Ok(Self { x, y })
    }

    /// `2x + y`.
    pub fn index(self) -> usize {
        usize::from(2 * self.x + self.y)
    }

    /// Parses `"x,y"`.
    pub fn parse(s: &str) -> Result<Self> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("setting {s:?}, expected x,y")))?;
        let bit = |t: &str| {
            t.trim()
                .parse::<u8>()
                .map_err(|e| Error::Parse(format!("setting {s:?}: {e}")))
        };
        Self::new(bit(x)?, bit(y)?)
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

/// Ordered detector outcomes with the binning bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSequence {
    /// Channels in `1..=4`.
    pub symbols: Vec<u8>,
    /// Bin index of each symbol; empty when the timing is unknown.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bin_index: Vec<u64>,
    /// Bin width in ns, 0 when unknown.
    pub bin_ns: u64,
    pub n_bins_total: u64,
    pub n_empty: u64,
    pub n_multi: u64,
    /// Events past the acquisition window, ignored.
    #[serde(default)]
    pub n_outside: u64,
    pub setting: Option<Setting>,
}

impl SymbolSequence {
    /// A sequence without timing information: one bin per symbol.
    pub fn from_symbols(symbols: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|s| !(1..=4).contains(*s)) {
            return Err(Error::ChannelOutOfRange {
                channel: i64::from(bad),
                line: 0,
            });
        }
        Ok(Self {
            n_bins_total: symbols.len() as u64,
            symbols,
            bin_index: Vec::new(),
            bin_ns: 0,
            n_empty: 0,
            n_multi: 0,
            n_outside: 0,
            setting: None,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Fraction of non-empty bins that held more than one event.
    pub fn multi_fraction(&self) -> f64 {
        let occupied = self.n_multi + self.symbols.len() as u64;
        if occupied == 0 {
            0.0
        } else {
            self.n_multi as f64 / occupied as f64
        }
    }

    pub fn channel_counts(&self) -> [u64; 4] {
        channel_counts(&self.symbols)
    }

    /// Splits into `k` consecutive slices of equal duration, or of equal
    /// symbol count when no timing is attached.
    pub fn slices(&self, k: usize) -> Result<Vec<&[u8]>> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k = {k}, need k >= 2")));
        }
        let n = self.symbols.len();
        let mut bounds = Vec::with_capacity(k + 1);
        if self.bin_index.len() == n && self.n_bins_total > 0 && self.bin_ns > 0 {
            let total = u128::from(self.n_bins_total);
            for s in 0..=k {
                let edge = (total * s as u128 / k as u128) as u64;
                bounds.push(self.bin_index.partition_point(|&b| b < edge));
            }
        } else {
            bounds.extend((0..=k).map(|s| n * s / k));
        }
        let mut out = Vec::with_capacity(k);
        for (index, w) in bounds.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::EmptySubinterval { index, k });
            }
            out.push(&self.symbols[w[0]..w[1]]);
        }
        Ok(out)
    }
}

pub(crate) fn channel_counts(symbols: &[u8]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for &s in symbols {
        c[usize::from(s - 1)] += 1;
    }
    c
}

fn check_channel(channel: i64, line: usize) -> Result<u8> {
    if (1..=4).contains(&channel) {
        Ok(channel as u8)
    } else {
        Err(Error::ChannelOutOfRange { channel, line })
    }
}

/// Reads `<timestamp_ns>,<channel>` lines. Blank lines and lines starting
/// with `#` are skipped. Timestamps must be nondecreasing.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let mut events = Vec::new();
    let mut last = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (ts, ch) = t
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {lineno}: expected <timestamp>,<channel>")))?;
        let ts: u64 = ts
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {lineno}: timestamp: {e}")))?;
        let ch: i64 = ch
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {lineno}: channel: {e}")))?;
        let channel = check_channel(ch, lineno)?;
        if ts < last {
            return Err(Error::UnsortedInput { line: lineno });
        }
        last = ts;
        events.push(EventRecord {
            timestamp_ns: ts,
            channel,
        });
    }
    Ok(events)
}

pub fn write_events<W: Write>(mut w: W, events: &[EventRecord]) -> Result<()> {
    writeln!(w, "# timestamp_ns,channel")?;
    for e in events {
        writeln!(w, "{},{}", e.timestamp_ns, e.channel)?;
    }
    Ok(())
}

/// Bins a sorted event stream over `[0, duration_ns)`.
pub fn bin_events<I>(events: I, bin_ns: u64, duration_ns: u64) -> Result<SymbolSequence>
where
    I: IntoIterator<Item = EventRecord>,
{
    if bin_ns == 0 {
        return Err(Error::InvalidParameter("bin width must be positive".into()));
    }
    let n_bins_total = duration_ns.div_ceil(bin_ns);
    let mut symbols = Vec::new();
    let mut bin_index = Vec::new();
    let mut n_multi = 0u64;
    let mut n_outside = 0u64;
    let mut occupied = 0u64;

    // (bin, channel, events in bin)
    let mut current: Option<(u64, u8, u32)> = None;
    let mut flush = |cur: Option<(u64, u8, u32)>,
                     symbols: &mut Vec<u8>,
                     bin_index: &mut Vec<u64>,
                     n_multi: &mut u64| {
        if let Some((bin, ch, n)) = cur {
            occupied += 1;
            if n == 1 {
                symbols.push(ch);
                bin_index.push(bin);
            } else {
                *n_multi += 1;
            }
        }
    };

    let mut last = 0u64;
    for (i, ev) in events.into_iter().enumerate() {
        let channel = check_channel(i64::from(ev.channel), i + 1)?;
        if ev.timestamp_ns < last {
            return Err(Error::UnsortedInput { line: i + 1 });
        }
        last = ev.timestamp_ns;
        let bin = ev.timestamp_ns / bin_ns;
        if bin >= n_bins_total {
            n_outside += 1;
            continue;
        }
        match &mut current {
            Some((b, _, n)) if *b == bin => *n += 1,
            _ => {
                flush(current, &mut symbols, &mut bin_index, &mut n_multi);
                current = Some((bin, channel, 1));
            }
        }
    }
    flush(current, &mut symbols, &mut bin_index, &mut n_multi);

    Ok(SymbolSequence {
        symbols,
        bin_index,
        bin_ns,
        n_bins_total,
        n_empty: n_bins_total - occupied,
        n_multi,
        n_outside,
        setting: None,
    })
}

/// Per-channel relative frequencies over `k` sub-intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubintervalStats {
    pub k: usize,
    pub slices: Vec<[f64; 4]>,
    pub mean: [f64; 4],
    /// Standard error of the mean across slices.
    pub std_error: [f64; 4],
}

pub fn frequencies(symbols: &[u8]) -> [f64; 4] {
    let n = symbols.len() as f64;
    channel_counts(symbols).map(|c| c as f64 / n)
}

/// Mean and standard error of the per-slice channel frequencies.
pub fn subinterval_probabilities(seq: &SymbolSequence, k: usize) -> Result<SubintervalStats> {
    let slices: Vec<[f64; 4]> = seq.slices(k)?.into_iter().map(frequencies).collect();
    let (mean, std_error) = mean_and_sem(&slices);
    Ok(SubintervalStats {
        k,
        slices,
        mean,
        std_error,
    })
}

pub(crate) fn mean_and_sem(rows: &[[f64; 4]]) -> ([f64; 4], [f64; 4]) {
    let k = rows.len() as f64;
    let mut mean = [0.0; 4];
    let mut sem = [0.0; 4];
    for j in 0..4 {
        mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / k;
        let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (k - 1.0);
        sem[j] = (var / k).sqrt();
    }
    (mean, sem)
}

/// Accepted symbols per second.
pub fn effective_rate(seq: &SymbolSequence, duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidParameter(format!("duration {duration_s} s")));
    }
    Ok(seq.len() as f64 / duration_s)
}

const QSYM_MAGIC: &[u8; 4] = b"QSYM";
const QSYM_VERSION: u32 = 1;

/// Compact symbol file: 16-byte header (`QSYM`, version, bin width in ns,
/// symbol count; little-endian u32s) followed by one byte per symbol.
pub fn write_qsym<W: Write>(mut w: W, seq: &SymbolSequence) -> Result<()> {
    let count = u32::try_from(seq.len())
        .map_err(|_| Error::InvalidParameter("sequence too long for QSYM".into()))?;
    let bin = u32::try_from(seq.bin_ns)
        .map_err(|_| Error::InvalidParameter("bin width too large for QSYM".into()))?;
    w.write_all(QSYM_MAGIC)?;
    w.write_all(&QSYM_VERSION.to_le_bytes())?;
    w.write_all(&bin.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&seq.symbols)?;
    Ok(())
}

pub fn read_qsym<R: Read>(mut r: R) -> Result<SymbolSequence> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != QSYM_MAGIC {
        return Err(Error::Parse("missing QSYM magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != QSYM_VERSION {
        return Err(Error::Parse(format!("unsupported QSYM version {version}")));
    }
    let bin_ns = u64::from(word(8));
    let count = word(12) as usize;
    let mut symbols = vec![0u8; count];
    r.read_exact(&mut symbols)?;
    let mut seq = SymbolSequence::from_symbols(symbols)?;
    seq.bin_ns = bin_ns;
    Ok(seq)
}

pub fn is_qsym(bytes: &[u8]) -> bool {
    bytes.len() >= 16 && &bytes[..4] == QSYM_MAGIC
}
