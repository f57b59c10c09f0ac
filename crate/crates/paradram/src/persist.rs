//! Output file suite, chain codecs and restart files.
//!
//! Every run writes `<prefix>_chain.txt|bin`, `<prefix>_sample.txt`,
//! `<prefix>_report.txt`, `<prefix>_progress.txt` and `<prefix>_restart.bin`.
//! The restart file is rewritten atomically at every flush point and records
//! the byte lengths of the chain and progress files at that moment, so an
//! interrupted run can cut both files back and continue exactly.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use paradram_core::chain::{default_variable_names, ChainRow, CompactChain};
use paradram_core::codec::{fnv1a64, ByteReader, ByteWriter};
use paradram_core::kernel::{ChainSink, ProgressTick, SamplerCore};
use paradram_core::refine::RefinedSample;
use paradram_core::spec::ChainFormat;

use crate::format::{parse_f64, push_g17};

pub const ASCII_VERSION_LINE: &str = "# format: v1";
pub const BINARY_MAGIC: [u8; 8] = *b"PDRMCHN\0";
pub const BINARY_VERSION: u32 = 1;
pub const RESTART_MAGIC: [u8; 8] = *b"PDRMRST\0";
pub const RESTART_VERSION: u32 = 1;
pub const REPORT_TERMINATOR: &str = "# end of report";
pub const FIXED_COLUMNS: [&str; 7] = [
    "ProcessID",
    "DelayedRejectionStage",
    "MeanAcceptanceRate",
    "AdaptationMeasure",
    "BurninLocation",
    "SampleWeight",
    "SampleLogFunc",
];
pub const PROGRESS_HEADER: &str = "verboseLength,compactLength,meanAcceptanceRate,lastAdaptationMeasure,elapsedSeconds";

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed file: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("restart file {0} is corrupt")]
    CorruptRestart(PathBuf),
    #[error("restart file {0} was written for a different simulation specification")]
    SpecMismatch(PathBuf),
    #[error("run interrupted")]
    Interrupted,
    #[error(transparent)]
    Core(#[from] paradram_core::Error),
}

pub type Result<T, E = PersistError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

fn malformed(path: &Path, detail: impl Into<String>) -> PersistError {
    PersistError::Malformed { path: path.to_path_buf(), detail: detail.into() }
}

/// Paths of one run's output files.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSuite {
    pub prefix: PathBuf,
    pub format: ChainFormat,
    pub delimiter: char,
}

impl OutputSuite {
    pub fn new(prefix: impl Into<PathBuf>, format: ChainFormat, delimiter: char) -> Self {
        Self { prefix: prefix.into(), format, delimiter }
    }

    fn with_suffix(&self, suffix: &str) -> PathBuf {
        let mut s = self.prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }

    pub fn chain_path(&self) -> PathBuf {
        self.with_suffix(match self.format {
            ChainFormat::Ascii => "_chain.txt",
            ChainFormat::Binary => "_chain.bin",
        })
    }

    pub fn sample_path(&self) -> PathBuf {
        self.with_suffix("_sample.txt")
    }

    pub fn report_path(&self) -> PathBuf {
        self.with_suffix("_report.txt")
    }

    pub fn progress_path(&self) -> PathBuf {
        self.with_suffix("_progress.txt")
    }

    pub fn restart_path(&self) -> PathBuf {
        self.with_suffix("_restart.bin")
    }

    /// Suite of process `index` (1-based) in a multi-chain run.
    pub fn process(&self, index: u32) -> Self {
        Self { prefix: self.with_suffix(&format!("_process_{index}")), ..self.clone() }
    }

    pub fn all_paths(&self) -> [PathBuf; 5] {
        [self.chain_path(), self.sample_path(), self.report_path(), self.progress_path(), self.restart_path()]
    }
}

pub fn binary_record_len(dimension: usize) -> usize {
    4 + 4 + 8 + 8 + 8 + 8 + 8 + 8 * dimension
}

/// Bytes preceding the first row of a chain file.
pub fn chain_header(format: ChainFormat, delimiter: char, names: &[String]) -> Vec<u8> {
    match format {
        ChainFormat::Ascii => {
            let mut s = String::from(ASCII_VERSION_LINE);
            s.push('\n');
            let mut first = true;
            for c in FIXED_COLUMNS.iter().copied().chain(names.iter().map(String::as_str)) {
                if !first {
                    s.push(delimiter);
                }
                first = false;
                s.push_str(c);
            }
            s.push('\n');
            s.into_bytes()
        }
        ChainFormat::Binary => {
            let mut v = BINARY_MAGIC.to_vec();
            v.extend_from_slice(&BINARY_VERSION.to_le_bytes());
            v.extend_from_slice(&((FIXED_COLUMNS.len() + names.len()) as u32).to_le_bytes());
            v
        }
    }
}

pub fn encode_row(format: ChainFormat, delimiter: char, row: &ChainRow, out: &mut Vec<u8>) {
    match format {
        ChainFormat::Ascii => {
            let mut s = String::with_capacity(32 * (7 + row.state.len()));
            s.push_str(&row.process_id.to_string());
            s.push(delimiter);
            s.push_str(&row.dr_stage.to_string());
            s.push(delimiter);
            push_g17(&mut s, row.mean_acceptance_rate);
            s.push(delimiter);
            push_g17(&mut s, row.adaptation_measure);
            s.push(delimiter);
            s.push_str(&row.burnin_location.to_string());
            s.push(delimiter);
            s.push_str(&row.weight.to_string());
            s.push(delimiter);
            push_g17(&mut s, row.log_func);
            for v in &row.state {
                s.push(delimiter);
                push_g17(&mut s, *v);
            }
            s.push('\n');
            out.extend_from_slice(s.as_bytes());
        }
        ChainFormat::Binary => {
            out.extend_from_slice(&row.process_id.to_le_bytes());
            out.extend_from_slice(&row.dr_stage.to_le_bytes());
            out.extend_from_slice(&row.mean_acceptance_rate.to_le_bytes());
            out.extend_from_slice(&row.adaptation_measure.to_le_bytes());
            out.extend_from_slice(&row.burnin_location.to_le_bytes());
            out.extend_from_slice(&row.weight.to_le_bytes());
            out.extend_from_slice(&row.log_func.to_le_bytes());
            for v in &row.state {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

/// A chain file read back into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub chain: CompactChain,
    pub format: ChainFormat,
    pub delimiter: char,
    /// True when the file was a refined sample rather than a chain.
    pub is_sample: bool,
}

pub fn read_chain_file(path: &Path) -> Result<ChainFile> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_chain(path, &bytes)
}

/// Decodes an ASCII or binary chain file, or an ASCII sample file.
pub fn decode_chain(path: &Path, bytes: &[u8]) -> Result<ChainFile> {
    if bytes.starts_with(&BINARY_MAGIC) {
        return decode_binary(path, bytes);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| malformed(path, "not UTF-8 text"))?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(malformed(path, "truncated last line"));
    }
    let mut lines = text.lines();
    if lines.next() != Some(ASCII_VERSION_LINE) {
        return Err(malformed(path, "missing format version line"));
    }
    let header = lines.next().ok_or_else(|| malformed(path, "missing header"))?;
    let (is_sample, lead) = if header.starts_with(FIXED_COLUMNS[0]) {
        (false, FIXED_COLUMNS[0])
    } else if header.starts_with(FIXED_COLUMNS[6]) {
        (true, FIXED_COLUMNS[6])
    } else {
        return Err(malformed(path, "unrecognized header"));
    };
    let delimiter = header[lead.len()..].chars().next().ok_or_else(|| malformed(path, "header has no state columns"))?;
    let columns: Vec<&str> = header.split(delimiter).map(str::trim).collect();
    let fixed = if is_sample { 1 } else { FIXED_COLUMNS.len() };
    if columns.len() <= fixed || (!is_sample && columns[..fixed] != FIXED_COLUMNS) {
        return Err(malformed(path, "unexpected header columns"));
    }
    let names: Vec<String> = columns[fixed..].iter().map(|s| s.to_string()).collect();
    let d = names.len();
    let mut chain = CompactChain::new(d).with_variable_names(names)?;
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        let fields: Vec<&str> = line.split(delimiter).collect();
        if fields.len() != fixed + d {
            return Err(malformed(path, format!("line {lineno}: expected {} fields, found {}", fixed + d, fields.len())));
        }
        let bad = || malformed(path, format!("line {lineno}: unparsable field"));
        let real = |s: &str| parse_f64(s).ok_or_else(bad);
        let state = fields[fixed..].iter().map(|s| real(s)).collect::<Result<Vec<f64>>>()?;
        if is_sample {
            chain.append_or_increment(ChainRow::new(state, real(fields[0])?, 1))?;
        } else {
            let int = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
            chain.push_unchecked(ChainRow {
                process_id: int(fields[0])? as u32,
                dr_stage: int(fields[1])? as u32,
                mean_acceptance_rate: real(fields[2])?,
                adaptation_measure: real(fields[3])?,
                burnin_location: int(fields[4])?,
                weight: int(fields[5])?,
                log_func: real(fields[6])?,
                state,
            })?;
        }
    }
    Ok(ChainFile { chain, format: ChainFormat::Ascii, delimiter, is_sample })
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<ChainFile> {
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap_or_default());
    if bytes.len() < 16 || word(8) != BINARY_VERSION {
        return Err(malformed(path, "unsupported binary preamble"));
    }
    let columns = word(12) as usize;
    if columns <= FIXED_COLUMNS.len() {
        return Err(malformed(path, "binary chain has no state columns"));
    }
    let d = columns - FIXED_COLUMNS.len();
    let body = &bytes[16..];
    let len = binary_record_len(d);
    if body.len() % len != 0 {
        return Err(malformed(path, "truncated binary record"));
    }
    let mut chain = CompactChain::new(d);
    for rec in body.chunks_exact(len) {
        let u32_at = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().unwrap_or_default());
        let u64_at = |o: usize| u64::from_le_bytes(rec[o..o + 8].try_into().unwrap_or_default());
        let f64_at = |o: usize| f64::from_bits(u64_at(o));
        chain.push_unchecked(ChainRow {
            process_id: u32_at(0),
            dr_stage: u32_at(4),
            mean_acceptance_rate: f64_at(8),
            adaptation_measure: f64_at(16),
            burnin_location: u64_at(24),
            weight: u64_at(32),
            log_func: f64_at(40),
            state: (0..d).map(|j| f64_at(48 + 8 * j)).collect(),
        })?;
    }
    Ok(ChainFile { chain, format: ChainFormat::Binary, delimiter: ',', is_sample: false })
}

/// Appends rows to a chain file, counting the bytes written.
pub struct ChainFileWriter {
    path: PathBuf,
    out: BufWriter<File>,
    bytes: u64,
    format: ChainFormat,
    delimiter: char,
    buf: Vec<u8>,
}

impl ChainFileWriter {
    pub fn create(path: &Path, format: ChainFormat, delimiter: char, names: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self { path: path.to_path_buf(), out: BufWriter::new(file), bytes: 0, format, delimiter, buf: Vec::new() };
        let header = chain_header(format, delimiter, names);
        w.write_raw(&header)?;
        Ok(w)
    }

    /// Opens an existing file, discarding everything past `length` bytes.
    pub fn resume(path: &Path, length: u64, format: ChainFormat, delimiter: char) -> Result<Self> {
        let file = truncate_for_append(path, length)?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file), bytes: length, format, delimiter, buf: Vec::new() })
    }

    fn write_raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(io_err(&self.path))?;
        self.bytes += bytes.len() as u64;
        Ok(())
    }

    pub fn write_row(&mut self, row: &ChainRow) -> Result<()> {
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        encode_row(self.format, self.delimiter, row, &mut buf);
        let r = self.write_raw(&buf);
        self.buf = buf;
        r
    }

    /// Flushes buffered rows and returns the file length.
    pub fn flush(&mut self) -> Result<u64> {
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(self.bytes)
    }
}

fn truncate_for_append(path: &Path, length: u64) -> Result<File> {
    let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io_err(path))?;
    let actual = file.metadata().map_err(io_err(path))?.len();
    if actual < length {
        return Err(malformed(path, format!("file is shorter ({actual} bytes) than the restart record ({length} bytes)")));
    }
    file.set_len(length).map_err(io_err(path))?;
    file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
    Ok(file)
}

/// Progress file: one CSV line per tick.
pub struct ProgressWriter {
    path: PathBuf,
    out: BufWriter<File>,
    bytes: u64,
    started: Option<Instant>,
}

impl ProgressWriter {
    /// `timed = false` leaves the elapsed-time column blank.
    pub fn create(path: &Path, timed: bool) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self { path: path.to_path_buf(), out: BufWriter::new(file), bytes: 0, started: timed.then(Instant::now) };
        w.write_line(PROGRESS_HEADER)?;
        Ok(w)
    }

    pub fn resume(path: &Path, length: u64, timed: bool) -> Result<Self> {
        let file = truncate_for_append(path, length)?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file), bytes: length, started: timed.then(Instant::now) })
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        self.out.write_all(line.as_bytes()).and_then(|_| self.out.write_all(b"\n")).map_err(io_err(&self.path))?;
        self.bytes += line.len() as u64 + 1;
        Ok(())
    }

    pub fn write_tick(&mut self, tick: &ProgressTick) -> Result<()> {
        let mut s = format!("{},{},", tick.verbose_length, tick.compact_length);
        push_g17(&mut s, tick.mean_acceptance_rate);
        s.push(',');
        push_g17(&mut s, tick.last_adaptation_measure);
        s.push(',');
        if let Some(t) = self.started {
            s.push_str(&format!("{:.3}", t.elapsed().as_secs_f64()));
        }
        self.write_line(&s)
    }

    pub fn flush(&mut self) -> Result<u64> {
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(self.bytes)
    }
}

/// Contents of a restart file.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartRecord {
    pub spec_digest: u64,
    pub chain_bytes: u64,
    pub progress_bytes: u64,
    pub format: ChainFormat,
    /// Delimiter the chain file was started with; a resumed run keeps it.
    pub delimiter: char,
    pub snapshot: Vec<u8>,
}

impl RestartRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        for b in RESTART_MAGIC {
            w.u8(b);
        }
        w.u32(RESTART_VERSION);
        w.u64(self.spec_digest);
        w.u64(self.chain_bytes);
        w.u64(self.progress_bytes);
        w.u8(match self.format {
            ChainFormat::Ascii => 0,
            ChainFormat::Binary => 1,
        });
        w.u32(self.delimiter as u32);
        w.bytes(&self.snapshot);
        let mut out = w.into_inner();
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        let corrupt = || PersistError::CorruptRestart(path.to_path_buf());
        if bytes.len() < 16 || !bytes.starts_with(&RESTART_MAGIC) {
            return Err(corrupt());
        }
        let (body, sum) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body).to_le_bytes() != sum {
            return Err(corrupt());
        }
        let mut r = ByteReader::new(&body[8..]);
        let rec = (|| -> paradram_core::Result<Self> {
            if r.u32()? != RESTART_VERSION {
                return Err(paradram_core::Error::Decode("restart version"));
            }
            let spec_digest = r.u64()?;
            let chain_bytes = r.u64()?;
            let progress_bytes = r.u64()?;
            let format = match r.u8()? {
                0 => ChainFormat::Ascii,
                1 => ChainFormat::Binary,
                _ => return Err(paradram_core::Error::Decode("chain format")),
            };
            let delimiter = char::from_u32(r.u32()?).ok_or(paradram_core::Error::Decode("delimiter"))?;
            let snapshot = r.bytes()?.to_vec();
            Ok(Self { spec_digest, chain_bytes, progress_bytes, format, delimiter, snapshot })
        })()
        .map_err(|_| corrupt())?;
        if !r.is_empty() {
            return Err(corrupt());
        }
        Ok(rec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::decode(path, &bytes)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Fresh,
    Restartable,
    Complete,
}

/// True when the report exists and ends with the terminator line.
pub fn report_is_complete(path: &Path) -> Result<bool> {
    let mut f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(io_err(path)(e)),
    };
    let len = f.metadata().map_err(io_err(path))?.len();
    let tail = (REPORT_TERMINATOR.len() + 2) as u64;
    f.seek(SeekFrom::Start(len.saturating_sub(tail))).map_err(io_err(path))?;
    let mut buf = String::new();
    f.read_to_string(&mut buf).map_err(io_err(path))?;
    Ok(buf.trim_end_matches('\n').ends_with(REPORT_TERMINATOR))
}

/// Restart files belonging to `prefix`: the run's own and any per-process ones.
pub fn restart_files(prefix: &Path) -> Result<Vec<PathBuf>> {
    let base = OutputSuite::new(prefix, ChainFormat::Ascii, ',');
    let mut found = Vec::new();
    if base.restart_path().exists() {
        found.push(base.restart_path());
    }
    let stem = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = match prefix.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let lead = format!("{stem}_process_");
    if let Ok(entries) = fs::read_dir(&dir) {
        let mut extra: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with(&lead) && n.ends_with("_restart.bin"))
            .map(|n| dir.join(n))
            .collect();
        extra.sort();
        found.extend(extra);
    }
    Ok(found)
}

/// Classifies whatever a previous run left under `prefix`.
///
/// Chain files without any restart file (a run stopped before its first
/// flush point) count as fresh: nothing can be resumed and a rerun
/// reproduces them from scratch.
pub fn detect_incomplete(prefix: &Path) -> Result<RunStatus> {
    let base = OutputSuite::new(prefix, ChainFormat::Ascii, ',');
    if report_is_complete(&base.report_path())? {
        return Ok(RunStatus::Complete);
    }
    let restarts = restart_files(prefix)?;
    let mut restartable = false;
    for path in restarts {
        let rec = RestartRecord::read(&path)?;
        let chain_stem = path.to_string_lossy().trim_end_matches("_restart.bin").to_string();
        let suite = OutputSuite::new(chain_stem, rec.format, rec.delimiter);
        if suite.chain_path().exists() {
            restartable = true;
        }
    }
    Ok(if restartable { RunStatus::Restartable } else { RunStatus::Fresh })
}

/// Test hook deciding whether to abort after a given number of emitted rows.
pub type InterruptHook = Box<dyn FnMut(u64) -> bool + Send>;

/// Sink writing chain rows, progress ticks and restart snapshots.
pub struct FileSink {
    chain: ChainFileWriter,
    progress: ProgressWriter,
    restart_path: PathBuf,
    spec_digest: u64,
    format: ChainFormat,
    delimiter: char,
    rows: u64,
    interrupt: Option<InterruptHook>,
}

impl FileSink {
    pub fn create(suite: &OutputSuite, names: &[String], spec_digest: u64, timed: bool) -> Result<Self> {
        Ok(Self {
            chain: ChainFileWriter::create(&suite.chain_path(), suite.format, suite.delimiter, names)?,
            progress: ProgressWriter::create(&suite.progress_path(), timed)?,
            restart_path: suite.restart_path(),
            spec_digest,
            format: suite.format,
            delimiter: suite.delimiter,
            rows: 0,
            interrupt: None,
        })
    }

    /// Reopens the files of an interrupted run at the positions in `rec`.
    pub fn resume(suite: &OutputSuite, rec: &RestartRecord, rows: u64, timed: bool) -> Result<Self> {
        Ok(Self {
            chain: ChainFileWriter::resume(&suite.chain_path(), rec.chain_bytes, rec.format, rec.delimiter)?,
            progress: ProgressWriter::resume(&suite.progress_path(), rec.progress_bytes, timed)?,
            restart_path: suite.restart_path(),
            spec_digest: rec.spec_digest,
            format: rec.format,
            delimiter: rec.delimiter,
            rows,
            interrupt: None,
        })
    }

    pub fn with_interrupt(mut self, hook: Option<InterruptHook>) -> Self {
        self.interrupt = hook;
        self
    }

    pub fn finish(mut self) -> Result<()> {
        self.chain.flush()?;
        self.progress.flush()?;
        Ok(())
    }
}

impl ChainSink for FileSink {
    type Error = PersistError;

    fn push_row(&mut self, row: &ChainRow) -> Result<()> {
        self.chain.write_row(row)?;
        self.rows += 1;
        if let Some(hook) = self.interrupt.as_mut() {
            if hook(self.rows) {
                return Err(PersistError::Interrupted);
            }
        }
        Ok(())
    }

    fn flush_point(&mut self, sampler: &SamplerCore) -> Result<()> {
        let rec = RestartRecord {
            spec_digest: self.spec_digest,
            chain_bytes: self.chain.flush()?,
            progress_bytes: self.progress.flush()?,
            format: self.format,
            delimiter: self.delimiter,
            snapshot: sampler.encode_snapshot(),
        };
        write_atomic(&self.restart_path, &rec.encode())
    }

    fn progress(&mut self, tick: &ProgressTick) -> Result<()> {
        self.progress.write_tick(tick)
    }
}

/// Reads the first `length` bytes of a chain file and decodes its rows.
pub fn read_chain_prefix(path: &Path, length: u64) -> Result<CompactChain> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut buf = vec![0u8; length as usize];
    f.read_exact(&mut buf).map_err(|_| malformed(path, "chain file is shorter than the restart record"))?;
    Ok(decode_chain(path, &buf)?.chain)
}

/// Writes the refined sample: log-density then state, one point per line.
pub fn write_sample(path: &Path, delimiter: char, names: &[String], sample: &RefinedSample) -> Result<()> {
    let mut s = String::from(ASCII_VERSION_LINE);
    s.push('\n');
    s.push_str(FIXED_COLUMNS[6]);
    for n in names {
        s.push(delimiter);
        s.push_str(n);
    }
    s.push('\n');
    for (p, l) in sample.points.iter().zip(&sample.log_funcs) {
        push_g17(&mut s, *l);
        for v in p {
            s.push(delimiter);
            push_g17(&mut s, *v);
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(io_err(path))
}

/// Names for the state columns of a `d`-dimensional chain.
pub fn variable_names(d: usize) -> Vec<String> {
    default_variable_names(d)
}
