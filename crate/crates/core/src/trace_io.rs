//! Input generation, the SCTR trace file, run manifests and CSV exports.
//!
//! SCTR layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"SCTR"`                         |
//! | 4      | 2    | version (`1`)                           |
//! | 6      | 8    | number of traces `N`                    |
//! | 14     | 4    | samples per trace `T`                   |
//! | 18     | 1    | sample type: 1 = f32, 2 = f64           |
//! | 19     | 1    | reserved, zero                          |
//! | 20     | 2    | input vectors per batch `V`             |
//! | 22     | 2    | input elements per vector `R`           |
//! | 24     | N·V·R| input bytes, batch-major, then `x[v][r]` |
//! | ...    | N·T·s| samples, trace-major                    |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{AliasingMap, PeCorrelationTable};
use crate::attack::{CorrelationMatrix, GuessChain};
use crate::error::{Error, Result};
use crate::power::{guess_value, NoiseSpec, PowerCoefficients, GUESSES};
use crate::rng::Stream;
use crate::systolic::{ArrayConfig, InputBatch, WeightMatrix};
use crate::traces::{generate_traces, TraceMatrix};

pub const MAGIC: &[u8; 4] = b"SCTR";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: u64 = 24;

/// `n` batches of uniform signed bytes drawn from one SplitMix64 stream.
pub fn gen_inputs(seed: u64, n: usize, cfg: &ArrayConfig) -> Vec<InputBatch> {
    let mut stream = Stream::new(seed);
    let len = cfg.batch() * cfg.rows();
    (0..n)
        .map(|_| {
            let data = (0..len).map(|_| stream.next_i8()).collect();
            InputBatch::new(cfg.batch(), cfg.rows(), data).expect("shape from config")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleType {
    F32,
    #[default]
    F64,
}

impl SampleType {
    fn code(self) -> u8 {
        match self {
            SampleType::F32 => 1,
            SampleType::F64 => 2,
        }
    }

    fn size(self) -> usize {
        match self {
            SampleType::F32 => 4,
            SampleType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceFileHeader {
    pub version: u16,
    pub n_traces: u64,
    pub samples_per_trace: u32,
    pub sample_type: SampleType,
    pub batch: u16,
    pub rows: u16,
}

impl TraceFileHeader {
    /// Samples were narrowed to f32 on disk.
    pub fn lossy(&self) -> bool {
        self.sample_type == SampleType::F32
    }

    fn payload_len(&self) -> u64 {
        self.n_traces * (u64::from(self.batch) * u64::from(self.rows))
            + self.n_traces * u64::from(self.samples_per_trace) * self.sample_type.size() as u64
    }
}

pub fn write_traces(
    path: impl AsRef<Path>,
    traces: &TraceMatrix,
    sample_type: SampleType,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_traces_to(&mut out, traces, sample_type).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_traces_to(
    out: &mut impl Write,
    traces: &TraceMatrix,
    sample_type: SampleType,
) -> std::io::Result<()> {
    let first = &traces.inputs()[0];
    let batch = u16::try_from(first.batch()).map_err(std::io::Error::other)?;
    let rows = u16::try_from(first.rows()).map_err(std::io::Error::other)?;
    let t = u32::try_from(traces.samples_per_trace()).map_err(std::io::Error::other)?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(traces.traces() as u64).to_le_bytes())?;
    out.write_all(&t.to_le_bytes())?;
    out.write_all(&[sample_type.code(), 0])?;
    out.write_all(&batch.to_le_bytes())?;
    out.write_all(&rows.to_le_bytes())?;
    for x in traces.inputs() {
        let bytes: Vec<u8> = x.as_slice().iter().map(|&v| v as u8).collect();
        out.write_all(&bytes)?;
    }
    for &s in traces.samples() {
        match sample_type {
            SampleType::F32 => out.write_all(&(s as f32).to_le_bytes())?,
            SampleType::F64 => out.write_all(&s.to_le_bytes())?,
        }
    }
    Ok(())
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<(TraceMatrix, TraceFileHeader)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    read_traces_from(&mut BufReader::new(file), Some(len))
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

/// Reads an SCTR stream. `total_len`, when known, is checked against the header.
pub fn read_traces_from(
    input: &mut impl Read,
    total_len: Option<u64>,
) -> Result<(TraceMatrix, TraceFileHeader)> {
    let mut head = [0u8; HEADER_LEN as usize];
    read_exact_at(input, &mut head, 0)?;
    if &head[0..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &head[0..4])));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != FORMAT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let n_traces = u64::from_le_bytes(head[6..14].try_into().expect("8 bytes"));
    let samples_per_trace = u32::from_le_bytes(head[14..18].try_into().expect("4 bytes"));
    let sample_type = match head[18] {
        1 => SampleType::F32,
        2 => SampleType::F64,
        other => return Err(format_err(18, format!("unknown sample type {other}"))),
    };
    let batch = u16::from_le_bytes([head[20], head[21]]);
    let rows = u16::from_le_bytes([head[22], head[23]]);
    if n_traces == 0 || samples_per_trace == 0 || batch == 0 || rows == 0 {
        return Err(format_err(
            6,
            "trace, sample and input counts must be positive",
        ));
    }
    let header = TraceFileHeader {
        version,
        n_traces,
        samples_per_trace,
        sample_type,
        batch,
        rows,
    };
    if let Some(len) = total_len {
        let expected = HEADER_LEN + header.payload_len();
        if len != expected {
            return Err(format_err(
                len.min(expected),
                format!("file holds {len} bytes, header implies {expected}"),
            ));
        }
    }

    let n = n_traces as usize;
    let per_batch = usize::from(batch) * usize::from(rows);
    let mut raw = vec![0u8; n * per_batch];
    read_exact_at(input, &mut raw, HEADER_LEN)?;
    let inputs = raw
        .chunks(per_batch)
        .map(|c| {
            InputBatch::new(
                batch.into(),
                rows.into(),
                c.iter().map(|&b| b as i8).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let sample_offset = HEADER_LEN + raw.len() as u64;
    let mut raw = vec![0u8; n * samples_per_trace as usize * sample_type.size()];
    read_exact_at(input, &mut raw, sample_offset)?;
    let samples: Vec<f64> = match sample_type {
        SampleType::F32 => raw
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect(),
        SampleType::F64 => raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect(),
    };
    let mut trailing = [0u8; 1];
    if total_len.is_none()
        && input
            .read(&mut trailing)
            .map_err(|e| format_err(0, e.to_string()))?
            != 0
    {
        return Err(format_err(
            sample_offset + raw.len() as u64,
            "trailing bytes after payload",
        ));
    }
    Ok((
        TraceMatrix::new(samples_per_trace as usize, samples, inputs)?,
        header,
    ))
}

fn read_exact_at(input: &mut impl Read, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(format_err(
                    offset + filled as u64,
                    format!("truncated: expected {} more bytes", buf.len() - filled),
                ))
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(format_err(offset + filled as u64, e.to_string())),
        }
    }
    Ok(())
}

/// Everything needed to regenerate a simulated trace file bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub rows: usize,
    pub cols: usize,
    pub batch: usize,
    pub psum_width: u32,
    pub weights_file: PathBuf,
    pub n_traces: usize,
    pub seed: u64,
    pub sigma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sample_type: SampleType,
    pub measured: bool,
    pub tool_version: String,
}

impl RunManifest {
    pub fn array_config(&self) -> Result<ArrayConfig> {
        ArrayConfig::with_psum_width(self.rows, self.cols, self.batch, self.psum_width)
    }

    pub fn coefficients(&self) -> Result<PowerCoefficients> {
        PowerCoefficients::new(self.rows, self.cols, self.alpha.clone(), self.beta.clone())
    }

    /// Noise for the target traces; templates use their own seeds.
    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.sigma, noise_seed(self.seed))
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "tool_version={}", self.tool_version);
        let _ = writeln!(s, "rows={}", self.rows);
        let _ = writeln!(s, "cols={}", self.cols);
        let _ = writeln!(s, "batch={}", self.batch);
        let _ = writeln!(s, "psum_width={}", self.psum_width);
        let _ = writeln!(s, "weights_file={}", self.weights_file.display());
        let _ = writeln!(s, "n_traces={}", self.n_traces);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "sigma={:?}", self.sigma);
        let _ = writeln!(s, "alpha={}", list(&self.alpha));
        let _ = writeln!(s, "beta={}", list(&self.beta));
        let _ = writeln!(
            s,
            "sample_type={}",
            match self.sample_type {
                SampleType::F32 => "f32",
                SampleType::F64 => "f64",
            }
        );
        let _ = writeln!(s, "measured={}", self.measured);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: "manifest".into(),
                message: format!("line {} is not key=value", i + 1),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            map.get(k).ok_or_else(|| Error::Parse {
                context: "manifest".into(),
                message: format!("missing key {k}"),
            })
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                context: "manifest".into(),
                message: format!("bad value for {k}: {v}"),
            })
        }
        let list = |k: &str| -> Result<Vec<f64>> {
            get(k)?.split(',').map(|v| num(k, v.trim())).collect()
        };
        Ok(Self {
            tool_version: get("tool_version")?.clone(),
            rows: num("rows", get("rows")?)?,
            cols: num("cols", get("cols")?)?,
            batch: num("batch", get("batch")?)?,
            psum_width: num("psum_width", get("psum_width")?)?,
            weights_file: PathBuf::from(get("weights_file")?),
            n_traces: num("n_traces", get("n_traces")?)?,
            seed: num("seed", get("seed")?)?,
            sigma: num("sigma", get("sigma")?)?,
            alpha: list("alpha")?,
            beta: list("beta")?,
            sample_type: match get("sample_type")?.as_str() {
                "f32" => SampleType::F32,
                "f64" => SampleType::F64,
                other => {
                    return Err(Error::Parse {
                        context: "manifest".into(),
                        message: format!("unknown sample_type {other}"),
                    })
                }
            },
            measured: map.get("measured").is_some_and(|v| v == "true"),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Rebuilds the simulated trace set. Relative weight paths resolve against `base`.
    pub fn regenerate(&self, base: Option<&Path>) -> Result<TraceMatrix> {
        if self.measured {
            return Err(Error::Precondition(
                "measured traces cannot be regenerated".into(),
            ));
        }
        let cfg = self.array_config()?;
        let weights_path = match base {
            Some(dir) if self.weights_file.is_relative() => dir.join(&self.weights_file),
            _ => self.weights_file.clone(),
        };
        let weights = read_weights(&weights_path)?;
        let inputs = gen_inputs(self.seed, self.n_traces, &cfg);
        generate_traces(
            &cfg,
            &weights,
            &inputs,
            &self.coefficients()?,
            &self.noise()?,
        )
    }
}

/// Noise seed paired with an input seed.
pub fn noise_seed(seed: u64) -> u64 {
    crate::rng::derive_seed(seed, 0x006e_6f69_7365)
}

/// Manifest path stored next to a trace file.
pub fn manifest_path(trace_path: &Path) -> PathBuf {
    let mut s = trace_path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Weight text file: one matrix row per line, values separated by commas or spaces.
pub fn parse_weights(text: &str) -> Result<WeightMatrix> {
    let rows = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<i8>().map_err(|_| Error::Parse {
                        context: "weights".into(),
                        message: format!("{t:?} is not a signed 8-bit value"),
                    })
                })
                .collect::<Result<Vec<i8>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    WeightMatrix::from_rows(&rows)
}

pub fn format_weights(w: &WeightMatrix) -> String {
    w.to_rows()
        .iter()
        .map(|r| r.iter().map(i8::to_string).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightMatrix> {
    let path = path.as_ref();
    parse_weights(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_weights(path: impl AsRef<Path>, w: &WeightMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_weights(w)).map_err(|e| Error::io(path, e))
}

/// Formats with six significant digits, fixed notation for moderate magnitudes.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Round to six significant digits first so the exponent is the printed one.
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        sci
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_sig6)
}

/// Writes a labelled matrix with a header row.
pub fn write_matrix_csv(
    path: impl AsRef<Path>,
    corner: &str,
    col_labels: &[String],
    rows: &[(String, Vec<Option<f64>>)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![corner.to_string()];
    header.extend(col_labels.iter().cloned());
    w.write_record(&header)?;
    for (label, values) in rows {
        let mut record = vec![label.clone()];
        record.extend(values.iter().map(|v| cell(*v)));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parsed matrix CSV: column labels, row labels and cells (`NA` becomes `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCsv {
    pub col_labels: Vec<String>,
    pub row_labels: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<MatrixCsv> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let col_labels = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut cells = Vec::new();
    for record in r.records() {
        let record = record?;
        row_labels.push(record.get(0).unwrap_or_default().to_string());
        cells.push(
            record
                .iter()
                .skip(1)
                .map(|v| {
                    if v == "NA" {
                        Ok(None)
                    } else {
                        v.parse().map(Some).map_err(|_| Error::Parse {
                            context: "csv".into(),
                            message: format!("bad number {v:?}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(MatrixCsv {
        col_labels,
        row_labels,
        cells,
    })
}

/// Correlation matrix: one row per guess (signed value), one column per sample.
pub fn export_correlation_csv(path: impl AsRef<Path>, m: &CorrelationMatrix) -> Result<()> {
    let cols: Vec<String> = (0..m.samples()).map(|t| format!("t{t}")).collect();
    let rows: Vec<_> = (0..GUESSES)
        .map(|g| (guess_value(g).to_string(), m.row(g).to_vec()))
        .collect();
    write_matrix_csv(path, "guess", &cols, &rows)
}

pub fn export_aliasing_csv(path: impl AsRef<Path>, m: &AliasingMap) -> Result<()> {
    let labels: Vec<String> = (0..GUESSES).map(|g| guess_value(g).to_string()).collect();
    let rows: Vec<_> = (0..GUESSES)
        .map(|g| {
            (
                labels[g].clone(),
                (0..GUESSES).map(|h| m.get(g, h)).collect(),
            )
        })
        .collect();
    write_matrix_csv(path, "guess", &labels, &rows)
}

pub fn export_pe_table_csv(path: impl AsRef<Path>, m: &PeCorrelationTable) -> Result<()> {
    let labels: Vec<String> = (1..=m.num_pes()).map(|p| format!("PE{p}")).collect();
    let rows: Vec<_> = (0..m.num_pes())
        .map(|p| {
            (
                labels[p].clone(),
                (0..m.num_pes()).map(|q| m.get(p, q)).collect(),
            )
        })
        .collect();
    write_matrix_csv(path, "pe", &labels, &rows)
}

/// One row per chain entry, best first: rank, weights (top to bottom), score.
pub fn export_chain_csv(
    path: impl AsRef<Path>,
    chain: &GuessChain,
    truth: Option<&[i8]>,
) -> Result<()> {
    export_chains_csv(path, &[(chain, truth)])
}

/// Several chains in one file, distinguished by their 1-based column.
pub fn export_chains_csv(
    path: impl AsRef<Path>,
    chains: &[(&GuessChain, Option<&[i8]>)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["column", "rank", "weights", "score", "correct"])?;
    for (chain, truth) in chains {
        for (i, e) in chain.entries.iter().enumerate() {
            let weights = e
                .weights
                .iter()
                .map(i8::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            let score = if e.score.is_finite() {
                fmt_sig6(e.score)
            } else {
                "NA".into()
            };
            let correct = truth.map_or("", |t| {
                if t == e.weights.as_slice() {
                    "yes"
                } else {
                    "no"
                }
            });
            w.write_record([
                (chain.column + 1).to_string(),
                (i + 1).to_string(),
                weights,
                score,
                correct.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
