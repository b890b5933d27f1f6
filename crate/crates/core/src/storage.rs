//! Persistence. Every artifact file holds two lines: an envelope header
//! (kind, format version, provenance, checksum) and the JSON payload whose
//! exact bytes the checksum covers. Bulk numeric arrays inside payloads are
//! base64-encoded little-endian `f64`, so round trips are bit-exact.
//!
//! Designs, trajectories and metric reports can also be exported to CSV.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{DesignOfExperiments, ParameterSpace, SeedRegistry};
use crate::emulator::KlEmulator;
use crate::empirical::{KlBasis, TrajectoryMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::MetricReport;
use crate::scalar::Real;
use crate::surrogates::Surrogate;
use crate::validation::{FoldRecord, ValidationSummary};

/// Envelope format written by this library.
pub const FORMAT_VERSION: u32 = 1;

/// Library version recorded in provenance.
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Types that can be stored as an artifact.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl<T: Real> Artifact for DesignOfExperiments<T> {
    const KIND: &'static str = "doe";
}
impl Artifact for SeedRegistry {
    const KIND: &'static str = "seeds";
}
impl<T: Real> Artifact for TrajectoryMatrix<T> {
    const KIND: &'static str = "trajectories";
}
impl<T: Real> Artifact for KlBasis<T> {
    const KIND: &'static str = "kl_basis";
}
impl<T: Real> Artifact for Surrogate<T> {
    const KIND: &'static str = "surrogate";
}
impl<T: Real> Artifact for KlEmulator<T> {
    const KIND: &'static str = "emulator";
}
impl Artifact for ValidationSummary {
    const KIND: &'static str = "validation_summary";
}
impl<T: Real> Artifact for Vec<MetricReport<T>> {
    const KIND: &'static str = "metric_reports";
}

/// Where an artifact came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// RFC 3339, UTC. Honors `SOURCE_DATE_EPOCH` for reproducible output.
    pub created_at: String,
    pub library_version: String,
    /// SHA-256 of upstream inputs, by name.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Effective configuration of the producing step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Provenance {
    pub fn now() -> Self {
        Self { created_at: timestamp(), library_version: LIBRARY_VERSION.to_owned(), ..Self::default() }
    }

    pub fn with_input(mut self, name: &str, sha256: String) -> Self {
        self.inputs.insert(name.to_owned(), sha256);
        self
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = Some(config);
        self
    }
}

fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok());
    let t = match fixed {
        Some(secs) => chrono::DateTime::from_timestamp(secs, 0).unwrap_or_default(),
        None => chrono::Utc::now(),
    };
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// First line of every artifact file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: String,
    pub format_version: u32,
    pub provenance: Provenance,
    /// SHA-256 (hex) of the payload line.
    pub checksum: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Writes `bytes` next to `path` and renames over it, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Saves `value` with its envelope. Returns the payload checksum.
pub fn save<A: Artifact>(value: &A, path: &Path, provenance: Provenance) -> Result<String> {
    let payload = serde_json::to_string(value)?;
    let checksum = sha256_hex(payload.as_bytes());
    let envelope = Envelope {
        kind: A::KIND.to_owned(),
        format_version: FORMAT_VERSION,
        provenance,
        checksum: checksum.clone(),
    };
    let mut out = serde_json::to_string(&envelope)?;
    out.push('\n');
    out.push_str(&payload);
    out.push('\n');
    write_atomic(path, out.as_bytes())?;
    log::debug!("saved {} to {}", A::KIND, path.display());
    Ok(checksum)
}

/// Reads the envelope only.
pub fn read_envelope(path: &Path) -> Result<Envelope> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    parse_header(&line, line.as_bytes())
}

fn parse_header(line: &str, whole: &[u8]) -> Result<Envelope> {
    serde_json::from_str(line.trim_end()).map_err(|_| Error::Checksum {
        expected: "unreadable envelope".into(),
        computed: sha256_hex(whole),
    })
}

/// Loads an artifact, checking kind, format version and checksum in that order.
pub fn load<A: Artifact>(path: &Path) -> Result<(A, Envelope)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let split = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    let header = std::str::from_utf8(&bytes[..split]).unwrap_or("");
    let envelope = parse_header(header, &bytes)?;
    if envelope.kind != A::KIND {
        return Err(Error::Kind { expected: A::KIND.to_owned(), found: envelope.kind });
    }
    if envelope.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: envelope.format_version, supported: FORMAT_VERSION });
    }
    let rest = bytes.get(split + 1..).unwrap_or(&[]);
    let payload = rest.strip_suffix(b"\n").unwrap_or(rest);
    let computed = sha256_hex(payload);
    if computed != envelope.checksum {
        return Err(Error::Checksum { expected: envelope.checksum, computed });
    }
    let value = serde_json::from_slice(payload)?;
    Ok((value, envelope))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("csv: {other:?}")),
    }
}

fn parse_real<T: Real>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .map(T::of)
        .map_err(|_| Error::Data(format!("cannot parse {what} value `{s}`")))
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect()).map_err(csv_err))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn coord_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// DoE as CSV with header `x1,…,xd`.
pub fn write_doe_csv<T: Real>(doe: &DesignOfExperiments<T>, path: &Path) -> Result<()> {
    write_csv(
        path,
        &coord_header(doe.space.dims()),
        doe.points.iter().map(|p| p.iter().map(|v| v.to_string()).collect()),
    )
}

pub fn read_doe_csv<T: Real>(path: &Path, space: ParameterSpace<T>) -> Result<DesignOfExperiments<T>> {
    let (header, rows) = read_csv(path)?;
    if header != coord_header(space.dims()) {
        return Err(Error::Data(format!("DoE header {header:?} does not match {} dims", space.dims())));
    }
    let points = rows
        .iter()
        .map(|r| r.iter().map(|s| parse_real(s, "coordinate")).collect::<Result<Vec<T>>>())
        .collect::<Result<_>>()?;
    DesignOfExperiments::new(points, space)
}

/// Trajectories as CSV: coordinates, then one `seed_<s>` column per seed.
pub fn write_trajectories_csv<T: Real>(data: &TrajectoryMatrix<T>, path: &Path) -> Result<()> {
    let mut header = coord_header(data.dims());
    header.extend(data.seeds().seeds().iter().map(|s| format!("seed_{s}")));
    let rows = (0..data.n_points()).map(|j| {
        data.coords()[j]
            .iter()
            .chain(data.values().row(j))
            .map(|v| v.to_string())
            .collect()
    });
    write_csv(path, &header, rows)
}

pub fn read_trajectories_csv<T: Real>(path: &Path) -> Result<TrajectoryMatrix<T>> {
    let (header, rows) = read_csv(path)?;
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    let seeds = header[d..]
        .iter()
        .map(|h| {
            h.strip_prefix("seed_")
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Error::Data(format!("bad trajectory column `{h}`")))
        })
        .collect::<Result<Vec<u64>>>()?;
    if d == 0 || seeds.is_empty() || rows.is_empty() {
        return Err(Error::Data("trajectory CSV needs coordinate columns, seed columns and rows".into()));
    }
    let mut coords = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * seeds.len());
    for (j, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::Data(format!("trajectory row {j} has {} fields", r.len())));
        }
        coords.push(r[..d].iter().map(|s| parse_real(s, "coordinate")).collect::<Result<Vec<T>>>()?);
        for s in &r[d..] {
            values.push(parse_real(s, "trajectory")?);
        }
    }
    let m = coords.len();
    TrajectoryMatrix::new(Matrix::from_vec(m, seeds.len(), values), coords, SeedRegistry::new(seeds)?)
}

/// Seeds as a plain JSON array.
pub fn write_seeds_json(seeds: &SeedRegistry, path: &Path) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(seeds)?.as_bytes())
}

pub fn read_seeds_json(path: &Path) -> Result<SeedRegistry> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

const REPORT_COLUMNS: [&str; 5] = ["hist_int", "hellinger", "jsd", "ks_stat", "ks_reject"];

fn report_fields<T: Real>(r: &MetricReport<T>) -> [String; 5] {
    [
        r.hist_intersection.to_string(),
        r.hellinger.to_string(),
        r.js_divergence.to_string(),
        r.ks_statistic.to_string(),
        r.ks_reject.to_string(),
    ]
}

/// Joins coordinates with `;` for the single `x*` column.
pub fn format_point<T: Real>(x: &[T]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Per-point reports with columns `x*, hist_int, hellinger, jsd, ks_stat, ks_reject`.
pub fn write_report_csv<T: Real>(points: &[Vec<T>], reports: &[MetricReport<T>], path: &Path) -> Result<()> {
    if points.len() != reports.len() {
        return Err(Error::Data(format!("{} points for {} reports", points.len(), reports.len())));
    }
    let mut header = vec!["x*".to_owned()];
    header.extend(REPORT_COLUMNS.iter().map(|s| s.to_string()));
    let rows = points.iter().zip(reports).map(|(x, r)| {
        let mut row = vec![format_point(x)];
        row.extend(report_fields(r));
        row
    });
    write_csv(path, &header, rows)
}

/// Test points and their reports.
pub type PointReports<T> = (Vec<Vec<T>>, Vec<MetricReport<T>>);

pub fn read_report_csv<T: Real>(path: &Path) -> Result<PointReports<T>> {
    let (header, rows) = read_csv(path)?;
    if header.first().map(String::as_str) != Some("x*") || header[1..] != REPORT_COLUMNS {
        return Err(Error::Data(format!("unexpected report header {header:?}")));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut reports = Vec::with_capacity(rows.len());
    for r in &rows {
        points.push(r[0].split(';').map(|s| parse_real(s, "coordinate")).collect::<Result<Vec<T>>>()?);
        let ks_reject = r[5]
            .parse::<bool>()
            .map_err(|_| Error::Data(format!("bad ks_reject value `{}`", r[5])))?;
        reports.push(MetricReport {
            hist_intersection: parse_real(&r[1], "hist_int")?,
            hellinger: parse_real(&r[2], "hellinger")?,
            js_divergence: parse_real(&r[3], "jsd")?,
            ks_statistic: parse_real(&r[4], "ks_stat")?,
            ks_reject,
        });
    }
    Ok((points, reports))
}

/// Raw cross-validation rows: `repetition, fold, point, hist_int, …`.
pub fn write_fold_records_csv<T: Real>(records: &[FoldRecord<T>], path: &Path) -> Result<()> {
    let mut header: Vec<String> = ["repetition", "fold", "point"].iter().map(|s| s.to_string()).collect();
    header.extend(REPORT_COLUMNS.iter().map(|s| s.to_string()));
    let rows = records.iter().map(|r| {
        let mut row = vec![r.repetition.to_string(), r.fold.to_string(), r.point.to_string()];
        row.extend(report_fields(&r.report));
        row
    });
    write_csv(path, &header, rows)
}
