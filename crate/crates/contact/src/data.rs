//! Sensor samples, replicates and the CSV log format.
//!
//! ```text
//! # id=slice-03
//! # cut_type=slicing
//! t_ms,proximity,ax,ay,az,gx,gy,gz,mx,my,mz,contact
//! 0,201.5,3.1,-0.4,998.2,0.1,0.0,-0.2,12.0,-4.5,30.2,0
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_FEATURES: usize = 10;

pub const FEATURE_NAMES: [&str; N_FEATURES] = ["proximity", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"];

const HEADER: &str = "t_ms,proximity,ax,ay,az,gx,gy,gz,mx,my,mz,contact";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CutType {
    Slicing,
    Trimming,
    Cubing,
}

impl CutType {
    pub const ALL: [CutType; 3] = [CutType::Slicing, CutType::Trimming, CutType::Cubing];

    pub fn as_str(&self) -> &'static str {
        match self {
            CutType::Slicing => "slicing",
            CutType::Trimming => "trimming",
            CutType::Cubing => "cubing",
        }
    }
}

impl fmt::Display for CutType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CutType {
    type Err = ContactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slicing" | "slice" => Ok(CutType::Slicing),
            "trimming" | "trim" => Ok(CutType::Trimming),
            "cubing" | "cube" => Ok(CutType::Cubing),
            other => Err(ContactError::Parse { line: 0, message: format!("unknown cut type `{other}`") }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    /// Milliseconds since the start of the replicate.
    pub t_ms: f64,
    /// Proximity, accelerometer, gyroscope, magnetometer; see [`FEATURE_NAMES`].
    pub features: [f64; N_FEATURES],
    pub contact: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub id: String,
    pub cut_type: CutType,
    pub samples: Vec<SensorSample>,
}

impl Replicate {
    pub fn contact_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.contact == 1).count() as f64 / self.samples.len() as f64
    }

    /// Checks contact labels and strictly increasing timestamps.
    pub fn validate(&self) -> Result<(), ContactError> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.contact > 1 {
                return Err(ContactError::Integrity(format!("{}: sample {i} has contact {}", self.id, s.contact)));
            }
            if !s.t_ms.is_finite() || s.features.iter().any(|v| !v.is_finite()) {
                return Err(ContactError::Integrity(format!("{}: sample {i} is not finite", self.id)));
            }
            if i > 0 && s.t_ms <= self.samples[i - 1].t_ms {
                return Err(ContactError::Integrity(format!(
                    "{}: timestamp {} at sample {i} does not increase",
                    self.id, s.t_ms
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("training data has a single class")]
    DegenerateModel,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct Row {
    t_ms: f64,
    proximity: f64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
    mx: f64,
    my: f64,
    mz: f64,
    contact: u8,
}

/// Parses one replicate. `fallback_id` is used when the preamble has no id.
pub fn read_replicate<R: Read>(reader: R, fallback_id: &str) -> Result<Replicate, ContactError> {
    let mut reader = BufReader::new(reader);
    let mut id = fallback_id.to_owned();
    let mut cut_type = None;
    let mut preamble_lines = 0;
    let mut header = String::new();
    loop {
        header.clear();
        if reader.read_line(&mut header)? == 0 {
            return Err(ContactError::Parse { line: preamble_lines + 1, message: "missing header".into() });
        }
        preamble_lines += 1;
        let line = header.trim();
        let Some(meta) = line.strip_prefix('#') else {
            if line.is_empty() {
                continue;
            }
            break;
        };
        if let Some((k, v)) = meta.split_once('=') {
            match k.trim() {
                "id" => id = v.trim().to_owned(),
                "cut_type" => {
                    cut_type = Some(v.parse::<CutType>().map_err(|_| ContactError::Parse {
                        line: preamble_lines,
                        message: format!("unknown cut type `{}`", v.trim()),
                    })?)
                }
                _ => {}
            }
        }
    }
    let header_line = preamble_lines;
    if header.trim().replace(' ', "") != HEADER {
        return Err(ContactError::Parse { line: header_line, message: format!("expected header `{HEADER}`") });
    }
    let cut_type = cut_type.ok_or(ContactError::Parse { line: header_line, message: "preamble lacks cut_type".into() })?;

    let mut csv = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut samples = Vec::new();
    for (k, rec) in csv.deserialize::<Row>().enumerate() {
        let line = header_line + k + 1;
        let r = rec.map_err(|e| ContactError::Parse { line, message: e.to_string() })?;
        if r.contact > 1 {
            return Err(ContactError::Parse { line, message: format!("contact must be 0 or 1, got {}", r.contact) });
        }
        if let Some(prev) = samples.last().map(|s: &SensorSample| s.t_ms) {
            if r.t_ms <= prev {
                return Err(ContactError::Integrity(format!("line {line}: timestamp {} after {}", r.t_ms, prev)));
            }
        }
        samples.push(SensorSample {
            t_ms: r.t_ms,
            features: [r.proximity, r.ax, r.ay, r.az, r.gx, r.gy, r.gz, r.mx, r.my, r.mz],
            contact: r.contact,
        });
    }
    let rep = Replicate { id, cut_type, samples };
    rep.validate()?;
    Ok(rep)
}

pub fn write_replicate<W: Write>(rep: &Replicate, mut w: W) -> Result<(), ContactError> {
    writeln!(w, "# id={}", rep.id)?;
    writeln!(w, "# cut_type={}", rep.cut_type)?;
    writeln!(w, "{HEADER}")?;
    for s in &rep.samples {
        write!(w, "{}", s.t_ms)?;
        for v in &s.features {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", s.contact)?;
    }
    Ok(())
}

/// Reads every file; the file stem is the fallback id.
pub fn ingest_replicates<P: AsRef<Path>>(files: &[P]) -> Result<Vec<Replicate>, ContactError> {
    files
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("replicate");
            read_replicate(File::open(p)?, stem).map_err(|e| match e {
                ContactError::Parse { line, message } => {
                    ContactError::Parse { line, message: format!("{}: {message}", p.display()) }
                }
                other => other,
            })
        })
        .collect()
}
