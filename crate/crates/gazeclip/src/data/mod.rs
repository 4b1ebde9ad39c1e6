//! Dataset manifests: one record per line, tab-separated, mirroring the
//! benchmark protocol (seen-only training, unseen generators labeled -1,
//! hierarchical text labels per record).

pub mod synth;

use crate::error::{Error, Result};
use crate::gaze::GazeVector;
use std::fmt;
use std::path::Path;

/// Forgery taxonomy used by the protocol tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeryType {
    /// Entire face synthesis.
    Efs,
    /// Face swap.
    Fs,
    /// Attribute manipulation.
    Am,
    /// Face reenactment.
    Fr,
    /// Talking face.
    Tf,
    Real,
}

impl ForgeryType {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "EFS" => Ok(ForgeryType::Efs),
            "FS" => Ok(ForgeryType::Fs),
            "AM" => Ok(ForgeryType::Am),
            "FR" => Ok(ForgeryType::Fr),
            "TF" => Ok(ForgeryType::Tf),
            "Real" => Ok(ForgeryType::Real),
            _ => Err(Error::Data(format!("unknown forgery type `{s}`"))),
        }
    }

    /// Human phrase used by the level-2 prompt.
    pub fn phrase(&self) -> &'static str {
        match self {
            ForgeryType::Efs => "entire face synthesis",
            ForgeryType::Fs => "face swap",
            ForgeryType::Am => "attribute manipulation",
            ForgeryType::Fr => "face reenactment",
            ForgeryType::Tf => "talking face",
            ForgeryType::Real => "",
        }
    }
}

impl fmt::Display for ForgeryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ForgeryType::Efs => "EFS",
            ForgeryType::Fs => "FS",
            ForgeryType::Am => "AM",
            ForgeryType::Fr => "FR",
            ForgeryType::Tf => "TF",
            ForgeryType::Real => "Real",
        };
        write!(f, "{s}")
    }
}

/// Generator family used by the level-3 prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gan,
    Diffusion,
    Flow,
    Real,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gan" => Ok(Family::Gan),
            "diffusion" => Ok(Family::Diffusion),
            "flow" => Ok(Family::Flow),
            "real" => Ok(Family::Real),
            _ => Err(Error::Data(format!("unknown family `{s}`"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Gan => "gan",
            Family::Diffusion => "diffusion",
            Family::Flow => "flow",
            Family::Real => "real",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Where a sample's pixels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Deterministic synthetic render from this seed.
    Seed(u64),
    /// Image file on disk (binary PPM).
    Path(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Seed(s) => write!(f, "seed:{s}"),
            Source::Path(p) => write!(f, "path:{p}"),
        }
    }
}

impl Source {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(seed) = s.strip_prefix("seed:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::Data(format!("bad seed source `{s}`")))?;
            Ok(Source::Seed(seed))
        } else if let Some(path) = s.strip_prefix("path:") {
            Ok(Source::Path(path.to_string()))
        } else {
            Err(Error::Data(format!("source `{s}` has no seed:/path: prefix")))
        }
    }
}

/// Label reserved for unseen generators.
pub const UNSEEN_LABEL: i64 = -1;

/// One dataset sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub source: Source,
    pub split: Split,
    /// 0 = real, 1 = fake.
    pub detection_label: u8,
    /// Seen class index, or -1 for unseen generators.
    pub attribution_label: i64,
    pub generator: String,
    pub forgery_type: ForgeryType,
    pub family: Family,
    pub l1: String,
    pub l2: String,
    pub l3: String,
    pub l4: String,
    pub gaze: Option<GazeVector>,
}

impl ManifestRecord {
    pub fn is_real(&self) -> bool {
        self.detection_label == 0
    }
}

const FIELDS: usize = 13;
const EMPTY: &str = "-";

fn enc(s: &str) -> String {
    if s.is_empty() {
        EMPTY.to_string()
    } else {
        s.to_string()
    }
}

fn dec(s: &str) -> String {
    if s == EMPTY {
        String::new()
    } else {
        s.to_string()
    }
}

pub fn record_to_line(r: &ManifestRecord) -> Result<String> {
    let gaze = match &r.gaze {
        Some(gz) => format!("{},{}", gz.yaw, gz.pitch),
        None => EMPTY.to_string(),
    };
    let fields = [
        r.id.clone(),
        r.source.to_string(),
        r.split.to_string(),
        r.detection_label.to_string(),
        r.attribution_label.to_string(),
        r.generator.clone(),
        r.forgery_type.to_string(),
        r.family.to_string(),
        enc(&r.l1),
        enc(&r.l2),
        enc(&r.l3),
        enc(&r.l4),
        gaze,
    ];
    for f in &fields {
        if f.contains('\t') || f.contains('\n') {
            return Err(Error::Data(format!(
                "record `{}`: fields may not contain tabs or newlines",
                r.id
            )));
        }
    }
    Ok(fields.join("\t"))
}

pub fn record_from_line(line: &str, lineno: usize) -> Result<ManifestRecord> {
    let ctx = |msg: String| Error::Data(format!("manifest line {lineno}: {msg}"));
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != FIELDS {
        return Err(ctx(format!("expected {FIELDS} fields, found {}", parts.len())));
    }
    let split = match parts[2] {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(ctx(format!("unknown split `{other}`"))),
    };
    let detection_label: u8 = parts[3]
        .parse()
        .map_err(|_| ctx(format!("bad detection label `{}`", parts[3])))?;
    if detection_label > 1 {
        return Err(ctx(format!("detection label must be 0 or 1, got {detection_label}")));
    }
    let attribution_label: i64 = parts[4]
        .parse()
        .map_err(|_| ctx(format!("bad attribution label `{}`", parts[4])))?;
    let gaze = if parts[12] == EMPTY {
        None
    } else {
        let (y, p) = parts[12]
            .split_once(',')
            .ok_or_else(|| ctx(format!("bad gaze `{}`", parts[12])))?;
        let yaw: f64 = y.parse().map_err(|_| ctx(format!("bad yaw `{y}`")))?;
        let pitch: f64 = p.parse().map_err(|_| ctx(format!("bad pitch `{p}`")))?;
        Some(GazeVector::new(yaw, pitch)?)
    };
    Ok(ManifestRecord {
        id: parts[0].to_string(),
        source: Source::parse(parts[1]).map_err(|e| ctx(e.to_string()))?,
        split,
        detection_label,
        attribution_label,
        generator: parts[5].to_string(),
        forgery_type: ForgeryType::parse(parts[6]).map_err(|e| ctx(e.to_string()))?,
        family: Family::parse(parts[7]).map_err(|e| ctx(e.to_string()))?,
        l1: dec(parts[8]),
        l2: dec(parts[9]),
        l3: dec(parts[10]),
        l4: dec(parts[11]),
        gaze,
    })
}

/// Protocol validation over a whole manifest. Violations carry line numbers
/// (1-based, counting data lines as written).
pub fn validate(records: &[ManifestRecord]) -> Result<()> {
    let mut ids = std::collections::HashSet::new();
    let mut train_labels = std::collections::BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if !ids.insert(&r.id) {
            return Err(Error::Data(format!("line {line}: duplicate id `{}`", r.id)));
        }
        let real_type = r.forgery_type == ForgeryType::Real;
        if (r.detection_label == 0) != real_type {
            return Err(Error::Data(format!(
                "line {line}: detection label {} inconsistent with forgery type {}",
                r.detection_label, r.forgery_type
            )));
        }
        if r.split == Split::Train {
            if r.attribution_label == UNSEEN_LABEL {
                return Err(Error::Protocol(format!(
                    "line {line}: unseen-labeled sample in the train split"
                )));
            }
            if r.attribution_label < 0 {
                return Err(Error::Data(format!(
                    "line {line}: negative attribution label {}",
                    r.attribution_label
                )));
            }
            train_labels.insert(r.attribution_label);
        }
        if r.attribution_label < UNSEEN_LABEL {
            return Err(Error::Data(format!(
                "line {line}: attribution label {} below -1",
                r.attribution_label
            )));
        }
        if r.l1.is_empty() {
            return Err(Error::Data(format!("line {line}: empty l1 text")));
        }
        if r.is_real() && r.forgery_type != ForgeryType::Real {
            return Err(Error::Data(format!("line {line}: real label, fake type")));
        }
        if !r.is_real() && (r.l2.is_empty() || r.l3.is_empty() || r.l4.is_empty()) {
            return Err(Error::Data(format!(
                "line {line}: fake record must carry l2..l4 texts"
            )));
        }
    }
    // Seen labels must form a dense 0..x-1 range.
    if !train_labels.is_empty() {
        let max = *train_labels.last().unwrap();
        for expect in 0..=max {
            if !train_labels.contains(&expect) {
                return Err(Error::Protocol(format!(
                    "train labels are not dense: missing class {expect} (max {max})"
                )));
            }
        }
    }
    Ok(())
}

/// Number of distinct seen attribution classes in the train split.
pub fn seen_class_count(records: &[ManifestRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| r.attribution_label)
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

pub fn save_manifest(records: &[ManifestRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_to_line(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load and validate. An empty file is a valid empty manifest (with a
/// warning); schema violations are data errors, protocol violations
/// protocol errors, both with line numbers.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(record_from_line(line, i + 1)?);
    }
    if records.is_empty() {
        log::warn!("manifest {} is empty", path.display());
    }
    validate(&records)?;
    Ok(records)
}
