//! Comparability reports and their JSON/CSV serialization.
//!
//! A [`RatioReport`] records the empirical ratios `lhs / rhs` behind a
//! two-sided comparability claim `lhs ≍ rhs`: the claim holds on the sample
//! when every ratio is finite and positive and the spread `max / min` stays
//! below a configured cap.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON has no encoding for non-finite numbers; they are written as `null`
/// and read back as NaN.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One sampled comparison. `x` and `y` hold the sample coordinates: two
/// points for Green-function claims, a single abscissa in `x` for
/// one-dimensional claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: Vec<f64>,
    #[serde(with = "lenient_f64")]
    pub lhs: f64,
    #[serde(with = "lenient_f64")]
    pub rhs: f64,
    #[serde(with = "lenient_f64")]
    pub ratio: f64,
    #[serde(default)]
    pub tag: String,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Vec<f64>, lhs: f64, rhs: f64) -> Self {
        Self {
            x,
            y,
            lhs,
            rhs,
            ratio: lhs / rhs,
            tag: String::new(),
        }
    }

    /// Sample indexed by a scalar abscissa (λ, t or r).
    pub fn scalar(at: f64, lhs: f64, rhs: f64) -> Self {
        Self::new(vec![at], Vec::new(), lhs, rhs)
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub claim_id: String,
    pub samples: Vec<Sample>,
    #[serde(with = "lenient_f64")]
    pub ratio_min: f64,
    #[serde(with = "lenient_f64")]
    pub ratio_max: f64,
    #[serde(with = "lenient_f64")]
    pub geometric_spread: f64,
    #[serde(with = "lenient_f64")]
    pub cap: f64,
    pub pass: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RatioReport {
    pub fn new(claim_id: impl Into<String>, samples: Vec<Sample>, cap: f64) -> Self {
        let all_valid = !samples.is_empty()
            && samples
                .iter()
                .all(|s| s.ratio.is_finite() && s.ratio > 0.0);
        let (ratio_min, ratio_max) = samples.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), s| {
                if s.ratio.is_nan() {
                    (lo, hi)
                } else {
                    (lo.min(s.ratio), hi.max(s.ratio))
                }
            },
        );
        let geometric_spread = if all_valid {
            ratio_max / ratio_min
        } else {
            f64::INFINITY
        };
        Self {
            claim_id: claim_id.into(),
            samples,
            ratio_min,
            ratio_max,
            geometric_spread,
            cap,
            pass: all_valid && geometric_spread <= cap,
            notes: Vec::new(),
        }
    }

    /// Report for a one-sided claim `lhs ≤ cap · rhs`: passes when every
    /// ratio is finite and positive and `ratio_max ≤ cap`.
    pub fn bounded_above(claim_id: impl Into<String>, samples: Vec<Sample>, cap: f64) -> Self {
        let mut report = Self::new(claim_id, samples, f64::INFINITY);
        report.cap = cap;
        report.pass &= report.ratio_max <= cap;
        report
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Reported comparability constant: the smallest `c` with every ratio in
    /// `[m / c, m * c]` for `m` the geometric mean of the extremes.
    pub fn comparability_constant(&self) -> f64 {
        self.geometric_spread.sqrt()
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: n={} min={:.4e} max={:.4e} spread={:.3} cap={} -> {}",
            self.claim_id,
            self.samples.len(),
            self.ratio_min,
            self.ratio_max,
            self.geometric_spread,
            self.cap,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Top-level report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub toolkit_version: String,
    pub spec: String,
    pub domain: String,
    pub claims: Vec<RatioReport>,
}

impl ReportDocument {
    pub fn new(spec: impl Into<String>, domain: impl Into<String>, claims: Vec<RatioReport>) -> Self {
        Self {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            spec: spec.into(),
            domain: domain.into(),
            claims,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    claim_id: &'a str,
    tag: &'a str,
    x: String,
    y: String,
    lhs: f64,
    rhs: f64,
    ratio: f64,
}

fn join(coords: &[f64]) -> String {
    coords
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Write `doc` as JSON to `path` and every sample as a CSV row next to it
/// (same stem, `.csv` extension). Returns the CSV path.
pub fn emit_report(doc: &ReportDocument, path: &Path) -> Result<PathBuf> {
    let mut json = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut json, doc)?;
    json.write_all(b"\n")?;
    json.flush()?;

    let csv_path = path.with_extension("csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for claim in &doc.claims {
        for s in &claim.samples {
            writer.serialize(CsvRow {
                claim_id: &claim.claim_id,
                tag: &s.tag,
                x: join(&s.x),
                y: join(&s.y),
                lhs: s.lhs,
                rhs: s.rhs,
                ratio: s.ratio,
            })?;
        }
    }
    writer.flush()?;
    Ok(csv_path)
}

pub fn read_report(path: &Path) -> Result<ReportDocument> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
