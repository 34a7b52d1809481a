//! File formats: images, landmark tables, dataset manifests, feature
//! matrices and model files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGray;
use crate::landmarks::{Label, Landmark, LandmarkSet, SubjectRecord, LANDMARK_COUNT};
use crate::phantom::{PhantomCohort, PhantomSpec};
use crate::pipeline::{SubjectFeatures, TrainedModel};
use crate::registration::RegParams;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// 8- or 16-bit grayscale PGM or PNG, scaled by the bit depth into `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageGray> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(Error::parse(
                path,
                format!("expected a grayscale image, found {:?}", other.color()),
            ))
        }
    };
    ImageGray::new(w, h, data).map_err(|e| Error::parse(path, e.to_string()))
}

/// 16-bit grayscale; the format follows the extension (`.pgm` or `.png`).
/// Intensities are clamped to `[0, 1]`.
pub fn save_image(path: &Path, img: &ImageGray) -> Result<()> {
    let raw: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size matches");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    buf.save(path).map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct LandmarkRow {
    name: String,
    x: f64,
    y: f64,
}

/// Landmark table with header `name,x,y`, one row per landmark, pixel units.
pub fn load_landmarks(path: &Path) -> Result<LandmarkSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<LandmarkRow>() {
        rows.push(row.map_err(|e| Error::parse(path, e.to_string()))?);
    }
    LandmarkSet::from_named(rows.iter().map(|r| (r.name.as_str(), Complex64::new(r.x, r.y))))
}

pub fn landmarks_csv(lm: &LandmarkSet) -> String {
    let mut out = String::from("name,x,y\n");
    for (l, p) in lm.iter() {
        out.push_str(&format!("{},{},{}\n", l.name(), p.re, p.im));
    }
    out
}

pub fn save_landmarks(path: &Path, lm: &LandmarkSet) -> Result<()> {
    write_text(path, &landmarks_csv(lm))
}

pub fn load_subject(
    id: &str,
    image: &Path,
    landmarks: &Path,
    label: Option<Label>,
) -> Result<SubjectRecord> {
    let img = load_image(image)?;
    let lm = load_landmarks(landmarks)?;
    SubjectRecord::new(id, img, lm, label)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub landmarks: PathBuf,
    /// `control`, `osa` or `unlabeled`.
    pub label: String,
}

/// TOML dataset description; relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub cohort: CohortInfo,
    #[serde(default)]
    pub subject: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn parse_label(s: &str) -> Result<Option<Label>> {
    if s.trim().eq_ignore_ascii_case("unlabeled") {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest =
            toml::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e.to_string()))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut seen = HashSet::new();
        for e in &m.subject {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::parse(path, format!("duplicate subject id {:?}", e.id)));
            }
            parse_label(&e.label).map_err(|err| Error::parse(path, format!("subject {}: {err}", e.id)))?;
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn load_subjects(&self) -> Result<Vec<SubjectRecord>> {
        let subjects = self
            .subject
            .iter()
            .map(|e| {
                load_subject(
                    &e.id,
                    &self.resolve(&e.image),
                    &self.resolve(&e.landmarks),
                    parse_label(&e.label)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for s in &subjects {
            let size = (s.image.width(), s.image.height());
            let expect = (
                self.cohort.width.unwrap_or(size.0),
                self.cohort.height.unwrap_or(size.1),
            );
            if size != expect {
                return Err(Error::InvalidInput(format!(
                    "subject {} is {}x{}, cohort declares {}x{}",
                    s.id, size.0, size.1, expect.0, expect.1
                )));
            }
        }
        Ok(subjects)
    }
}

/// Write the cohort as `images/<id>.pgm`, `landmarks/<id>.csv`, the base
/// subject as `base.pgm`/`base.csv`, the spec as `phantom.toml`, and return
/// the path of the written `manifest.toml`.
pub fn write_phantom(dir: &Path, spec: &PhantomSpec, cohort: &PhantomCohort) -> Result<PathBuf> {
    let mut manifest = DatasetManifest {
        cohort: CohortInfo {
            name: Some("phantom".into()),
            width: Some(spec.width),
            height: Some(spec.height),
            pixel_spacing: None,
        },
        ..DatasetManifest::default()
    };
    save_image(&dir.join("base.pgm"), &cohort.base.image)?;
    save_landmarks(&dir.join("base.csv"), &cohort.base.landmarks)?;
    for s in &cohort.subjects {
        let image = PathBuf::from("images").join(format!("{}.pgm", s.id));
        let landmarks = PathBuf::from("landmarks").join(format!("{}.csv", s.id));
        save_image(&dir.join(&image), &s.image)?;
        save_landmarks(&dir.join(&landmarks), &s.landmarks)?;
        manifest.subject.push(ManifestEntry {
            id: s.id.clone(),
            image,
            landmarks,
            label: s.label.map_or("unlabeled", Label::as_str).into(),
        });
    }
    let spec_text = toml::to_string(spec).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_text(&dir.join("phantom.toml"), &spec_text)?;
    let path = dir.join("manifest.toml");
    write_text(&path, &manifest.to_toml()?)?;
    Ok(path)
}

/// Feature rows with named columns, plus `# key = value` metadata lines
/// ahead of the CSV header `id,label,<columns>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub metadata: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub labels: Vec<Option<Label>>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn meta<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .metadata
            .get(key)
            .ok_or_else(|| Error::InvalidInput(format!("feature matrix lacks metadata {key:?}")))?;
        v.parse()
            .map_err(|_| Error::InvalidInput(format!("bad metadata {key} = {v:?}")))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidInput(format!("feature matrix serialization: {e}"));
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for ((id, label), row) in self.ids.iter().zip(&self.labels).zip(&self.rows) {
            let mut rec = vec![id.clone(), label.map_or("unlabeled", Label::as_str).to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push_str(std::str::from_utf8(&bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut m = FeatureMatrix::default();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(meta) = line.strip_prefix('#') else { break };
            let (k, v) = meta
                .split_once('=')
                .ok_or_else(|| Error::parse(path, format!("bad metadata line {:?}", line.trim_end())))?;
            m.metadata.insert(k.trim().to_string(), v.trim().to_string());
            body_start += line.len();
        }
        let mut reader = csv::Reader::from_reader(text[body_start..].as_bytes());
        let header = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?;
        if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
            return Err(Error::parse(path, "header must start with id,label"));
        }
        m.columns = header.iter().skip(2).map(str::to_string).collect();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            m.ids.push(rec[0].to_string());
            m.labels.push(parse_label(&rec[1]).map_err(|e| Error::parse(path, e.to_string()))?);
            let row = rec
                .iter()
                .skip(2)
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
            m.rows.push(row);
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        FeatureMatrix::from_csv(&read_text(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv()?)
    }
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// The reference subject a model's features are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub landmarks: Vec<[f64; 2]>,
}

impl ReferenceData {
    pub fn from_subject(s: &SubjectRecord) -> Self {
        ReferenceData {
            id: s.id.clone(),
            width: s.image.width(),
            height: s.image.height(),
            pixels: s.image.data().to_vec(),
            landmarks: s.landmarks.positions().iter().map(|p| [p.re, p.im]).collect(),
        }
    }

    pub fn to_subject(&self) -> Result<SubjectRecord> {
        if self.landmarks.len() != LANDMARK_COUNT {
            return Err(Error::InvalidInput(format!(
                "reference has {} landmarks, expected {LANDMARK_COUNT}",
                self.landmarks.len()
            )));
        }
        let lm = LandmarkSet::from_named(
            Landmark::ALL
                .iter()
                .zip(&self.landmarks)
                .map(|(l, p)| (l.name(), Complex64::new(p[0], p[1]))),
        )?;
        let img = ImageGray::new(self.width, self.height, self.pixels.clone())?;
        SubjectRecord::new(self.id.clone(), img, lm, Some(Label::Control))
    }
}

/// Self-contained JSON model: classifier, feature settings and reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub window: usize,
    pub registration: RegParams,
    pub model: TrainedModel,
    pub reference: ReferenceData,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == MODEL_SCHEMA_VERSION as u64 => {}
            other => {
                return Err(Error::parse(
                    path,
                    format!("unsupported model schema_version {other:?}, expected {MODEL_SCHEMA_VERSION}"),
                ))
            }
        }
        serde_json::from_value(value).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelFile::from_json(&read_text(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json()?)
    }

    /// Register the stored reference onto `subject` and classify it;
    /// returns the label and the distance to the control mean.
    pub fn predict(&self, subject: &SubjectRecord) -> Result<(Label, f64)> {
        let reference = self.reference.to_subject()?;
        let f = SubjectFeatures::extract(&reference, subject, &self.registration, self.window)?;
        self.model.decide(&f)
    }
}
