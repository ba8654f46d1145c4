//! File formats: JSON-lines annotations and the versioned model file.
//!
//! Annotation line:
//!
//! ```json
//! {"image_id":"a","width":640,"height":480,"pose_mode":"full","label":"running",
//!  "detections":[{"kind":"head","x1":1,"y1":2,"x2":1,"y2":52,"score":0.9,"source":"detector"}]}
//! ```
//!
//! `label` may be `null` or omitted; every other field is required. The model
//! file is a JSON document whose floating-point parameters are stored as
//! hexadecimal bit patterns (see [`Scalar::to_hex`]) and protected by a
//! SHA-256 checksum over the rest of the document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{ActionClass, EntityKind};
use crate::dbn::{Architecture, DbnError, DbnModel, ModelMetadata, SoftmaxHead};
use crate::geometry::{CentralLine, DetectionRecord, ImageAnnotation, PoseMode, Source};
use crate::linalg::Matrix;
use crate::rbm::{BinaryRbm, GaussianRbm};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown entity kind {kind:?}")]
    UnknownEntityKind { line: usize, kind: String },
    #[error("line {line}: unknown action label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: {message}")]
    InvalidValue { line: usize, message: String },
}

impl AnnotationError {
    pub fn line(&self) -> Option<usize> {
        match self {
            AnnotationError::Io { .. } => None,
            AnnotationError::Parse { line, .. }
            | AnnotationError::UnknownEntityKind { line, .. }
            | AnnotationError::UnknownLabel { line, .. }
            | AnnotationError::InvalidValue { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    kind: String,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    score: f64,
    source: Source,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationLine {
    image_id: String,
    width: f64,
    height: f64,
    pose_mode: PoseMode,
    label: Option<String>,
    detections: Vec<DetectionLine>,
}

fn from_line(raw: AnnotationLine, line: usize) -> Result<ImageAnnotation, AnnotationError> {
    let invalid = |message: String| AnnotationError::InvalidValue { line, message };
    if !(raw.width > 0.0 && raw.width.is_finite() && raw.height > 0.0 && raw.height.is_finite()) {
        return Err(invalid(format!("image size {}x{} must be positive", raw.width, raw.height)));
    }
    let label = match raw.label {
        None => None,
        Some(name) => {
            Some(name.parse::<ActionClass>().map_err(|_| AnnotationError::UnknownLabel { line, label: name })?)
        }
    };
    let mut detections = Vec::with_capacity(raw.detections.len());
    for d in raw.detections {
        let kind =
            d.kind.parse::<EntityKind>().map_err(|_| AnnotationError::UnknownEntityKind { line, kind: d.kind })?;
        let line_geom = CentralLine::new(d.x1, d.y1, d.x2, d.y2);
        if !line_geom.is_finite() || !d.score.is_finite() {
            return Err(invalid(format!("non-finite value in {kind} detection")));
        }
        detections.push(DetectionRecord { kind, line: line_geom, score: d.score, source: d.source });
    }
    Ok(ImageAnnotation {
        image_id: raw.image_id,
        width: raw.width,
        height: raw.height,
        detections,
        label,
        pose_mode: raw.pose_mode,
    })
}

fn to_line(a: &ImageAnnotation) -> AnnotationLine {
    AnnotationLine {
        image_id: a.image_id.clone(),
        width: a.width,
        height: a.height,
        pose_mode: a.pose_mode,
        label: a.label.map(|l| l.name().to_owned()),
        detections: a
            .detections
            .iter()
            .map(|d| DetectionLine {
                kind: d.kind.name().to_owned(),
                x1: d.line.x1,
                y1: d.line.y1,
                x2: d.line.x2,
                y2: d.line.y2,
                score: d.score,
                source: d.source,
            })
            .collect(),
    }
}

/// Parses JSON-lines annotation text. Blank lines are ignored; line numbers
/// in errors are 1-based.
pub fn parse_annotations(text: &str) -> Result<Vec<ImageAnnotation>, AnnotationError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine =
            serde_json::from_str(raw).map_err(|e| AnnotationError::Parse { line, message: e.to_string() })?;
        out.push(from_line(parsed, line)?);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<ImageAnnotation>, AnnotationError> {
    let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io { path: path.to_owned(), source })?;
    parse_annotations(&text)
}

pub fn annotations_to_string(annotations: &[ImageAnnotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&serde_json::to_string(&to_line(a)).expect("annotation serialises"));
        out.push('\n');
    }
    out
}

pub fn write_annotations(path: &Path, annotations: &[ImageAnnotation]) -> std::io::Result<()> {
    fs::write(path, annotations_to_string(annotations))
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("model was saved with scalar type {found}, loading as {expected}")]
    ScalarMismatch { found: String, expected: &'static str },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("inconsistent model: {0}")]
    Shape(#[from] DbnError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    data: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRecord {
    weights: MatrixRecord,
    hidden_bias: Vec<String>,
    visible_bias: Vec<String>,
    sigma: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryRecord {
    weights: MatrixRecord,
    hidden_bias: Vec<String>,
    visible_bias: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadRecord {
    weights: MatrixRecord,
    bias: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelBody {
    format_version: u32,
    scalar: String,
    architecture: Architecture,
    layer1: GaussianRecord,
    layer2: BinaryRecord,
    softmax: HeadRecord,
    metadata: ModelMetadata,
}

fn hex_vec<T: Scalar>(v: &[T]) -> Vec<String> {
    v.iter().map(|x| x.to_hex()).collect()
}

fn hex_matrix<T: Scalar>(m: &Matrix<T>) -> MatrixRecord {
    MatrixRecord { rows: m.rows(), cols: m.cols(), data: hex_vec(m.as_slice()) }
}

fn unhex_vec<T: Scalar>(v: &[String]) -> Result<Vec<T>, ModelFileError> {
    v.iter()
        .map(|s| T::from_hex(s).ok_or_else(|| ModelFileError::CorruptFile(format!("bad hex float {s:?}"))))
        .collect()
}

fn unhex_matrix<T: Scalar>(m: &MatrixRecord) -> Result<Matrix<T>, ModelFileError> {
    Matrix::from_vec(m.rows, m.cols, unhex_vec(&m.data)?).ok_or_else(|| {
        ModelFileError::CorruptFile(format!("{}x{} matrix with {} entries", m.rows, m.cols, m.data.len()))
    })
}

fn checksum(body: &ModelBody) -> String {
    let canonical = serde_json::to_string(body).expect("model body serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Renders the model file text. Deterministic: equal models give equal bytes.
pub fn model_to_string<T: Scalar>(model: &DbnModel<T>) -> String {
    let body = ModelBody {
        format_version: MODEL_FORMAT_VERSION,
        scalar: T::NAME.to_owned(),
        architecture: model.architecture(),
        layer1: GaussianRecord {
            weights: hex_matrix(&model.layer1.weights),
            hidden_bias: hex_vec(&model.layer1.hidden_bias),
            visible_bias: hex_vec(&model.layer1.visible_bias),
            sigma: model.layer1.sigma.to_hex(),
        },
        layer2: BinaryRecord {
            weights: hex_matrix(&model.layer2.weights),
            hidden_bias: hex_vec(&model.layer2.hidden_bias),
            visible_bias: hex_vec(&model.layer2.visible_bias),
        },
        softmax: HeadRecord { weights: hex_matrix(&model.head.weights), bias: hex_vec(&model.head.bias) },
        metadata: model.metadata.clone(),
    };
    let sum = checksum(&body);
    let mut value = serde_json::to_value(&body).expect("model body serialises");
    value.as_object_mut().expect("object").insert("checksum".into(), sum.into());
    let mut text = serde_json::to_string_pretty(&value).expect("model serialises");
    text.push('\n');
    text
}

pub fn model_from_str<T: Scalar>(text: &str) -> Result<DbnModel<T>, ModelFileError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelFileError::CorruptFile(e.to_string()))?;
    let object = value.as_object_mut().ok_or_else(|| ModelFileError::CorruptFile("not a JSON object".into()))?;
    let version = object
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ModelFileError::CorruptFile("missing format_version".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(ModelFileError::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let stored = match object.remove("checksum") {
        Some(serde_json::Value::String(s)) => s,
        _ => return Err(ModelFileError::CorruptFile("missing checksum".into())),
    };
    let body: ModelBody = serde_json::from_value(value).map_err(|e| ModelFileError::CorruptFile(e.to_string()))?;
    if checksum(&body) != stored {
        return Err(ModelFileError::CorruptFile("checksum mismatch".into()));
    }
    if body.scalar != T::NAME {
        return Err(ModelFileError::ScalarMismatch { found: body.scalar, expected: T::NAME });
    }
    let layer1 = GaussianRbm {
        weights: unhex_matrix(&body.layer1.weights)?,
        hidden_bias: unhex_vec(&body.layer1.hidden_bias)?,
        visible_bias: unhex_vec(&body.layer1.visible_bias)?,
        sigma: T::from_hex(&body.layer1.sigma).ok_or_else(|| ModelFileError::CorruptFile("bad sigma".into()))?,
    };
    let layer2 = BinaryRbm {
        weights: unhex_matrix(&body.layer2.weights)?,
        hidden_bias: unhex_vec(&body.layer2.hidden_bias)?,
        visible_bias: unhex_vec(&body.layer2.visible_bias)?,
    };
    let head = SoftmaxHead { weights: unhex_matrix(&body.softmax.weights)?, bias: unhex_vec(&body.softmax.bias)? };
    let model = DbnModel { layer1, layer2, head, metadata: body.metadata };
    model.validate()?;
    if model.architecture() != body.architecture {
        return Err(ModelFileError::CorruptFile("architecture does not match parameter shapes".into()));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &DbnModel<T>, path: &Path) -> Result<(), ModelFileError> {
    fs::write(path, model_to_string(model)).map_err(|source| ModelFileError::Io { path: path.to_owned(), source })
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<DbnModel<T>, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io { path: path.to_owned(), source })?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    const FIXTURE: &str = r#"{"image_id":"a","width":640,"height":480,"pose_mode":"full","label":"riding-horse","detections":[{"kind":"head","x1":100,"y1":50,"x2":100,"y2":100,"score":1.5,"source":"detector"},{"kind":"horse","x1":50,"y1":200,"x2":300,"y2":220,"score":-0.3,"source":"detector"}]}

{"image_id":"b","width":320,"height":240,"pose_mode":"upper","label":null,"detections":[{"kind":"head","x1":10,"y1":10,"x2":12,"y2":40,"score":0.5,"source":"manual"}]}
{"image_id":"c","width":320,"height":240,"pose_mode":"upper","detections":[]}
"#;

    #[test]
    fn parses_fixture() {
        let a = parse_annotations(FIXTURE).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].label, Some(ActionClass::RidingHorse));
        assert_eq!(a[0].detections[1].kind, EntityKind::Horse);
        assert_eq!(a[1].pose_mode, PoseMode::Upper);
        assert_eq!(a[1].detections[0].source, Source::Manual);
        assert_eq!(a[2].label, None);
    }

    #[test]
    fn annotation_round_trip_is_semantic_identity() {
        let a = parse_annotations(FIXTURE).unwrap();
        let again = parse_annotations(&annotations_to_string(&a)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn empty_text_is_empty() {
        assert!(parse_annotations("").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_kind = FIXTURE.replace("\"horse\"", "\"unicycle\"");
        let e = parse_annotations(&bad_kind).unwrap_err();
        assert!(matches!(&e, AnnotationError::UnknownEntityKind { line: 1, kind } if kind == "unicycle"));

        let bad_label = FIXTURE.replace("riding-horse", "juggling");
        assert!(matches!(parse_annotations(&bad_label), Err(AnnotationError::UnknownLabel { line: 1, .. })));

        let text = format!("{FIXTURE}{{\"image_id\":\"d\"}}\n");
        assert_eq!(parse_annotations(&text).unwrap_err().line(), Some(5));

        let zero = FIXTURE.replace("\"width\":640", "\"width\":0");
        assert!(matches!(parse_annotations(&zero), Err(AnnotationError::InvalidValue { line: 1, .. })));

        let extra = FIXTURE.replace("\"score\":0.5", "\"score\":0.5,\"color\":1");
        assert!(matches!(parse_annotations(&extra), Err(AnnotationError::Parse { line: 3, .. })));
    }

    fn model() -> DbnModel<f64> {
        let mut rng = rng_from_seed(4);
        let mut m =
            DbnModel::from_layers(GaussianRbm::new(6, 5, 1.0, &mut rng), BinaryRbm::new(5, 4, &mut rng), 7).unwrap();
        m.head.weights = Matrix::from_fn(4, 7, |i, j| (i as f64 - j as f64) / 3.0);
        m.metadata.seed = Some(42);
        m
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = model();
        let text = model_to_string(&m);
        let back: DbnModel<f64> = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
    }

    #[test]
    fn model_rejections() {
        let text = model_to_string(&model());
        assert!(matches!(model_from_str::<f64>(&text[..text.len() / 2]), Err(ModelFileError::CorruptFile(_))));
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            model_from_str::<f64>(&bumped),
            Err(ModelFileError::VersionMismatch { found: 2, expected: 1 })
        ));
        let at = text.find("\"0x").unwrap() + 5;
        let mut bytes = text.clone().into_bytes();
        bytes[at] = if bytes[at] == b'0' { b'1' } else { b'0' };
        let tampered = String::from_utf8(bytes).unwrap();
        assert!(matches!(model_from_str::<f64>(&tampered), Err(ModelFileError::CorruptFile(_))));
        assert!(matches!(model_from_str::<f32>(&text), Err(ModelFileError::ScalarMismatch { .. })));
    }
}
