//! Problem description: boundary polylines labelled Dirichlet or Neumann,
//! their prescribed values, and the interior source term.
//!
//! Scenes are authored as JSON documents (see [`SceneDoc`]) and validated into
//! an immutable [`Scene`]. Segment normals are *not* part of the document: the
//! solver orients them toward whichever side the walk is on, so `h` always
//! denotes the derivative along the normal pointing into the walk's region.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Rect, Vec2};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("segment {segment} is {actual:?}, expected {expected:?}")]
    WrongKind {
        segment: usize,
        expected: BoundaryKind,
        actual: BoundaryKind,
    },
    #[error("segment index {0} out of range")]
    NoSuchSegment(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Regular grid of samples over a rectangle, row-major with row 0 at `bbox.min.y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub bbox: Rect,
    pub data: Vec<f64>,
}

impl Raster {
    fn validate(&self, what: &str) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::Invalid(format!("{what}: raster has zero size")));
        }
        if self.data.len() != self.width * self.height {
            return Err(SceneError::Invalid(format!(
                "{what}: raster holds {} values, expected {}x{}",
                self.data.len(),
                self.width,
                self.height
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(SceneError::Invalid(format!(
                "{what}: raster cell {i} is not finite"
            )));
        }
        let e = self.bbox.extent();
        if !(e.x > 0.0 && e.y > 0.0) {
            return Err(SceneError::Invalid(format!(
                "{what}: raster bbox is degenerate"
            )));
        }
        Ok(())
    }

    /// Index of the cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let e = self.bbox.extent();
        let fx = (p.x - self.bbox.min.x) / e.x * self.width as f64;
        let fy = (p.y - self.bbox.min.y) / e.y * self.height as f64;
        let i = (fx.floor().max(0.0) as usize).min(self.width - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.height - 1);
        (i, j)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        let e = self.bbox.extent();
        Vec2::new(
            self.bbox.min.x + (i as f64 + 0.5) * e.x / self.width as f64,
            self.bbox.min.y + (j as f64 + 0.5) * e.y / self.height as f64,
        )
    }

    /// Nearest-cell lookup.
    pub fn lookup(&self, p: Vec2) -> f64 {
        let (i, j) = self.cell_of(p);
        self.data[j * self.width + i]
    }
}

/// Boundary data `g` or `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ValueSpec {
    Constant {
        value: f64,
    },
    Linear {
        c0: f64,
        cx: f64,
        cy: f64,
    },
    /// `c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2`
    Quadratic {
        c0: f64,
        cx: f64,
        cy: f64,
        cxx: f64,
        cxy: f64,
        cyy: f64,
    },
    Raster(Raster),
}

impl ValueSpec {
    #[inline]
    pub fn eval(&self, p: Vec2) -> f64 {
        match self {
            ValueSpec::Constant { value } => *value,
            ValueSpec::Linear { c0, cx, cy } => c0 + cx * p.x + cy * p.y,
            ValueSpec::Quadratic {
                c0,
                cx,
                cy,
                cxx,
                cxy,
                cyy,
            } => c0 + cx * p.x + cy * p.y + cxx * p.x * p.x + cxy * p.x * p.y + cyy * p.y * p.y,
            ValueSpec::Raster(r) => r.lookup(p),
        }
    }

    fn validate(&self, name: &str) -> Result<(), SceneError> {
        match self {
            ValueSpec::Constant { value } if !value.is_finite() => {
                Err(SceneError::Invalid(format!("value `{name}` is not finite")))
            }
            ValueSpec::Linear { c0, cx, cy }
                if !(c0.is_finite() && cx.is_finite() && cy.is_finite()) =>
            {
                Err(SceneError::Invalid(format!(
                    "value `{name}` has non-finite coefficients"
                )))
            }
            ValueSpec::Quadratic {
                c0,
                cx,
                cy,
                cxx,
                cxy,
                cyy,
            } if ![c0, cx, cy, cxx, cxy, cyy].iter().all(|c| c.is_finite()) => Err(
                SceneError::Invalid(format!("value `{name}` has non-finite coefficients")),
            ),
            ValueSpec::Raster(r) => r.validate(&format!("value `{name}`")),
            _ => Ok(()),
        }
    }
}

/// Interior source term `f`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SourceField {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Raster(Raster),
}

impl SourceField {
    pub fn is_zero(&self) -> bool {
        matches!(self, SourceField::Zero)
            || matches!(self, SourceField::Constant { value } if *value == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDoc {
    pub a: Vec2,
    pub b: Vec2,
    pub kind: BoundaryKind,
    pub value: String,
}

/// Serialized form of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub bbox: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_shell: Option<f64>,
    pub values: BTreeMap<String, ValueSpec>,
    #[serde(default)]
    pub source: SourceField,
    pub segments: Vec<SegmentDoc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySegment {
    pub a: Vec2,
    pub b: Vec2,
    pub kind: BoundaryKind,
    pub value_ref: String,
    value_index: usize,
}

impl BoundarySegment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).length()
    }
}

/// A validated, immutable problem description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    segments: Vec<BoundarySegment>,
    value_names: Vec<String>,
    values: Vec<ValueSpec>,
    source: SourceField,
    bbox: Rect,
    epsilon_shell: f64,
}

/// Fraction of the bbox diagonal used when no ε-shell width is given.
pub const DEFAULT_EPSILON_FRACTION: f64 = 1e-3;

impl Scene {
    pub fn from_doc(doc: SceneDoc) -> Result<Scene, SceneError> {
        let bbox = doc.bbox;
        if !(bbox.min.is_finite() && bbox.max.is_finite())
            || !(bbox.max.x > bbox.min.x && bbox.max.y > bbox.min.y)
        {
            return Err(SceneError::Invalid("bbox must have positive extent".into()));
        }
        let epsilon_shell = doc
            .epsilon_shell
            .unwrap_or(DEFAULT_EPSILON_FRACTION * bbox.diagonal());
        if !(epsilon_shell > 0.0 && epsilon_shell.is_finite()) {
            return Err(SceneError::Invalid("epsilon_shell must be positive".into()));
        }
        for (name, v) in &doc.values {
            v.validate(name)?;
        }
        match &doc.source {
            SourceField::Constant { value } if !value.is_finite() => {
                return Err(SceneError::Invalid("source constant is not finite".into()))
            }
            SourceField::Raster(r) => r.validate("source")?,
            _ => {}
        }
        let value_names: Vec<String> = doc.values.keys().cloned().collect();
        let values: Vec<ValueSpec> = doc.values.into_values().collect();
        let mut segments = Vec::with_capacity(doc.segments.len());
        for (i, s) in doc.segments.into_iter().enumerate() {
            if !(s.a.is_finite() && s.b.is_finite()) {
                return Err(SceneError::Invalid(format!(
                    "segment {i} has non-finite endpoints"
                )));
            }
            if s.a == s.b {
                return Err(SceneError::Invalid(format!("segment {i} has zero length")));
            }
            if !bbox.contains(s.a) || !bbox.contains(s.b) {
                return Err(SceneError::Invalid(format!(
                    "segment {i} lies outside the bbox"
                )));
            }
            let value_index = value_names.binary_search(&s.value).map_err(|_| {
                SceneError::Invalid(format!(
                    "segment {i} references unknown value `{}`",
                    s.value
                ))
            })?;
            segments.push(BoundarySegment {
                a: s.a,
                b: s.b,
                kind: s.kind,
                value_ref: s.value,
                value_index,
            });
        }
        Ok(Scene {
            segments,
            value_names,
            values,
            source: doc.source,
            bbox,
            epsilon_shell,
        })
    }

    /// Serializes back into document form; `from_doc(to_doc())` is the identity.
    pub fn to_doc(&self) -> SceneDoc {
        SceneDoc {
            bbox: self.bbox,
            epsilon_shell: Some(self.epsilon_shell),
            values: self
                .value_names
                .iter()
                .cloned()
                .zip(self.values.iter().cloned())
                .collect(),
            source: self.source.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentDoc {
                    a: s.a,
                    b: s.b,
                    kind: s.kind,
                    value: s.value_ref.clone(),
                })
                .collect(),
        }
    }

    pub fn segments(&self) -> &[BoundarySegment] {
        &self.segments
    }

    pub fn segment(&self, id: usize) -> Option<&BoundarySegment> {
        self.segments.get(id)
    }

    pub fn source(&self) -> &SourceField {
        &self.source
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn epsilon_shell(&self) -> f64 {
        self.epsilon_shell
    }

    pub fn has_kind(&self, kind: BoundaryKind) -> bool {
        self.segments.iter().any(|s| s.kind == kind)
    }

    /// True when every Neumann segment carries the constant value 0.
    pub fn neumann_is_zero(&self) -> bool {
        self.segments
            .iter()
            .filter(|s| s.kind == BoundaryKind::Neumann)
            .all(|s| matches!(self.values[s.value_index], ValueSpec::Constant { value } if value == 0.0))
    }

    fn eval_kind(&self, p: Vec2, segment: usize, kind: BoundaryKind) -> Result<f64, SceneError> {
        let s = self
            .segments
            .get(segment)
            .ok_or(SceneError::NoSuchSegment(segment))?;
        if s.kind != kind {
            return Err(SceneError::WrongKind {
                segment,
                expected: kind,
                actual: s.kind,
            });
        }
        Ok(self.values[s.value_index].eval(p))
    }

    /// Dirichlet data `g(p)` on the given segment.
    pub fn eval_dirichlet(&self, p: Vec2, segment: usize) -> Result<f64, SceneError> {
        self.eval_kind(p, segment, BoundaryKind::Dirichlet)
    }

    /// Neumann data `h(p)` on the given segment.
    pub fn eval_neumann(&self, p: Vec2, segment: usize) -> Result<f64, SceneError> {
        self.eval_kind(p, segment, BoundaryKind::Neumann)
    }

    /// Source `f(p)`; zero outside the scene bbox.
    pub fn eval_source(&self, p: Vec2) -> f64 {
        if !self.bbox.contains(p) {
            return 0.0;
        }
        match &self.source {
            SourceField::Zero => 0.0,
            SourceField::Constant { value } => *value,
            SourceField::Raster(r) => {
                if r.bbox.contains(p) {
                    r.lookup(p)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parses and validates a JSON scene document.
pub fn load_scene(document: &str) -> Result<Scene, SceneError> {
    let doc = parse_json::<SceneDoc>(document)?;
    Scene::from_doc(doc)
}

pub fn load_scene_file(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    load_scene(&std::fs::read_to_string(path)?)
}

pub fn write_scene(scene: &Scene) -> String {
    serde_json::to_string_pretty(&scene.to_doc()).expect("scene documents always serialize")
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(document: &str) -> Result<T, SceneError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SceneError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}
