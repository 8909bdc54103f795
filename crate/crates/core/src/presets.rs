//! Built-in problems, several with closed-form solutions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::math::{Rect, Vec2};
use crate::scene::{BoundaryKind, Scene, SceneDoc, SegmentDoc, SourceField, ValueSpec};

pub const PRESET_NAMES: [&str; 5] = [
    "harmonic-disk",
    "const-source-disk",
    "neumann-strip",
    "neumann-strip-ramp",
    "contrast-curves",
];

/// Polygon resolution of the disk presets.
pub const DISK_SIDES: usize = 512;

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub scene: Scene,
    /// Default evaluation region (inside the domain).
    pub grid_bbox: Rect,
    pub analytic: Option<fn(Vec2) -> f64>,
}

fn seg(a: Vec2, b: Vec2, kind: BoundaryKind, value: &str) -> SegmentDoc {
    SegmentDoc {
        a,
        b,
        kind,
        value: value.into(),
    }
}

fn polyline(points: &[Vec2], kind: BoundaryKind, value: &str, out: &mut Vec<SegmentDoc>) {
    for w in points.windows(2) {
        out.push(seg(w[0], w[1], kind, value));
    }
}

/// Polygon circumscribing the unit circle, so its inscribed disk is exactly the unit disk.
fn unit_disk(value: ValueSpec, source: SourceField) -> Scene {
    let rho = 1.0 / (PI / DISK_SIDES as f64).cos();
    let pts: Vec<Vec2> = (0..=DISK_SIDES)
        .map(|i| {
            let t = 2.0 * PI * (i % DISK_SIDES) as f64 / DISK_SIDES as f64;
            Vec2::new(rho * t.cos(), rho * t.sin())
        })
        .collect();
    let mut segments = Vec::new();
    polyline(&pts, BoundaryKind::Dirichlet, "g", &mut segments);
    Scene::from_doc(SceneDoc {
        bbox: Rect::new(Vec2::new(-1.001, -1.001), Vec2::new(1.001, 1.001)),
        epsilon_shell: Some(1e-4),
        values: BTreeMap::from([("g".to_string(), value)]),
        source,
        segments,
    })
    .expect("disk preset is valid")
}

fn strip(right: ValueSpec) -> Scene {
    let p = |x: f64, y: f64| Vec2::new(x, y);
    let segments = vec![
        seg(p(0.0, 1.0), p(0.0, 0.0), BoundaryKind::Dirichlet, "left"),
        seg(p(1.0, 0.0), p(1.0, 1.0), BoundaryKind::Dirichlet, "right"),
        seg(p(0.0, 0.0), p(1.0, 0.0), BoundaryKind::Neumann, "zero"),
        seg(p(1.0, 1.0), p(0.0, 1.0), BoundaryKind::Neumann, "zero"),
    ];
    Scene::from_doc(SceneDoc {
        bbox: Rect::new(p(0.0, 0.0), p(1.0, 1.0)),
        epsilon_shell: Some(1e-4),
        values: BTreeMap::from([
            ("left".to_string(), ValueSpec::Constant { value: 0.0 }),
            ("right".to_string(), right),
            ("zero".to_string(), ValueSpec::Constant { value: 0.0 }),
        ]),
        source: SourceField::Zero,
        segments,
    })
    .expect("strip preset is valid")
}

/// Neumann box with interior Dirichlet curves held at 0 and 1.
fn contrast_curves() -> Scene {
    let p = |x: f64, y: f64| Vec2::new(x, y);
    let mut segments = Vec::new();
    let corners = [
        p(0.0, 0.0),
        p(1.0, 0.0),
        p(1.0, 1.0),
        p(0.0, 1.0),
        p(0.0, 0.0),
    ];
    polyline(&corners, BoundaryKind::Neumann, "flux", &mut segments);
    // bright open ring
    let ring: Vec<Vec2> = (0..=32)
        .map(|i| {
            let t = PI * (0.3 + 1.4 * i as f64 / 32.0);
            p(0.3 + 0.12 * t.cos(), 0.68 + 0.12 * t.sin())
        })
        .collect();
    polyline(&ring, BoundaryKind::Dirichlet, "one", &mut segments);
    // dark wave along the bottom
    let wave: Vec<Vec2> = (0..=48)
        .map(|i| {
            let x = 0.12 + 0.76 * i as f64 / 48.0;
            p(x, 0.28 + 0.07 * (4.0 * PI * x).sin())
        })
        .collect();
    polyline(&wave, BoundaryKind::Dirichlet, "zero", &mut segments);
    // dark wiggle on the right
    let wiggle: Vec<Vec2> = (0..=32)
        .map(|i| {
            let y = 0.48 + 0.4 * i as f64 / 32.0;
            p(0.76 + 0.05 * (3.0 * PI * y).sin(), y)
        })
        .collect();
    polyline(&wiggle, BoundaryKind::Dirichlet, "zero", &mut segments);
    Scene::from_doc(SceneDoc {
        bbox: Rect::new(p(0.0, 0.0), p(1.0, 1.0)),
        epsilon_shell: Some(1e-3),
        values: BTreeMap::from([
            ("one".to_string(), ValueSpec::Constant { value: 1.0 }),
            ("zero".to_string(), ValueSpec::Constant { value: 0.0 }),
            ("flux".to_string(), ValueSpec::Constant { value: 0.0 }),
        ]),
        source: SourceField::Zero,
        segments,
    })
    .expect("contrast preset is valid")
}

pub fn harmonic_disk_solution(x: Vec2) -> f64 {
    x.x * x.x - x.y * x.y
}

pub fn const_source_disk_solution(x: Vec2) -> f64 {
    x.length_squared() - 1.0
}

pub fn neumann_strip_solution(x: Vec2) -> f64 {
    x.x
}

/// Solution on the unit square with `u(0,y)=0`, `u(1,y)=y`, zero flux on `y=0,1`.
pub fn neumann_strip_ramp_solution(x: Vec2) -> f64 {
    let mut u = 0.5 * x.x;
    let mut n = 1;
    loop {
        let k = n as f64 * PI;
        // sinh(k x)/sinh(k) without overflow
        let ratio =
            (-k * (1.0 - x.x)).exp() * (1.0 - (-2.0 * k * x.x).exp()) / (1.0 - (-2.0 * k).exp());
        let term = 4.0 / (k * k) * (k * x.y).cos() * ratio;
        u -= term;
        if n > 20_000 || 4.0 / (k * k) < 1e-13 {
            break;
        }
        n += 2;
    }
    u
}

pub fn preset(name: &str) -> Option<Preset> {
    let inscribed = Rect::new(Vec2::new(-0.7, -0.7), Vec2::new(0.7, 0.7));
    let unit = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
    let (name, scene, grid_bbox, analytic): (&'static str, Scene, Rect, Option<fn(Vec2) -> f64>) =
        match name {
            "harmonic-disk" => (
                "harmonic-disk",
                unit_disk(
                    ValueSpec::Quadratic {
                        c0: 0.0,
                        cx: 0.0,
                        cy: 0.0,
                        cxx: 1.0,
                        cxy: 0.0,
                        cyy: -1.0,
                    },
                    SourceField::Zero,
                ),
                inscribed,
                Some(harmonic_disk_solution),
            ),
            "const-source-disk" => (
                "const-source-disk",
                unit_disk(
                    ValueSpec::Constant { value: 0.0 },
                    SourceField::Constant { value: 4.0 },
                ),
                inscribed,
                Some(const_source_disk_solution),
            ),
            "neumann-strip" => (
                "neumann-strip",
                strip(ValueSpec::Constant { value: 1.0 }),
                unit,
                Some(neumann_strip_solution),
            ),
            "neumann-strip-ramp" => (
                "neumann-strip-ramp",
                strip(ValueSpec::Linear {
                    c0: 0.0,
                    cx: 0.0,
                    cy: 1.0,
                }),
                unit,
                Some(neumann_strip_ramp_solution),
            ),
            "contrast-curves" => ("contrast-curves", contrast_curves(), unit, None),
            _ => return None,
        };
    Some(Preset {
        name,
        scene,
        grid_bbox,
        analytic,
    })
}
