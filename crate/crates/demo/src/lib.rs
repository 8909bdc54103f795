//! Browser front end: an incremental solve you can step, inspect and probe.

use std::f64::consts::PI;

use wasm_bindgen::prelude::*;
use wost_guide::harness::{compute_relmse, OnlineSolver, Problem, RunConfig};
use wost_guide::math::Vec2;
use wost_guide::presets::PRESET_NAMES;
use wost_guide::scene::BoundaryKind;
use wost_guide::wost::SamplerMode;

#[wasm_bindgen]
pub fn preset_names() -> js_sys::Array {
    PRESET_NAMES.iter().map(|n| JsValue::from_str(n)).collect()
}

#[wasm_bindgen]
pub struct Session {
    solver: OnlineSolver,
    problem: Problem,
    exact: Option<Vec<f64>>,
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(
        preset: &str,
        width: usize,
        height: usize,
        sampler: &str,
        seed: u64,
    ) -> Result<Session, JsError> {
        let sampler: SamplerMode = sampler.parse().map_err(|e: String| JsError::new(&e))?;
        let mut cfg = RunConfig {
            scene: format!("preset:{preset}"),
            sampler,
            seed,
            wpp: usize::MAX,
            ..RunConfig::default()
        };
        cfg.grid.width = width;
        cfg.grid.height = height;
        // same small-grid settings as the test configs; the defaults train too slowly here
        cfg.train.minibatch = 256;
        cfg.field.lr = 3e-3;
        let problem = Problem::load(&cfg.scene).map_err(|e| JsError::new(&e.to_string()))?;
        let solver = OnlineSolver::new(&cfg, &problem).map_err(|e| JsError::new(&e.to_string()))?;
        let exact = problem
            .analytic()
            .map(|f| solver.image().points().into_iter().map(f).collect());
        Ok(Session {
            solver,
            problem,
            exact,
        })
    }

    /// Runs `n` more walks per point.
    pub fn step(&mut self, n: usize) {
        for _ in 0..n {
            self.solver.step(false);
        }
    }

    pub fn wpp(&self) -> usize {
        self.solver.wpp_done()
    }

    pub fn width(&self) -> usize {
        self.solver.image().width
    }

    pub fn height(&self) -> usize {
        self.solver.image().height
    }

    /// Cell means, row-major, row 0 at the bottom.
    pub fn image(&self) -> Vec<f32> {
        self.solver
            .image()
            .means()
            .iter()
            .map(|&v| v as f32)
            .collect()
    }

    /// `[min_x, min_y, max_x, max_y]` of the evaluation grid.
    pub fn grid_bbox(&self) -> Vec<f64> {
        let b = self.solver.image().bbox;
        vec![b.min.x, b.min.y, b.max.x, b.max.y]
    }

    /// Flat `[ax, ay, bx, by, neumann]` per segment.
    pub fn segments(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in self.problem.scene.segments() {
            let neumann = if s.kind == BoundaryKind::Neumann {
                1.0
            } else {
                0.0
            };
            out.extend_from_slice(&[s.a.x, s.a.y, s.b.x, s.b.y, neumann]);
        }
        out
    }

    /// relMSE against the closed form, NaN for scenes without one.
    pub fn relmse(&self) -> f64 {
        match &self.exact {
            Some(e) => compute_relmse(&self.solver.image().means(), e).unwrap_or(f64::NAN),
            None => f64::NAN,
        }
    }

    pub fn mean_variance(&self) -> f64 {
        let cells = &self.solver.image().cells;
        cells.iter().map(|c| c.variance()).sum::<f64>() / cells.len() as f64
    }

    /// Guided density at `bins` equally spaced angles from 0, followed by the selection probability c.
    /// Empty for the uniform sampler.
    pub fn guide_at(&self, x: f64, y: f64, bins: usize) -> Vec<f64> {
        let Some(m) = self.solver.mixture_at(Vec2::new(x, y)) else {
            return Vec::new();
        };
        let mut out: Vec<f64> = (0..bins)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / bins as f64;
                m.pdf(&[a.cos(), a.sin(), 0.0])
            })
            .collect();
        out.push(m.c);
        out
    }
}
