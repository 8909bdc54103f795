//! Run configuration, the online solve loop, references, metrics and file outputs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Stopwatch;
use crate::field::{FieldConfig, FieldError, GuidingField};
use crate::geom2d::{Accel, GeomError};
use crate::math::{Rect, Vec2};
use crate::presets::{preset, Preset};
use crate::scene::{load_scene_file, parse_json, Scene, SceneError};
use crate::train::{train_batch, training_active, GuideRecord, TrainConfig, TrainStats};
use crate::wost::{solve_batch, PointStats, SamplerMode, StepContext, WalkConfig, WalkCounters};

/// Relative guard in the relMSE denominator: `delta = (REL_DELTA * max|ref|)^2`.
pub const REL_DELTA: f64 = 0.01;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    Mismatch(usize, usize, usize, usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    /// Defaults to the preset's evaluation region or the scene bbox.
    pub bbox: Option<Rect>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub pfm: Option<PathBuf>,
    pub png: Option<PathBuf>,
    /// Convergence log (`wpp,relmse,seconds`).
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub records: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `preset:<name>` or a path to a scene file (relative to the config file).
    pub scene: String,
    pub grid: GridConfig,
    pub wpp: usize,
    pub sampler: SamplerMode,
    /// Training stops once this many walks per point have completed.
    pub train_until: usize,
    pub field: FieldConfig,
    pub train: TrainConfig,
    pub walk: WalkConfig,
    pub seed: u64,
    /// Reference image: `analytic` (presets with a closed form) or a CSV path.
    pub reference: Option<String>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: "preset:contrast-curves".into(),
            grid: GridConfig {
                width: 32,
                height: 32,
                bbox: None,
            },
            wpp: 256,
            sampler: SamplerMode::LearnableMis,
            train_until: 256,
            field: FieldConfig::default(),
            train: TrainConfig::default(),
            walk: WalkConfig::default(),
            seed: 0,
            reference: None,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative scene and reference paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if !cfg.scene.starts_with("preset:") {
            cfg.scene = base.join(&cfg.scene).display().to_string();
        }
        if let Some(r) = &cfg.reference {
            if r != "analytic" {
                cfg.reference = Some(base.join(r).display().to_string());
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.wpp == 0 {
            return Err(HarnessError::Config("wpp must be at least 1".into()));
        }
        if self.grid.width == 0 || self.grid.height == 0 {
            return Err(HarnessError::Config(
                "grid resolution must be at least 1x1".into(),
            ));
        }
        if let SamplerMode::FixedMis(c) = self.sampler {
            if !(c > 0.0 && c < 1.0) {
                return Err(HarnessError::Config(format!(
                    "fixed_mis c = {c} is outside (0, 1)"
                )));
            }
        }
        self.field.validate()?;
        Ok(())
    }
}

/// Scene plus optional preset metadata.
pub struct Problem {
    pub scene: Scene,
    pub preset: Option<Preset>,
}

impl Problem {
    pub fn load(spec: &str) -> Result<Self, HarnessError> {
        if let Some(name) = spec.strip_prefix("preset:") {
            let p = preset(name)
                .ok_or_else(|| HarnessError::Config(format!("unknown preset `{name}`")))?;
            Ok(Problem {
                scene: p.scene.clone(),
                preset: Some(p),
            })
        } else {
            Ok(Problem {
                scene: load_scene_file(spec)?,
                preset: None,
            })
        }
    }

    pub fn analytic(&self) -> Option<fn(Vec2) -> f64> {
        self.preset.as_ref().and_then(|p| p.analytic)
    }

    pub fn grid_bbox(&self, grid: &GridConfig) -> Rect {
        grid.bbox
            .or_else(|| self.preset.as_ref().map(|p| p.grid_bbox))
            .unwrap_or_else(|| self.scene.bbox())
    }
}

/// Per-cell statistics on a regular grid; row 0 is the lowest y.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionImage {
    pub width: usize,
    pub height: usize,
    pub bbox: Rect,
    pub cells: Vec<PointStats>,
}

impl SolutionImage {
    pub fn new(width: usize, height: usize, bbox: Rect) -> Self {
        SolutionImage {
            width,
            height,
            bbox,
            cells: vec![PointStats::default(); width * height],
        }
    }

    /// Image with exact values and zero variance.
    pub fn from_values(
        width: usize,
        height: usize,
        bbox: Rect,
        values: &[f64],
        count: u64,
    ) -> Self {
        let cells = values
            .iter()
            .map(|&v| PointStats {
                mean: v,
                m2: 0.0,
                count,
            })
            .collect();
        SolutionImage {
            width,
            height,
            bbox,
            cells,
        }
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        let e = self.bbox.extent();
        Vec2::new(
            self.bbox.min.x + (i as f64 + 0.5) * e.x / self.width as f64,
            self.bbox.min.y + (j as f64 + 0.5) * e.y / self.height as f64,
        )
    }

    /// Cell centres in storage order.
    pub fn points(&self) -> Vec<Vec2> {
        (0..self.height)
            .flat_map(|j| (0..self.width).map(move |i| (i, j)))
            .map(|(i, j)| self.cell_center(i, j))
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.mean).collect()
    }
}

/// Mean over cells of `(est - ref)^2 / (ref^2 + delta)`, `delta = (0.01 max|ref|)^2`.
pub fn compute_relmse(est: &[f64], reference: &[f64]) -> Result<f64, HarnessError> {
    if est.len() != reference.len() || est.is_empty() {
        return Err(HarnessError::Mismatch(est.len(), 1, reference.len(), 1));
    }
    let max = reference.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mut delta = (REL_DELTA * max).powi(2);
    if delta == 0.0 {
        delta = REL_DELTA * REL_DELTA;
    }
    let sum: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r).powi(2) / (r * r + delta))
        .sum();
    Ok(sum / est.len() as f64)
}

pub fn compare_images(est: &SolutionImage, reference: &SolutionImage) -> Result<f64, HarnessError> {
    if est.width != reference.width || est.height != reference.height {
        return Err(HarnessError::Mismatch(
            est.width,
            est.height,
            reference.width,
            reference.height,
        ));
    }
    compute_relmse(&est.means(), &reference.means())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub wpp: usize,
    pub relmse: Option<f64>,
    pub seconds: f64,
}

pub struct SolveOutput {
    pub image: SolutionImage,
    pub log: Vec<LogRow>,
    pub counters: WalkCounters,
    pub train: TrainStats,
    pub seconds: f64,
    pub field: Option<GuidingField>,
}

/// Points at which the convergence log gets a row: powers of two and the final count.
fn log_point(wpp: usize, total: usize) -> bool {
    wpp == total || wpp.is_power_of_two()
}

/// Online solve: one walk per point per batch, training between batches while active.
pub fn run_solve(cfg: &RunConfig, reference: Option<&[f64]>) -> Result<SolveOutput, HarnessError> {
    cfg.validate()?;
    let problem = Problem::load(&cfg.scene)?;
    run_solve_on(cfg, &problem, reference)
}

pub fn run_solve_on(
    cfg: &RunConfig,
    problem: &Problem,
    reference: Option<&[f64]>,
) -> Result<SolveOutput, HarnessError> {
    let mut solver = OnlineSolver::new(cfg, problem)?;
    if let Some(r) = reference {
        if r.len() != solver.image.cells.len() {
            return Err(HarnessError::Mismatch(
                solver.image.width,
                solver.image.height,
                r.len(),
                1,
            ));
        }
    }
    let mut log = Vec::new();
    let mut all_records = Vec::new();
    let start = Stopwatch::start();
    while !solver.finished() {
        let records = solver.step(cfg.output.records.is_some());
        let done = solver.wpp_done();
        if done == cfg.train_until.min(cfg.wpp) && !records.is_empty() {
            all_records = records;
        }
        if log_point(done, cfg.wpp) {
            let relmse = reference
                .map(|r| compute_relmse(&solver.image.means(), r))
                .transpose()?;
            log.push(LogRow {
                wpp: done,
                relmse,
                seconds: start.seconds(),
            });
        }
    }
    if let Some(p) = &cfg.output.records {
        let f = fs::File::create(p).map_err(io_err(p))?;
        crate::train::write_records(BufWriter::new(f), &all_records).map_err(io_err(p))?;
    }
    let seconds = start.seconds();
    Ok(SolveOutput {
        image: solver.image,
        log,
        counters: solver.counters,
        train: solver.stats,
        seconds,
        field: solver.field,
    })
}

/// The online loop one batch at a time: a walk per point, then training while active.
pub struct OnlineSolver {
    cfg: RunConfig,
    scene: Scene,
    accel: Accel,
    points: Vec<Vec2>,
    image: SolutionImage,
    field: Option<GuidingField>,
    train_cfg: TrainConfig,
    counters: WalkCounters,
    stats: TrainStats,
    wpp_done: usize,
}

impl OnlineSolver {
    pub fn new(cfg: &RunConfig, problem: &Problem) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let accel = Accel::build(&problem.scene)?;
        let image = SolutionImage::new(
            cfg.grid.width,
            cfg.grid.height,
            problem.grid_bbox(&cfg.grid),
        );
        let field = if cfg.sampler.uses_field() {
            Some(GuidingField::new(cfg.field.clone(), problem.scene.bbox())?)
        } else {
            None
        };
        Ok(OnlineSolver {
            train_cfg: TrainConfig {
                learn_selection: cfg.sampler.learns_selection(),
                reflection: cfg.walk.reflection,
                ..cfg.train.clone()
            },
            cfg: cfg.clone(),
            scene: problem.scene.clone(),
            accel,
            points: image.points(),
            image,
            field,
            counters: WalkCounters::default(),
            stats: TrainStats::default(),
            wpp_done: 0,
        })
    }

    pub fn finished(&self) -> bool {
        self.wpp_done >= self.cfg.wpp
    }

    pub fn wpp_done(&self) -> usize {
        self.wpp_done
    }

    pub fn image(&self) -> &SolutionImage {
        &self.image
    }

    pub fn field(&self) -> Option<&GuidingField> {
        self.field.as_ref()
    }

    pub fn counters(&self) -> &WalkCounters {
        &self.counters
    }

    pub fn train_stats(&self) -> &TrainStats {
        &self.stats
    }

    /// Guiding mixture the sampler would use at `x`, with the mode's selection probability.
    pub fn mixture_at(&self, x: Vec2) -> Option<crate::spherical::MixtureParams> {
        let ctx = StepContext::new(
            &self.scene,
            &self.accel,
            self.field.as_ref(),
            self.cfg.sampler,
            &self.cfg.walk,
        );
        ctx.mixture_at(x)
    }

    /// Runs one batch (ignores `cfg.wpp`). Returns the batch's records when
    /// `keep_records` is set and the batch trained.
    pub fn step(&mut self, keep_records: bool) -> Vec<GuideRecord> {
        let wpp_index = self.wpp_done;
        let train_now = self.field.is_some() && training_active(wpp_index, self.cfg.train_until);
        let batch = {
            let ctx = StepContext::new(
                &self.scene,
                &self.accel,
                self.field.as_ref(),
                self.cfg.sampler,
                &self.cfg.walk,
            );
            solve_batch(
                &ctx,
                &self.points,
                self.cfg.seed,
                wpp_index as u64,
                train_now,
            )
        };
        for (cell, &v) in self.image.cells.iter_mut().zip(&batch.estimates) {
            cell.push(v);
        }
        self.counters.merge(&batch.counters);
        self.wpp_done += 1;
        if !train_now {
            return Vec::new();
        }
        let f = self.field.as_mut().expect("field present while training");
        let seed = self.cfg.seed ^ (wpp_index as u64).wrapping_mul(0x9e37_79b9);
        let s = train_batch(f, &batch.records, &self.train_cfg, seed);
        self.stats.merge(&s);
        if keep_records {
            batch.records
        } else {
            Vec::new()
        }
    }
}

/// Writes every output requested in the config.
pub fn write_outputs(cfg: &RunConfig, out: &SolveOutput) -> Result<(), HarnessError> {
    let o = &cfg.output;
    if let Some(p) = &o.csv {
        write_csv(&out.image, p)?;
    }
    if let Some(p) = &o.pfm {
        write_pfm(&out.image, p)?;
    }
    if let Some(p) = &o.png {
        write_png(&out.image, p)?;
    }
    if let Some(p) = &o.log {
        write_log(&out.log, p)?;
    }
    if let (Some(p), Some(f)) = (&o.checkpoint, &out.field) {
        f.save(p)?;
    }
    Ok(())
}

/// Exact values for analytic presets, otherwise a long uniform-sampler run.
pub fn generate_reference(cfg: &RunConfig, wpp_ref: usize) -> Result<SolutionImage, HarnessError> {
    let problem = Problem::load(&cfg.scene)?;
    let bbox = problem.grid_bbox(&cfg.grid);
    if let Some(f) = problem.analytic() {
        let img = SolutionImage::new(cfg.grid.width, cfg.grid.height, bbox);
        let values: Vec<f64> = img.points().into_iter().map(f).collect();
        return Ok(SolutionImage::from_values(
            img.width, img.height, bbox, &values, 0,
        ));
    }
    let ref_cfg = RunConfig {
        wpp: wpp_ref,
        sampler: SamplerMode::Uniform,
        // disjoint seed family from estimation runs
        seed: cfg.seed ^ 0x005e_ed0f_4ef5,
        ..cfg.clone()
    };
    Ok(run_solve_on(&ref_cfg, &problem, None)?.image)
}

/// Resolves the configured reference into per-cell values.
pub fn load_reference(cfg: &RunConfig) -> Result<Option<Vec<f64>>, HarnessError> {
    match cfg.reference.as_deref() {
        None => Ok(None),
        Some("analytic") => {
            let problem = Problem::load(&cfg.scene)?;
            let f = problem
                .analytic()
                .ok_or_else(|| HarnessError::Config("scene has no analytic solution".into()))?;
            let img = SolutionImage::new(
                cfg.grid.width,
                cfg.grid.height,
                problem.grid_bbox(&cfg.grid),
            );
            Ok(Some(img.points().into_iter().map(f).collect()))
        }
        Some(path) => {
            let img = read_csv(Path::new(path))?;
            if img.width != cfg.grid.width || img.height != cfg.grid.height {
                return Err(HarnessError::Mismatch(
                    cfg.grid.width,
                    cfg.grid.height,
                    img.width,
                    img.height,
                ));
            }
            Ok(Some(img.means()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: SamplerMode,
    pub relmse: f64,
    pub seconds: f64,
    pub curve: Vec<LogRow>,
}

/// Runs each mode with identical seeds and budget against a common reference.
pub fn run_ablation(
    cfg: &RunConfig,
    modes: &[SamplerMode],
    reference: &[f64],
) -> Result<Vec<AblationRow>, HarnessError> {
    if modes.is_empty() {
        return Err(HarnessError::Config("no modes given".into()));
    }
    let problem = Problem::load(&cfg.scene)?;
    let mut rows = Vec::new();
    for &mode in modes {
        let run = RunConfig {
            sampler: mode,
            ..cfg.clone()
        };
        let out = run_solve_on(&run, &problem, Some(reference))?;
        rows.push(AblationRow {
            mode,
            relmse: compute_relmse(&out.image.means(), reference)?,
            seconds: out.seconds,
            curve: out.log,
        });
    }
    Ok(rows)
}

pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from("mode,relmse,seconds\n");
    for r in rows {
        s.push_str(&format!("{},{:.6e},{:.3}\n", r.mode, r.relmse, r.seconds));
    }
    s
}

pub fn write_log(log: &[LogRow], path: &Path) -> Result<(), HarnessError> {
    let mut s = String::from("wpp,relmse,seconds\n");
    for r in log {
        let rel = r.relmse.map_or(String::new(), |v| format!("{v:e}"));
        s.push_str(&format!("{},{},{:.6}\n", r.wpp, rel, r.seconds));
    }
    fs::write(path, s).map_err(io_err(path))
}

/// CSV rows `i,j,mean,var,count` after two comment lines (grid geometry and relMSE guard).
pub fn write_csv(img: &SolutionImage, path: &Path) -> Result<(), HarnessError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let b = img.bbox;
    let res: std::io::Result<()> = (|| {
        writeln!(
            w,
            "# grid {} {} {} {} {} {}",
            img.width, img.height, b.min.x, b.min.y, b.max.x, b.max.y
        )?;
        writeln!(w, "# relmse delta = ({REL_DELTA} * max|ref|)^2")?;
        writeln!(w, "i,j,mean,var,count")?;
        for j in 0..img.height {
            for i in 0..img.width {
                let c = &img.cells[j * img.width + i];
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    i,
                    j,
                    c.mean,
                    c.variance_of_mean(),
                    c.count
                )?;
            }
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<SolutionImage, HarnessError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let bad = |message: String| HarnessError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut geometry: Option<(usize, usize, Rect)> = None;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# grid ") {
            let v: Vec<f64> = rest
                .split_whitespace()
                .filter_map(|t| t.parse().ok())
                .collect();
            if v.len() != 6 {
                return Err(bad(format!("line {}: malformed grid header", n + 1)));
            }
            geometry = Some((
                v[0] as usize,
                v[1] as usize,
                Rect::new(Vec2::new(v[2], v[3]), Vec2::new(v[4], v[5])),
            ));
            continue;
        }
        if line.is_empty() || line.starts_with('#') || line.starts_with("i,") {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != 5 {
            return Err(bad(format!("line {}: expected 5 fields", n + 1)));
        }
        let num = |k: usize| -> Result<f64, HarnessError> {
            t[k].trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("line {}: bad number", n + 1)))
        };
        let (i, j) = (num(0)? as usize, num(1)? as usize);
        let (mean, var, count) = (num(2)?, num(3)?, num(4)? as u64);
        rows.push((i, j, mean, var, count));
    }
    let (width, height, bbox) = match geometry {
        Some(g) => g,
        None => {
            let w = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
            let h = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
            (w, h, Rect::new(Vec2::ZERO, Vec2::new(1.0, 1.0)))
        }
    };
    if rows.len() != width * height {
        return Err(bad(format!(
            "expected {} rows, found {}",
            width * height,
            rows.len()
        )));
    }
    let mut img = SolutionImage::new(width, height, bbox);
    for (i, j, mean, var, count) in rows {
        if i >= width || j >= height {
            return Err(bad(format!("cell ({i}, {j}) outside the grid")));
        }
        // keep the variance of the mean recoverable from m2
        let m2 = if count > 1 {
            var * (count * (count - 1)) as f64
        } else {
            0.0
        };
        img.cells[j * width + i] = PointStats { mean, m2, count };
    }
    Ok(img)
}

/// Grayscale PFM: little-endian floats, bottom row first.
pub fn write_pfm(img: &SolutionImage, path: &Path) -> Result<(), HarnessError> {
    let mut bytes = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    for c in &img.cells {
        bytes.extend_from_slice(&(c.mean as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Reads a grayscale little-endian PFM into `(width, height, values)`, bottom row first.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>), HarnessError> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(io_err(path))?;
    let bad = |m: &str| HarnessError::Format {
        path: path.display().to_string(),
        message: m.into(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("not a grayscale PFM"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian PFM not supported"));
    }
    let body = &data[pos.min(data.len())..];
    if body.len() != w * h * 4 {
        return Err(bad("pixel data size mismatch"));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((w, h, values))
}

/// 8-bit grayscale PNG after a min/max tonemap; the range goes to `<path>.range.json`.
pub fn write_png(img: &SolutionImage, path: &Path) -> Result<(), HarnessError> {
    let means = img.means();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels = vec![0u8; img.width * img.height];
    for j in 0..img.height {
        // PNG rows go top to bottom
        let row = img.height - 1 - j;
        for i in 0..img.width {
            let v = (means[j * img.width + i] - lo) / span;
            pixels[row * img.width + i] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let encode = |e: png::EncodingError| HarnessError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(encode)?;
    writer.write_image_data(&pixels).map_err(encode)?;
    writer.finish().map_err(encode)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".range.json");
    let side = PathBuf::from(side);
    let range = if lo.is_finite() {
        format!("{{\"min\": {lo}, \"max\": {hi}}}\n")
    } else {
        "{}\n".into()
    };
    fs::write(&side, range).map_err(io_err(&side))
}
