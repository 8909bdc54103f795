//! Walk on Stars estimator with guided next-direction sampling.
//!
//! A step is split into four stages so the batched driver can run the same
//! code as the scalar walk: `logic` (termination, roulette, star radius),
//! `evaluate` (source and Neumann terms), inference (guiding field), and
//! `advance` (direction sampling and the move).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::GuidingField;
use crate::geom2d::{closest_point_on_segment, Accel, KindSet};
use crate::math::{Dir, Vec2};
use crate::scene::Scene;
use crate::spherical::{
    sample_uniform_dir, sample_uniform_hemisphere, uniform_dir_pdf, Dim, DirPdfs, MixtureParams,
    Technique, UnnormParams,
};
use crate::train::{backfill_targets, GuideRecord, StepTrace, WalkTrace};

/// Green's function of the ball of radius `big_r` centred at the pole, at distance `r`.
pub fn greens_ball(r: f64, big_r: f64, dim: Dim) -> f64 {
    match dim {
        Dim::Two => (big_r / r).ln() / (2.0 * PI),
        Dim::Three => (1.0 / r - 1.0 / big_r) / (4.0 * PI),
    }
}

/// Integral of `greens_ball` over the ball.
pub fn greens_ball_mass(big_r: f64, dim: Dim) -> f64 {
    match dim {
        Dim::Two => big_r * big_r / 4.0,
        Dim::Three => big_r * big_r / 6.0,
    }
}

/// Inverts the normalized radial CDF of `G(r) r^{d-1}` on `[0, R]` at `u`.
pub fn sample_source_radius(u: f64, big_r: f64, dim: Dim) -> f64 {
    // in s = r / R: 2D F = s^2 (1 - 2 ln s), 3D F = 3 s^2 - 2 s^3
    match dim {
        Dim::Two => invert_cdf(u, |s| s * s * (1.0 - 2.0 * s.ln()), |s| -4.0 * s * s.ln()) * big_r,
        Dim::Three => invert_cdf(u, |s| s * s * (3.0 - 2.0 * s), |s| 6.0 * s * (1.0 - s)) * big_r,
    }
}

/// Inverts the CDF of `ln(R / r)` on `[0, R]`, the 2D kernel along a line through the pole.
pub fn sample_line_radius(u: f64, big_r: f64) -> f64 {
    invert_cdf(u, |s| s * (1.0 - s.ln()), |s| -s.ln()) * big_r
}

/// Newton with bisection fallback for a monotone CDF on `[0, 1]`.
fn invert_cdf(u: f64, cdf: fn(f64) -> f64, dcdf: fn(f64) -> f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut s = u.sqrt().clamp(1e-12, 1.0 - 1e-12);
    for _ in 0..100 {
        let f = cdf(s) - u;
        if f.abs() < 1e-14 {
            break;
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let d = dcdf(s);
        let mut next = s - f / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() < 1e-10 * s.max(1e-300) && hi - lo < 1e-10 {
            s = next;
            break;
        }
        s = next;
    }
    s
}

/// Directional sampling strategy for the recursive term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplerMode {
    Uniform,
    GuidingOnly,
    FixedMis(f64),
    LearnableMis,
}

impl SamplerMode {
    pub fn uses_field(self) -> bool {
        self != SamplerMode::Uniform
    }

    pub fn learns_selection(self) -> bool {
        self == SamplerMode::LearnableMis
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerMode::Uniform => write!(f, "uniform"),
            SamplerMode::GuidingOnly => write!(f, "guiding_only"),
            SamplerMode::FixedMis(c) => write!(f, "fixed_mis:{c}"),
            SamplerMode::LearnableMis => write!(f, "learnable_mis"),
        }
    }
}

impl FromStr for SamplerMode {
    type Err = String;

    /// Accepts `uniform`, `guiding_only`, `learnable_mis`, `fixed_mis` (c = 0.5) or `fixed_mis:<c>`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(SamplerMode::Uniform),
            "guiding_only" => Ok(SamplerMode::GuidingOnly),
            "learnable_mis" => Ok(SamplerMode::LearnableMis),
            "fixed_mis" => Ok(SamplerMode::FixedMis(0.5)),
            _ => {
                let c = s
                    .strip_prefix("fixed_mis:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown sampler mode `{s}`"))?;
                if c > 0.0 && c < 1.0 {
                    Ok(SamplerMode::FixedMis(c))
                } else {
                    Err(format!(
                        "fixed_mis selection probability {c} is outside (0, 1)"
                    ))
                }
            }
        }
    }
}

impl Serialize for SamplerMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SamplerMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    /// Overrides the scene's shell width.
    pub epsilon_shell: Option<f64>,
    /// Lower bound on the silhouette part of the star radius; defaults to the shell width.
    pub r_min: Option<f64>,
    pub rr_depth: usize,
    /// Walks still alive after this many steps are stopped and counted as truncated.
    pub max_depth: usize,
    /// Reflect invalid guided directions on Neumann boundaries.
    pub reflection: bool,
    /// Clamp `|nu . n|` from below in the Neumann term (biased; off by default).
    pub clamp_grazing: Option<f64>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            epsilon_shell: None,
            r_min: None,
            rr_depth: 128,
            max_depth: 1 << 16,
            reflection: true,
            clamp_grazing: None,
        }
    }
}

/// Everything a step needs besides the walk itself.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub scene: &'a Scene,
    pub accel: &'a Accel,
    pub field: Option<&'a GuidingField>,
    pub mode: SamplerMode,
    pub config: &'a WalkConfig,
    epsilon: f64,
    r_min: f64,
    skip_source: bool,
    skip_neumann: bool,
    bbox_slack2: f64,
}

impl<'a> StepContext<'a> {
    pub fn new(
        scene: &'a Scene,
        accel: &'a Accel,
        field: Option<&'a GuidingField>,
        mode: SamplerMode,
        config: &'a WalkConfig,
    ) -> Self {
        let epsilon = config.epsilon_shell.unwrap_or(scene.epsilon_shell());
        StepContext {
            scene,
            accel,
            field: if mode.uses_field() { field } else { None },
            mode,
            config,
            epsilon,
            r_min: config.r_min.unwrap_or(epsilon),
            skip_source: scene.source().is_zero(),
            skip_neumann: scene.neumann_is_zero(),
            bbox_slack2: (1e-9 * scene.bbox().diagonal()).powi(2),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// True when the direction stage needs a decoded mixture.
    pub fn needs_field(&self) -> bool {
        self.field.is_some()
    }

    /// Applies the sampler mode's selection probability to decoded parameters.
    pub fn mixture_from(&self, unnorm: &UnnormParams) -> MixtureParams {
        match self.mode {
            SamplerMode::Uniform => unnorm.decode_with_c(0.0),
            SamplerMode::GuidingOnly => unnorm.decode_with_c(1.0),
            SamplerMode::FixedMis(c) => unnorm.decode_with_c(c),
            SamplerMode::LearnableMis => unnorm.decode(),
        }
    }

    pub fn mixture_at(&self, x: Vec2) -> Option<MixtureParams> {
        self.field.map(|f| self.mixture_from(&f.eval(x)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkStatus {
    Alive,
    /// Reached the Dirichlet shell.
    Terminated,
    /// Stopped by Russian roulette or by an invalid (unreflected) direction.
    Killed,
    /// Left the scene bbox or had no bounded star.
    Escaped,
    Truncated,
}

#[derive(Clone, Debug)]
pub struct WalkState {
    pub position: Vec2,
    /// Unit normal facing the walk side when the walk sits on a Neumann boundary.
    pub normal: Option<Vec2>,
    /// Segment the walk sits on, if any.
    pub segment: Option<usize>,
    pub throughput: f64,
    pub accum: f64,
    pub depth: usize,
    pub rng: ChaCha8Rng,
    pub trace: Option<WalkTrace>,
    pub status: WalkStatus,
    radius: f64,
    pending: Option<StepTrace>,
}

/// Per-walk random stream keyed by `(seed, point, walk index)`.
pub fn walk_rng(seed: u64, point: u64, wpp_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&point.to_le_bytes());
    key[16..24].copy_from_slice(&wpp_index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

impl WalkState {
    pub fn new(x0: Vec2, rng: ChaCha8Rng, record: bool) -> Self {
        WalkState {
            position: x0,
            normal: None,
            segment: None,
            throughput: 1.0,
            accum: 0.0,
            depth: 0,
            rng,
            trace: record.then(WalkTrace::default),
            status: WalkStatus::Alive,
            radius: 0.0,
            pending: None,
        }
    }

    pub fn alive(&self) -> bool {
        self.status == WalkStatus::Alive
    }

    fn finish(&mut self, status: WalkStatus, value: f64) {
        self.status = status;
        if let Some(t) = &mut self.trace {
            t.final_throughput = if status == WalkStatus::Terminated {
                self.throughput
            } else {
                0.0
            };
            t.final_value = value;
        }
    }
}

/// Unbiased single-sample estimate of `int_St G f` (already divided by the
/// boundary solid-angle fraction).
pub fn sample_source_contrib<R: Rng + ?Sized>(
    rng: &mut R,
    ctx: &StepContext,
    x: Vec2,
    on: Option<(Vec2, usize)>,
    big_r: f64,
) -> f64 {
    let dir = sample_dir(rng, on.map(|o| o.0));
    let r = sample_source_radius(rng.gen::<f64>(), big_r, Dim::Two);
    let d = Vec2::from_dir(dir);
    if ctx.accel.has_neumann()
        && ctx
            .accel
            .ray_first_hit_excluding(x, d, r, KindSet::NEUMANN, on.map(|o| o.1))
            .is_some()
    {
        return 0.0;
    }
    greens_ball_mass(big_r, Dim::Two) * ctx.scene.eval_source(x + d * r)
}

/// Unbiased single-sample estimate of `int_{dSt_N} G h`.
pub fn sample_neumann_contrib<R: Rng + ?Sized>(
    rng: &mut R,
    ctx: &StepContext,
    x: Vec2,
    on: Option<(Vec2, usize)>,
    big_r: f64,
) -> f64 {
    let dir = sample_dir(rng, on.map(|o| o.0));
    let d = Vec2::from_dir(dir);
    let mut total = 0.0;
    if let Some(hit) =
        ctx.accel
            .ray_first_hit_excluding(x, d, big_r, KindSet::NEUMANN, on.map(|o| o.1))
    {
        let h = ctx
            .scene
            .eval_neumann(hit.point, hit.segment)
            .unwrap_or(0.0);
        if h != 0.0 && hit.t < big_r {
            let mut cos = d.dot(hit.normal).abs();
            if let Some(c) = ctx.config.clamp_grazing {
                cos = cos.max(c);
            }
            total += greens_ball(hit.t, big_r, Dim::Two) * h * hit.t * 2.0 * PI / cos;
        }
    }
    if let Some((n, seg)) = on {
        total += sample_tangent_line(rng, ctx, x, n, seg, big_r);
    }
    total
}

/// The part of the Neumann boundary collinear with a boundary point is invisible to
/// direction sampling, so it gets its own single-sample estimate along the tangent line
/// (already divided by the half-ball solid-angle fraction).
fn sample_tangent_line<R: Rng + ?Sized>(
    rng: &mut R,
    ctx: &StepContext,
    x: Vec2,
    n: Vec2,
    seg: usize,
    big_r: f64,
) -> f64 {
    let r = sample_line_radius(rng.gen::<f64>(), big_r);
    let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let z = x + n.perp() * (side * r);
    let tol = 1e-9 * ctx.scene.bbox().diagonal();
    let on_line = match ctx.scene.segment(seg) {
        Some(s) if (closest_point_on_segment(s.a, s.b, z) - z).length() <= tol => Some(seg),
        _ => ctx.accel.closest_point(z, KindSet::NEUMANN).and_then(|c| {
            let m = ctx.accel.segment_normal(c.segment);
            (c.distance <= tol && m.cross(n).abs() <= 1e-9).then_some(c.segment)
        }),
    };
    let Some(id) = on_line else {
        return 0.0;
    };
    let h = ctx.scene.eval_neumann(z, id).unwrap_or(0.0);
    // mass of ln(R/|s|)/(2 pi) over [-R, R] is R/pi; the half-ball fraction doubles it
    2.0 * big_r / PI * h
}

fn sample_dir<R: Rng + ?Sized>(rng: &mut R, normal: Option<Vec2>) -> Dir {
    match normal {
        None => sample_uniform_dir(rng, Dim::Two),
        Some(n) => sample_uniform_hemisphere(rng, &n.to_dir(), Dim::Two),
    }
}

/// Result of the direction stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionSample {
    pub nu: Dir,
    pub pdfs: DirPdfs,
    pub technique: Technique,
    pub valid: bool,
}

/// Draws the next walk direction from the mixture/uniform combination.
pub fn sample_next_direction<R: Rng + ?Sized>(
    rng: &mut R,
    mixture: Option<&MixtureParams>,
    normal: Option<Vec2>,
    reflection: bool,
) -> DirectionSample {
    let n = normal.map(|n| n.to_dir());
    match mixture {
        Some(m) => {
            let s = m.mis_sample(rng, n.as_ref(), reflection);
            DirectionSample {
                nu: s.nu,
                pdfs: s.pdfs,
                technique: s.technique,
                valid: s.valid,
            }
        }
        None => {
            let nu = sample_dir(rng, normal);
            let p = uniform_dir_pdf(&nu, n.as_ref(), Dim::Two);
            DirectionSample {
                nu,
                pdfs: DirPdfs {
                    mis: p,
                    guided: 0.0,
                    uniform: p,
                    c: 0.0,
                },
                technique: Technique::Uniform,
                valid: true,
            }
        }
    }
}

impl StepContext<'_> {
    /// Termination, roulette and star radius. Returns true if the walk needs a step.
    pub fn logic(&self, w: &mut WalkState) -> bool {
        if !w.alive() {
            return false;
        }
        let x = w.position;
        if self.scene.bbox().distance_squared(x) > self.bbox_slack2 {
            w.finish(WalkStatus::Escaped, 0.0);
            return false;
        }
        let closest = self.accel.closest_point(x, KindSet::DIRICHLET);
        let d_dirichlet = closest.map_or(f64::INFINITY, |c| c.distance);
        if let Some(c) = closest {
            if c.distance <= self.epsilon {
                let g = self.scene.eval_dirichlet(c.point, c.segment).unwrap_or(0.0);
                w.accum += w.throughput * g;
                w.finish(WalkStatus::Terminated, g);
                return false;
            }
        }
        if w.depth >= self.config.max_depth {
            w.finish(WalkStatus::Truncated, 0.0);
            return false;
        }
        if w.depth > self.config.rr_depth {
            let q = w.throughput.abs().min(1.0);
            if q < 1.0 {
                if w.rng.gen::<f64>() >= q {
                    w.finish(WalkStatus::Killed, 0.0);
                    return false;
                }
                w.throughput /= q;
            }
        }
        let d_sil = if self.accel.has_neumann() {
            self.accel.closest_silhouette(x)
        } else {
            f64::INFINITY
        };
        let r = d_dirichlet.min(d_sil.max(self.r_min));
        if !r.is_finite() {
            w.finish(WalkStatus::Escaped, 0.0);
            return false;
        }
        w.radius = r;
        true
    }

    /// Source and Neumann terms at the current position.
    pub fn evaluate(&self, w: &mut WalkState) {
        let (x, n, r) = (w.position, w.normal, w.radius);
        let on = n.zip(w.segment);
        let mut local = 0.0;
        if !self.skip_source {
            local -= sample_source_contrib(&mut w.rng, self, x, on, r);
        }
        if !self.skip_neumann {
            local -= sample_neumann_contrib(&mut w.rng, self, x, on, r);
        }
        w.accum += w.throughput * local;
        if w.trace.is_some() {
            w.pending = Some(StepTrace {
                x,
                nu: [0.0; 3],
                pdf_mis: 0.0,
                pdf_g: 0.0,
                pdf_u: 0.0,
                normal: n,
                throughput: w.throughput,
                contribution: local,
            });
        }
    }

    /// Samples a direction and moves to the next point.
    pub fn advance(&self, w: &mut WalkState, mixture: Option<&MixtureParams>) -> DirectionSample {
        let s = sample_next_direction(&mut w.rng, mixture, w.normal, self.config.reflection);
        if let (Some(mut st), Some(trace)) = (w.pending.take(), w.trace.as_mut()) {
            st.nu = s.nu;
            st.pdf_mis = s.pdfs.mis;
            st.pdf_g = s.pdfs.guided;
            st.pdf_u = s.pdfs.uniform;
            trace.steps.push(st);
        }
        w.depth += 1;
        if !s.valid {
            w.finish(WalkStatus::Killed, 0.0);
            return s;
        }
        if s.pdfs.mis != s.pdfs.uniform {
            w.throughput *= s.pdfs.uniform / s.pdfs.mis;
        }
        let d = Vec2::from_dir(s.nu);
        let x = w.position;
        let hit = if self.accel.has_neumann() {
            self.accel
                .ray_first_hit_excluding(x, d, w.radius, KindSet::NEUMANN, w.segment)
        } else {
            None
        };
        match hit {
            Some(h) => {
                w.position = h.point;
                w.normal = Some(h.normal);
                w.segment = Some(h.segment);
            }
            None => {
                w.position = x + d * w.radius;
                w.normal = None;
                w.segment = None;
            }
        }
        s
    }

    /// One full step: logic, evaluation, inference and the move.
    pub fn step(&self, w: &mut WalkState) -> Option<DirectionSample> {
        if !self.logic(w) {
            return None;
        }
        self.evaluate(w);
        let m = self.mixture_at(w.position);
        Some(self.advance(w, m.as_ref()))
    }

    /// Runs a walk to completion.
    pub fn walk(&self, x0: Vec2, rng: ChaCha8Rng, record: bool) -> WalkResult {
        let mut w = WalkState::new(x0, rng, record);
        while w.alive() {
            self.step(&mut w);
        }
        WalkResult::from_state(w)
    }
}

#[derive(Clone, Debug)]
pub struct WalkResult {
    pub estimate: f64,
    pub status: WalkStatus,
    pub steps: usize,
    pub records: Vec<GuideRecord>,
}

impl WalkResult {
    fn from_state(w: WalkState) -> Self {
        WalkResult {
            estimate: if w.status == WalkStatus::Escaped {
                0.0
            } else {
                w.accum
            },
            status: w.status,
            steps: w.depth,
            records: w.trace.as_ref().map(backfill_targets).unwrap_or_default(),
        }
    }
}

/// Convenience wrapper over `StepContext::walk`.
pub fn wost_walk(ctx: &StepContext, x0: Vec2, rng: ChaCha8Rng, record: bool) -> WalkResult {
    ctx.walk(x0, rng, record)
}

/// Running mean and squared-deviation sum (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub mean: f64,
    pub m2: f64,
    pub count: u64,
}

impl PointStats {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    /// Sample variance of one walk.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Variance of the mean.
    pub fn variance_of_mean(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.variance() / self.count as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        self.variance_of_mean().sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkCounters {
    pub walks: u64,
    pub steps: u64,
    pub terminated: u64,
    pub killed: u64,
    pub escaped: u64,
    pub truncated: u64,
}

impl WalkCounters {
    pub fn add(&mut self, status: WalkStatus, steps: usize) {
        self.walks += 1;
        self.steps += steps as u64;
        match status {
            WalkStatus::Terminated => self.terminated += 1,
            WalkStatus::Killed => self.killed += 1,
            WalkStatus::Escaped => self.escaped += 1,
            WalkStatus::Truncated => self.truncated += 1,
            WalkStatus::Alive => {}
        }
    }

    pub fn merge(&mut self, o: &WalkCounters) {
        self.walks += o.walks;
        self.steps += o.steps;
        self.terminated += o.terminated;
        self.killed += o.killed;
        self.escaped += o.escaped;
        self.truncated += o.truncated;
    }
}

#[derive(Clone, Debug, Default)]
pub struct BatchResult {
    pub estimates: Vec<f64>,
    pub records: Vec<GuideRecord>,
    pub counters: WalkCounters,
}

fn for_each_mut<T: Send, F: Fn(&mut T) + Sync + Send>(items: &mut [T], f: F) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if items.len() >= 64 {
            items.par_iter_mut().with_min_len(32).for_each(f);
            return;
        }
    }
    items.iter_mut().for_each(f);
}

/// Runs one walk per point in lockstep stages, batching field inference.
///
/// Walk `i` uses `walk_rng(seed, i, wpp_index)`, so the result equals a loop of
/// scalar `walk` calls with the same streams.
pub fn solve_batch(
    ctx: &StepContext,
    points: &[Vec2],
    seed: u64,
    wpp_index: u64,
    record: bool,
) -> BatchResult {
    let mut live: Vec<(usize, WalkState, bool)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            (
                i,
                WalkState::new(p, walk_rng(seed, i as u64, wpp_index), record),
                false,
            )
        })
        .collect();
    let mut done: Vec<Option<WalkResult>> = vec![None; points.len()];
    let mut mixtures: Vec<Option<MixtureParams>> = Vec::new();
    while !live.is_empty() {
        for_each_mut(&mut live, |(_, w, stepping)| {
            *stepping = ctx.logic(w);
            if *stepping {
                ctx.evaluate(w);
            }
        });
        mixtures.clear();
        if let Some(field) = ctx.field {
            let xs: Vec<Vec2> = live.iter().filter(|e| e.2).map(|e| e.1.position).collect();
            let mut outs = field.eval_batch(&xs).into_iter();
            for e in &live {
                mixtures.push(if e.2 {
                    Some(ctx.mixture_from(&outs.next().unwrap()))
                } else {
                    None
                });
            }
        }
        {
            let mut jobs: Vec<(&mut (usize, WalkState, bool), Option<&MixtureParams>)> = live
                .iter_mut()
                .enumerate()
                .map(|(j, e)| (e, mixtures.get(j).and_then(|m| m.as_ref())))
                .collect();
            for_each_mut(&mut jobs, |(e, m)| {
                if e.2 {
                    ctx.advance(&mut e.1, *m);
                }
            });
        }
        let mut next = Vec::with_capacity(live.len());
        for (i, w, s) in live {
            if w.alive() {
                next.push((i, w, s));
            } else {
                done[i] = Some(WalkResult::from_state(w));
            }
        }
        live = next;
    }
    let mut out = BatchResult {
        estimates: Vec::with_capacity(points.len()),
        ..BatchResult::default()
    };
    for r in done.into_iter().map(|r| r.expect("every walk finishes")) {
        out.counters.add(r.status, r.steps);
        out.estimates.push(r.estimate);
        out.records.extend(r.records);
    }
    out
}
