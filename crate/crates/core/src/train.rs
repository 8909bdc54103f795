//! Online training of the guiding field from completed walks.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::field::GuidingField;
use crate::math::{dot3, reflect3, Dir, Vec2};
use crate::spherical::{mixture_grad_into, MixtureParams, UnnormParams};

/// Fraction of the loss attributed to the selection term.
pub const SELECTION_FRACTION: f64 = 0.2;
/// Records whose sampling density falls below this are never used.
pub const PDF_MIS_FLOOR: f64 = 1e-8;
/// Records whose current mixture density falls below this are skipped.
pub const V_FLOOR: f64 = 1e-12;

/// One sampled direction with its realized target value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuideRecord {
    pub x: Vec2,
    pub nu: Dir,
    pub target: f64,
    pub pdf_mis: f64,
    pub pdf_g: f64,
    pub pdf_u: f64,
    /// Boundary normal (pointing into the walk region) when sampled on a Neumann boundary.
    pub normal: Option<Vec2>,
}

impl GuideRecord {
    pub fn on_neumann(&self) -> bool {
        self.normal.is_some()
    }
}

/// One step of a walk as needed for target backfilling.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub x: Vec2,
    pub nu: Dir,
    pub pdf_mis: f64,
    pub pdf_g: f64,
    pub pdf_u: f64,
    pub normal: Option<Vec2>,
    /// Throughput at the start of the step (after any roulette rescaling).
    pub throughput: f64,
    /// Source and Neumann contribution collected at this step, before throughput weighting.
    pub contribution: f64,
}

/// Per-walk log consumed by `backfill_targets`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WalkTrace {
    pub steps: Vec<StepTrace>,
    /// Throughput when the walk ended; zero if it was killed.
    pub final_throughput: f64,
    /// Boundary value read at termination (zero if killed or escaped).
    pub final_value: f64,
}

/// Turns a finished walk into records whose target is `|u(x_{k+1})|` as estimated by
/// the rest of the walk, expressed in that sub-walk's own throughput frame.
pub fn backfill_targets(trace: &WalkTrace) -> Vec<GuideRecord> {
    let n = trace.steps.len();
    let mut records = Vec::with_capacity(n);
    // suffix[k] = sum_{j >= k} T_j c_j + T_end g
    let mut suffix = trace.final_throughput * trace.final_value;
    let mut next_throughput = trace.final_throughput;
    let mut targets = vec![0.0; n];
    for k in (0..n).rev() {
        targets[k] = if next_throughput != 0.0 {
            (suffix / next_throughput).abs()
        } else {
            0.0
        };
        let s = &trace.steps[k];
        suffix += s.throughput * s.contribution;
        next_throughput = s.throughput;
    }
    for (s, target) in trace.steps.iter().zip(targets) {
        records.push(GuideRecord {
            x: s.x,
            nu: s.nu,
            target: if target.is_finite() { target } else { 0.0 },
            pdf_mis: s.pdf_mis,
            pdf_g: s.pdf_g,
            pdf_u: s.pdf_u,
            normal: s.normal,
        });
    }
    records
}

/// Accumulates `scale * d/dTheta' [-target log V / pdf_mis]` into `out`.
///
/// Returns false (and adds nothing) when `V` at the current parameters is below the floor.
pub fn kl_grad_into(
    record: &GuideRecord,
    unnorm: &UnnormParams,
    decoded: &MixtureParams,
    reflection: bool,
    scale: f64,
    out: &mut [f64],
) -> bool {
    let normal = record.normal.map(|n| n.to_dir());
    let v = decoded.guided_pdf(&record.nu, normal.as_ref(), reflection);
    if !(v >= V_FLOOR) {
        return false;
    }
    if record.target == 0.0 {
        return true;
    }
    let w = -scale * record.target / (record.pdf_mis * v);
    mixture_grad_into(&record.nu, unnorm, decoded, w, out);
    if let (true, Some(n)) = (reflection, normal) {
        let r = reflect3(&record.nu, &n);
        mixture_grad_into(&r, unnorm, decoded, w, out);
    }
    true
}

/// KL gradient with respect to the raw outputs, or `None` if the record is skipped.
pub fn kl_grad(record: &GuideRecord, unnorm: &UnnormParams, reflection: bool) -> Option<Vec<f64>> {
    let mut out = vec![0.0; unnorm.values.len()];
    kl_grad_into(record, unnorm, &unnorm.decode(), reflection, 1.0, &mut out).then_some(out)
}

/// Gradient of the selection loss with respect to `c'`.
///
/// `pdf_g` is the guided density at current parameters; `c` the current selection probability.
pub fn selection_grad_raw(record: &GuideRecord, pdf_g: f64, c: f64) -> f64 {
    let p_cur = c * pdf_g + (1.0 - c) * record.pdf_u;
    if record.target == 0.0 || p_cur <= 0.0 {
        return 0.0;
    }
    let d_c =
        -SELECTION_FRACTION * record.target * (pdf_g - record.pdf_u) / (p_cur * record.pdf_mis);
    d_c * c * (1.0 - c)
}

pub fn selection_grad(record: &GuideRecord, params: &MixtureParams, reflection: bool) -> f64 {
    let normal = record.normal.map(|n| n.to_dir());
    let pdf_g = params.guided_pdf(&record.nu, normal.as_ref(), reflection);
    selection_grad_raw(record, pdf_g, params.c)
}

/// Whether the online schedule still trains after `wpp_completed` walks per point.
pub fn training_active(wpp_completed: usize, threshold: usize) -> bool {
    wpp_completed < threshold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub minibatch: usize,
    /// Also train the selection probability.
    pub learn_selection: bool,
    pub reflection: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minibatch: 1 << 14,
            learn_selection: true,
            reflection: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub records_consumed: usize,
    pub records_below_pdf_floor: usize,
    pub records_below_v_floor: usize,
    pub steps: usize,
    /// Mean L2 norm of the per-minibatch raw-output gradient.
    pub mean_grad_norm: f64,
    pub seconds: f64,
}

impl TrainStats {
    pub fn merge(&mut self, o: &TrainStats) {
        let steps = self.steps + o.steps;
        if steps > 0 {
            self.mean_grad_norm = (self.mean_grad_norm * self.steps as f64
                + o.mean_grad_norm * o.steps as f64)
                / steps as f64;
        }
        self.records_consumed += o.records_consumed;
        self.records_below_pdf_floor += o.records_below_pdf_floor;
        self.records_below_v_floor += o.records_below_v_floor;
        self.steps = steps;
        self.seconds += o.seconds;
    }
}

/// Records per gradient shard; fixed so results do not depend on the thread count.
const SHARD: usize = 512;

struct Shard {
    grad: Vec<f64>,
    skipped_v: usize,
    out_norm2: f64,
}

fn shard_grad(
    field: &GuidingField,
    records: &[GuideRecord],
    cfg: &TrainConfig,
    scale: f64,
) -> Shard {
    let mut grad = vec![0.0; field.params().len()];
    let mut d_out = vec![0.0; field.config().output_len()];
    let mut skipped_v = 0;
    let mut out_norm2 = 0.0;
    for r in records {
        let (unnorm, acts) = field.forward(r.x);
        let decoded = unnorm.decode();
        d_out.iter_mut().for_each(|d| *d = 0.0);
        if !kl_grad_into(r, &unnorm, &decoded, cfg.reflection, scale, &mut d_out) {
            skipped_v += 1;
            continue;
        }
        if cfg.learn_selection {
            d_out[unnorm.c_index()] += scale * selection_grad(r, &decoded, cfg.reflection);
        }
        out_norm2 += d_out.iter().map(|d| d * d).sum::<f64>();
        field
            .backward_into(&acts, &d_out, &mut grad)
            .expect("activations from the current parameters");
    }
    Shard {
        grad,
        skipped_v,
        out_norm2,
    }
}

/// One shuffled pass over `records` in minibatches, one Adam step per minibatch.
pub fn train_batch(
    field: &mut GuidingField,
    records: &[GuideRecord],
    cfg: &TrainConfig,
    seed: u64,
) -> TrainStats {
    let start = Stopwatch::start();
    let mut stats = TrainStats::default();
    let mut usable: Vec<&GuideRecord> = Vec::with_capacity(records.len());
    for r in records {
        if r.pdf_mis >= PDF_MIS_FLOOR && r.target.is_finite() {
            usable.push(r);
        } else {
            stats.records_below_pdf_floor += 1;
        }
    }
    if usable.is_empty() {
        stats.seconds = start.seconds();
        return stats;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    usable.shuffle(&mut rng);
    let minibatch = cfg.minibatch.max(1);
    let mut norm_sum = 0.0;
    for batch in usable.chunks(minibatch) {
        let batch: Vec<GuideRecord> = batch.iter().map(|&r| r.clone()).collect();
        let scale = 1.0 / batch.len() as f64;
        let shards = compute_shards(field, &batch, cfg, scale);
        let mut norm2 = 0.0;
        for s in &shards {
            field.add_grad(&s.grad, 1.0);
            stats.records_below_v_floor += s.skipped_v;
            norm2 += s.out_norm2;
        }
        field.adam_step();
        stats.steps += 1;
        stats.records_consumed += batch.len();
        norm_sum += norm2.sqrt();
    }
    stats.mean_grad_norm = norm_sum / stats.steps as f64;
    stats.seconds = start.seconds();
    stats
}

fn compute_shards(
    field: &GuidingField,
    batch: &[GuideRecord],
    cfg: &TrainConfig,
    scale: f64,
) -> Vec<Shard> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        batch
            .par_chunks(SHARD)
            .map(|c| shard_grad(field, c, cfg, scale))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        batch
            .chunks(SHARD)
            .map(|c| shard_grad(field, c, cfg, scale))
            .collect()
    }
}

/// Writes records as CSV rows for offline inspection.
pub fn write_records<W: Write>(mut w: W, records: &[GuideRecord]) -> std::io::Result<()> {
    writeln!(
        w,
        "x,y,nu_x,nu_y,target,pdf_mis,pdf_g,pdf_u,normal_x,normal_y"
    )?;
    for r in records {
        let (nx, ny) = r.normal.map_or((0.0, 0.0), |n| (n.x, n.y));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.x.x, r.x.y, r.nu[0], r.nu[1], r.target, r.pdf_mis, r.pdf_g, r.pdf_u, nx, ny
        )?;
    }
    Ok(())
}

/// True when `nu` lies in the valid hemisphere of the record's boundary (always true inside).
pub fn record_direction_valid(r: &GuideRecord) -> bool {
    r.normal.map_or(true, |n| dot3(&r.nu, &n.to_dir()) > 0.0)
}
