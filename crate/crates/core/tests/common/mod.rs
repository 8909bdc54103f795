#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use wost_guide::math::{Rect, Vec2};
use wost_guide::scene::{BoundaryKind, Scene, SceneDoc, SegmentDoc, ValueSpec};

/// Prints past the test harness capture so criterion lines always show.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Random open polylines of mixed kinds inside the unit square.
///
/// Each chain is consistently oriented so vertex facings are well defined.
pub fn random_chains<R: Rng>(rng: &mut R, chains: usize, per_chain: usize) -> Vec<SegmentDoc> {
    let mut segs = Vec::new();
    for c in 0..chains {
        let kind = if c % 3 == 0 {
            BoundaryKind::Dirichlet
        } else {
            BoundaryKind::Neumann
        };
        let mut p = Vec2::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
        for _ in 0..per_chain {
            let q = Vec2::new(
                (p.x + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
                (p.y + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
            );
            if (q - p).length() < 1e-6 {
                continue;
            }
            segs.push(SegmentDoc {
                a: p,
                b: q,
                kind,
                value: "v".into(),
            });
            p = q;
        }
    }
    segs
}

pub fn scene_of(segments: Vec<SegmentDoc>) -> Scene {
    Scene::from_doc(SceneDoc {
        bbox: Rect::new(Vec2::new(-0.5, -0.5), Vec2::new(1.5, 1.5)),
        epsilon_shell: None,
        values: BTreeMap::from([("v".to_string(), ValueSpec::Constant { value: 0.0 })]),
        source: Default::default(),
        segments,
    })
    .unwrap()
}

/// Central difference of `f` along coordinate `i`.
pub fn central_diff(x: &[f64], i: usize, h: f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let fp = f(&p);
    p[i] = x[i] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

/// Relative error with an absolute floor for near-zero derivatives.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

pub mod oracle {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use wost_guide::geom2d::{Accel, KindSet};
    use wost_guide::math::Vec2;
    use wost_guide::scene::{BoundaryKind, Scene};

    fn closest_on(a: Vec2, b: Vec2, x: Vec2) -> Vec2 {
        let e = b - a;
        let t = ((x - a).dot(e) / e.length_squared()).clamp(0.0, 1.0);
        a + e * t
    }

    pub fn brute_closest(scene: &Scene, x: Vec2, kinds: KindSet) -> f64 {
        scene
            .segments()
            .iter()
            .filter(|s| kinds.contains(s.kind))
            .map(|s| (closest_on(s.a, s.b, x) - x).length())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn brute_silhouette(scene: &Scene, x: Vec2) -> f64 {
        let neu: Vec<_> = scene
            .segments()
            .iter()
            .filter(|s| s.kind == BoundaryKind::Neumann)
            .collect();
        let mut best = f64::INFINITY;
        for s in &neu {
            for v in [s.a, s.b] {
                let incident: Vec<_> = neu.iter().filter(|t| t.a == v || t.b == v).collect();
                let silhouette = incident.len() != 2 || {
                    let f: Vec<f64> = incident
                        .iter()
                        .map(|t| (t.b - t.a).perp().dot(v - x))
                        .collect();
                    f[0] * f[1] < 0.0
                };
                if silhouette {
                    best = best.min((v - x).length());
                }
            }
        }
        best
    }

    /// Nearest hit by solving `o + t d = a + s (b - a)` for every segment.
    pub fn brute_ray(
        scene: &Scene,
        o: Vec2,
        d: Vec2,
        t_min: f64,
        kinds: KindSet,
    ) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (id, s) in scene.segments().iter().enumerate() {
            if !kinds.contains(s.kind) {
                continue;
            }
            let e = s.b - s.a;
            let det = e.x * d.y - e.y * d.x;
            if det == 0.0 {
                continue;
            }
            let w = s.a - o;
            let t = (e.x * w.y - e.y * w.x) / det;
            let sp = (d.x * w.y - d.y * w.x) / det;
            if (0.0..=1.0).contains(&sp) && t > t_min && best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, id));
            }
        }
        best
    }

    #[derive(Debug, Default)]
    pub struct OracleReport {
        pub closest: f64,
        pub silhouette: f64,
        pub ray: f64,
        pub ray_misses: usize,
        pub bad_normals: usize,
    }

    impl OracleReport {
        pub fn worst(&self) -> f64 {
            self.closest.max(self.silhouette).max(self.ray)
        }
    }

    fn diff(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs()
        }
    }

    /// Compares every accelerated query against the scans above.
    pub fn run(seed: u64, chains: usize, per_chain: usize, probes: usize) -> OracleReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = super::scene_of(super::random_chains(&mut rng, chains, per_chain));
        let accel = Accel::build(&scene).unwrap();
        let t_eps = accel.config().t_epsilon;
        let mut rep = OracleReport::default();
        for _ in 0..probes {
            let x = Vec2::new(rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2));
            for kinds in [KindSet::ALL, KindSet::DIRICHLET, KindSet::NEUMANN] {
                let fast = accel
                    .closest_point(x, kinds)
                    .map_or(f64::INFINITY, |c| c.distance);
                rep.closest = rep.closest.max(diff(fast, brute_closest(&scene, x, kinds)));
            }
            rep.silhouette = rep.silhouette.max(diff(
                accel.closest_silhouette(x),
                brute_silhouette(&scene, x),
            ));
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = Vec2::new(a.cos(), a.sin());
            let t_max = rng.gen_range(0.05..2.0);
            for kinds in [KindSet::ALL, KindSet::DIRICHLET, KindSet::NEUMANN] {
                let fast = accel.ray_first_hit(x, d, t_max, kinds);
                let slow = brute_ray(&scene, x, d, t_eps, kinds).filter(|h| h.0 <= t_max);
                match (fast, slow) {
                    (Some(h), Some((t, _))) => {
                        rep.ray = rep.ray.max((h.t - t).abs());
                        if (h.normal.length() - 1.0).abs() > 1e-9 || h.normal.dot(d) > 0.0 {
                            rep.bad_normals += 1;
                        }
                    }
                    (None, None) => {}
                    _ => rep.ray_misses += 1,
                }
            }
        }
        rep
    }
}

pub mod suites {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use wost_guide::field::{FieldConfig, GuidingField};
    use wost_guide::math::{dot3, reflect3, Dir, Rect, Vec2};
    use wost_guide::spherical::{
        mis_pdf, mixture_grad, mixture_pdf, output_len, reflected_pdf, Dim, MixtureParams,
        UnnormParams,
    };
    use wost_guide::train::{
        kl_grad, selection_grad, train_batch, GuideRecord, TrainConfig, SELECTION_FRACTION,
    };

    use super::{central_diff, rel_err};

    /// Raw outputs with `kappa` log-uniform in `[1e-3, kappa_max]`.
    pub fn random_unnorm<R: Rng>(rng: &mut R, dim: Dim, kappa_max: f64) -> UnnormParams {
        let k = rng.gen_range(1..=8);
        let d = dim.n();
        let mut u = UnnormParams::zeros(dim, k);
        for i in 0..k {
            for j in 0..d {
                u.values[i * d + j] = rng.gen_range(-1.0..1.0);
            }
            let (ki, li) = (u.kappa_index(i), u.lambda_index(i));
            u.values[ki] = rng.gen_range(1e-3f64.ln()..kappa_max.ln());
            u.values[li] = rng.gen_range(-2.0..2.0);
        }
        let ci = u.c_index();
        u.values[ci] = rng.gen_range(-3.0..3.0);
        u
    }

    pub fn random_dir<R: Rng>(rng: &mut R, dim: Dim) -> Dir {
        wost_guide::spherical::sample_uniform_dir(rng, dim)
    }

    fn fold(nu: &Dir, n: &Dir) -> Dir {
        if dot3(nu, n) > 0.0 {
            *nu
        } else {
            reflect3(nu, n)
        }
    }

    /// Integral over the circle by the midpoint rule (spectrally accurate for periodic integrands).
    fn circle_integral(m: usize, f: &dyn Fn(&Dir) -> f64) -> f64 {
        let h = 2.0 * PI / m as f64;
        (0..m)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                f(&[t.cos(), t.sin(), 0.0])
            })
            .sum::<f64>()
            * h
    }

    /// Integral over the sphere on a Fibonacci lattice.
    fn sphere_integral(m: usize, f: &dyn Fn(&Dir) -> f64) -> f64 {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..m)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
                let r = (1.0 - z * z).sqrt();
                let p = golden * i as f64;
                f(&[r * p.cos(), r * p.sin(), z])
            })
            .sum::<f64>()
            * 4.0
            * PI
            / m as f64
    }

    /// Worst `|integral - 1|` of the plain, reflected and MIS densities over random draws.
    ///
    /// Hemisphere densities are integrated through their fold onto the full domain,
    /// which keeps the integrand continuous.
    pub fn normalization(dim: Dim, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, kappa_max) = match dim {
            Dim::Two => (1 << 17, 1e4),
            Dim::Three => (1 << 20, 1e3),
        };
        let integrate = |f: &dyn Fn(&Dir) -> f64| match dim {
            Dim::Two => circle_integral(m, f),
            Dim::Three => sphere_integral(m, f),
        };
        let mut worst: f64 = 0.0;
        for _ in 0..draws {
            let p: MixtureParams = random_unnorm(&mut rng, dim, kappa_max).decode();
            let n = random_dir(&mut rng, dim);
            let full = integrate(&|nu| mixture_pdf(nu, &p));
            let refl = integrate(&|nu| 0.5 * reflected_pdf(&fold(nu, &n), &p, &n));
            let mis_free = integrate(&|nu| mis_pdf(nu, &p, None));
            let mis_half = integrate(&|nu| 0.5 * mis_pdf(&fold(nu, &n), &p, Some(&n)));
            for v in [full, refl, mis_free, mis_half] {
                worst = worst.max((v - 1.0).abs());
            }
        }
        worst
    }

    /// Worst relative error of `mixture_grad` against central differences of the decoded density.
    pub fn mixture_grad_check(probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for p in 0..probes {
            let dim = if p % 2 == 0 { Dim::Two } else { Dim::Three };
            let u = random_unnorm(&mut rng, dim, 50.0);
            let nu = random_dir(&mut rng, dim);
            let g = mixture_grad(&nu, &u);
            let i = rng.gen_range(0..u.values.len() - 1);
            let f = |x: &[f64]| UnnormParams::new(dim, u.k, x.to_vec()).decode().pdf(&nu);
            worst = worst.max(rel_err(g[i], central_diff(&u.values, i, 1e-6, &f)));
        }
        worst
    }

    fn random_record<R: Rng>(rng: &mut R, boundary: bool) -> GuideRecord {
        let nu = random_dir(rng, Dim::Two);
        let normal = boundary.then(|| {
            // a normal on the valid side of nu
            let a = rng.gen_range(-1.2..1.2) + nu[1].atan2(nu[0]);
            Vec2::new(a.cos(), a.sin())
        });
        GuideRecord {
            x: Vec2::new(rng.gen(), rng.gen()),
            nu,
            target: rng.gen_range(0.1..2.0),
            pdf_mis: rng.gen_range(0.05..1.0),
            pdf_g: 0.0,
            pdf_u: if boundary { 1.0 / PI } else { 0.5 / PI },
            normal,
        }
    }

    fn kl_loss(r: &GuideRecord, u: &UnnormParams, reflection: bool) -> f64 {
        let n = r.normal.map(|n| n.to_dir());
        let v = u.decode().guided_pdf(&r.nu, n.as_ref(), reflection);
        -r.target * v.ln() / r.pdf_mis
    }

    pub fn kl_grad_check(probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for p in 0..probes {
            let u = random_unnorm(&mut rng, Dim::Two, 20.0);
            let r = random_record(&mut rng, p % 2 == 1);
            let reflection = p % 4 != 3;
            let Some(g) = kl_grad(&r, &u, reflection) else {
                continue;
            };
            let i = rng.gen_range(0..u.values.len() - 1);
            let f = |x: &[f64]| {
                kl_loss(
                    &r,
                    &UnnormParams::new(Dim::Two, u.k, x.to_vec()),
                    reflection,
                )
            };
            worst = worst.max(rel_err(g[i], central_diff(&u.values, i, 1e-6, &f)));
        }
        worst
    }

    /// Selection loss `-e target ln(c p_g + (1 - c) p_u) / pdf_mis` as a function of `c'`.
    pub fn selection_grad_check(probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for p in 0..probes {
            let u = random_unnorm(&mut rng, Dim::Two, 20.0);
            let r = random_record(&mut rng, p % 2 == 1);
            let reflection = p % 4 != 3;
            let m = u.decode();
            let n = r.normal.map(|n| n.to_dir());
            let pg = m.guided_pdf(&r.nu, n.as_ref(), reflection);
            let g = selection_grad(&r, &m, reflection);
            let f = |x: &[f64]| {
                let c = 1.0 / (1.0 + (-x[0]).exp());
                -SELECTION_FRACTION * r.target * (c * pg + (1.0 - c) * r.pdf_u).ln() / r.pdf_mis
            };
            worst = worst.max(rel_err(g, central_diff(&[u.c_raw()], 0, 1e-6, &f)));
        }
        worst
    }

    pub fn small_field(seed: u64) -> GuidingField {
        let cfg = FieldConfig {
            resolutions: vec![4, 8],
            hidden: 16,
            k: 3,
            seed,
            ..FieldConfig::default()
        };
        GuidingField::new(cfg, Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0))).unwrap()
    }

    /// Backprop of a random linear functional of the outputs against central differences.
    pub fn field_backward_check(probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = small_field(seed);
        // randomize the embeddings too, so no path is trivially zero
        for p in field.params_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        let n_out = output_len(Dim::Two, field.k());
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let x = Vec2::new(rng.gen(), rng.gen());
            let w: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, acts) = field.forward(x);
            let mut grad = vec![0.0; field.params().len()];
            field.backward_into(&acts, &w, &mut grad).unwrap();
            // pick a parameter with a nonzero path when possible
            let i = (0..20)
                .map(|_| rng.gen_range(0..grad.len()))
                .find(|&i| grad[i] != 0.0)
                .unwrap_or(0);
            let base = field.params().to_vec();
            let mut probe = field.clone();
            let mut f = |p: &[f64]| {
                probe.params_mut().copy_from_slice(p);
                probe
                    .eval(x)
                    .values
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            let num = {
                let h = 1e-6;
                let mut q = base.clone();
                q[i] += h;
                let fp = f(&q);
                q[i] -= 2.0 * h;
                let fm = f(&q);
                (fp - fm) / (2.0 * h)
            };
            worst = worst.max(rel_err(grad[i], num));
        }
        worst
    }

    pub fn two_lobe_target(nu: &Dir) -> f64 {
        let t = nu[1].atan2(nu[0]);
        let vm = |mu: f64, k: f64| {
            (k * ((t - mu).cos() - 1.0)).exp() / (2.0 * PI * wost_guide::special::bessel_i0e(k))
        };
        0.65 * vm(0.4, 25.0) + 0.35 * vm(2.6, 8.0)
    }

    /// `KL(target || V)` by quadrature on the circle.
    pub fn kl_to_target(m: &MixtureParams) -> f64 {
        circle_integral(4096, &|nu| {
            let p = two_lobe_target(nu);
            p * (p / m.pdf(nu)).ln()
        })
    }

    /// Fits the field at one point to the fixed two-lobe target from uniform draws.
    ///
    /// Returns the quadrature KL before and after.
    pub fn synthetic_fit(steps: usize, batch: usize, seed: u64) -> (f64, f64) {
        let curve = synthetic_fit_curve(steps, batch, seed, steps);
        (curve[0], curve[curve.len() - 1])
    }

    /// Quadrature KL at step 0 and after every `every` steps.
    pub fn synthetic_fit_curve(steps: usize, batch: usize, seed: u64, every: usize) -> Vec<f64> {
        let bbox = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        let mut field = GuidingField::new(FieldConfig::default(), bbox).unwrap();
        let x = Vec2::new(0.37, 0.61);
        let cfg = TrainConfig {
            minibatch: batch,
            learn_selection: false,
            reflection: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut curve = vec![kl_to_target(&field.eval(x).decode())];
        for s in 0..steps {
            let records: Vec<GuideRecord> = (0..batch)
                .map(|_| {
                    let nu = random_dir(&mut rng, Dim::Two);
                    GuideRecord {
                        x,
                        nu,
                        target: two_lobe_target(&nu),
                        pdf_mis: 0.5 / PI,
                        pdf_g: 0.0,
                        pdf_u: 0.5 / PI,
                        normal: None,
                    }
                })
                .collect();
            train_batch(&mut field, &records, &cfg, s as u64);
            if (s + 1) % every == 0 {
                curve.push(kl_to_target(&field.eval(x).decode()));
            }
        }
        curve
    }
}
