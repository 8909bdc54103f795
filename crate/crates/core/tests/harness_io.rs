use std::fs;

use proptest::prelude::*;
use wost_guide::field::GuidingField;
use wost_guide::harness::{
    compare_images, compute_relmse, generate_reference, read_csv, read_pfm, run_ablation,
    run_solve, write_csv, write_outputs, write_pfm, write_png, GridConfig, RunConfig,
    SolutionImage,
};
use wost_guide::math::{Rect, Vec2};
use wost_guide::scene::{write_scene, Scene, ValueSpec};
use wost_guide::wost::SamplerMode;

fn small(scene: &str, sampler: SamplerMode, wpp: usize) -> RunConfig {
    let mut cfg = RunConfig {
        scene: format!("preset:{scene}"),
        grid: GridConfig {
            width: 4,
            height: 4,
            bbox: None,
        },
        wpp,
        sampler,
        train_until: wpp,
        seed: 3,
        ..RunConfig::default()
    };
    cfg.field.resolutions = vec![4, 8];
    cfg.field.hidden = 16;
    cfg.field.k = 3;
    cfg.train.minibatch = 64;
    cfg
}

#[test]
fn more_walks_lower_relmse_for_every_analytic_problem() {
    for scene in ["harmonic-disk", "const-source-disk", "neumann-strip"] {
        for mode in [
            SamplerMode::Uniform,
            SamplerMode::FixedMis(0.5),
            SamplerMode::GuidingOnly,
            SamplerMode::LearnableMis,
        ] {
            let mut cfg = small(scene, mode, 1024);
            cfg.train_until = 64;
            cfg.reference = Some("analytic".into());
            let reference = wost_guide::harness::load_reference(&cfg).unwrap().unwrap();
            let out = run_solve(&cfg, Some(&reference)).unwrap();
            let at = |wpp: usize| {
                out.log
                    .iter()
                    .find(|r| r.wpp == wpp)
                    .unwrap()
                    .relmse
                    .unwrap()
            };
            assert!(
                at(1024) < at(64),
                "{scene} {mode}: {} vs {}",
                at(1024),
                at(64)
            );
        }
    }
}

#[test]
fn single_walk_per_cell() {
    let cfg = RunConfig {
        grid: GridConfig {
            width: 2,
            height: 2,
            bbox: None,
        },
        ..small("neumann-strip", SamplerMode::Uniform, 1)
    };
    let out = run_solve(&cfg, None).unwrap();
    assert_eq!(out.counters.walks, 4);
    assert!(out.image.cells.iter().all(|c| c.count == 1));
    assert_eq!(out.log.len(), 1);
}

#[test]
fn identical_config_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for run in 0..2 {
        let mut cfg = small("contrast-curves", SamplerMode::LearnableMis, 8);
        cfg.output.csv = Some(dir.path().join(format!("run{run}.csv")));
        cfg.output.pfm = Some(dir.path().join(format!("run{run}.pfm")));
        let out = run_solve(&cfg, None).unwrap();
        write_outputs(&cfg, &out).unwrap();
        texts.push((
            fs::read(cfg.output.csv.as_ref().unwrap()).unwrap(),
            fs::read(cfg.output.pfm.as_ref().unwrap()).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn zero_threshold_never_trains() {
    let mut cfg = small("contrast-curves", SamplerMode::LearnableMis, 4);
    cfg.train_until = 0;
    let out = run_solve(&cfg, None).unwrap();
    assert_eq!(out.train.steps, 0);
    let fresh = GuidingField::new(cfg.field.clone(), out.field.as_ref().unwrap().bbox()).unwrap();
    assert_eq!(out.field.unwrap().params(), fresh.params());
}

#[test]
fn training_runs_while_active() {
    let mut cfg = small("contrast-curves", SamplerMode::LearnableMis, 4);
    cfg.train_until = 2;
    let out = run_solve(&cfg, None).unwrap();
    assert!(out.train.steps > 0);
    assert!(out.train.records_consumed > 0);
}

#[test]
fn analytic_reference_is_exact() {
    let cfg = small("const-source-disk", SamplerMode::Uniform, 1);
    let img = generate_reference(&cfg, 64).unwrap();
    for (p, c) in img.points().iter().zip(&img.cells) {
        assert_eq!(c.mean, p.length_squared() - 1.0);
        assert_eq!(c.variance_of_mean(), 0.0);
    }
}

#[test]
fn doubling_reference_budget_barely_moves_relmse() {
    // contrast scene with the dark curves lifted to 0.5, so no cell sits near zero
    let mut doc = wost_guide::presets::preset("contrast-curves")
        .unwrap()
        .scene
        .to_doc();
    doc.values
        .insert("zero".into(), ValueSpec::Constant { value: 0.5 });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lifted.json");
    fs::write(&path, write_scene(&Scene::from_doc(doc).unwrap())).unwrap();
    let mut cfg = small("contrast-curves", SamplerMode::Uniform, 16);
    cfg.scene = path.display().to_string();
    let test_img = run_solve(&cfg, None).unwrap().image;
    cfg.seed = 11;
    let r1 = generate_reference(&cfg, 1024).unwrap();
    let r2 = generate_reference(&cfg, 2048).unwrap();
    let a = compare_images(&test_img, &r1).unwrap();
    let b = compare_images(&test_img, &r2).unwrap();
    assert!((a - b).abs() < 0.1 * b, "{a} vs {b}");
}

#[test]
fn ablation_of_identical_modes_is_identical() {
    let cfg = small("neumann-strip", SamplerMode::Uniform, 4);
    let reference: Vec<f64> = {
        let img = generate_reference(&cfg, 1).unwrap();
        img.means()
    };
    let rows = run_ablation(
        &cfg,
        &[SamplerMode::Uniform, SamplerMode::Uniform],
        &reference,
    )
    .unwrap();
    assert_eq!(rows[0].relmse, rows[1].relmse);
    assert_eq!(rows[0].curve.len(), 3);
    let one = run_ablation(&cfg, &[SamplerMode::FixedMis(0.5)], &reference).unwrap();
    assert_eq!(one.len(), 1);
    assert!(run_ablation(&cfg, &[], &reference).is_err());
}

#[test]
fn relmse_formula_instances() {
    let r = compute_relmse(&[1.1; 9], &[1.0; 9]).unwrap();
    assert!((r - 0.01 / (1.0 + 1e-4)).abs() < 1e-12);
    let r = compute_relmse(&[2.0], &[1.0]).unwrap();
    assert!((r - 1.0 / (1.0 + 1e-4)).abs() < 1e-12);
    assert!(compute_relmse(&[1.0, 2.0], &[1.0]).is_err());
}

fn image(w: usize, h: usize, values: &[f64]) -> SolutionImage {
    SolutionImage::from_values(
        w,
        h,
        Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0)),
        values,
        7,
    )
}

#[test]
fn one_cell_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    write_csv(&image(1, 1, &[0.5]), &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.lines().any(|l| l.starts_with("0,0,0.5,")));
}

#[test]
fn constant_png_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.png");
    write_png(&image(3, 2, &[0.25; 6]), &p).unwrap();
    let decoder = png::Decoder::new(fs::File::open(&p).unwrap());
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).unwrap();
    let px = &buf[..info.buffer_size()];
    assert!(px.iter().all(|&v| v == px[0]));
    assert!(dir.path().join("c.png.range.json").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pfm_round_trip_is_bit_exact(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let img = image(w, h, &values);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pfm");
        write_pfm(&img, &p).unwrap();
        let (rw, rh, data) = read_pfm(&p).unwrap();
        prop_assert_eq!((rw, rh), (w, h));
        for (a, b) in data.iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), (*b as f32).to_bits());
        }
    }

    #[test]
    fn csv_round_trip_keeps_means(w in 1usize..5, h in 1usize..5, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let img = image(w, h, &values);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&img, &p).unwrap();
        let back = read_csv(&p).unwrap();
        prop_assert_eq!(back.means(), img.means());
        prop_assert_eq!(back.bbox, img.bbox);
        prop_assert_eq!(compare_images(&back, &img).unwrap(), 0.0);
    }

    #[test]
    fn relmse_is_zero_only_on_equality(a in proptest::collection::vec(-5.0f64..5.0, 1..20), k in 0usize..20, d in -1.0f64..1.0) {
        prop_assert_eq!(compute_relmse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        let i = k % b.len();
        b[i] += d;
        let r = compute_relmse(&b, &a).unwrap();
        prop_assert!(r.is_finite() && r >= 0.0);
        prop_assert_eq!(r == 0.0, d == 0.0);
    }
}
