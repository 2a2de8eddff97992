//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use contre::augment::{generate_contrastive_set, sample_view, AugmentPolicy};
use contre::data_io::{self, DatasetRow};
use contre::harness::{self, run_pipeline, sweep_nm, Cohort, ExperimentConfig, TEST_VS_CONTRE, TEST_VS_FISHER_CONTRE};
use contre::image_ops::{self, apply_op, apply_with_param, Image, OpName, Sign};
use contre::plots;
use contre::stats::{self, StatsError, WithinWeighting};

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn untied(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 + rng.random_range(0.0..0.5)).collect();
    v.shuffle(rng);
    v
}

fn brute_force_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn spearman_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..=200);
        let x = untied(&mut rng, n);
        let y = untied(&mut rng, n);
        let rx = brute_force_ranks(&x);
        let ry = brute_force_ranks(&y);
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let nf = n as f64;
        let closed = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        let got = stats::spearman(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((got - closed).abs());

        // ranks are checked on tied data too
        let tied: Vec<f64> = x.iter().map(|v| (v / 4.0).floor()).collect();
        let ranks = stats::rank_transform(&tied).map_err(|e| e.to_string())?;
        ensure(ranks.values() == brute_force_ranks(&tied).as_slice(), || "rank mismatch".into())?;
        ensure(stats::rank_transform(&x).unwrap().values() == rx.as_slice(), || "rank mismatch".into())?;
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("max |Δ| {worst:.1e}, {elapsed:.2?}"))
}

fn partial_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..1000 {
        let n = rng.random_range(5..=100);
        let x = untied(&mut rng, n);
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-30.0..30.0)).collect();
        let z = untied(&mut rng, n);
        let r = |a: &[f64], b: &[f64]| stats::spearman(a, b).unwrap();
        let (rxy, rxz, ryz) = (r(&x, &y), r(&x, &z), r(&y, &z));
        let expected = (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt();
        let got = stats::partial_spearman(&x, &y, &z).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs());
        checked += 1;
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    let x = untied(&mut rng, 10);
    let y = untied(&mut rng, 10);
    ensure(
        matches!(stats::partial_spearman(&x, &y, &x), Err(StatsError::ControlDegenerate(_))),
        || "z = x did not raise ControlDegenerate".into(),
    )?;
    Ok(format!("{checked} triples, max |Δ| {worst:.1e}; z = x → ControlDegenerate"))
}

/// Scatter matrices by direct summation over samples.
fn naive_scatter(x: &DMatrix<f64>, labels: &[usize], classes: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = x.shape();
    let row = |i: usize| DVector::from_iterator(d, x.row(i).iter().copied());
    let mut grand = DVector::zeros(d);
    for i in 0..n {
        grand += row(i);
    }
    grand /= n as f64;
    let mut s_b = DMatrix::zeros(d, d);
    let mut s_w = DMatrix::zeros(d, d);
    let mut s_t = DMatrix::zeros(d, d);
    for c in 0..classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let mut mean = DVector::zeros(d);
        for &i in &members {
            mean += row(i);
        }
        mean /= members.len() as f64;
        let diff = &mean - &grand;
        s_b += &diff * diff.transpose() * members.len() as f64;
        for &i in &members {
            let v = row(i) - &mean;
            s_w += &v * v.transpose();
        }
    }
    for i in 0..n {
        let v = row(i) - &grand;
        s_t += &v * v.transpose();
    }
    (s_b, s_w, s_t)
}

fn fisher_instance(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<usize>, usize) {
    let d = rng.random_range(1..=8);
    let classes = rng.random_range(2..=4);
    let n = rng.random_range((d + classes + 4).max(2 * classes)..=64);
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = DMatrix::from_fn(n, d, |i, k| centers[labels[i]][k] + rng.random_range(-2.0..2.0));
    (x, labels, classes)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn fisher_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_ratio, mut worst_affine, mut worst_identity) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (x, labels, classes) = fisher_instance(&mut rng);
        let d = x.ncols();
        let pair = stats::scatter_matrices(&x, &labels, WithinWeighting::Standard).map_err(|e| e.to_string())?;
        let ratio = stats::fisher_ratio(&pair, 0.0).map_err(|e| e.to_string())?;

        let (s_b, s_w, s_t) = naive_scatter(&x, &labels, classes);
        let inv = s_w.clone().try_inverse().ok_or("oracle S_w singular")?;
        let expected = (inv * &s_b).trace();
        worst_ratio = worst_ratio.max(rel(ratio, expected));

        let identity = (&pair.s_b + &pair.s_w - &s_t).norm() / s_t.norm();
        worst_identity = worst_identity.max(identity);

        let a = DMatrix::from_fn(d, d, |i, j| (i == j) as u8 as f64 + rng.random_range(-0.4..0.4));
        if a.determinant().abs() < 0.1 {
            continue;
        }
        let shift = DVector::from_fn(d, |_, _| rng.random_range(-5.0..5.0));
        let mut y = &x * &a;
        for mut row in y.row_iter_mut() {
            row += shift.transpose();
        }
        let moved = stats::scatter_matrices(&y, &labels, WithinWeighting::Standard).map_err(|e| e.to_string())?;
        let ratio_moved = stats::fisher_ratio(&moved, 0.0).map_err(|e| e.to_string())?;
        worst_affine = worst_affine.max(rel(ratio_moved, ratio));
    }
    ensure(worst_ratio <= 1e-8, || format!("ratio deviation {worst_ratio:e}"))?;
    ensure(worst_affine <= 1e-6, || format!("affine deviation {worst_affine:e}"))?;
    ensure(worst_identity <= 1e-10, || format!("scatter identity deviation {worst_identity:e}"))?;
    Ok(format!(
        "ratio {worst_ratio:.1e}, affine {worst_affine:.1e}, S_b+S_w=S_t {worst_identity:.1e}"
    ))
}

fn random_image(rng: &mut ChaCha8Rng, channels: u8) -> Image {
    let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
    let pixels = (0..w * h * channels as u32).map(|_| rng.random()).collect();
    Image::new(w, h, channels, pixels).unwrap()
}

fn write_dataset(dir: &std::path::Path, count: usize) -> Vec<DatasetRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    (0..count)
        .map(|i| {
            let path = dir.join(format!("in{i}.png"));
            image_ops::write_png(&random_image(&mut rng, 3), &path).unwrap();
            DatasetRow {
                sample_id: format!("sample/{i}"),
                path,
                label: (i % 3) as u32,
            }
        })
        .collect()
}

fn transform_engine() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // neutral points
    for _ in 0..50 {
        for channels in [1, 3] {
            let img = random_image(&mut rng, channels);
            ensure(apply_with_param(OpName::Identity, 0.0, &img) == img, || "Identity changed the image".into())?;
            for op in OpName::ALL {
                let table = op.standard();
                let parametric = table.min_val != table.max_val;
                if !parametric {
                    continue;
                }
                for sign in [Sign::Plus, Sign::Minus] {
                    let out = apply_op(&table, 0.0, sign, &img).map_err(|e| e.to_string())?;
                    ensure(out == img, || format!("{op} at magnitude 0 changed the image"))?;
                }
            }
        }
    }

    // pixel tables over all 256 values
    let ramp = Image::new(256, 1, 1, (0..=255).collect()).unwrap();
    for bits in 0..=8u8 {
        let out = apply_with_param(OpName::Posterize, bits as f64, &ramp);
        let shift = 8 - bits as u32;
        let oracle: Vec<u8> = (0..=255u32).map(|v| if bits == 0 { 0 } else { ((v >> shift) << shift) as u8 }).collect();
        ensure(out.pixels() == oracle.as_slice(), || format!("posterize {bits} bits"))?;
    }
    for threshold in 0..=256u32 {
        let out = apply_with_param(OpName::Solarize, threshold as f64, &ramp);
        let oracle: Vec<u8> = (0..=255u32).map(|v| if v >= threshold { 255 - v } else { v } as u8).collect();
        ensure(out.pixels() == oracle.as_slice(), || format!("solarize threshold {threshold}"))?;
    }

    // generation determinism across runs and orderings
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = write_dataset(dir.path(), 24);
    let mut reversed = rows.clone();
    reversed.reverse();
    let policy = AugmentPolicy {
        master_seed: 99,
        ..AugmentPolicy::default()
    };
    let runs = [("a", &rows), ("b", &rows), ("c", &reversed)];
    let mut manifests = Vec::new();
    for (name, data) in runs {
        let out = dir.path().join(name);
        let manifest = generate_contrastive_set(&policy, data, 3, &out).map_err(|e| e.to_string())?;
        manifests.push((out, manifest));
    }
    let (first_dir, first) = &manifests[0];
    for (other_dir, other) in &manifests[1..] {
        ensure(first.rows == other.rows, || "manifest rows differ".into())?;
        ensure(
            fs::read(&first.path).unwrap() == fs::read(&other.path).unwrap(),
            || "manifest bytes differ".into(),
        )?;
        for row in &first.rows {
            ensure(
                fs::read(first_dir.join(&row.path)).unwrap() == fs::read(other_dir.join(&row.path)).unwrap(),
                || format!("{} differs", row.path.display()),
            )?;
        }
    }

    // operator-sampling uniformity
    let pool = vec![
        OpName::Identity,
        OpName::AutoContrast,
        OpName::Equalize,
        OpName::Rotate,
        OpName::Solarize,
        OpName::Color,
        OpName::Posterize,
        OpName::Contrast,
        OpName::Brightness,
        OpName::Sharpness,
        OpName::ShearX,
        OpName::ShearY,
        OpName::TranslateX,
        OpName::TranslateY,
    ];
    let policy = AugmentPolicy::new(1, 10.0, pool.clone(), 2024).map_err(|e| e.to_string())?;
    let mut counts = vec![0f64; pool.len()];
    let draws = 14_000;
    for i in 0..draws {
        let view = sample_view(&policy, &format!("u{i}"), 1).map_err(|e| e.to_string())?;
        let op = view.chosen_ops[0].0;
        counts[pool.iter().position(|&p| p == op).unwrap()] += 1.0;
    }
    let expected = draws as f64 / pool.len() as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((pool.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    ensure(chi2 < critical, || format!("chi-square {chi2:.2} ≥ {critical:.2}"))?;
    Ok(format!("neutral points, 256-value tables, 3 identical generations, χ² {chi2:.2} < {critical:.2}"))
}

fn svd_fixture() -> Check {
    let x = DMatrix::from_row_slice(4, 2, &[3.0, 0.0, -3.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    let one = stats::svd_reduce(&x, 1).map_err(|e| e.to_string())?;
    let full = stats::svd_reduce(&x, 2).map_err(|e| e.to_string())?;
    ensure((one.retained_variance - 0.9).abs() <= 1e-10, || format!("k=1 gave {}", one.retained_variance))?;
    ensure((full.retained_variance - 1.0).abs() <= 1e-10, || format!("k=rank gave {}", full.retained_variance))?;
    Ok(format!("k=1 → {}, k=rank → {}", one.retained_variance, full.retained_variance))
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let output = run_pipeline(&ExperimentConfig::builtin(7)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let contre = output.report.correlation(TEST_VS_CONTRE).and_then(|c| c.value).ok_or("no test_vs_contre")?;
    let fisher = output
        .report
        .correlation(TEST_VS_FISHER_CONTRE)
        .and_then(|c| c.value)
        .ok_or("no test_vs_fisher_contre")?;
    let summary = format!("spearman(test, contre) {contre:.4}, spearman(test, fisher) {fisher:.4}, {elapsed:.1?}");
    ensure(contre >= 0.6 && fisher > 0.0 && elapsed < Duration::from_secs(180), || summary.clone())?;
    Ok(summary)
}

fn ablation_direction() -> Check {
    let mut config = ExperimentConfig::builtin(7);
    config.analysis.fisher = false;
    let cohort = Cohort::prepare(&config).map_err(|e| e.to_string())?;
    let cells = sweep_nm(&cohort, &config.policy, &[2], &[4.0, 20.0], 1).map_err(|e| e.to_string())?;
    let (m4, m20) = (cells[0].spearman.ok_or("M=4 undefined")?, cells[1].spearman.ok_or("M=20 undefined")?);
    let summary = format!("N=2: M=4 {m4:.4}, M=20 {m20:.4}");
    ensure(m20 >= m4, || summary.clone())?;
    Ok(summary)
}

fn report_determinism() -> Check {
    let config = ExperimentConfig::builtin(7);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let output = run_pipeline(&config).map_err(|e| e.to_string())?;
        let out = dir.path().join(run);
        harness::write_outputs(&output, &out).map_err(|e| e.to_string())?;
        outputs.push(out);
    }
    let report = |i: usize| fs::read(outputs[i].join(harness::REPORT_FILE)).unwrap();
    ensure(report(0) == report(1), || "report.json differs".into())?;
    let parsed = data_io::read_report(outputs[0].join(harness::REPORT_FILE)).map_err(|e| e.to_string())?;
    let redraw = dir.path().join("redraw");
    plots::emit_plots(&parsed, &redraw).map_err(|e| e.to_string())?;
    let mut svgs = 0;
    for entry in fs::read_dir(outputs[0].join(harness::PLOTS_DIR)).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        let bytes = fs::read(&path).unwrap();
        ensure(bytes == fs::read(outputs[1].join(harness::PLOTS_DIR).join(name)).unwrap(), || {
            format!("{name:?} differs between runs")
        })?;
        ensure(bytes == fs::read(redraw.join(name)).unwrap(), || format!("{name:?} differs after reload"))?;
        svgs += path.extension().is_some_and(|e| e == "svg") as usize;
    }
    Ok(format!("report.json and {svgs} SVGs byte-identical"))
}

fn main() {
    let checks: [(&str, CheckFn); 8] = [
        ("spearman matches closed form and brute-force ranks", spearman_oracle),
        ("partial correlation matches pairwise formula", partial_oracle),
        ("fisher ratio: explicit inverse, affine invariance, scatter identity", fisher_oracle),
        ("transform engine: neutral points, tables, determinism, uniformity", transform_engine),
        ("svd reduction retained variance", svd_fixture),
        ("end-to-end built-in task, seed 7", end_to_end),
        ("ablation: M=20 at least as good as M=4 for N=2", ablation_direction),
        ("report and plot determinism", report_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
