//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criterion 9 fails on the α axis with the quadratic transfer-function basis
//! and is listed in `EXPECTED_FAILURES`; the run exits non-zero on any other
//! failure, or if criterion 9 starts passing.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use tendon_core::cli::{run, Manifest, EXIT_OK};
use tendon_core::dataset::{build_dataset, split, Dataset, GridSpec};
use tendon_core::distill::{
    distill_analytical, distill_model, probe_grid, render_equations, PolyBasis, TransferFunction,
};
use tendon_core::evalkit::{mae, validate_controller, Controller, SweepProtocol};
use tendon_core::models::{fit, Family, RegressorSpec, TrainedModel};
use tendon_core::numerics::RngStream;
use tendon_core::plant::{analytical_forward, analytical_inverse, PlantPreset, PoseAngles, TendonDelta};

const EXPECTED_FAILURES: &[u32] = &[9];

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn default_split() -> (Dataset, Dataset) {
    let mut params = PlantPreset::Default.params();
    params.noise_sigma = 0.5;
    let ds = build_dataset(&GridSpec::paper_sweep(), 5, &params, 0).unwrap();
    split(&ds, 0.8, 0).unwrap()
}

fn c1_analytical_map() -> Check {
    let start = Instant::now();
    let c = analytical_inverse(PoseAngles::new(90.0, 0.0)).map_err(|e| e.to_string())?;
    ensure(
        (c.l1 - 60.0).abs() < 1e-12 && (c.l2 + 30.0).abs() < 1e-12 && (c.l3 + 30.0).abs() < 1e-12,
        format!("(90, 0) -> {:?}", c),
    )?;
    let mut rng = RngStream::derive(0, "acceptance", 1);
    let (mut worst_sum, mut worst_rt) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let p = PoseAngles::new(180.0 * rng.next_uniform() - 90.0, 180.0 * rng.next_uniform() - 90.0);
        let c = analytical_inverse(p).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max(c.sum().abs());
        let back = analytical_forward(c);
        worst_rt = worst_rt
            .max((back.alpha - p.alpha).abs())
            .max((back.beta - p.beta).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst_sum <= 1e-12, format!("max |sum| {:.3e}", worst_sum))?;
    ensure(worst_rt <= 1e-9, format!("max round-trip error {:.3e}", worst_rt))?;
    ensure(secs < 1.0, format!("took {:.3} s", secs))?;
    Ok(format!(
        "max |sum| {:.1e}, round trip {:.1e}, {:.3} s",
        worst_sum, worst_rt, secs
    ))
}

/// The published gradient-boosting block, transcribed from LaTeX into the
/// rendered ASCII notation.
const PUBLISHED_GB: [&str; 3] = [
    r"L1 &= 1.0197 + (0.1833) \alpha + (-0.0700) \beta + (-0.0001) \alpha^2 + (0.0002) \alpha \beta + (-0.0001) \beta^2",
    r"L2 &= -0.4349 + (-0.0089) \alpha + (0.2548) \beta + (0.0002) \alpha^2 + (-0.0004) \alpha \beta + (-0.0003) \beta^2",
    r"L3 &= -0.5848 + (-0.1744) \alpha + (-0.1848) \beta + (-0.0001) \alpha^2 + (0.0003) \alpha \beta + (0.0004) \beta^2",
];

fn latex_to_ascii(line: &str) -> String {
    line.replace(" &=", " =")
        .replace(r"\alpha \beta", "a*b")
        .replace(r"\alpha", "a")
        .replace(r"\beta", "b")
}

fn c2_published_block() -> Check {
    let tf = TransferFunction::reference_gradient_boosting();
    let c = tf.eval(PoseAngles::new(0.0, 0.0));
    ensure(
        (c.l1, c.l2, c.l3) == (1.0197, -0.4349, -0.5848),
        format!("eval(0, 0) = {:?}", c),
    )?;
    let rendered = render_equations(&tf);
    let expected: Vec<String> = PUBLISHED_GB.iter().map(|l| latex_to_ascii(l)).collect();
    let got: Vec<&str> = rendered.lines().collect();
    ensure(got == expected, format!("rendered:\n{}", rendered))?;
    Ok("eval(0, 0) exact; rendering matches the published block".into())
}

fn max_column_sum(tf: &TransferFunction) -> f64 {
    tf.column_sums().iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn c3_sum_zero_columns(train: &Dataset, val: &Dataset) -> Check {
    let probe = probe_grid();
    let specs = [
        RegressorSpec::new(Family::Ridge, 0),
        RegressorSpec::new(Family::Lasso, 0).with("lambda", 0.0).unwrap(),
        RegressorSpec::new(Family::RandomForest, 0),
        RegressorSpec::new(Family::GradientBoosting, 0),
        RegressorSpec::new(Family::Gpr, 0),
    ];
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for spec in specs {
        let label = match spec.family {
            Family::Lasso => "lasso(lambda=0)".to_string(),
            f => f.name().to_string(),
        };
        let m = fit(&spec, train, val).map_err(|e| e.to_string())?;
        let tf = distill_model(&m, PolyBasis::Quadratic, &probe).map_err(|e| e.to_string())?;
        let s = max_column_sum(&tf);
        parts.push(format!("{} {:.1e}", label, s));
        if s >= 1e-6 {
            bad.push(label);
        }
    }
    let lasso = fit(&RegressorSpec::new(Family::Lasso, 0), train, val).map_err(|e| e.to_string())?;
    let info = max_column_sum(&distill_model(&lasso, PolyBasis::Quadratic, &probe).map_err(|e| e.to_string())?);
    let detail = format!("{}; default-lambda lasso {:.1e} (info only)", parts.join(", "), info);
    ensure(
        bad.is_empty(),
        format!("column sums >= 1e-6 for {}: {}", bad.join(", "), detail),
    )?;
    Ok(detail)
}

fn c4_exact_recovery() -> Check {
    let start = Instant::now();
    let tf = distill_analytical(PolyBasis::Quadratic, &probe_grid()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let w = tf.weights();
    let l1a = w[(0, 1)];
    let quad = (0..3)
        .flat_map(|i| (3..6).map(move |j| (i, j)))
        .map(|(i, j)| w[(i, j)].abs())
        .fold(0.0, f64::max);
    ensure(
        (l1a - 2.0 / 3.0).abs() <= 1e-9,
        format!("L1 alpha coefficient {:.12}", l1a),
    )?;
    ensure(quad < 1e-9, format!("max quadratic coefficient {:.3e}", quad))?;
    ensure(tf.residual_rms < 1e-9, format!("residual rms {:.3e}", tf.residual_rms))?;
    ensure(secs < 1.0, format!("took {:.3} s", secs))?;
    Ok(format!(
        "L1 alpha {:.9}, max quadratic {:.1e}, residual {:.1e}, {:.3} s",
        l1a, quad, tf.residual_rms, secs
    ))
}

fn c5_linear_collapse(train: &Dataset, val: &Dataset) -> Check {
    let probe = probe_grid();
    let mut parts = Vec::new();
    for family in [Family::Ridge, Family::Lasso] {
        let m = fit(&RegressorSpec::new(family, 0), train, val).map_err(|e| e.to_string())?;
        let tf = distill_model(&m, PolyBasis::Quadratic, &probe).map_err(|e| e.to_string())?;
        let w = tf.weights();
        let quad = (0..3)
            .flat_map(|i| (3..6).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)].abs())
            .fold(0.0, f64::max);
        ensure(
            quad < 1e-8,
            format!("{} max quadratic coefficient {:.3e}", family, quad),
        )?;
        parts.push(format!("{} {:.1e}", family, quad));
    }
    Ok(format!("max quadratic coefficient: {}", parts.join(", ")))
}

struct TimedFits {
    seconds: BTreeMap<Family, Vec<f64>>,
    curves: BTreeMap<Family, Vec<TrainedModel>>,
}

fn timed_fits(train: &Dataset, val: &Dataset) -> Result<TimedFits, String> {
    let mut out = TimedFits {
        seconds: BTreeMap::new(),
        curves: BTreeMap::new(),
    };
    for _ in 0..3 {
        for family in [Family::Ridge, Family::Lasso, Family::Bnn, Family::Rnn] {
            let m = fit(&RegressorSpec::new(family, 0), train, val).map_err(|e| e.to_string())?;
            out.seconds.entry(family).or_default().push(m.fit_seconds);
            if family.is_epoch_based() {
                out.curves.entry(family).or_default().push(m);
            }
        }
    }
    Ok(out)
}

fn c6_timing(fits: &TimedFits) -> Check {
    let mut parts = Vec::new();
    for rep in 0..3 {
        let fast = [Family::Ridge, Family::Lasso].map(|f| fits.seconds[&f][rep]);
        let slow = [Family::Bnn, Family::Rnn].map(|f| fits.seconds[&f][rep]);
        let ratio = slow.iter().cloned().fold(f64::INFINITY, f64::min) / fast.iter().cloned().fold(0.0, f64::max);
        ensure(
            ratio >= 10.0,
            format!("repetition {}: slow/fast ratio {:.1}", rep + 1, ratio),
        )?;
        parts.push(format!("{:.0}x", ratio));
    }
    Ok(format!(
        "min(bnn, rnn) / max(ridge, lasso) per repetition: {}",
        parts.join(", ")
    ))
}

fn c7_learning_curves(fits: &TimedFits) -> Check {
    let mut parts = Vec::new();
    for family in [Family::Bnn, Family::Rnn] {
        let models = &fits.curves[&family];
        let curves: Vec<_> = models
            .iter()
            .map(|m| m.training_curve.clone().ok_or(format!("{} has no curve", family)))
            .collect::<Result<_, _>>()?;
        let c = &curves[0];
        ensure(c.len() == 100, format!("{} curve has {} epochs", family, c.len()))?;
        ensure(
            curves.iter().all(|o| o == c),
            format!("{} curve differs between identical fits", family),
        )?;
        let (e1, e20, e100) = (c[0].train_mae, c[19].train_mae, c[99].train_mae);
        ensure(
            e100 < e1 && e20 < e1,
            format!("{} train MAE e1 {:.3} e20 {:.3} e100 {:.3}", family, e1, e20, e100),
        )?;
        parts.push(format!("{} e1 {:.3} e20 {:.3} e100 {:.3}", family, e1, e20, e100));
    }
    Ok(parts.join("; "))
}

fn c8_oracles() -> Check {
    use common::oracle_suite as o;
    let suite: [(&str, fn()); 7] = [
        ("tree root split", o::tree_root_split_matches_exhaustive_search),
        ("lasso(0) vs least squares", o::lasso_at_zero_penalty_matches_ols),
        ("gpr mean vs dense inverse", o::gpr_mean_matches_dense_inverse),
        ("svr dual objective", o::svr_dual_matches_projected_gradient_oracle),
        ("dense gradient", o::dense_gradient_matches_central_differences),
        ("bnn gradient", o::bnn_gradients_match_central_differences),
        ("bptt gradient", o::bptt_gradient_matches_central_differences),
    ];
    let start = Instant::now();
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let failed: Vec<&str> = suite
        .iter()
        .filter(|(_, f)| panic::catch_unwind(*f).is_err())
        .map(|(n, _)| *n)
        .collect();
    panic::set_hook(hook);
    let secs = start.elapsed().as_secs_f64();
    ensure(failed.is_empty(), format!("failed: {}", failed.join(", ")))?;
    ensure(secs < 60.0, format!("took {:.1} s", secs))?;
    Ok(format!("{} oracle checks in {:.2} s", suite.len(), secs))
}

fn pipeline(dir: &Path) -> Result<f64, String> {
    let out = dir.display().to_string();
    let start = Instant::now();
    for stage in [
        &["benchmark", "--generate"][..],
        &["distill"],
        &["validate"],
        &["report"],
    ] {
        let mut argv = vec!["tendon".to_string(), "--quiet".into(), "--out".into(), out.clone()];
        argv.extend(stage.iter().map(|s| s.to_string()));
        let code = run(argv);
        if code != EXIT_OK {
            return Err(format!("`{}` exited with {}", stage.join(" "), code));
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

fn mean_abs_deviation(path: &Path) -> Result<[f64; 2], String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or(format!("no {} column", name))
    };
    let (ia, ib) = (col("dev_alpha")?, col("dev_beta")?);
    let (mut sum, mut n) = ([0.0; 2], 0usize);
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap_or(f64::NAN)).collect();
        sum[0] += v[ia].abs();
        sum[1] += v[ib].abs();
        n += 1;
    }
    if n == 0 {
        return Err(format!("{} has no rows", path.display()));
    }
    Ok(sum.map(|s| s / n as f64))
}

fn c9_closed_loop(run_dir: &Path, seconds: f64) -> Check {
    let manifest = Manifest::load(run_dir)
        .map_err(|e| e.to_string())?
        .ok_or("no manifest")?;
    let best = manifest
        .stage("benchmark")
        .and_then(|s| s.notes.get("best_model"))
        .ok_or("benchmark recorded no best model")?
        .clone();
    let analytical = mean_abs_deviation(&run_dir.join("validate/deviation_analytical.csv"))?;
    let learned = mean_abs_deviation(&run_dir.join(format!("validate/deviation_{}.csv", best)))?;
    let ratio = [0, 1].map(|k| learned[k] / analytical[k]);
    let detail = format!(
        "best {}: mean |dev| alpha {:.4} vs {:.4} (x{:.3}), beta {:.4} vs {:.4} (x{:.3}); pipeline {:.1} s",
        best, learned[0], analytical[0], ratio[0], learned[1], analytical[1], ratio[1], seconds
    );
    ensure(
        ratio.iter().all(|r| *r < 0.5),
        format!("need < 0.5x on both axes; {}", detail),
    )?;
    ensure(seconds < 300.0, format!("pipeline took {:.1} s", seconds))?;
    Ok(detail)
}

fn c10_ideal_plant() -> Check {
    let mut params = PlantPreset::Ideal.params();
    params.noise_sigma = 0.0;
    // default run settings with the perturbation and noise switched off
    let ds = build_dataset(&GridSpec::paper_sweep(), 5, &params, 0).map_err(|e| e.to_string())?;
    let (train, val) = split(&ds, 0.8, 0).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for family in Family::ALL {
        let m = fit(&RegressorSpec::new(family, 0), &train, &val).map_err(|e| e.to_string())?;
        let pred: Vec<TendonDelta> = m.predict(&val.poses()).map_err(|e| e.to_string())?;
        let v = mae(&pred, &val.cmds()).map_err(|e| e.to_string())?;
        parts.push(format!("{} {:.3}", family, v));
        if v >= 0.5 {
            bad.push(family.name());
        }
    }
    let targets = SweepProtocol::Alternating
        .targets(&GridSpec::paper_sweep())
        .map_err(|e| e.to_string())?;
    let report = validate_controller(&Controller::Analytical, &params, &targets).map_err(|e| e.to_string())?;
    let dev = report.max_abs[0].max(report.max_abs[1]);
    let detail = format!("val MAE {}; analytical max |dev| {:.1e}", parts.join(", "), dev);
    ensure(bad.is_empty(), format!("MAE >= 0.5 for {}: {}", bad.join(", "), detail))?;
    ensure(dev < 1e-9, detail.clone())?;
    Ok(detail)
}

fn artifacts(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// `fit_seconds` is wall-clock time, so it is blanked in the report, and the
/// manifest digests of files that embed it are dropped.
fn masked(rel: &Path, text: &str) -> String {
    let rel = rel.to_string_lossy().replace('\\', "/");
    if rel == "benchmark/report.csv" {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let idx = header.split(',').position(|h| h == "fit_seconds");
        let mut out = vec![header.to_string()];
        for line in lines {
            let mut cells: Vec<&str> = line.split(',').collect();
            if let Some(i) = idx.filter(|&i| i < cells.len()) {
                cells[i] = "*";
            }
            out.push(cells.join(","));
        }
        return out.join("\n");
    }
    if rel == "manifest.json" {
        let mut v: serde_json::Value = serde_json::from_str(text).unwrap_or_default();
        if let Some(stages) = v.get_mut("stages").and_then(|s| s.as_object_mut()) {
            for stage in stages.values_mut() {
                if let Some(files) = stage.get_mut("files").and_then(|f| f.as_array_mut()) {
                    for f in files.iter_mut() {
                        let path = f.get("path").and_then(|p| p.as_str()).unwrap_or_default();
                        if path == "benchmark/report.csv" || path == "report.md" {
                            f["sha256"] = serde_json::Value::String("*".into());
                        }
                    }
                }
            }
        }
        return v.to_string();
    }
    text.to_string()
}

fn c11_determinism(a: &Path, b: &Path) -> Check {
    let (fa, fb) = (artifacts(a), artifacts(b));
    ensure(fa == fb, format!("file sets differ: {:?} vs {:?}", fa, fb))?;
    let mut exact = 0;
    let mut differing = Vec::new();
    for rel in &fa {
        let (ta, tb) = (fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap());
        if ta == tb {
            exact += 1;
            continue;
        }
        let (sa, sb) = (String::from_utf8_lossy(&ta), String::from_utf8_lossy(&tb));
        if masked(rel, &sa) != masked(rel, &sb) {
            differing.push(rel.display().to_string());
        }
    }
    ensure(
        differing.is_empty(),
        format!("differing artifacts: {}", differing.join(", ")),
    )?;
    Ok(format!(
        "{} CSV/JSON artifacts, {} byte-identical, rest equal once fit_seconds is masked",
        fa.len(),
        exact
    ))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    let mut record = |n: u32, name: &'static str, r: Check| {
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) if EXPECTED_FAILURES.contains(&n) => ("FAIL (known limitation)", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("criterion {:>2} {}: {}: {}", n, name, tag, detail);
        results.push((n, name, r));
    };

    let (train, val) = default_split();
    record(1, "analytical map", guarded(c1_analytical_map));
    record(2, "published coefficient block", guarded(c2_published_block));
    record(
        3,
        "sum-zero coefficient columns",
        guarded(|| c3_sum_zero_columns(&train, &val)),
    );
    record(4, "exact polynomial recovery", guarded(c4_exact_recovery));
    record(5, "linear-model collapse", guarded(|| c5_linear_collapse(&train, &val)));
    let fits = timed_fits(&train, &val);
    record(
        6,
        "timing ordering",
        guarded(|| fits.as_ref().map_err(Clone::clone).and_then(c6_timing)),
    );
    record(
        7,
        "learning-curve shape",
        guarded(|| fits.as_ref().map_err(Clone::clone).and_then(c7_learning_curves)),
    );
    drop(fits);
    record(8, "oracle equivalence", guarded(c8_oracles));

    let tmp = tempfile::tempdir().unwrap();
    let (dir_a, dir_b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&dir_a).unwrap();
    fs::create_dir_all(&dir_b).unwrap();
    let run_a = pipeline(&dir_a);
    record(
        9,
        "closed-loop improvement",
        guarded(|| run_a.clone().and_then(|s| c9_closed_loop(&dir_a, s))),
    );
    record(10, "ideal-plant sanity", guarded(c10_ideal_plant));
    let run_b = pipeline(&dir_b);
    record(
        11,
        "determinism",
        guarded(|| {
            run_a
                .clone()
                .and(run_b.clone())
                .and_then(|_| c11_determinism(&dir_a, &dir_b))
        }),
    );

    let passed = results.iter().filter(|r| r.2.is_ok()).count();
    let unexpected_fail: Vec<u32> = results
        .iter()
        .filter(|r| r.2.is_err() && !EXPECTED_FAILURES.contains(&r.0))
        .map(|r| r.0)
        .collect();
    let unexpected_pass: Vec<u32> = results
        .iter()
        .filter(|r| r.2.is_ok() && EXPECTED_FAILURES.contains(&r.0))
        .map(|r| r.0)
        .collect();
    println!("acceptance: {}/{} criteria pass", passed, results.len());
    if !unexpected_pass.is_empty() {
        println!(
            "criteria {:?} now pass; remove them from EXPECTED_FAILURES",
            unexpected_pass
        );
    }
    if !unexpected_fail.is_empty() || !unexpected_pass.is_empty() {
        std::process::exit(1);
    }
}
