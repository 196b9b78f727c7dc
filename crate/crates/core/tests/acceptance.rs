//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when a
//! required criterion fails. The full-protocol run only happens when
//! `GCNN_DATA_DIR` points at the data and `GCNN_FULL_PROTOCOL=1`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gcnn::checks::{
    bench_gconv, equivariance_suite, gradient_suite, group_law_suite, oracle_suite, GradientCheck, Values,
};
use gcnn::data::{dataset_file, load_amat, split_train_valid, LabeledDataset, TEST_FILE, TRAIN_VALID_FILE};
use gcnn::gconv::LayerKind;
use gcnn::gfunc::{center_transform, left_transform_planar};
use gcnn::group::make_element;
use gcnn::layers::Mode;
use gcnn::model::{build_model, LayerGraph};
use gcnn::train::{evaluate, train, OptimizerState, TrainConfig};
use gcnn::{GroupId, PlanarStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Warn(String),
    Unverified(String),
}

struct Criterion {
    number: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn group_laws() -> Outcome {
    let reports: Vec<_> = [GroupId::P4, GroupId::P4M].map(|g| group_law_suite(g, 2)).into();
    let failures: usize = reports.iter().map(|r| r.failures).sum();
    let checks: usize = reports.iter().map(|r| r.checks).sum();
    let detail = format!("{checks} checks, {failures} failures");
    if failures == 0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn equivariance() -> Outcome {
    let mut worst_int = 0.0f64;
    let mut worst_real = 0.0f64;
    let mut identities = 0;
    for group in [GroupId::Z2, GroupId::P4, GroupId::P4M] {
        for values in [Values::Integer, Values::Real] {
            let rows = match equivariance_suite(group, 100, values, 0) {
                Ok(rows) => rows,
                Err(e) => return Outcome::Fail(format!("{group}: {e}")),
            };
            for r in rows {
                identities += 1;
                match values {
                    Values::Integer => worst_int = worst_int.max(r.max_violation),
                    Values::Real => worst_real = worst_real.max(r.max_violation),
                }
            }
        }
    }
    let detail = format!("{identities} identity runs x 100 trials, integer max {worst_int:e}, real max {worst_real:e}");
    if worst_int == 0.0 && worst_real <= 1e-10 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for group in [GroupId::Z2, GroupId::P4, GroupId::P4M] {
        for kind in [LayerKind::FirstLayer, LayerKind::Full] {
            match oracle_suite(group, kind, 100, 1) {
                Ok(r) => {
                    worst = worst.max(r.max_abs_diff);
                    cases += r.instances;
                }
                Err(e) => return Outcome::Fail(format!("{group} {}: {e}", kind.name())),
            }
        }
    }
    let detail = format!("{cases} instances, max abs diff {worst:e}");
    if worst == 0.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn gradients() -> Outcome {
    let rows = match gradient_suite(10, 0) {
        Ok(rows) => rows,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let worst = |check| {
        rows.iter()
            .filter(|r| r.check == check)
            .map(|r| r.max_error)
            .fold(0.0f64, f64::max)
    };
    let (fd, adjoint) = (worst(GradientCheck::FiniteDifference), worst(GradientCheck::Adjoint));
    let detail = format!("{} rows, finite difference max {fd:e}, adjoint max {adjoint:e}", rows.len());
    if fd <= 1e-5 && adjoint <= 1e-10 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn parameter_parity() -> Outcome {
    let z2 = build_model::<f32>("z2cnn", 0).map(|m| m.parameter_count());
    let p4 = build_model::<f32>("p4cnn", 0).map(|m| m.parameter_count());
    match (z2, p4) {
        (Ok(z2), Ok(p4)) => {
            let ratio = p4 as f64 / z2 as f64;
            let detail = format!("Z2CNN {z2}, P4CNN {p4}, ratio {ratio:.4}");
            if (ratio - 1.0).abs() <= 0.1 {
                Outcome::Pass(detail)
            } else {
                Outcome::Fail(detail)
            }
        }
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(e.to_string()),
    }
}

fn invariance() -> Outcome {
    let run = || -> gcnn::Result<f64> {
        let mut model = build_model::<f64>("p4cnn", 5)?;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // non-trivial running statistics so eval-mode batch norm does real work
        let mut tensors = model.tensors();
        for t in &mut tensors {
            if t.name.ends_with("running_mean") || t.name.ends_with("bias") || t.name.ends_with("beta") {
                t.data.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
            } else if t.name.ends_with("running_var") || t.name.ends_with("gamma") {
                t.data.iter_mut().for_each(|x| *x = rng.random_range(0.5..1.5));
            }
        }
        model.load_tensors(&tensors)?;
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let pixels = (0..784).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = PlanarStack::new(1, 28, 28, pixels)?;
            let (base, _) = model.logits(std::slice::from_ref(&x), Mode::Eval, 0)?;
            for r in 1..4 {
                let g = center_transform(&make_element(GroupId::P4, 0, r, 0, 0)?, 28, 28, x.origin())?;
                let (out, _) = model.logits(&[left_transform_planar(&g, &x)], Mode::Eval, 0)?;
                let scale = base[0].iter().chain(&out[0]).fold(0.0f64, |m, v| m.max(v.abs()));
                let diff = base[0].iter().zip(&out[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(diff / scale.max(f64::MIN_POSITIVE));
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) if w <= 1e-10 => Outcome::Pass(format!("max relative logit change {w:e}")),
        Ok(w) => Outcome::Fail(format!("max relative logit change {w:e}")),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/rotmnist_proxy_4000.amat.gz")
}

/// Train with the given config and return the lowest validation error seen.
fn best_valid_error(name: &str, train_set: &LabeledDataset, valid: &LabeledDataset, config: &TrainConfig) -> gcnn::Result<(f64, LayerGraph<f32>)> {
    let mut model = build_model::<f32>(name, config.seed)?;
    let mut opt = OptimizerState::new(&model, config.adam());
    let mut best = (f64::INFINITY, model.clone());
    train(&mut model, &mut opt, train_set, Some(valid), config, |m, current, _| {
        let err = m.valid_error.unwrap_or(f64::INFINITY);
        eprintln!("  {name} epoch {} loss {:.4} valid error {err:.4}", m.epoch, m.train_loss);
        if err < best.0 {
            best = (err, current.clone());
        }
        Ok(())
    })?;
    Ok(best)
}

fn desk_scale() -> Outcome {
    let run = || -> gcnn::Result<(f64, f64)> {
        let data = load_amat(fixture())?;
        let train_set = data.slice(0, 2000)?;
        let valid = data.slice(2000, 4000)?;
        let config = TrainConfig {
            epochs: 5,
            seed: 0,
            ..TrainConfig::default()
        };
        let (z2, _) = best_valid_error("z2cnn", &train_set, &valid, &config)?;
        let (p4, _) = best_valid_error("p4cnn", &train_set, &valid, &config)?;
        Ok((z2, p4))
    };
    match run() {
        Ok((z2, p4)) => {
            let detail = format!("validation error Z2CNN {z2:.4}, P4CNN {p4:.4}");
            if p4 < z2 {
                Outcome::Pass(detail)
            } else {
                Outcome::Fail(detail)
            }
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn full_protocol() -> Outcome {
    let Some(dir) = std::env::var_os("GCNN_DATA_DIR") else {
        return Outcome::Unverified("GCNN_DATA_DIR not set".into());
    };
    if std::env::var("GCNN_FULL_PROTOCOL").as_deref() != Ok("1") {
        return Outcome::Unverified("set GCNN_FULL_PROTOCOL=1 to run the multi-hour protocol".into());
    }
    let run = || -> gcnn::Result<Vec<(&'static str, f64)>> {
        let all = load_amat(dataset_file(&dir, TRAIN_VALID_FILE)?)?;
        let (train_set, valid) = split_train_valid(&all)?;
        let test = load_amat(dataset_file(&dir, TEST_FILE)?)?;
        let config = TrainConfig::default();
        let mut errors = Vec::new();
        for name in ["z2cnn", "p4cnn_rp", "p4cnn"] {
            let (_, mut best) = best_valid_error(name, &train_set, &valid, &config)?;
            errors.push((name, evaluate(&mut best, &test, config.batch_size)?));
        }
        Ok(errors)
    };
    match run() {
        Ok(errors) => {
            let e = |n: &str| errors.iter().find(|(m, _)| *m == n).map_or(f64::NAN, |x| x.1);
            let (z2, rp, p4) = (e("z2cnn"), e("p4cnn_rp"), e("p4cnn"));
            let detail = format!("test error Z2CNN {z2:.4}, P4CNN_RP {rp:.4}, P4CNN {p4:.4}");
            let targets = z2 <= 0.065 && rp <= 0.047 && p4 <= 0.038;
            if p4 < rp && rp < z2 {
                Outcome::Pass(format!("{detail}, absolute targets {}", if targets { "met" } else { "missed" }))
            } else {
                Outcome::Fail(detail)
            }
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn bench() -> Outcome {
    let mut worst = 0.0f64;
    for group in [GroupId::P4, GroupId::P4M] {
        match bench_gconv(group, &[8, 16], 4, 4, 3, 3) {
            Ok(rows) => worst = rows.iter().map(|r| r.overhead()).fold(worst, f64::max),
            Err(e) => return Outcome::Warn(e.to_string()),
        }
    }
    let detail = format!("worst fast/planar ratio {worst:.2}");
    if worst <= 4.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Warn(detail)
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { number: 1, name: "group laws", limit: Some(Duration::from_secs(1)), run: group_laws },
        Criterion { number: 2, name: "equivariance suite", limit: Some(Duration::from_secs(30)), run: equivariance },
        Criterion { number: 3, name: "fast path vs direct sums", limit: Some(Duration::from_secs(10)), run: oracle },
        Criterion { number: 4, name: "gradient suite", limit: Some(Duration::from_secs(60)), run: gradients },
        Criterion { number: 5, name: "parameter parity", limit: None, run: parameter_parity },
        Criterion { number: 6, name: "end-to-end invariance", limit: Some(Duration::from_secs(10)), run: invariance },
        Criterion { number: 7, name: "desk-scale learning", limit: Some(Duration::from_secs(30 * 60)), run: desk_scale },
        Criterion { number: 8, name: "full protocol", limit: None, run: full_protocol },
        Criterion { number: 9, name: "bench sanity", limit: None, run: bench },
    ];
    let mut failed = false;
    for c in criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let slow = c.limit.is_some_and(|l| elapsed > l);
        let (status, detail) = match outcome {
            Outcome::Pass(d) if slow => ("FAIL", format!("{d}; took longer than {:?}", c.limit.unwrap())),
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Warn(d) => ("WARN", d),
            Outcome::Unverified(d) => ("UNVERIFIED", d),
        };
        failed |= status == "FAIL";
        println!("{status} {}. {}: {detail} ({:.2}s)", c.number, c.name, elapsed.as_secs_f64());
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
