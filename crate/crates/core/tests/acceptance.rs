//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 5-7, 9 and 10 share one trained model.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use memprobe::experiment::{
    load_control_set, load_training_set, recover_sample, run_e2e, DataSource, ExperimentConfig,
    RecoveryMode,
};
use memprobe::numerics::{derive_seed, Rng};
use memprobe::proxcheck::default_probe_points;
use memprobe::recovery::{baseline_iterate, data_fidelity_update, mask_update};
use memprobe::trainer::{TrainOutcome, Trainable};
use memprobe::{
    check_moreau, degrade, mse, project_spectral_norm, psnr, summarize, train, Activation,
    AutoencoderModel, DenseLayer, ErasureMask, EvalThresholds, Matrix, Model, TiedAutoencoder,
    Vector, Verdict,
};

type Check = Result<String, String>;

fn fail<T>(msg: impl Into<String>) -> Result<T, String> {
    Err(msg.into())
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn criterion1() -> Check {
    let mut rng = Rng::new(1);
    let mut worst_stationarity: f64 = 0.0;
    let mut min_gain = f64::INFINITY;
    for _ in 0..1000 {
        let d = 1 + rng.below(256);
        let y: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.uniform_range(-0.5, 1.5)).collect();
        let theta = ErasureMask::new((0..d).map(|_| rng.bernoulli(0.5)).collect());
        let gamma = 10f64.powf(rng.uniform_range(-2.0, 1.0));
        let z = data_fidelity_update(&y, &v, &theta, gamma).map_err(e)?;
        let th: Vec<f64> = theta
            .as_slice()
            .iter()
            .map(|&k| if k { 1.0 } else { 0.0 })
            .collect();

        for i in 0..d {
            let g = 2.0 * th[i] * (th[i] * z[i] - y[i]) + gamma * (z[i] - v[i]);
            worst_stationarity = worst_stationarity.max(g.abs());
        }
        let objective = |x: &[f64]| -> f64 {
            (0..d)
                .map(|i| (th[i] * x[i] - y[i]).powi(2) + 0.5 * gamma * (x[i] - v[i]).powi(2))
                .sum()
        };
        let base = objective(&z);
        for _ in 0..1000 {
            let dir: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let moved: Vec<f64> = z
                .iter()
                .zip(&dir)
                .map(|(a, p)| a + 1e-3 * p / norm)
                .collect();
            min_gain = min_gain.min(objective(&moved) - base);
        }
    }
    if worst_stationarity > 1e-10 {
        return fail(format!(
            "stationarity residual {worst_stationarity:e} > 1e-10"
        ));
    }
    if min_gain < 0.0 {
        return fail(format!(
            "a perturbation lowered the objective by {:e}",
            -min_gain
        ));
    }
    Ok(format!(
        "max stationarity residual {worst_stationarity:.1e}, min perturbation gain {min_gain:.1e}"
    ))
}

fn criterion2() -> Check {
    let mut rng = Rng::new(2);
    let n = 1_000_000;
    let mut y: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let mut x: Vec<f64> = (0..n).map(|_| rng.uniform_range(-0.5, 2.5)).collect();
    // Exact boundary cases.
    for k in 0..100 {
        y[k] = (k as f64 + 1.0) / 128.0;
        x[k] = if k % 2 == 0 { 2.0 * y[k] } else { 0.0 };
    }
    let mask = mask_update(&x, &y).map_err(e)?;
    let mismatches = (0..n)
        .filter(|&i| {
            let keep_cost = (x[i] - y[i]).powi(2);
            let erase_cost = y[i] * y[i];
            // Ties keep.
            let brute_keep = keep_cost <= erase_cost;
            brute_keep != mask.is_kept(i)
        })
        .count();
    if mismatches > 0 {
        return fail(format!("{mismatches} mismatches against brute force"));
    }
    Ok(format!("{n} coordinates, 0 mismatches"))
}

fn criterion3() -> Check {
    let mut rng = Rng::new(3);
    let mut certified = 0;
    let mut worst = String::new();
    for k in 0..100 {
        let d = 2 + rng.below(31);
        let m = 1 + rng.below(64);
        let mut ae = TiedAutoencoder::random(d, m, Activation::Softplus { beta: 1.0 }, &mut rng)
            .map_err(e)?;
        ae.weight_mut().scale(rng.uniform_range(0.5, 3.0));
        let ae = project_spectral_norm(&ae, 1.0).map_err(e)?;
        let probes = default_probe_points(d, 16, derive_seed(3, k), &[]);
        let report = check_moreau(&ae, &probes, 1e-6).map_err(e)?;
        if report.verdict == Verdict::Certified {
            certified += 1;
        } else if worst.is_empty() {
            worst = format!("model {k} (d={d}, m={m}): {}", report.summary());
        }
    }
    if certified != 100 {
        return fail(format!("{certified}/100 certified; first failure {worst}"));
    }
    let violator =
        TiedAutoencoder::new(Matrix::identity(4).scaled(2.0), Activation::Identity).map_err(e)?;
    let report = check_moreau(&violator, &default_probe_points(4, 4, 0, &[]), 1e-6).map_err(e)?;
    if report.verdict != Verdict::PremiseViolated || (report.eigen_max - 4.0).abs() > 1e-6 {
        return fail(format!(
            "violator got {} with eigen_max {}",
            report.verdict, report.eigen_max
        ));
    }
    Ok(format!(
        "100/100 certified; violator premise_violated, eigen_max {:.9}",
        report.eigen_max
    ))
}

/// Worst relative error between backprop and central differences, with
/// relative errors measured against `max(|analytic|, |numeric|, 1e-7)`.
fn gradcheck<M: Trainable>(model: &M, batch: &Matrix) -> Result<f64, String> {
    let (_, grad) = model.loss_and_grad(batch).map_err(e)?;
    let params = model.params();
    let h = 1e-6;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_params(&p).map_err(e)?;
        let plus = probe.loss_and_grad(batch).map_err(e)?.0;
        p[i] = params[i] - h;
        probe.set_params(&p).map_err(e)?;
        let minus = probe.loss_and_grad(batch).map_err(e)?.0;
        let numeric = (plus - minus) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    Ok(worst)
}

fn criterion4() -> Check {
    let mut rng = Rng::new(4);
    let batch = Matrix::from_fn(5, 8, |_, _| rng.uniform());
    let mut results = Vec::new();
    for act in [
        Activation::Softplus { beta: 1.0 },
        Activation::Prelu { slope: 0.25 },
        Activation::LeakyRelu { slope: 0.1 },
    ] {
        let layers = vec![
            DenseLayer::init(8, 6, Some(act), true, &mut rng),
            DenseLayer::init(6, 4, Some(act), true, &mut rng),
            DenseLayer::init(4, 8, None, true, &mut rng),
        ];
        let mut model = AutoencoderModel::from_layers(layers).map_err(e)?;
        // Nonzero biases so every bias gradient is exercised.
        for layer in model.layers_mut() {
            if let Some(b) = &mut layer.bias {
                b.iter_mut().for_each(|v| *v = rng.uniform_range(-0.1, 0.1));
            }
        }
        results.push((format!("3-layer {act}"), gradcheck(&model, &batch)?));
    }
    let tied =
        TiedAutoencoder::random(8, 5, Activation::Softplus { beta: 1.0 }, &mut rng).map_err(e)?;
    results.push(("tied softplus".into(), gradcheck(&tied, &batch)?));
    let summary: Vec<String> = results
        .iter()
        .map(|(n, r)| format!("{n} {r:.1e}"))
        .collect();
    if let Some((name, err)) = results.iter().find(|(_, r)| *r > 1e-4) {
        return fail(format!("{name}: relative error {err:e} > 1e-4"));
    }
    Ok(format!("max relative errors: {}", summary.join(", ")))
}

struct Fixture {
    cfg: ExperimentConfig,
    data: Vec<Vector>,
    outcome: TrainOutcome<Model>,
}

fn train_fixture() -> Result<Fixture, String> {
    let cfg = ExperimentConfig {
        control: Some(DataSource::Synthetic { count: 20 }),
        ..ExperimentConfig::default()
    };
    let data: Vec<Vector> = load_training_set(&cfg)
        .map_err(e)?
        .into_iter()
        .map(|r| r.data)
        .collect();
    let model = cfg
        .model
        .build(cfg.geometry.len(), &mut Rng::new(cfg.seed))
        .map_err(e)?;
    let outcome = train(model, &data, &cfg.train_config()).map_err(e)?;
    Ok(Fixture { cfg, data, outcome })
}

fn criterion5(fx: &Fixture) -> Check {
    let out = &fx.outcome;
    if !out.reached_target || out.final_loss > 1e-8 {
        return fail(format!(
            "training stopped at loss {:e} after {} epochs",
            out.final_loss, out.epochs
        ));
    }
    let mut worst_fit: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    for x in &fx.data {
        let fx_ = memprobe::Autoencoder::forward(&out.model, x).map_err(e)?;
        worst_fit = worst_fit.max(mse(&fx_, x).map_err(e)?);
        let it = baseline_iterate(&out.model, x, 1000, 1e-12, None).map_err(e)?;
        worst_step = it.change_trace.iter().copied().fold(worst_step, f64::max);
    }
    if worst_fit > 1e-6 || worst_step > 1e-6 {
        return fail(format!(
            "worst per-sample reconstruction {worst_fit:e}, worst baseline step {worst_step:e}"
        ));
    }
    Ok(format!(
        "loss {:.3e} after {} epochs; worst per-sample reconstruction {worst_fit:.1e}, worst baseline step {worst_step:.1e}",
        out.final_loss, out.epochs
    ))
}

/// Per-sample recovery MSEs for one method on degraded versions of `images`.
fn recovery_mses(
    cfg: &ExperimentConfig,
    model: &Model,
    mode: RecoveryMode,
    images: &[Vector],
) -> Result<Vec<f64>, String> {
    images
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let spec = cfg.degradation_for(i).map_err(e)?;
            let y = degrade(x, &spec).map_err(e)?;
            let r = recover_sample(cfg, model, mode, i, &y, &spec.mask).map_err(e)?;
            mse(&r.estimate, x).map_err(e)
        })
        .collect()
}

fn criterion6(fx: &Fixture) -> Result<(String, [usize; 4]), String> {
    let t = EvalThresholds::default();
    let model = &fx.outcome.model;
    let count = |mode| -> Result<usize, String> {
        let m = recovery_mses(&fx.cfg, model, mode, &fx.data)?;
        Ok(summarize(&m, t).map_err(e)?.n_accurate)
    };
    let known = count(RecoveryMode::KnownH)?;
    let unknown = count(RecoveryMode::UnknownH)?;
    let baseline = count(RecoveryMode::Baseline)?;
    let control_images: Vec<Vector> = load_control_set(&fx.cfg)
        .map_err(e)?
        .ok_or("no control set configured")?
        .into_iter()
        .map(|r| r.data)
        .collect();
    let control_mses = recovery_mses(&fx.cfg, model, RecoveryMode::UnknownH, &control_images)?;
    let control = summarize(&control_mses, t).map_err(e)?.n_accurate;
    let detail = format!(
        "accurate: known-h {known}/20, unknown-h {unknown}/20, baseline {baseline}/20; non-training {control}/20"
    );
    let ok = known >= unknown && unknown >= baseline + 2 && control == 0;
    if ok {
        Ok((detail, [known, unknown, baseline, control]))
    } else {
        Err(detail)
    }
}

fn criterion7(fx: &Fixture) -> Check {
    let mut rates = Vec::new();
    for threshold in [1e-4, 1e-6, 1e-8] {
        let ckpt = fx
            .outcome
            .checkpoint(threshold)
            .ok_or(format!("no checkpoint at {threshold:e}"))?;
        let m = recovery_mses(&fx.cfg, &ckpt.model, RecoveryMode::UnknownH, &fx.data)?;
        rates.push((
            threshold,
            summarize(&m, EvalThresholds::default())
                .map_err(e)?
                .approximate_rate,
        ));
    }
    let detail: Vec<String> = rates
        .iter()
        .map(|(t, r)| format!("{t:e}: {r:.2}"))
        .collect();
    if rates.windows(2).any(|w| w[1].1 < w[0].1) {
        return fail(format!("approximate rate decreased: {}", detail.join(", ")));
    }
    Ok(format!("unknown-h approximate rate {}", detail.join(", ")))
}

fn criterion8() -> Check {
    let a = psnr(1e-7);
    let b = psnr(5e-4);
    if (a - 70.0).abs() > 1e-3 || (b - 33.0103).abs() > 1e-3 {
        return fail(format!("psnr(1e-7) = {a}, psnr(5e-4) = {b}"));
    }
    Ok(format!("psnr(1e-7) = {a:.6} dB, psnr(5e-4) = {b:.6} dB"))
}

fn criterion9(fx: &Fixture) -> Check {
    let cfg = ExperimentConfig {
        sigma_eps: 0.02,
        ..fx.cfg.clone()
    };
    let t = EvalThresholds::default();
    let model = &fx.outcome.model;
    let unknown = summarize(
        &recovery_mses(&cfg, model, RecoveryMode::UnknownH, &fx.data)?,
        t,
    )
    .map_err(e)?
    .avg_psnr_db;
    let baseline = summarize(
        &recovery_mses(&cfg, model, RecoveryMode::Baseline, &fx.data)?,
        t,
    )
    .map_err(e)?
    .avg_psnr_db;
    let detail = format!("avg psnr unknown-h {unknown:.2} dB, baseline {baseline:.2} dB");
    if unknown >= baseline + 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const SUMMARY_FILES: [&str; 10] = [
    "summary.json",
    "train_summary.json",
    "metrics_unknown-h.csv",
    "metrics_known-h.csv",
    "metrics_baseline.csv",
    "metrics_control.csv",
    "records_unknown-h.json",
    "records_known-h.json",
    "records_baseline.json",
    "records_control.json",
];

fn criterion10(fx: &Fixture, c6: Option<[usize; 4]>) -> Check {
    let root = tempfile::tempdir().map_err(e)?;
    let run = |name: &str| -> Result<std::path::PathBuf, String> {
        let out = root.path().join(name);
        let cfg = ExperimentConfig {
            output: out.clone(),
            ..fx.cfg.clone()
        };
        run_e2e(&cfg).map_err(e)?;
        Ok(out)
    };
    let a = run("first")?;
    let b = run("second")?;
    for f in SUMMARY_FILES {
        let read = |dir: &Path| std::fs::read(dir.join(f)).map_err(|err| format!("{f}: {err}"));
        if read(&a)? != read(&b)? {
            return fail(format!("{f} differs between runs"));
        }
    }
    // The pipeline must agree with the in-process criterion 6 run.
    if let Some(counts) = c6 {
        let summary: serde_json::Value =
            serde_json::from_slice(&std::fs::read(a.join("summary.json")).map_err(e)?)
                .map_err(e)?;
        let got = |mode: &str| {
            summary["modes"][mode]["n_accurate"]
                .as_u64()
                .unwrap_or(u64::MAX) as usize
        };
        let pipeline = [
            got("known-h"),
            got("unknown-h"),
            got("baseline"),
            got("control"),
        ];
        if pipeline != counts {
            return fail(format!(
                "pipeline counts {pipeline:?} differ from in-process {counts:?}"
            ));
        }
    }
    Ok(format!(
        "{} summary files byte-identical across two runs",
        SUMMARY_FILES.len()
    ))
}

fn report(id: usize, name: &str, limit: Duration, started: Instant, result: &Check) -> bool {
    let elapsed = started.elapsed();
    let in_time = elapsed <= limit;
    let ok = result.is_ok() && in_time;
    let detail = match result {
        Ok(d) => d.clone(),
        Err(d) => d.clone(),
    };
    let time_note = if in_time {
        String::new()
    } else {
        format!(" [over time limit of {}s]", limit.as_secs())
    };
    println!(
        "{} criterion {id:>2} ({name}): {detail} ({:.1}s){time_note}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() -> ExitCode {
    let mut all_ok = true;
    let minutes = |m: u64| Duration::from_secs(60 * m);

    let t = Instant::now();
    all_ok &= report(
        1,
        "data fidelity closed form",
        Duration::from_secs(10),
        t,
        &criterion1(),
    );
    let t = Instant::now();
    all_ok &= report(
        2,
        "mask update oracle",
        Duration::from_secs(5),
        t,
        &criterion2(),
    );
    let t = Instant::now();
    all_ok &= report(
        3,
        "proximity certification",
        Duration::from_secs(60),
        t,
        &criterion3(),
    );
    let t = Instant::now();
    all_ok &= report(
        4,
        "gradient check",
        Duration::from_secs(5),
        t,
        &criterion4(),
    );

    let t = Instant::now();
    let fixture = train_fixture();
    match &fixture {
        Ok(fx) => {
            all_ok &= report(
                5,
                "perfect-fit fixed points",
                minutes(10),
                t,
                &criterion5(fx),
            );
            let t = Instant::now();
            let c6 = criterion6(fx);
            let counts = c6.as_ref().ok().map(|(_, c)| *c);
            all_ok &= report(6, "recovery ordering", minutes(15), t, &c6.map(|(d, _)| d));
            let t = Instant::now();
            all_ok &= report(
                7,
                "overfitting monotonicity",
                minutes(10),
                t,
                &criterion7(fx),
            );
            let t = Instant::now();
            all_ok &= report(
                8,
                "metric anchors",
                Duration::from_secs(1),
                t,
                &criterion8(),
            );
            let t = Instant::now();
            all_ok &= report(9, "noise robustness", minutes(15), t, &criterion9(fx));
            let t = Instant::now();
            all_ok &= report(10, "determinism", minutes(15), t, &criterion10(fx, counts));
        }
        Err(err) => {
            all_ok = false;
            for (id, name) in [
                (5, "perfect-fit fixed points"),
                (6, "recovery ordering"),
                (7, "overfitting monotonicity"),
                (9, "noise robustness"),
                (10, "determinism"),
            ] {
                println!("FAIL criterion {id:>2} ({name}): training failed: {err}");
            }
            let t = Instant::now();
            all_ok &= report(
                8,
                "metric anchors",
                Duration::from_secs(1),
                t,
                &criterion8(),
            );
        }
    }

    if all_ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
