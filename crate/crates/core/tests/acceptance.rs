//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Runs as a plain binary (`harness = false`) so the report lines are never
//! captured. The end-to-end criteria train several networks and take minutes.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use spo2cam_core::calibration::{
    apply_calibration, fit_affine, fit_beta_fixed_alpha, AlphaMode, CalibrationConfig, CalibrationWindow, WindowMode,
};
use spo2cam_core::dataset::write_dataset;
use spo2cam_core::eval::{
    aligned_pcc, compute_errors, cross_raw, evaluate, loso_raw, percent_change, prepare_dataset, EvalConfig, Method,
    RawRun,
};
use spo2cam_core::preprocess::{Biquad, FramePolicy, LABEL_CUTOFF_HZ};
use spo2cam_core::synth::{generate_dataset, generate_m2_training_set, ChromophoreRanges, DatasetSpec, SkinOptics};
use spo2cam_core::tissue::{apply_m2, fit_m1_pairs, fit_m2, r_squared, sto2, xyz_to_chromophores, RgbTriple, XyzTriple};
use spo2cam_core::vc2s::{batch_gradients, forward, loss, Checkpoint, ModelParams, Sample, CHECKPOINT_VERSION, PARAM_NAMES};

struct Line {
    id: u8,
    pass: bool,
    detail: String,
}

fn line(id: u8, pass: bool, detail: impl Into<String>) -> Line {
    let l = Line { id, pass, detail: detail.into() };
    println!("criterion {:>2} {} {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.detail);
    l
}

fn c1_tissue_round_trip() -> Line {
    let t = Instant::now();
    let optics = SkinOptics::default();
    let ranges = ChromophoreRanges::default();
    let train = generate_m2_training_set(&optics, &ranges, 300, 101);
    let held = generate_m2_training_set(&optics, &ranges, 60, 202);
    let m2 = match fit_m2(&train) {
        Ok(f) => f.m2,
        Err(e) => return line(1, false, format!("fit_m2 failed: {e}")),
    };
    let raw: Vec<[f64; 3]> = held.iter().map(|s| apply_m2(&m2, s.xyz)).collect();
    let r2: Vec<f64> = (0..3)
        .map(|k| {
            let p: Vec<f64> = raw.iter().map(|r| r[k]).collect();
            let y: Vec<f64> = held.iter().map(|s| s.truth.as_array()[k]).collect();
            r_squared(&p, &y)
        })
        .collect();
    let mae = held
        .iter()
        .map(|s| (sto2(&xyz_to_chromophores(&m2, s.xyz)).unwrap_or(0.0) - sto2(&s.truth).unwrap()).abs())
        .sum::<f64>()
        / held.len() as f64;
    let secs = t.elapsed().as_secs_f64();
    let pass = r2.iter().all(|&r| r >= 0.95) && mae <= 2.0 && secs < 5.0;
    line(1, pass, format!("tissue round trip: held-out R² {r2:.4?} (≥ 0.95), StO2 MAE {mae:.3} (≤ 2), {secs:.2} s (< 5)"))
}

fn c2_m1_recovery() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = [[1.5, 0.41, 0.36, 0.18], [-0.8, 0.21, 0.72, 0.07], [2.1, 0.02, 0.12, 0.95]];
    let rgb: Vec<[f64; 3]> = (0..24).map(|_| std::array::from_fn(|_| rng.random_range(10.0..245.0))).collect();
    let map = |c: &[f64; 3]| -> [f64; 3] {
        std::array::from_fn(|k| truth[k][0] + truth[k][1] * c[0] + truth[k][2] * c[1] + truth[k][3] * c[2])
    };
    let noise = Normal::new(0.0, 0.5).unwrap();
    let noisy: Vec<(RgbTriple, XyzTriple)> = rgb
        .iter()
        .map(|c| (RgbTriple(*c), XyzTriple(map(c).map(|v| v + noise.sample(&mut rng)))))
        .collect();
    let clean: Vec<(RgbTriple, XyzTriple)> = rgb.iter().map(|c| (RgbTriple(*c), XyzTriple(map(c)))).collect();

    // Independent oracle: SVD pseudo-inverse of the design on the same data.
    let a = DMatrix::from_fn(24, 4, |i, j| if j == 0 { 1.0 } else { rgb[i][j - 1] });
    let y = DMatrix::from_fn(24, 3, |i, k| noisy[i].1 .0[k]);
    let oracle = a.pseudo_inverse(1e-12).unwrap() * y;

    let (fit, exact) = match (fit_m1_pairs(&noisy), fit_m1_pairs(&clean)) {
        (Ok(f), Ok(e)) => (f.m1.0, e.m1.0),
        _ => return line(2, false, "fit_m1 failed"),
    };
    let mut vs_oracle = 0.0f64;
    let mut vs_truth = 0.0f64;
    let mut noiseless = 0.0f64;
    for k in 0..3 {
        for j in 0..4 {
            vs_oracle = vs_oracle.max((fit[k][j] - oracle[(j, k)]).abs());
            vs_truth = vs_truth.max((fit[k][j] - truth[k][j]).abs());
            noiseless = noiseless.max((exact[k][j] - truth[k][j]).abs());
        }
    }
    let pass = vs_oracle <= 0.05 && noiseless <= 1e-9;
    line(
        2,
        pass,
        format!(
            "M1 recovery: σ=0.5 fit vs pseudo-inverse oracle {vs_oracle:.2e} (≤ 0.05), noiseless {noiseless:.2e} (≤ 1e-9); \
             noisy fit vs generating map {vs_truth:.3} (informational)"
        ),
    )
}

fn c3_gradient_check() -> Line {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ModelParams::init(&mut rng);
    let (h_px, w_px) = (60, 100);
    let xs: Vec<Sample> = (0..2)
        .map(|_| {
            let roi = (0..3 * h_px * w_px).map(|_| rng.random::<f64>()).collect();
            let checker = (0..72).map(|_| rng.random::<f64>()).collect();
            Sample::new(roi, h_px, w_px, checker).unwrap()
        })
        .collect();
    let labels = [88.0, 96.0];
    let batch: Vec<(&Sample, f64)> = xs.iter().zip(labels).collect();
    let (_, grads) = batch_gradients(&p, &batch);
    let objective = |q: &ModelParams| loss(&xs.iter().map(|x| forward(q, x)).collect::<Vec<_>>(), &labels);
    let mut worst = (0.0f64, String::new());
    // Same coordinates at a smaller step, reported alongside: a gap between
    // the two means a ReLU or max-pool switch inside [-h, h], not a wrong gradient.
    let mut worst_fine = 0.0f64;
    let rel_error = |tensor: usize, i: usize, h: f64| {
        let mut plus = p.clone();
        plus.tensors_mut()[tensor].values[i] += h;
        let mut minus = p.clone();
        minus.tensors_mut()[tensor].values[i] -= h;
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        let an = grads.tensors()[tensor].values[i];
        (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6)
    };
    let mut failing = 0;
    // Ten coordinates from each of the ten tensors so every layer is probed.
    for tensor in 0..10 {
        for _ in 0..10 {
            let i = rng.random_range(0..p.tensors()[tensor].len());
            let rel = rel_error(tensor, i, 1e-4);
            failing += usize::from(rel > 1e-3);
            if rel >= worst.0 {
                worst = (rel, format!("{}[{i}]", PARAM_NAMES[tensor]));
            }
            worst_fine = worst_fine.max(rel_error(tensor, i, 1e-5));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst.0 <= 1e-3 && secs < 60.0;
    line(
        3,
        pass,
        format!(
            "gradient check: 100 coordinates at 100x60, h=1e-4: {failing} above 1e-3, worst relative error {:.2e} at {} (≤ 1e-3), \
             {secs:.1} s (< 60); same coordinates at h=1e-5: worst {worst_fine:.2e} (informational)",
            worst.0, worst.1
        ),
    )
}

fn mse(pred: &[f64], truth: &[f64], alpha: f64, beta: f64) -> f64 {
    pred.iter().zip(truth).map(|(y, s)| (alpha * y + beta - s).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Exhaustive search over the (α, β) grid on [-10, 10]² at step 1e-3. For a
/// fixed α the squared error is a parabola in β, so the best β on the grid
/// is the grid point nearest the vertex; this visits every α exactly.
fn grid_search(pred: &[f64], truth: &[f64]) -> (f64, f64, f64) {
    let step = 1e-3;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for ia in -10_000..=10_000 {
        let a = ia as f64 * step;
        let vertex = truth.iter().zip(pred).map(|(s, y)| s - a * y).sum::<f64>() / pred.len() as f64;
        let ib = (vertex / step).round().clamp(-10_000.0, 10_000.0);
        for b in [ib - 1.0, ib, ib + 1.0] {
            if b.abs() > 10_000.0 {
                continue;
            }
            let b = b * step;
            let m = mse(pred, truth, a, b);
            if m < best.0 {
                best = (m, a, b);
            }
        }
    }
    best
}

fn c4_calibration_optimality() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..20 {
        let n = 270;
        let alpha0 = rng.random_range(0.5..5.0);
        let beta0 = rng.random_range(-9.0..9.0);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(82.0..99.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|s| (s - beta0) / alpha0 + rng.random_range(-0.5..0.5)).collect();
        let p = fit_affine(&pred, &truth, CalibrationWindow::first_n(n, n));
        let closed = mse(&pred, &truth, p.alpha, p.beta);
        let (grid, _, _) = grid_search(&pred, &truth);
        worst_excess = worst_excess.max(closed - grid);
    }
    // α ≤ 0: output is the window mean of truth regardless of pred.
    let truth: Vec<f64> = (0..40).map(|i| 85.0 + (i % 9) as f64).collect();
    let pred: Vec<f64> = (0..40).map(|i| (i * 7 % 13) as f64).collect();
    let window = CalibrationWindow::first_n(10, 40);
    let expected = truth[..10].iter().sum::<f64>() / 10.0;
    let mut constant_ok = true;
    for alpha in [0.0, -2.0] {
        let p = fit_beta_fixed_alpha(&pred, &truth, window.clone(), alpha);
        constant_ok &= apply_calibration(&pred, &p).iter().all(|&v| v == expected);
    }
    let pass = worst_excess <= 1e-12 && constant_ok;
    line(
        4,
        pass,
        format!(
            "calibration: closed-form MSE minus grid MSE at most {worst_excess:.2e} over 20 windows (grid step 1e-3, ≤ 1e-12); \
             α ≤ 0 gives window-mean constant: {constant_ok}"
        ),
    )
}

fn c5_filter() -> Line {
    let rate = 20.0;
    let f = Biquad::butterworth_lowpass(LABEL_CUTOFF_HZ, rate);
    let n = (600.0 * rate) as usize;
    let sine: Vec<f64> =
        (0..n).map(|i| 90.0 + 5.0 * (2.0 * std::f64::consts::PI * 0.5 * i as f64 / rate).sin()).collect();
    let y = f.filtfilt(&sine);
    // The padding transient decays within the first minute.
    let edge = (60.0 * rate) as usize;
    let residual = y[edge..n - edge].iter().map(|v| (v - 90.0).abs()).fold(0.0, f64::max);
    let atten_db = 20.0 * (residual / 5.0).log10();

    let dc = f.filtfilt(&vec![93.25; n]).iter().map(|v| (v - 93.25).abs()).fold(0.0, f64::max);

    // Long enough for the padding transients at both ends to die out
    // before they reach the other half.
    let m = 20_001;
    let pulse: Vec<f64> = (0..m).map(|i| 88.0 + 9.0 * (-((i as f64 - 10_000.0) / 150.0).powi(2)).exp()).collect();
    let z = f.filtfilt(&pulse);
    let asym = (0..m).map(|i| (z[i] - z[m - 1 - i]).abs()).fold(0.0, f64::max);

    let pass = atten_db <= -30.0 && dc <= 1e-9 && asym <= 1e-9;
    line(5, pass, format!("filter: 0.5 Hz at {rate} Hz attenuated {atten_db:.1} dB (≤ -30), DC error {dc:.1e}, asymmetry {asym:.1e} (≤ 1e-9)"))
}

fn c6_metrics() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..400);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(80.0..100.0)).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(75.0..100.0)).collect();
        let got = compute_errors(&pred, &truth).unwrap();
        let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let d = pred[i] - truth[i];
            abs += d.abs();
            sq += d * d;
            pct += (d / truth[i]).abs();
        }
        let k = n as f64;
        worst = worst
            .max((got.mae - abs / k).abs())
            .max((got.rmse - (sq / k).sqrt()).abs())
            .max((got.mape - 100.0 * pct / k).abs());
    }
    let mut shifts_ok = true;
    let rate = 1.0;
    for shift in 0..=10usize {
        let len = 300;
        let base: Vec<f64> = {
            let mut v = 92.0;
            (0..len + 2 * shift).map(|_| {
                v += rng.random_range(-1.0..1.0);
                v
            }).collect()
        };
        let truth = &base[shift..shift + len];
        let ahead = &base[2 * shift..2 * shift + len];
        let behind = &base[..len];
        for (pred, want) in [(ahead, shift as f64), (behind, -(shift as f64))] {
            match aligned_pcc(pred, truth, 10.0, rate) {
                Ok(Some((r, lag))) => shifts_ok &= lag == want && (r - 1.0).abs() <= 1e-12,
                _ => shifts_ok = false,
            }
        }
    }
    let pass = worst <= 1e-12 && shifts_ok;
    line(6, pass, format!("metrics: worst deviation from naive loop {worst:.1e} (≤ 1e-12) over 100 pairs; shifts ±0..10 s recovered: {shifts_ok}"))
}

fn cal(mode: WindowMode, count: usize) -> CalibrationConfig {
    CalibrationConfig { mode, count, alpha: AlphaMode::Auto }
}

fn mae_with(raw: &RawRun, cfg: &EvalConfig, calibration: CalibrationConfig) -> f64 {
    evaluate(raw, &EvalConfig { calibration, ..cfg.clone() }).map(|r| r.aggregate.mae.mean).unwrap_or(f64::NAN)
}

/// Evaluation settings shared by the synthetic end-to-end criteria. The
/// 24×24 ROI matches the synthetic frame size; every tenth frame of the
/// training videos keeps a full LOSO run within budget.
fn synthetic_cfg(method: Method) -> EvalConfig {
    EvalConfig { method, roi_size: (24, 24), train_stride: 10, ..EvalConfig::default() }
}

fn c7_c8_end_to_end(lines: &mut Vec<Line>) {
    let t = Instant::now();
    let optics = SkinOptics::default();
    let dataset = generate_dataset(&optics, &DatasetSpec::default()).expect("synthetic dataset");
    let vc2s_cfg = synthetic_cfg(Method::Vc2s);
    let base_cfg = synthetic_cfg(Method::Baseline);
    let prepared = prepare_dataset(&dataset, FramePolicy::Uniform1Hz, vc2s_cfg.roi_size).expect("prepare");
    let runs = loso_raw(&prepared, &vc2s_cfg).and_then(|v| Ok((v, loso_raw(&prepared, &base_cfg)?)));
    let (vc2s, baseline) = match runs {
        Ok(r) => r,
        Err(e) => {
            lines.push(line(7, false, format!("LOSO failed: {e}")));
            lines.push(line(8, false, "skipped: LOSO failed"));
            return;
        }
    };
    let secs = t.elapsed().as_secs_f64();
    let ours = mae_with(&vc2s, &vc2s_cfg, cal(WindowMode::FirstN, 270));
    let theirs = mae_with(&baseline, &base_cfg, cal(WindowMode::FirstN, 270));
    lines.push(line(
        7,
        ours <= 2.0 && theirs <= 3.0 && secs < 900.0,
        format!(
            "synthetic LOSO (6 subjects x 2 sessions): VC2S MAE {ours:.3} (≤ 2.0), baseline MAE {theirs:.3} (≤ 3.0), {secs:.0} s (< 900)"
        ),
    ));

    let long = ours;
    let first5 = mae_with(&vc2s, &vc2s_cfg, cal(WindowMode::FirstN, 5));
    let smart5 = mae_with(&vc2s, &vc2s_cfg, cal(WindowMode::IntelligentK, 5));

    // Cross-camera shift: training cameras vary in gain, the test camera
    // sits outside that range.
    let train = generate_dataset(
        &optics,
        &DatasetSpec { dataset_id: "CAMA".into(), gain_range: (0.8, 1.2), ..DatasetSpec::default() },
    );
    let test = generate_dataset(
        &optics,
        &DatasetSpec { dataset_id: "CAMB".into(), subjects: 3, sessions_per_subject: 1, gain_range: (1.3, 1.3), seed: 8, ..DatasetSpec::default() },
    );
    let color = train.and_then(|tr| Ok((tr, test?))).and_then(|(tr, te)| {
        let tp = prepare_dataset(&tr, FramePolicy::Uniform1Hz, vc2s_cfg.roi_size)?;
        let sp = prepare_dataset(&te, FramePolicy::Uniform1Hz, vc2s_cfg.roi_size)?;
        let mut out = [0.0; 2];
        for (slot, on) in out.iter_mut().zip([true, false]) {
            let cfg = EvalConfig { color_check: on, ..vc2s_cfg.clone() };
            *slot = mae_with(&cross_raw(&tp, &sp, &cfg)?, &cfg, cal(WindowMode::FirstN, 270));
        }
        Ok(out)
    });
    let (on, off) = match color {
        Ok([on, off]) => (on, off),
        Err(e) => {
            lines.push(line(8, false, format!("color-check run failed: {e}")));
            return;
        }
    };
    lines.push(line(
        8,
        long <= first5 && smart5 <= first5 && on <= off,
        format!(
            "ablation directions: 270-frame {long:.3} ≤ 5-frame {first5:.3}: {}; intelligent-5 {smart5:.3} ≤ first-5 {first5:.3}: {}; \
             color check on {on:.3} ≤ off {off:.3} under gain shift: {}",
            long <= first5,
            smart5 <= first5,
            on <= off
        ),
    ));
}

fn c9_delta() -> Line {
    let d = percent_change(3.24, 5.62);
    let pass = (d - (-42.3487544483986)).abs() <= 1e-9 && (d - (-42.4)).abs() <= 0.1;
    line(9, pass, format!("delta: (3.24 - 5.62) / 5.62 = {d:.4}% (reported -42.4 within 0.1)"))
}

fn c10_determinism() -> Line {
    let spec = DatasetSpec { subjects: 2, sessions_per_subject: 1, ..DatasetSpec::default() };
    let optics = SkinOptics::default();
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("ds{run}"));
        let ds = generate_dataset(&optics, &spec).unwrap();
        write_dataset(&dir, &ds).unwrap();
        trees.push(read_tree(&dir));

        let reloaded = spo2cam_core::dataset::load_dataset(&dir).unwrap();
        let cfg = EvalConfig {
            roi_size: (24, 24),
            train_stride: 15,
            frame_policy: FramePolicy::Uniform1Hz,
            train: spo2cam_core::vc2s::TrainConfig { epochs: 2, ..Default::default() },
            ..EvalConfig::default()
        };
        let prepared = prepare_dataset(&reloaded, cfg.frame_policy, cfg.roi_size).unwrap();
        let report = evaluate(&loso_raw(&prepared, &cfg).unwrap(), &cfg).unwrap();
        reports.push(serde_json::to_vec(&report).unwrap());
        let refs: Vec<_> = prepared.iter().collect();
        let outcome = spo2cam_core::eval::train_on(&refs, &cfg).unwrap();
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: cfg.train.clone(),
            rng_seed: cfg.train.rng_seed,
            color_check: cfg.color_check,
            roi_size: cfg.roi_size,
            loss_curve: outcome.loss_curve,
            params: outcome.params,
        };
        let path = tmp.path().join(format!("ckpt{run}.json"));
        ckpt.write(&path).unwrap();
        checkpoints.push(std::fs::read(&path).unwrap());
    }
    let pass = trees[0] == trees[1] && reports[0] == reports[1] && checkpoints[0] == checkpoints[1];
    line(
        10,
        pass,
        format!(
            "determinism: dataset trees identical {}, reports identical {}, checkpoints identical {}",
            trees[0] == trees[1],
            reports[0] == reports[1],
            checkpoints[0] == checkpoints[1]
        ),
    )
}

fn read_tree(root: &std::path::Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn main() {
    let mut lines = vec![c1_tissue_round_trip(), c2_m1_recovery(), c3_gradient_check(), c4_calibration_optimality(), c5_filter(), c6_metrics()];
    c7_c8_end_to_end(&mut lines);
    lines.push(c9_delta());
    lines.push(c10_determinism());
    let failed: Vec<u8> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("acceptance: {} of {} criteria pass", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
