//! Acceptance suite. One test per acceptance criterion; each prints a
//! PASS line with the measured quantities (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssnet_core::ace;
use ssnet_core::error::{Error, WeightsError};
use ssnet_core::metrics;
use ssnet_core::network::{
    gradcheck_loss, hybrid_loss, init_weights, SSNet, SSNetConfig, SSNetWeights,
};
use ssnet_core::priors;
use ssnet_core::ssm::{
    cm_s6_forward, gradcheck_scan, prepare_scan, s6_bidirectional, s6_forward, s6_scan_parallel,
    s6_scan_seq, BidirectionalParams, S6Params, ScanBackend,
};
use ssnet_core::tensor::{conv2d_param_grads, flip_seq, Conv2DParams, DenseArray, Scalar};

fn rand_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> DenseArray<T> {
    let len: usize = shape.iter().product();
    DenseArray::new(
        shape,
        (0..len).map(|_| T::from_f64(rng.gen_range(lo..hi))).collect(),
    )
    .unwrap()
}

fn rand_params<T: Scalar>(rng: &mut ChaCha8Rng, d: usize, n: usize) -> S6Params<T> {
    let scale = 1.0 / (d as f64).sqrt();
    S6Params::new(
        DenseArray::new(
            vec![d, n],
            (0..d * n)
                .map(|i| T::from_f64((((i % n) + 1) as f64).ln()))
                .collect(),
        )
        .unwrap(),
        rand_tensor(rng, vec![d], -1.0, 1.0),
        rand_tensor(rng, vec![d, n], -scale, scale),
        rand_tensor(rng, vec![d, n], -scale, scale),
        rand_tensor(rng, vec![d, d], -scale, scale),
        rand_tensor(rng, vec![d], -2.0, 0.0),
    )
    .unwrap()
}

/// Criterion 1: parallel/sequential scan agreement over 50 random
/// configurations with L up to 16384, in both precisions, within 30 s.
#[test]
fn criterion_01_scan_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst32 = 0.0f64;
    let mut worst64 = 0.0f64;
    for case in 0..50 {
        let l = match case {
            0 | 1 => 16384,
            2 => 8192,
            _ => {
                let exp = rng.gen_range(0..14u32);
                rng.gen_range(1usize..=(1usize << exp))
            }
        };
        let d = rng.gen_range(1..=16);
        let n = rng.gen_range(1..=16);

        let p32: S6Params<f32> = rand_params(&mut rng, d, n);
        let f32_seq = rand_tensor::<f32>(&mut rng, vec![l, d], -1.0, 1.0);
        let inputs = prepare_scan(&f32_seq, &f32_seq, &p32).unwrap();
        let dev32 = s6_scan_seq(&inputs).max_abs_diff(&s6_scan_parallel(&inputs)) as f64;
        assert!(dev32 <= 1e-5, "case {case} (L={l},D={d},N={n}): f32 dev {dev32}");
        worst32 = worst32.max(dev32);

        let p64: S6Params<f64> = rand_params(&mut rng, d, n);
        let f64_seq = rand_tensor::<f64>(&mut rng, vec![l, d], -1.0, 1.0);
        let inputs = prepare_scan(&f64_seq, &f64_seq, &p64).unwrap();
        let dev64 = s6_scan_seq(&inputs).max_abs_diff(&s6_scan_parallel(&inputs));
        assert!(dev64 <= 1e-10, "case {case} (L={l},D={d},N={n}): f64 dev {dev64}");
        worst64 = worst64.max(dev64);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s exceeds 30s");
    println!(
        "criterion 01 PASS: scan oracle equivalence over 50 configs \
         (worst f32 dev {worst32:.2e} <= 1e-5, worst f64 dev {worst64:.2e} <= 1e-10, {elapsed:.1}s < 30s)"
    );
}

/// Criterion 2: CM-S6 with both inputs equal is bit-identical to S6.
#[test]
fn criterion_02_cms6_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..20 {
        let (l, d, n) = (rng.gen_range(1..128), rng.gen_range(1..6), rng.gen_range(1..8));
        let p: S6Params<f32> = rand_params(&mut rng, d, n);
        let f = rand_tensor::<f32>(&mut rng, vec![l, d], -1.0, 1.0);
        for backend in [ScanBackend::Sequential, ScanBackend::Parallel] {
            let a = s6_forward(&f, &p, backend).unwrap();
            let b = cm_s6_forward(&f, &f, &p, backend).unwrap();
            let identical = a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(identical, "case {case} ({backend:?}): outputs differ in bits");
        }
    }
    println!("criterion 02 PASS: cm_s6_forward(f,f,p) bit-identical to s6_forward(f,p) on 20 instances");
}

/// Criterion 3: scan backward and loss gradients match central finite
/// differences (relative error < 1e-4, f64) on 10 seeded instances
/// each, and the gradcheck command exits 0.
#[test]
fn criterion_03_gradient_checks() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let scan = gradcheck_scan(seed, 16, 2, 3, false);
        assert!(scan.passes(1e-4), "scan seed {seed}: {scan:?}");
        let cm = gradcheck_scan(seed, 16, 2, 3, true);
        assert!(cm.passes(1e-4), "cm scan seed {seed}: {cm:?}");
        let loss = gradcheck_loss(seed, 12, 12).unwrap();
        assert!(loss.passes(1e-4), "loss seed {seed}: {loss:?}");
        worst = worst.max(scan.max_rel_err).max(cm.max_rel_err).max(loss.max_rel_err);
    }
    let status = Command::new(env!("CARGO_BIN_EXE_ssnet"))
        .args(["gradcheck", "--op", "s6", "--seed", "0"])
        .status()
        .unwrap();
    assert!(status.success(), "gradcheck binary exited {status:?}");
    println!(
        "criterion 03 PASS: 30 gradient checks with worst relative error {worst:.2e} < 1e-4; \
         `gradcheck --op s6 --seed 0` exits 0"
    );
}

/// Criterion 4: the scan is direction sensitive, and the bidirectional
/// wrapper's reverse half equals the oracle on the reversed sequence.
#[test]
fn criterion_04_direction_sensitivity_and_flip_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (l, d, n) = (33, 3, 4);
    let p: S6Params<f32> = rand_params(&mut rng, d, n);
    let f = rand_tensor::<f32>(&mut rng, vec![l, d], -1.0, 1.0);

    let forward = s6_forward(&f, &p, ScanBackend::Sequential).unwrap();
    let flipped = flip_seq(&s6_forward(&flip_seq(&f), &p, ScanBackend::Sequential).unwrap());
    let gap = forward.max_abs_diff(&flipped);
    assert!(gap > 1e-3, "no direction sensitivity observed (gap {gap})");

    let bidi = BidirectionalParams {
        fwd: rand_params(&mut rng, d, n),
        bwd: rand_params(&mut rng, d, n),
    };
    let out = s6_bidirectional(&f, &bidi, ScanBackend::Parallel).unwrap();
    let oracle = flip_seq(&s6_forward(&flip_seq(&f), &bidi.bwd, ScanBackend::Sequential).unwrap());
    let mut worst = 0.0f32;
    for k in 0..l {
        for di in 0..d {
            worst = worst.max((out.at2(k, d + di) - oracle.at2(k, di)).abs());
        }
    }
    assert!(worst <= 1e-6, "reverse half deviates by {worst}");
    println!(
        "criterion 04 PASS: direction gap {gap:.3} > 0; reverse half matches reversed oracle \
         within {worst:.2e} <= 1e-6"
    );
}

/// Criterion 5: Otsu equals the exhaustive 256-threshold sweep on 100
/// random 8-bit images, exactly.
#[test]
fn criterion_05_otsu_matches_exhaustive_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..100 {
        let h = rng.gen_range(2..24);
        let w = rng.gen_range(2..24);
        let img = DenseArray::new(
            vec![1, h, w],
            (0..h * w)
                .map(|_| rng.gen_range(0..=255u32) as f32 / 255.0)
                .collect(),
        )
        .unwrap();
        let (t, _, _) = priors::otsu_threshold(&img).unwrap();

        // independent sweep: per-candidate class statistics from scratch
        let bins: Vec<u64> = img
            .data()
            .iter()
            .map(|&v| (v * 255.0).round() as u64)
            .collect();
        let mut best_k = 0usize;
        let mut best: Option<(u128, u128)> = None;
        for k in 0..256u64 {
            let (mut w0, mut s0, mut w1, mut s1) = (0u64, 0u64, 0u64, 0u64);
            for &b in &bins {
                if b <= k {
                    w0 += 1;
                    s0 += b;
                } else {
                    w1 += 1;
                    s1 += b;
                }
            }
            if w0 == 0 || w1 == 0 {
                continue;
            }
            let diff = (s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128).unsigned_abs();
            let (num, den) = (diff * diff, w0 as u128 * w1 as u128);
            let better = match best {
                None => true,
                Some((bn, bd)) => num * bd > bn * den,
            };
            if better {
                best = Some((num, den));
                best_k = k as usize;
            }
        }
        assert_eq!(
            t,
            best_k as f32 / 255.0,
            "case {case} ({h}x{w}): threshold mismatch"
        );
    }
    println!("criterion 05 PASS: Otsu threshold equals the exhaustive variance sweep on 100 images");
}

/// Criterion 6: the morphological gradient equals the windowed
/// max-minus-min oracle exactly; constants give zero.
#[test]
fn criterion_06_morphological_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..100 {
        let h = rng.gen_range(1..16);
        let w = rng.gen_range(1..16);
        let img = DenseArray::new(
            vec![1, h, w],
            (0..h * w)
                .map(|_| rng.gen_range(0..=255u32) as f32 / 255.0)
                .collect(),
        )
        .unwrap();
        let g = priors::morphological_gradient(&img).unwrap();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut hi = f32::NEG_INFINITY;
                let mut lo = f32::INFINITY;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                        let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                        hi = hi.max(img.at3(0, yy, xx));
                        lo = lo.min(img.at3(0, yy, xx));
                    }
                }
                assert_eq!(
                    g.at3(0, y as usize, x as usize),
                    hi - lo,
                    "case {case} at ({y},{x})"
                );
            }
        }
    }
    let constant = DenseArray::full(vec![1, 9, 7], 0.42);
    let g = priors::morphological_gradient(&constant).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));
    println!("criterion 06 PASS: morphological gradient equals the window oracle on 100 images, zero on constants");
}

/// Criterion 7: ACE output range, monotonicity, sort-oracle percentile
/// bounds, and the 1%/1% defaults.
#[test]
fn criterion_07_ace_contract() {
    assert_eq!(ace::DEFAULT_LOW_PCT, 1.0);
    assert_eq!(ace::DEFAULT_HIGH_PCT, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..50 {
        let n = rng.gen_range(2..400);
        let values: Vec<f32> = (0..n)
            .map(|_| rng.gen_range(0..=255u32) as f32 / 255.0)
            .collect();
        let depth = DenseArray::new(vec![1, 1, n], values.clone()).unwrap();
        let (low_pct, high_pct) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let bounds = ace::percentile_bounds(&depth, low_pct, high_pct).unwrap();

        // independent sort oracle
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = |p: f64| -> usize {
            ((p * (n - 1) as f64).round().max(0.0) as usize).min(n - 1)
        };
        assert_eq!(bounds.low, sorted[rank(low_pct / 100.0)], "case {case}");
        assert_eq!(bounds.high, sorted[rank(1.0 - high_pct / 100.0)], "case {case}");

        let out = ace::ace(&depth, &bounds).unwrap();
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mut pairs: Vec<(f32, f32)> = values
            .iter()
            .copied()
            .zip(out.data().iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1, "case {case}: not monotone");
        }
    }
    println!("criterion 07 PASS: ACE in [0,1], monotone, bounds equal the sort oracle, defaults 1%/1%");
}

/// Criterion 8: deterministic end-to-end forward at the desk-scale
/// configuration within 10 s, sensitive to single-pixel perturbations;
/// paper-scale state dimension smoke-tested once.
#[test]
fn criterion_08_end_to_end_forward() {
    let cfg = SSNetConfig {
        height: 64,
        width: 64,
        base_channels: 8,
        decoder_dim: 16,
        state_dim: 8,
        seed: 7,
    };
    let weights = init_weights(&cfg, cfg.seed).unwrap();
    let net = SSNet::from_weights(cfg, &weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let rgb = rand_tensor::<f32>(&mut rng, vec![3, 64, 64], 0.0, 1.0);
    let depth = rand_tensor::<f32>(&mut rng, vec![1, 64, 64], 0.0, 1.0);

    let start = Instant::now();
    let p1 = net.forward(&rgb, &depth).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "forward took {elapsed:.2}s");
    assert_eq!(p1.shape(), [1, 64, 64]);
    assert!(p1.data().iter().all(|&v| v > 0.0 && v < 1.0));

    let p2 = net.forward(&rgb, &depth).unwrap();
    assert!(p1.data().iter().zip(p2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let mut perturbed = depth.clone();
    let idx = 17 * 64 + 40;
    perturbed.data_mut()[idx] = (perturbed.data()[idx] + 0.31).min(1.0);
    let p3 = net.forward(&rgb, &perturbed).unwrap();
    assert!(p1.max_abs_diff(&p3) > 0.0, "single-pixel perturbation had no effect");

    // paper-scale state dimension
    let cfg64 = SSNetConfig {
        state_dim: 64,
        ..cfg
    };
    let weights64 = init_weights(&cfg64, 1).unwrap();
    let p64 = SSNet::from_weights(cfg64, &weights64)
        .unwrap()
        .forward(&rgb, &depth)
        .unwrap();
    assert_eq!(p64.shape(), [1, 64, 64]);
    assert!(p64.data().iter().all(|&v| v > 0.0 && v < 1.0));

    println!(
        "criterion 08 PASS: deterministic [1,64,64] map in (0,1) in {elapsed:.2}s < 10s; \
         perturbation propagates; N=64 smoke ok"
    );
}

/// Criterion 9: metric sanity values and invariance under joint flips.
#[test]
fn criterion_09_metrics_sanity() {
    let gt = DenseArray::from_fn_3d(1, 16, 20, |_, y, x| {
        if (4..12).contains(&y) && (5..14).contains(&x) {
            1.0
        } else {
            0.0
        }
    });
    assert_eq!(metrics::mae(&gt, &gt).unwrap(), 0.0);
    let (f, _) = metrics::f_beta(&gt, &gt).unwrap();
    assert_eq!(f, 1.0);
    let (e_max, _) = metrics::e_measure(&gt, &gt).unwrap();
    assert_eq!(e_max, 1.0);

    let disjoint = DenseArray::from_fn_3d(1, 16, 20, |_, y, x| {
        if y < 3 && x < 3 {
            1.0
        } else {
            0.0
        }
    });
    let (f, _) = metrics::f_beta(&disjoint, &gt).unwrap();
    assert_eq!(f, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let pred = DenseArray::new(
        vec![1, 16, 20],
        (0..320)
            .map(|_| rng.gen_range(0..=255u32) as f32 / 255.0)
            .collect(),
    )
    .unwrap();
    let flip = |img: &DenseArray, horizontal: bool| {
        DenseArray::from_fn_3d(1, 16, 20, |_, y, x| {
            if horizontal {
                img.at3(0, y, 19 - x)
            } else {
                img.at3(0, 15 - y, x)
            }
        })
    };
    let base = metrics::evaluate_pair(&pred, &gt).unwrap();
    for horizontal in [true, false] {
        let report = metrics::evaluate_pair(&flip(&pred, horizontal), &flip(&gt, horizontal)).unwrap();
        assert!((base.mae - report.mae).abs() < 1e-12);
        assert!((base.f_beta_max - report.f_beta_max).abs() < 1e-12);
        assert!((base.s_measure - report.s_measure).abs() < 1e-9);
        assert!((base.e_measure_max - report.e_measure_max).abs() < 1e-12);
        assert!((base.e_measure_mean - report.e_measure_mean).abs() < 1e-12);
    }
    println!("criterion 09 PASS: perfect/disjoint sanity values and joint-flip invariance hold");
}

/// Criterion 10: serialization round trip over 1000 random tensors and
/// distinct rejection kinds for corrupted files.
#[test]
fn criterion_10_serialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut weights = SSNetWeights::new();
    for i in 0..1000 {
        let rank = rng.gen_range(1..=4usize);
        let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..6usize)).collect();
        let len: usize = shape.iter().product();
        let data: Vec<f32> = (0..len).map(|_| rng.gen_range(-100.0f32..100.0)).collect();
        weights.insert(format!("t.{i}"), DenseArray::new(shape, data).unwrap());
    }
    let bytes = weights.to_bytes();
    let back = SSNetWeights::from_bytes(&bytes).unwrap();
    assert_eq!(weights, back);

    let mut bad_magic = bytes.clone();
    bad_magic[1] = b'?';
    assert!(matches!(
        SSNetWeights::from_bytes(&bad_magic),
        Err(Error::Weights(WeightsError::BadMagic { .. }))
    ));

    let mut bad_version = bytes.clone();
    bad_version[4] = 7;
    assert!(matches!(
        SSNetWeights::from_bytes(&bad_version),
        Err(Error::Weights(WeightsError::UnsupportedVersion { found: 7 }))
    ));

    let truncated = &bytes[..bytes.len() - 2];
    match SSNetWeights::from_bytes(truncated) {
        Err(Error::Weights(WeightsError::TruncatedTensor { name })) => {
            assert!(name.starts_with("t."), "unexpected tensor name {name}");
        }
        other => panic!("expected TruncatedTensor, got {other:?}"),
    }

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(
        SSNetWeights::from_bytes(&trailing),
        Err(Error::Weights(WeightsError::TrailingBytes { extra: 1 }))
    ));

    println!("criterion 10 PASS: 1000-tensor round trip bit-exact; corruption kinds distinct");
}

/// Criterion 11: one gradient step on the reconstruction head strictly
/// reduces the hybrid loss on a fixed toy pair.
#[test]
fn criterion_11_trainability_smoke_test() {
    let cfg = SSNetConfig {
        height: 32,
        width: 32,
        base_channels: 4,
        decoder_dim: 4,
        state_dim: 2,
        seed: 3,
    };
    let weights = init_weights(&cfg, cfg.seed).unwrap();
    let mut net = SSNet::from_weights(cfg, &weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let rgb = rand_tensor::<f32>(&mut rng, vec![3, 32, 32], 0.0, 1.0);
    let depth = rand_tensor::<f32>(&mut rng, vec![1, 32, 32], 0.0, 1.0);
    let gt = DenseArray::from_fn_3d(1, 32, 32, |_, y, x| {
        if (10..26).contains(&y) && (6..22).contains(&x) {
            1.0
        } else {
            0.0
        }
    });

    let (p0, head_in) = net.forward_traced(&rgb, &depth).unwrap();
    let loss0 = hybrid_loss(&p0, &gt).unwrap();
    let dz = loss0
        .grad
        .zip_with(&p0, "chain", |g, pv| g * pv * (1.0 - pv))
        .unwrap();
    let head = net.params().rm.head.clone();
    let (dw, db) = conv2d_param_grads(&head_in, &head, &dz).unwrap();
    let lr = 0.05f32;
    net.set_rm_head(
        Conv2DParams::new(
            head.weights.zip_with(&dw, "step", |w, g| w - lr * g).unwrap(),
            head.bias.zip_with(&db, "step", |b, g| b - lr * g).unwrap(),
            1,
            0,
        )
        .unwrap(),
    );
    let loss1 = hybrid_loss(&net.forward(&rgb, &depth).unwrap(), &gt).unwrap();
    assert!(
        loss1.total < loss0.total,
        "loss did not decrease: {} -> {}",
        loss0.total,
        loss1.total
    );
    println!(
        "criterion 11 PASS: head gradient step reduces loss {:.6} -> {:.6}",
        loss0.total, loss1.total
    );
}

/// Criterion 12: scan performance as reported by `bench-scan`; at least
/// 2x over the sequential oracle on 4+ cores, warning-only below.
#[test]
fn criterion_12_scan_performance() {
    let out = Command::new(env!("CARGO_BIN_EXE_ssnet"))
        .args([
            "bench-scan", "--L", "16384", "--D", "16", "--N", "16", "--mode", "par",
            "--repeats", "3",
        ])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    // bench-scan itself enforces the policy: exit 4 when a deviation or
    // a sub-2x speedup on 4+ cores is observed, warning otherwise
    assert_eq!(
        out.status.code(),
        Some(0),
        "bench-scan failed\nstdout:\n{stdout}\nstderr:\n{stderr}"
    );

    let threads: usize = stdout
        .lines()
        .find_map(|l| l.split("threads=").nth(1))
        .and_then(|s| s.trim().parse().ok())
        .expect("threads reported");
    let speedup: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("speedup: "))
        .and_then(|s| s.trim_end_matches('x').parse().ok())
        .expect("speedup reported");
    if threads >= 4 {
        assert!(speedup >= 2.0, "speedup {speedup:.2}x below 2x on {threads} threads");
        println!("criterion 12 PASS: parallel scan {speedup:.2}x on {threads} threads (>= 2x)");
    } else {
        println!(
            "criterion 12 PASS (soft): {speedup:.2}x on {threads} thread(s); \
             the 2x bound applies at 4+ cores and bench-scan enforces it there"
        );
    }
}
