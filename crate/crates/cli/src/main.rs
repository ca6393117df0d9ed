//! `ssnet` command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O or format error,
//! 4 check failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssnet_core::ace;
use ssnet_core::io;
use ssnet_core::metrics::evaluate_dataset;
use ssnet_core::network::{gradcheck_loss, init, init_weights, SSNet, SSNetWeights};
use ssnet_core::priors::compute_priors;
use ssnet_core::ssm::{gradcheck_scan, prepare_scan, s6_scan_parallel, s6_scan_seq, ScanInputs};
use ssnet_core::tensor::DenseArray;
use ssnet_core::Error;

const EXIT_IO: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "ssnet", version, about = "RGB-D salient object detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contrast-enhance a depth map (percentile stretch with saturation).
    EnhanceDepth {
        /// Input depth map (binary PGM, 8-bit).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output depth map (binary PGM).
        #[arg(long)]
        out: PathBuf,
        /// Bottom percentile saturated to 0.
        #[arg(long, default_value_t = 1.0)]
        low_pct: f64,
        /// Top percentile saturated to 1.
        #[arg(long, default_value_t = 1.0)]
        high_pct: f64,
        /// Invert the depth map first (for datasets encoding near as dark).
        #[arg(long)]
        invert_depth: bool,
    },
    /// Compute the three saliency priors and their intermediates.
    Priors {
        /// RGB image (binary PPM, 8-bit).
        #[arg(long)]
        rgb: PathBuf,
        /// Depth map (binary PGM, 8-bit).
        #[arg(long)]
        depth: PathBuf,
        /// Directory receiving S1/S2/S3/O_front/C_x/C_y/M as PGM.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        invert_depth: bool,
    },
    /// Full forward pass: enhanced depth, priors, network, saliency map.
    Infer {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        /// Weights file produced by init-weights.
        #[arg(long)]
        weights: PathBuf,
        /// Run configuration (key = value lines: H, W, C, D, N, seed).
        #[arg(long)]
        config: PathBuf,
        /// Output saliency map (binary PGM).
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw random weights for a configuration and write them to disk.
    InitWeights {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate predicted saliency maps against ground truth.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        /// Output JSON report path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Benchmark the scan kernels and verify parallel/sequential agreement.
    BenchScan {
        #[arg(long = "L", default_value_t = 16384)]
        l: usize,
        #[arg(long = "D", default_value_t = 16)]
        d: usize,
        #[arg(long = "N", default_value_t = 16)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ScanMode::Par)]
        mode: ScanMode,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Finite-difference gradient checks; exits nonzero on failure.
    Gradcheck {
        #[arg(long, value_enum)]
        op: GradOp,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanMode {
    Seq,
    Par,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradOp {
    S6,
    Cms6,
    Loss,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::EnhanceDepth {
            input,
            out,
            low_pct,
            high_pct,
            invert_depth,
        } => {
            let mut depth = io::read_pgm(&input)?;
            if invert_depth {
                depth = depth.map(|v| 1.0 - v);
            }
            let enhanced = ace::enhance(&depth, low_pct, high_pct)?;
            io::write_pgm(&out, &enhanced)?;
            Ok(0)
        }

        Command::Priors {
            rgb,
            depth,
            out_dir,
            invert_depth,
        } => {
            let rgb = io::read_ppm(&rgb)?;
            let mut depth = io::read_pgm(&depth)?;
            if invert_depth {
                depth = depth.map(|v| 1.0 - v);
            }
            let enhanced = ace::enhance(&depth, ace::DEFAULT_LOW_PCT, ace::DEFAULT_HIGH_PCT)?;
            let priors = compute_priors(&rgb, &enhanced)?;
            std::fs::create_dir_all(&out_dir)?;
            for (name, map) in [
                ("S1", &priors.s1),
                ("S2", &priors.s2),
                ("S3", &priors.s3),
                ("O_front", &priors.o_front),
                ("C_x", &priors.c_x),
                ("C_y", &priors.c_y),
                ("M", &priors.m),
            ] {
                io::write_pgm(&out_dir.join(format!("{name}.pgm")), map)?;
            }
            Ok(0)
        }

        Command::Infer {
            rgb,
            depth,
            weights,
            config,
            out,
        } => {
            let cfg = io::read_config(&config)?;
            let rgb = io::read_ppm(&rgb)?;
            let depth = io::read_pgm(&depth)?;
            let weights = SSNetWeights::load(&weights)?;
            let net = SSNet::from_weights(cfg, &weights)?;
            let enhanced = ace::enhance(&depth, ace::DEFAULT_LOW_PCT, ace::DEFAULT_HIGH_PCT)?;
            let saliency = net.forward(&rgb, &enhanced)?;
            io::write_pgm(&out, &saliency)?;
            Ok(0)
        }

        Command::InitWeights { config, seed, out } => {
            let cfg = io::read_config(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let weights = init_weights(&cfg, seed)?;
            weights.save(&out)?;
            println!("wrote {} tensors to {}", weights.len(), out.display());
            Ok(0)
        }

        Command::Eval {
            pred_dir,
            gt_dir,
            report,
        } => {
            let result = evaluate_dataset(&pred_dir, &gt_dir)?;
            io::write_atomic(&report, result.to_json().as_bytes())?;
            println!(
                "mae {:.6}  f_beta_max {:.6}  s_measure {:.6}  e_max {:.6}  e_mean {:.6}",
                result.mae,
                result.f_beta_max,
                result.s_measure,
                result.e_measure_max,
                result.e_measure_mean
            );
            Ok(0)
        }

        Command::BenchScan {
            l,
            d,
            n,
            mode,
            repeats,
        } => bench_scan(l, d, n, mode, repeats.max(1)),

        Command::Gradcheck { op, seed } => {
            let tolerance = 1e-4;
            let report = match op {
                GradOp::S6 => gradcheck_scan(seed, 16, 2, 3, false),
                GradOp::Cms6 => gradcheck_scan(seed, 16, 2, 3, true),
                GradOp::Loss => gradcheck_loss(seed, 16, 16)?,
            };
            println!(
                "checked {} gradients, max relative error {:.3e}",
                report.checked, report.max_rel_err
            );
            if report.passes(tolerance) {
                Ok(0)
            } else {
                eprintln!("gradient check FAILED (tolerance {tolerance:.0e})");
                Ok(EXIT_CHECK)
            }
        }
    }
}

fn bench_inputs(l: usize, d: usize, n: usize) -> ScanInputs<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = init::init_s6(&mut rng, d, n);
    let f = DenseArray::new(
        vec![l, d],
        (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("shape/data agreement");
    prepare_scan(&f, &f, &params).expect("consistent dims")
}

fn time_best<T>(repeats: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let value = f();
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(value);
    }
    (best, out.expect("at least one repeat"))
}

fn bench_scan(l: usize, d: usize, n: usize, mode: ScanMode, repeats: usize) -> Result<u8, Error> {
    let inputs = bench_inputs(l, d, n);
    let threads = rayon_threads();
    println!("L={l} D={d} N={n} repeats={repeats} threads={threads}");

    let (seq_time, seq_out) = time_best(repeats, || s6_scan_seq(&inputs));
    println!("seq: {:.3} ms", seq_time * 1e3);
    if matches!(mode, ScanMode::Seq) {
        return Ok(0);
    }

    let (par_time, par_out) = time_best(repeats, || s6_scan_parallel(&inputs));
    let speedup = seq_time / par_time;
    let deviation = seq_out.max_abs_diff(&par_out);
    println!("par: {:.3} ms", par_time * 1e3);
    println!("speedup: {speedup:.2}x");
    println!("max_abs_dev: {deviation:.3e}");

    if deviation > 1e-5 {
        eprintln!("parallel scan deviates from the sequential oracle beyond 1e-5");
        return Ok(EXIT_CHECK);
    }
    if speedup < 2.0 {
        if threads >= 4 {
            eprintln!("parallel scan speedup below 2x on {threads} threads");
            return Ok(EXIT_CHECK);
        }
        println!("warning: speedup below 2x, but only {threads} thread(s) available");
    }
    Ok(0)
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
