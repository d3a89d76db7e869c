//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Fast criteria run with `cargo test --test acceptance -- --nocapture`.
//! Criteria 6 and 7 train full networks and are ignored by default:
//! `cargo test --release --test acceptance -- --ignored --nocapture`.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikecode::codec::{linear_fit_r2, sweep_timesteps, CodecParams, Scheme, SweepConfig};
use spikecode::image::{add_awgn, gaussian_noise, load_corpus, load_image, psnr, NoiseSpec};
use spikecode::lif::{build_quantizer_table, encode_lif, quantization_boundary, LifParams};
use spikecode::rate::{encode_poisson, RateCoderConfig};
use spikecode::snn::{
    backward_bptt, denoise_image, loss_residual_mse, prepare_patches, train, validation_noise_seed, DenoiseOptions,
    Encoding, ExperimentConfig, ForwardOptions, NetworkConfig, SpikeMode, SpikingNetwork,
};
use spikecode::ImageGray;

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    println!("criterion {n} {}: {title} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn first_spike(x: f64, t: usize, p: &LifParams) -> Option<usize> {
    encode_lif(x, t, p).unwrap().spikes.first_spike()
}

#[test]
fn criterion_1_quantizer_boundaries() {
    let p = LifParams::default();
    let x1 = quantization_boundary(1, &p).unwrap();
    let x2 = quantization_boundary(2, &p).unwrap();
    let exact = x1 == 2.0 && x2 == 4.0 / 3.0;
    // Locate each boundary by bisection on the simulated first-spike time.
    let mut worst: f64 = 0.0;
    for k in 1..=32 {
        let (mut lo, mut hi) = (p.v_th() - p.v_reset(), 2.0 * p.saturation_input());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if first_spike(mid, k, &p).is_some_and(|s| s <= k - 1) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let closed = quantization_boundary(k, &p).unwrap();
        worst = worst.max((hi - closed).abs());
    }
    report(
        1,
        "quantizer boundaries",
        exact && worst < 1e-9,
        &format!("x1 = {x1}, x2 = {x2}, max |simulated - closed form| over k = 1..32 = {worst:.3e}"),
    );
}

#[test]
fn criterion_2_code_count_law() {
    let p = LifParams::default();
    let cap = 1.5 * p.saturation_input();
    let mut ok = true;
    let mut details = Vec::new();
    for t in [1usize, 2, 4, 8, 16] {
        let n = 400_000;
        let mut codes = BTreeSet::new();
        let mut rates = BTreeSet::new();
        for i in 1..=n {
            let x = cap * i as f64 / n as f64;
            let train = encode_lif(x, t, &p).unwrap().spikes;
            rates.insert(train.spike_count());
            codes.insert(train.to_string());
        }
        // Independent count of distinct rates: spike counts floor(T / k), plus zero.
        let expected_rates: BTreeSet<usize> = (1..=t).map(|k| t / k).chain([0]).collect();
        ok &= codes.len() == t + 1 && rates == expected_rates;
        details.push(format!("T={t}: {} codes, {} rate values", codes.len(), rates.len()));
    }
    // T = 8 reference table, rows ordered from fastest firing to silent.
    let reference = [
        ("11111111", 1.0),
        ("01010101", 0.5),
        ("00100100", 0.25),
        ("00010001", 0.25),
        ("00001000", 0.125),
        ("00000100", 0.125),
        ("00000010", 0.125),
        ("00000001", 0.125),
        ("00000000", 0.0),
    ];
    let table = build_quantizer_table(8, &p).unwrap();
    let rows_match = table.rows().len() == reference.len()
        && table
            .rows()
            .iter()
            .zip(reference)
            .all(|(row, (code, fr))| row.pattern(8).to_string() == code && row.firing_rate == fr);
    ok &= rows_match;
    details.push(format!("T=8 table matches row-for-row: {rows_match}"));
    report(2, "code-count law", ok, &details.join("; "));
}

#[test]
fn criterion_3_coding_sweep_shape() {
    let corpus: Vec<ImageGray> = load_corpus(repo_path("data/codec"))
        .unwrap()
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let lif_ts = vec![1, 2, 4, 6, 8, 10, 12, 16, 20, 24, 32, 40, 50, 64];
    let lif = sweep_timesteps(
        &corpus,
        Scheme::Lif,
        &SweepConfig {
            t_list: lif_ts.clone(),
            ..SweepConfig::default()
        },
    )
    .unwrap();
    let rate_ts = vec![4, 8, 16, 32, 64];
    let rate = sweep_timesteps(
        &corpus,
        Scheme::Rate,
        &SweepConfig {
            t_list: rate_ts.clone(),
            params: CodecParams::default(),
            repeats: 20,
        },
    )
    .unwrap();

    let lif_db: Vec<f64> = lif.rows.iter().map(|r| r.psnr_db).collect();
    let flat: Vec<f64> = lif.rows.iter().filter(|r| r.t_count >= 12).map(|r| r.psnr_db).collect();
    let flat_span = flat.iter().cloned().fold(f64::MIN, f64::max) - flat.iter().cloned().fold(f64::MAX, f64::min);
    let rises = flat[0] > lif_db[0] + 1.0;
    let rate_db: Vec<f64> = rate.rows.iter().map(|r| r.psnr_db).collect();
    let rate_monotone = rate_db.windows(2).all(|w| w[1] > w[0]);

    let ts = |v: &[usize]| v.iter().map(|&t| t as f64).collect::<Vec<_>>();
    let r2_lif = linear_fit_r2(&ts(&lif_ts), &lif.rows.iter().map(|r| r.theta).collect::<Vec<_>>());
    let r2_rate = linear_fit_r2(&ts(&rate_ts), &rate.rows.iter().map(|r| r.theta).collect::<Vec<_>>());

    report(
        3,
        "coding sweep shape",
        rises && flat_span <= 0.1 && rate_monotone && r2_lif > 0.99 && r2_rate > 0.99,
        &format!(
            "LIF dB by T {:?}; span for T>=12 {flat_span:.4}; rate dB {:?}; theta R2 lif {r2_lif:.5} rate {r2_rate:.5}",
            lif_db.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            rate_db.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        ),
    );
}

#[test]
fn criterion_4_noise_psnr() {
    let clean = load_image(repo_path("data/test/cameraman.pgm")).unwrap();
    let noisy = add_awgn(&clean, &NoiseSpec::new(25.0, 7).unwrap()).unwrap();
    let db = psnr(&clean, &noisy, 255.0).unwrap().db();
    let analytic = 20.0 * (255.0f64 / 25.0).log10();
    report(
        4,
        "noise/PSNR analytics",
        (db - 20.17).abs() <= 0.3 && clean.width() >= 64 && clean.height() >= 64,
        &format!("{}x{} image, measured {db:.4} dB, analytic {analytic:.4} dB", clean.width(), clean.height()),
    );
}

#[test]
fn criterion_5_gradient_oracle() {
    let cfg = NetworkConfig {
        depth: 2,
        channels: 8,
        t_count: 3,
        ..NetworkConfig::default()
    };
    let net = SpikingNetwork::<f64>::init(cfg, 2024, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let biases: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.3..0.6)).collect();
    let net = {
        let mut layers = net.layers().to_vec();
        layers[0].bias.copy_from_slice(&biases[..8]);
        layers[1].bias[0] = biases[8];
        SpikingNetwork::from_layers(net.config().clone(), layers).unwrap()
    };
    let (h, w) = (8, 8);
    let y: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    let v: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let opts = ForwardOptions {
        mode: SpikeMode::Relaxed,
        seed: 0,
    };
    let (_, grads) = backward_bptt(&net, &y, &v, h, w, &opts).unwrap();
    let analytic: Vec<f64> = grads
        .layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
        .collect();
    let loss = |n: &SpikingNetwork<f64>| {
        let pass = n.forward(&y, h, w, &opts).unwrap();
        loss_residual_mse(&pass.residual, &v).unwrap()
    };

    let samples = 120;
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for i in sample(&mut rng, net.param_count(), samples) {
        let mut plus = net.clone();
        *plus.params_mut().nth(i).unwrap() += eps;
        let mut minus = net.clone();
        *minus.params_mut().nth(i).unwrap() -= eps;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        if scale > 0.0 {
            nonzero += 1;
            worst = worst.max((a - numeric).abs() / scale.max(1e-8));
        }
    }
    report(
        5,
        "gradient oracle",
        worst < 1e-4 && nonzero >= samples / 2,
        &format!(
            "{samples} of {} parameters sampled, {nonzero} nonzero, max relative error {worst:.3e}",
            net.param_count()
        ),
    );
}

#[test]
fn criterion_8_determinism() {
    let a = gaussian_noise(4096, 25.0, 11);
    let b = gaussian_noise(4096, 25.0, 11);
    let noise_ok = a == b && a != gaussian_noise(4096, 25.0, 12);

    let cfg = RateCoderConfig::new(5, 64).unwrap();
    let rate_ok = (0..64).all(|i| {
        encode_poisson(0.37, &cfg, i).unwrap() == encode_poisson(0.37, &cfg, i).unwrap()
    });

    let exp = ExperimentConfig::parse(
        "depth = 3\nchannels = 4\ntimesteps = 3\nepochs = 1\nbatch = 4\nmax_patches = 12\npatch_size = 16\npatch_stride = 16\nseed = 3\n",
    )
    .unwrap();
    let images: Vec<ImageGray> = load_corpus(repo_path("data/codec"))
        .unwrap()
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let run = || {
        let patches = prepare_patches(&images, &exp.train).unwrap();
        train(&patches, &[], &exp.network, &exp.train, &mut |_| {}).unwrap()
    };
    let (r1, r2) = (run(), run());
    let train_ok = r1.log[0].loss.to_bits() == r2.log[0].loss.to_bits() && r1.network == r2.network;

    let sweep = || {
        let cfg = SweepConfig {
            t_list: vec![2, 8],
            repeats: 3,
            ..SweepConfig::default()
        };
        sweep_timesteps(&images[..2], Scheme::Rate, &cfg).unwrap().to_csv()
    };
    let csv_ok = sweep() == sweep() && r1.log_csv() == r2.log_csv();

    report(
        8,
        "determinism",
        noise_ok && rate_ok && train_ok && csv_ok,
        &format!("noise {noise_ok}, rate coding {rate_ok}, epoch-0 training {train_ok}, CSV bytes {csv_ok}"),
    );
}

/// Trains with the desk recipe and returns the held-out PSNR on the test
/// image (noisy input and output both quantised to 8 bits).
fn desk_run(overrides: &[(&str, &str)]) -> (f64, f64) {
    let text = std::fs::read_to_string(repo_path("configs/desk.cfg")).unwrap();
    let mut exp = ExperimentConfig::parse(&text).unwrap();
    for (k, v) in overrides {
        exp.set(k, v).unwrap();
    }
    exp.validate().unwrap();
    let images: Vec<ImageGray> = load_corpus(repo_path("data/train"))
        .unwrap()
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let patches = prepare_patches(&images, &exp.train).unwrap();
    assert!(patches.len() >= 2000, "only {} patches", patches.len());
    let clean = load_image(repo_path("data/test/cameraman.pgm")).unwrap();
    let out = train(&patches, &[], &exp.network, &exp.train, &mut |row| {
        eprintln!("  {:?} epoch {} loss {:.6}", overrides, row.epoch, row.loss);
    })
    .unwrap();
    let noisy = add_awgn(&clean, &NoiseSpec::new(exp.train.sigma, validation_noise_seed(0, 0)).unwrap())
        .unwrap()
        .quantized_u8();
    let denoised = denoise_image(&out.network, &noisy, &DenoiseOptions::default())
        .unwrap()
        .quantized_u8();
    (
        psnr(&clean, &noisy, 255.0).unwrap().db(),
        psnr(&clean, &denoised, 255.0).unwrap().db(),
    )
}

#[test]
#[ignore = "slow: trains two desk-scale networks"]
fn criterion_6_desk_scale_denoising() {
    let (noisy_db, lif_db) = desk_run(&[("encoding", "lif")]);
    let (_, rate_db) = desk_run(&[("encoding", "rate")]);
    report(
        6,
        "desk-scale denoising",
        lif_db >= 23.2 && lif_db >= noisy_db + 3.0 && lif_db > rate_db,
        &format!("noisy {noisy_db:.3} dB, LIF T=7 {lif_db:.3} dB, rate T=7 {rate_db:.3} dB"),
    );
}

#[test]
#[ignore = "slow: trains four desk-scale networks"]
fn criterion_7_saturation_trend() {
    let results: Vec<(usize, f64)> = [4usize, 7, 10, 14]
        .iter()
        .map(|&t| (t, desk_run(&[("timesteps", &t.to_string())]).1))
        .collect();
    let db: Vec<f64> = results.iter().map(|r| r.1).collect();
    let non_decreasing = db[0] <= db[1] && db[1] <= db[2];
    let saturated = (db[3] - db[2]).abs() < 0.5;
    let shown: Vec<String> = results.iter().map(|(t, d)| format!("T={t}: {d:.3}")).collect();
    report(7, "saturation trend", non_decreasing && saturated, &shown.join(", "));
}

#[test]
fn desk_recipe_matches_required_architecture() {
    let text = std::fs::read_to_string(repo_path("configs/desk.cfg")).unwrap();
    let exp = ExperimentConfig::parse(&text).unwrap();
    exp.validate().unwrap();
    let n = &exp.network;
    assert_eq!((n.depth, n.channels, n.kernel, n.t_count), (5, 32, 3, 7));
    assert_eq!(n.encoding, Encoding::Lif);
    assert_eq!(exp.train.sigma, 25.0);
}
