use std::fs;
use std::path::{Path, PathBuf};

use spikecode::codec::{linspace, staircase_curve, sweep_timesteps, CodecParams, Scheme, SweepConfig};
use spikecode::fmt::sig6;
use spikecode::image::{add_awgn, load_corpus, load_image, psnr as image_psnr, save_image, ImageGray, NoiseSpec};
use spikecode::lif::{encode_lif, LifParams};
use spikecode::snn::{
    self, denoise_image, load_checkpoint, prepare_patches, save_checkpoint, validation_noise_seed,
    Checkpoint, DenoiseOptions, EpochLog, ExperimentConfig, SpikingNetwork,
};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{AddNoiseArgs, DenoiseArgs, EvalArgs, PsnrArgs, StaircaseArgs, SweepArgs, TrainArgs};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn read_image(path: &Path) -> Result<ImageGray, CliError> {
    load_image(path).map_err(|e| with_path(e, path))
}

fn write_image(img: &ImageGray, path: &Path) -> Result<(), CliError> {
    save_image(img, path).map_err(|e| with_path(e, path))
}

fn with_path(e: spikecode::Error, path: &Path) -> CliError {
    let mut err = CliError::from(e);
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

fn corpus(dir: &Path, manifest: &mut RunManifest) -> Result<Vec<(PathBuf, ImageGray)>, CliError> {
    let images = load_corpus(dir).map_err(|e| with_path(e, dir))?;
    for (p, _) in &images {
        manifest.input(p)?;
    }
    Ok(images)
}

pub fn staircase(a: &StaircaseArgs) -> Result<(), CliError> {
    let p = LifParams::with_threshold(a.lif.vth, a.lif.tau)?;
    if a.timesteps == 0 {
        return Err(CliError::validation("--timesteps must be >= 1"));
    }
    let xmax = a.xmax.unwrap_or(1.5 * p.saturation_input());
    if !(a.xmin.is_finite() && xmax.is_finite() && a.xmin <= xmax) || a.points == 0 {
        return Err(CliError::validation(format!(
            "bad range: xmin {} xmax {xmax} points {}",
            a.xmin, a.points
        )));
    }
    let grid = linspace(a.xmin, xmax, a.points);
    let curve = staircase_curve(&p, a.timesteps, &grid)?;
    let mut csv = String::from("x,f_r,code\n");
    for (x, fr) in curve {
        let code = encode_lif(x, a.timesteps, &p)?.spikes;
        csv.push_str(&format!("{},{},{code}\n", sig6(x), sig6(fr)));
    }
    write_text(&a.out, &csv)?;
    let mut m = RunManifest::new("staircase", None);
    m.param("vth", a.lif.vth)
        .param("tau", a.lif.tau)
        .param("timesteps", a.timesteps)
        .param("xmin", a.xmin)
        .param("xmax", xmax)
        .param("points", a.points);
    m.write_for(&a.out)?;
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let scheme: Scheme = a.scheme.parse()?;
    let mut m = RunManifest::new("sweep", Some(a.seed));
    let images: Vec<ImageGray> = corpus(&a.corpus, &mut m)?.into_iter().map(|(_, i)| i).collect();
    let params = CodecParams {
        lif: LifParams::with_threshold(a.lif.vth, a.lif.tau)?,
        seed: a.seed,
        ..CodecParams::default()
    };
    let cfg = SweepConfig {
        t_list: a.t_list.clone(),
        params,
        repeats: a.repeats,
    };
    let result = sweep_timesteps(&images, scheme, &cfg)?;
    write_text(&a.out, &result.to_csv())?;
    let t_list: Vec<String> = a.t_list.iter().map(|t| t.to_string()).collect();
    m.param("scheme", scheme)
        .param("t_list", t_list.join(","))
        .param("repeats", a.repeats)
        .param("vth", a.lif.vth)
        .param("tau", a.lif.tau)
        .param("lif_range", format!("{},{}", params.lif_range.0, params.lif_range.1));
    m.write_for(&a.out)?;
    Ok(())
}

pub fn add_noise(a: &AddNoiseArgs) -> Result<(), CliError> {
    let img = read_image(&a.input)?;
    let noisy = add_awgn(&img, &NoiseSpec::new(a.sigma, a.seed)?)?;
    write_image(&noisy, &a.out)?;
    let mut m = RunManifest::new("add-noise", Some(a.seed));
    m.param("sigma", a.sigma).input(&a.input)?;
    m.write_for(&a.out)?;
    Ok(())
}

pub fn psnr(a: &PsnrArgs) -> Result<(), CliError> {
    let r = read_image(&a.reference)?;
    let t = read_image(&a.test)?;
    println!("{}", image_psnr(&r, &t, 255.0)?);
    Ok(())
}

fn experiment_config(a: &TrainArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let flags: [(&str, Option<String>); 9] = [
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("lr", a.lr.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("timesteps", a.timesteps.map(|v| v.to_string())),
        ("depth", a.depth.map(|v| v.to_string())),
        ("channels", a.channels.map(|v| v.to_string())),
        ("sigma", a.sigma.map(|v| v.to_string())),
        ("encoding", a.encoding.clone()),
        ("max_patches", a.max_patches.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = experiment_config(a)?;
    let mut m = RunManifest::new("train", Some(cfg.train.seed));
    if let Some(path) = &a.config {
        m.input(path)?;
    }
    let images: Vec<ImageGray> = corpus(&a.data, &mut m)?.into_iter().map(|(_, i)| i).collect();
    let mut validation = Vec::new();
    for path in &a.validation {
        validation.push(read_image(path)?);
        m.input(path)?;
    }
    let patches = prepare_patches(&images, &cfg.train)?;
    eprintln!(
        "training on {} patches of {}x{}, {} parameters",
        patches.len(),
        cfg.train.patch_size,
        cfg.train.patch_size,
        SpikingNetwork::<f32>::zeros(cfg.network.clone())?.param_count()
    );

    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".log.csv");
        PathBuf::from(name)
    });
    let hidden = cfg.network.depth - 1 + usize::from(cfg.network.readout == snn::Readout::SpikeRate);
    let mut log = format!("{}\n", EpochLog::csv_header(hidden));
    write_text(&log_path, &log)?;
    let mut log_error = None;
    let outcome = snn::train(&patches, &validation, &cfg.network, &cfg.train, &mut |row| {
        eprintln!(
            "epoch {}: loss {} val_psnr {} theta {:?}",
            row.epoch,
            sig6(row.loss),
            sig6(row.val_psnr),
            row.theta.iter().map(|t| sig6(*t)).collect::<Vec<_>>()
        );
        log.push_str(&row.csv_row());
        log.push('\n');
        if let Err(e) = fs::write(&log_path, &log) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(CliError::io(format!("{}: {e}", log_path.display())));
    }
    save_checkpoint(&a.out, &Checkpoint::from_network(&outcome.network, Some(&cfg.train)))
        .map_err(|e| with_path(e, &a.out))?;
    for (k, v) in cfg.entries() {
        m.param(k, v);
    }
    m.param("patches", patches.len());
    m.write_for(&a.out)?;
    Ok(())
}

fn read_network(path: &Path) -> Result<(Checkpoint, SpikingNetwork<f32>), CliError> {
    let ckpt = load_checkpoint(path).map_err(|e| with_path(e, path))?;
    let net = ckpt.to_network::<f32>().map_err(|e| with_path(e, path))?;
    Ok((ckpt, net))
}

pub fn denoise(a: &DenoiseArgs) -> Result<(), CliError> {
    let (_, net) = read_network(&a.checkpoint)?;
    let noisy = read_image(&a.input)?;
    let out = denoise_image(
        &net,
        &noisy,
        &DenoiseOptions {
            tile: a.tile,
            seed: a.seed,
        },
    )?;
    write_image(&out, &a.out)?;
    let mut m = RunManifest::new("denoise", Some(a.seed));
    m.param("tile", a.tile).input(&a.checkpoint)?.input(&a.input)?;
    m.write_for(&a.out)?;
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let (ckpt, net) = read_network(&a.checkpoint)?;
    let sigma = a
        .sigma
        .or(ckpt.train.as_ref().map(|t| t.sigma))
        .unwrap_or(25.0);
    let mut m = RunManifest::new("eval", Some(a.seed));
    m.input(&a.checkpoint)?;
    let images = corpus(&a.corpus, &mut m)?;
    if let Some(dir) = &a.save_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    let mut csv = String::from("image,noisy_psnr,denoised_psnr\n");
    let (mut noisy_sum, mut denoised_sum) = (0.0, 0.0);
    for (i, (path, clean)) in images.iter().enumerate() {
        // Both images are scored as they would read back from 8-bit files.
        let noisy = add_awgn(clean, &NoiseSpec::new(sigma, validation_noise_seed(a.seed, i))?)?.quantized_u8();
        let denoised = denoise_image(
            &net,
            &noisy,
            &DenoiseOptions {
                seed: a.seed,
                ..DenoiseOptions::default()
            },
        )?
        .quantized_u8();
        let p_noisy = image_psnr(clean, &noisy, 255.0)?;
        let p_denoised = image_psnr(clean, &denoised, 255.0)?;
        noisy_sum += p_noisy.db();
        denoised_sum += p_denoised.db();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        csv.push_str(&format!("{name},{p_noisy},{p_denoised}\n"));
        if let Some(dir) = &a.save_dir {
            let stem = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            write_image(&noisy, &dir.join(format!("{stem}_noisy.png")))?;
            write_image(&denoised, &dir.join(format!("{stem}_denoised.png")))?;
        }
    }
    let n = images.len() as f64;
    csv.push_str(&format!("mean,{},{}\n", sig6(noisy_sum / n), sig6(denoised_sum / n)));
    write_text(&a.out, &csv)?;
    m.param("sigma", sigma);
    m.write_for(&a.out)?;
    Ok(())
}
