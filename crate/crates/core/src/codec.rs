//! Whole-image spike coding experiments.
//!
//! Two schemes are compared:
//!
//! - [`Scheme::Lif`]: each normalized pixel (default range `[1, 2]`) drives
//!   its own LIF neuron for `T` steps.
//! - [`Scheme::Rate`]: each pixel in `[0, 1]` is the per-step spike
//!   probability of an independent Bernoulli train.
//!
//! Both decode with the firing rate. For the fidelity sweeps the LIF code is
//! mapped back through its quantizer: a spike count is reconstructed as the
//! midpoint of the input cell that produces it, then expressed on `[0, 1]`.
//! The rate code's firing rate is already an unbiased estimate of the pixel.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::image::{psnr, ImageGray};
use crate::lif::{self, build_quantizer_table_with_cap, LifParams};
use crate::rate::{self, RateCoderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Lif,
    Rate,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Lif => "lif",
            Scheme::Rate => "rate",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lif" => Ok(Scheme::Lif),
            "rate" => Ok(Scheme::Rate),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Coding parameters shared by both schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecParams {
    pub lif: LifParams,
    /// Input range the LIF scheme expects pixels to be normalized to. The
    /// default spans `[v_th, 1.5 v_th tau]`: nothing below `v_th` ever fires,
    /// and the top of the range lies inside the saturated cell.
    pub lif_range: (f64, f64),
    /// Seed for the rate scheme; ignored by LIF.
    pub seed: u64,
}

impl Default for CodecParams {
    fn default() -> Self {
        CodecParams {
            lif: LifParams::default(),
            lif_range: (1.0, 3.0),
            seed: 0,
        }
    }
}

impl CodecParams {
    pub fn input_range(&self, scheme: Scheme) -> (f64, f64) {
        match scheme {
            Scheme::Lif => self.lif_range,
            Scheme::Rate => (0.0, 1.0),
        }
    }
}

/// `T x height x width` binary tensor, timestep-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTensor {
    t_count: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(t_count: usize, height: usize, width: usize) -> Self {
        SpikeTensor {
            t_count,
            height,
            width,
            data: vec![0; t_count * height * width],
        }
    }

    pub fn from_fn(
        t_count: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let mut s = Self::zeros(t_count, height, width);
        for t in 0..t_count {
            for y in 0..height {
                for x in 0..width {
                    s.data[(t * height + y) * width + x] = u8::from(f(t, y, x));
                }
            }
        }
        s
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t_count, self.height, self.width)
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.data[(t * self.height + y) * self.width + x] != 0
    }

    pub fn total_spikes(&self) -> usize {
        self.data.iter().map(|&b| b as usize).sum()
    }

    fn set_pixel_train(&mut self, pixel: usize, bits: &[bool]) {
        let plane = self.height * self.width;
        for (t, &b) in bits.iter().enumerate() {
            self.data[t * plane + pixel] = u8::from(b);
        }
    }
}

/// Mean spike count per neuron: total spikes over `height * width`.
pub fn activity_theta(spikes: &SpikeTensor) -> f64 {
    spikes.total_spikes() as f64 / (spikes.height * spikes.width) as f64
}

fn check_range(img: &ImageGray, expected: (f64, f64)) -> Result<()> {
    let (lo, hi) = img.range();
    let tol = 1e-12 * (expected.1 - expected.0).abs().max(1.0);
    let inside = img
        .data()
        .iter()
        .all(|&v| v >= expected.0 - tol && v <= expected.1 + tol);
    if (lo, hi) != expected || !inside {
        return Err(Error::RangeMismatch {
            expected_lo: expected.0,
            expected_hi: expected.1,
            lo,
            hi,
        });
    }
    Ok(())
}

/// Encodes every pixel independently and decodes with the firing rate.
///
/// `img` must already be normalized to the scheme's input range. The
/// reconstruction holds firing rates on `[0, 1]`.
pub fn encode_decode_image(
    img: &ImageGray,
    scheme: Scheme,
    t_count: usize,
    params: &CodecParams,
) -> Result<(ImageGray, SpikeTensor)> {
    if t_count == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    let range = params.input_range(scheme);
    check_range(img, range)?;
    let (w, h) = (img.width(), img.height());
    let mut spikes = SpikeTensor::zeros(t_count, h, w);
    let mut rates = Vec::with_capacity(img.len());
    let mut bits = Vec::with_capacity(t_count);
    let cfg = RateCoderConfig::new(params.seed, t_count)?;
    for (i, &x) in img.data().iter().enumerate() {
        match scheme {
            Scheme::Lif => {
                let trace = lif::encode_lif(x, t_count, &params.lif)?;
                bits.clear();
                bits.extend_from_slice(trace.spikes.bits());
            }
            Scheme::Rate => rate::encode_into(x.clamp(0.0, 1.0), &cfg, i as u64, &mut bits)?,
        }
        spikes.set_pixel_train(i, &bits);
        rates.push(bits.iter().filter(|&&b| b).count() as f64 / t_count as f64);
    }
    let recon = ImageGray::new(w, h, rates, (0.0, 1.0))?;
    Ok((recon, spikes))
}

/// Reconstruction levels of the LIF quantizer over a bounded input range,
/// indexed by spike count.
#[derive(Debug, Clone, PartialEq)]
pub struct LifDequantizer {
    range: (f64, f64),
    levels: Vec<Option<f64>>,
}

impl LifDequantizer {
    pub fn new(t_count: usize, p: &LifParams, range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = range;
        if !(hi > lo) {
            return Err(Error::invalid(format!("bad input range {range:?}")));
        }
        let cap = hi.max(p.saturation_input());
        let table = build_quantizer_table_with_cap(t_count, p, cap)?;
        let mut cells: Vec<Option<(f64, f64)>> = vec![None; t_count + 1];
        for row in table.rows() {
            let count = row.spike_count(t_count);
            // The outermost cells extend past the tabulated span.
            let a = if row.never_fires() { f64::NEG_INFINITY } else { row.x_lo };
            let b = if row.k == 1 { f64::INFINITY } else { row.x_hi };
            cells[count] = Some(match cells[count] {
                Some((ca, cb)) => (ca.min(a), cb.max(b)),
                None => (a, b),
            });
        }
        let levels = cells
            .into_iter()
            .map(|cell| {
                cell.and_then(|(a, b)| {
                    if b < lo || a > hi {
                        None
                    } else {
                        Some(0.5 * (a.max(lo) + b.min(hi)))
                    }
                })
            })
            .collect();
        Ok(LifDequantizer { range, levels })
    }

    /// Input-domain reconstruction for `count` spikes. Counts whose cell lies
    /// outside the range fall back to the nearest range bound.
    pub fn level(&self, count: usize) -> f64 {
        match self.levels.get(count).copied().flatten() {
            Some(v) => v,
            None => {
                let reachable_above = self.levels[..count.min(self.levels.len())]
                    .iter()
                    .any(Option::is_some);
                if reachable_above {
                    self.range.1
                } else {
                    self.range.0
                }
            }
        }
    }

    /// Reconstruction mapped onto `[0, 1]`.
    pub fn unit_level(&self, count: usize) -> f64 {
        let (lo, hi) = self.range;
        (self.level(count) - lo) / (hi - lo)
    }
}

/// One `(scheme, T)` point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub t_count: usize,
    pub psnr_db: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "scheme,T,psnr_db,theta";

impl SweepResult {
    /// `scheme,T,psnr_db,theta`, LF line endings, six significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.scheme,
                r.t_count,
                sig6(r.psnr_db),
                sig6(r.theta)
            ));
        }
        out
    }

    pub fn for_scheme(&self, scheme: Scheme) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub t_list: Vec<usize>,
    pub params: CodecParams,
    /// Independent realizations averaged per point for the rate scheme.
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            t_list: vec![1, 2, 4, 8, 16, 32, 64],
            params: CodecParams::default(),
            repeats: 20,
        }
    }
}

/// Seed of repetition `rep` for image `image` derived from the base seed.
fn repetition_seed(base: u64, image: usize, rep: usize) -> u64 {
    base ^ (image as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rep as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Fidelity (PSNR with peak 1 on `[0, 1]`) and activity of one coded image.
fn code_image(
    unit: &ImageGray,
    scheme: Scheme,
    t_count: usize,
    params: &CodecParams,
    dequant: Option<&LifDequantizer>,
) -> Result<(f64, f64)> {
    let range = params.input_range(scheme);
    let input = unit.normalize_range(range.0, range.1)?;
    let (recon, spikes) = encode_decode_image(&input, scheme, t_count, params)?;
    let estimate = match (scheme, dequant) {
        (Scheme::Lif, Some(dq)) => {
            let data = recon
                .data()
                .iter()
                .map(|&fr| dq.unit_level((fr * t_count as f64).round() as usize))
                .collect();
            recon.with_data(data)?
        }
        _ => recon,
    };
    let db = psnr(unit, &estimate, 1.0)?.db();
    Ok((db, activity_theta(&spikes)))
}

/// Mean PSNR and mean activity per `T` over a corpus of images on any
/// declared range.
pub fn sweep_timesteps(
    corpus: &[ImageGray],
    scheme: Scheme,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.t_list.is_empty() || cfg.t_list.contains(&0) {
        return Err(Error::invalid("T list must be non-empty with T >= 1"));
    }
    let repeats = match scheme {
        Scheme::Lif => 1,
        Scheme::Rate => cfg.repeats.max(1),
    };
    let units = corpus
        .iter()
        .map(|img| img.normalize_range(0.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(cfg.t_list.len());
    for &t in &cfg.t_list {
        let dequant = match scheme {
            Scheme::Lif => Some(LifDequantizer::new(t, &cfg.params.lif, cfg.params.lif_range)?),
            Scheme::Rate => None,
        };
        let jobs: Vec<(usize, usize)> = (0..units.len())
            .flat_map(|i| (0..repeats).map(move |r| (i, r)))
            .collect();
        let results = jobs
            .par_iter()
            .map(|&(i, r)| {
                let params = CodecParams {
                    seed: repetition_seed(cfg.params.seed, i, r),
                    ..cfg.params
                };
                code_image(&units[i], scheme, t, &params, dequant.as_ref())
            })
            .collect::<Result<Vec<_>>>()?;
        let n = results.len() as f64;
        let psnr_db = results.iter().map(|r| r.0).sum::<f64>() / n;
        let theta = results.iter().map(|r| r.1).sum::<f64>() / n;
        rows.push(SweepRow {
            scheme,
            t_count: t,
            psnr_db,
            theta,
        });
    }
    Ok(SweepResult { rows })
}

/// Decoded firing rate of a LIF neuron for each input of a sorted grid.
pub fn staircase_curve(p: &LifParams, t_count: usize, x_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if t_count == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    if x_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("x grid must be sorted ascending"));
    }
    Ok(x_grid
        .iter()
        .map(|&x| (x, lif::spike_count(x, t_count, p) as f64 / t_count as f64))
        .collect())
}

/// Evenly spaced grid of `points` values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f64, range: (f64, f64)) -> ImageGray {
        ImageGray::constant(6, 5, v, range).unwrap()
    }

    #[test]
    fn constant_images() {
        let params = CodecParams::default();
        let (recon, spikes) =
            encode_decode_image(&constant(2.0, (1.0, 3.0)), Scheme::Lif, 8, &params).unwrap();
        assert!(recon.data().iter().all(|&v| v == 1.0));
        assert_eq!(activity_theta(&spikes), 8.0);

        let (recon, spikes) =
            encode_decode_image(&constant(1.5, (1.0, 3.0)), Scheme::Lif, 8, &params).unwrap();
        assert!(recon.data().iter().all(|&v| v == 0.5));
        assert_eq!(activity_theta(&spikes), 4.0);
        assert!(!spikes.get(0, 0, 0) && spikes.get(1, 0, 0));

        for t in [1, 5, 33] {
            let (recon, spikes) =
                encode_decode_image(&constant(0.0, (0.0, 1.0)), Scheme::Rate, t, &params)
                    .unwrap();
            assert!(recon.data().iter().all(|&v| v == 0.0));
            assert_eq!(activity_theta(&spikes), 0.0);
        }
    }

    #[test]
    fn range_mismatch_rejected() {
        let params = CodecParams::default();
        let img = constant(0.5, (0.0, 1.0));
        assert!(matches!(
            encode_decode_image(&img, Scheme::Lif, 4, &params),
            Err(Error::RangeMismatch { .. })
        ));
        let img = constant(1.5, (1.0, 2.0));
        assert!(encode_decode_image(&img, Scheme::Rate, 4, &params).is_err());
    }

    #[test]
    fn theta_examples() {
        let ones = SpikeTensor::from_fn(8, 3, 4, |_, _, _| true);
        assert_eq!(activity_theta(&ones), 8.0);
        let zeros = SpikeTensor::zeros(8, 3, 4);
        assert_eq!(activity_theta(&zeros), 0.0);
        let alt = SpikeTensor::from_fn(8, 3, 4, |t, _, _| t % 2 == 1);
        assert_eq!(activity_theta(&alt), 4.0);
    }

    #[test]
    fn theta_equals_t_times_mean_rate() {
        let data: Vec<f64> = (0..64).map(|i| 1.0 + 2.0 * i as f64 / 63.0).collect();
        let img = ImageGray::new(8, 8, data, (1.0, 3.0)).unwrap();
        for t in [3, 8, 21] {
            let (recon, spikes) =
                encode_decode_image(&img, Scheme::Lif, t, &CodecParams::default()).unwrap();
            let mean_rate = recon.data().iter().sum::<f64>() / 64.0;
            assert!((activity_theta(&spikes) - t as f64 * mean_rate).abs() < 1e-12);
            assert!(activity_theta(&spikes) <= t as f64);
        }
    }

    #[test]
    fn staircase_examples() {
        let p = LifParams::default();
        let curve = staircase_curve(&p, 8, &[1.15, 1.4, 2.5]).unwrap();
        // 1.15 is above x_3 = 8/7 = 1.142857 and below x_2 = 4/3, so the
        // period is 3 steps: spikes at t = 2 and 5.
        assert_eq!(lif::encode_lif(1.15, 8, &p).unwrap().spikes.to_string(), "00100100");
        assert_eq!(curve, vec![(1.15, 0.25), (1.4, 0.5), (2.5, 1.0)]);
        assert!(staircase_curve(&p, 8, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn staircase_edges_match_table() {
        let p = LifParams::default();
        let t = 8;
        let grid = linspace(1.0, 3.0, 40_001);
        let step = grid[1] - grid[0];
        let curve = staircase_curve(&p, t, &grid).unwrap();
        let table = lif::build_quantizer_table(t, &p).unwrap();
        // Rate changes only where the spike count changes, which is a subset
        // of the period boundaries.
        let mut edges = Vec::new();
        for w in curve.windows(2) {
            if w[0].1 != w[1].1 {
                edges.push(w[1].0);
            }
        }
        let bounds = table.boundaries();
        for e in &edges {
            assert!(
                bounds.iter().any(|b| (e - b).abs() <= step),
                "edge {e} not a table boundary"
            );
        }
        let distinct: std::collections::BTreeSet<u64> =
            curve.iter().map(|c| c.1.to_bits()).collect();
        assert_eq!(distinct.len(), table.distinct_rates().len());
    }

    #[test]
    fn dequantizer_levels() {
        let p = LifParams::default();
        let dq = LifDequantizer::new(8, &p, (1.0, 2.0)).unwrap();
        // 8 spikes: only x = 2 inside the range.
        assert_eq!(dq.level(8), 2.0);
        // 4 spikes: [4/3, 2).
        assert!((dq.level(4) - (4.0 / 3.0 + 2.0) / 2.0).abs() < 1e-15);
        // 2 spikes: periods 3 and 4 -> [16/15, 4/3).
        assert!((dq.level(2) - (16.0 / 15.0 + 4.0 / 3.0) / 2.0).abs() < 1e-15);
        // 0 spikes: [1, x_8).
        let x8 = lif::quantization_boundary(8, &p).unwrap();
        assert!((dq.level(0) - (1.0 + x8) / 2.0).abs() < 1e-15);
        assert!((dq.unit_level(8) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dequantized_pixels_stay_in_their_cell() {
        let p = LifParams::default();
        for t in [1, 4, 10, 37] {
            let dq = LifDequantizer::new(t, &p, (1.0, 2.0)).unwrap();
            for i in 0..=255 {
                let x = 1.0 + i as f64 / 255.0;
                let c = lif::spike_count(x, t, &p);
                let level = dq.level(c);
                assert!((1.0..=2.0).contains(&level));
                // Re-encoding the level yields the same code.
                assert_eq!(lif::spike_count(level, t, &p), c, "T={t} x={x}");
            }
        }
    }

    #[test]
    fn sweep_rejects_empty_corpus() {
        assert!(matches!(
            sweep_timesteps(&[], Scheme::Lif, &SweepConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn csv_layout() {
        let res = SweepResult {
            rows: vec![SweepRow {
                scheme: Scheme::Rate,
                t_count: 4,
                psnr_db: 12.3456789,
                theta: 2.0,
            }],
        };
        assert_eq!(res.to_csv(), "scheme,T,psnr_db,theta\nrate,4,12.3457,2\n");
    }

    #[test]
    fn r2_of_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((linear_fit_r2(&xs, &[3.0, 5.0, 7.0, 9.0]) - 1.0).abs() < 1e-15);
        assert!(linear_fit_r2(&xs, &[1.0, -1.0, 1.0, -1.0]) < 0.5);
    }
}
