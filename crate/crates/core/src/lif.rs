//! Discrete-time leaky integrate-and-fire (LIF) neuron driven by a constant
//! input, viewed as a scalar quantizer.
//!
//! The membrane follows
//!
//! ```text
//! V[n] = V[n-1] + (1/tau) * (-(V[n-1] - v_reset) + x[n])
//! ```
//!
//! and emits a spike whenever `V[n] >= v_th`, after which the membrane is
//! hard-reset to `v_reset` within the same timestep. The initial potential is
//! `v_reset`.
//!
//! For a constant input the neuron fires periodically: a spike after exactly
//! `k` steps (first spike at timestep `k - 1`) requires
//! `x >= (v_th - v_reset) / (1 - (1 - 1/tau)^k)`. Over `T` steps the spike
//! count is `floor(T / k)`, so at most `T + 1` distinct codes exist.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the LIF membrane recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLifParams", into = "RawLifParams")]
pub struct LifParams {
    v_th: f64,
    tau: f64,
    v_reset: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLifParams {
    v_th: f64,
    tau: f64,
    v_reset: f64,
}

impl TryFrom<RawLifParams> for LifParams {
    type Error = Error;

    fn try_from(raw: RawLifParams) -> Result<Self> {
        LifParams::new(raw.v_th, raw.tau, raw.v_reset)
    }
}

impl From<LifParams> for RawLifParams {
    fn from(p: LifParams) -> Self {
        RawLifParams {
            v_th: p.v_th,
            tau: p.tau,
            v_reset: p.v_reset,
        }
    }
}

impl Default for LifParams {
    /// `v_th = 1`, `tau = 2`, `v_reset = 0`.
    fn default() -> Self {
        LifParams {
            v_th: 1.0,
            tau: 2.0,
            v_reset: 0.0,
        }
    }
}

impl LifParams {
    /// Validates `v_th > 0`, `tau > 1` and `v_reset < v_th`.
    pub fn new(v_th: f64, tau: f64, v_reset: f64) -> Result<Self> {
        if !(v_th.is_finite() && v_th > 0.0) {
            return Err(Error::invalid(format!("v_th must be > 0, got {v_th}")));
        }
        if !(tau.is_finite() && tau > 1.0) {
            return Err(Error::invalid(format!("tau must be > 1, got {tau}")));
        }
        if !(v_reset.is_finite() && v_reset < v_th) {
            return Err(Error::invalid(format!(
                "v_reset must be finite and below v_th, got {v_reset}"
            )));
        }
        Ok(LifParams { v_th, tau, v_reset })
    }

    /// Threshold and time constant with the default discharge-to-zero reset.
    pub fn with_threshold(v_th: f64, tau: f64) -> Result<Self> {
        Self::new(v_th, tau, 0.0)
    }

    pub fn v_th(&self) -> f64 {
        self.v_th
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn v_reset(&self) -> f64 {
        self.v_reset
    }

    /// Per-step retention factor `1 - 1/tau`, in `(0, 1)`.
    pub fn leak(&self) -> f64 {
        1.0 - 1.0 / self.tau
    }

    /// Smallest constant input that makes the neuron fire on every step.
    pub fn saturation_input(&self) -> f64 {
        (self.v_th - self.v_reset) * self.tau
    }

    /// Largest constant input that never fires, however long it is applied.
    pub fn silence_limit(&self) -> f64 {
        self.v_th - self.v_reset
    }
}

/// Binary spike train over `T` timesteps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTrain {
    bits: Vec<bool>,
}

impl SpikeTrain {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("spike train needs at least one timestep"));
        }
        Ok(SpikeTrain { bits })
    }

    pub fn silent(t_count: usize) -> Result<Self> {
        Self::new(vec![false; t_count])
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn t_count(&self) -> usize {
        self.bits.len()
    }

    pub fn spike_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Index of the first spike, if any.
    pub fn first_spike(&self) -> Option<usize> {
        self.bits.iter().position(|&b| b)
    }
}

impl fmt::Display for SpikeTrain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SpikeTrain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("spike train digit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        SpikeTrain::new(bits)
    }
}

/// Membrane potentials sampled after each update and before any reset,
/// alongside the emitted spikes.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneTrace {
    pub potentials: Vec<f64>,
    pub spikes: SpikeTrain,
}

/// One LIF update. Returns the pre-reset potential and whether it fired; the
/// state carried to the next step is `v_reset` when it fired.
#[inline]
pub fn step_membrane(v_prev: f64, x: f64, p: &LifParams) -> (f64, bool) {
    let v_new = v_prev + (-(v_prev - p.v_reset) + x) / p.tau;
    (v_new, v_new >= p.v_th)
}

/// Drives a fresh neuron (initial potential `v_reset`) with constant `x` for
/// `t_count` steps.
pub fn encode_lif(x: f64, t_count: usize, p: &LifParams) -> Result<MembraneTrace> {
    if t_count == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    let mut potentials = Vec::with_capacity(t_count);
    let mut bits = Vec::with_capacity(t_count);
    let mut v = p.v_reset;
    for _ in 0..t_count {
        let (v_new, spiked) = step_membrane(v, x, p);
        potentials.push(v_new);
        bits.push(spiked);
        v = if spiked { p.v_reset } else { v_new };
    }
    Ok(MembraneTrace {
        potentials,
        spikes: SpikeTrain { bits },
    })
}

/// Number of spikes emitted in `t_count` steps for constant input `x`,
/// without materialising the trace.
pub fn spike_count(x: f64, t_count: usize, p: &LifParams) -> usize {
    let mut v = p.v_reset;
    let mut count = 0;
    for _ in 0..t_count {
        let (v_new, spiked) = step_membrane(v, x, p);
        if spiked {
            count += 1;
            v = p.v_reset;
        } else {
            v = v_new;
        }
    }
    count
}

/// Rate decoding: fraction of timesteps carrying a spike.
pub fn decode_rate(s: &SpikeTrain) -> f64 {
    s.spike_count() as f64 / s.t_count() as f64
}

/// Minimal constant input that produces a spike after exactly `k` charge
/// steps, i.e. whose first spike lands on timestep `k - 1`.
pub fn quantization_boundary(k: usize, p: &LifParams) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("charge duration k must be >= 1"));
    }
    let k = i32::try_from(k).map_err(|_| Error::invalid("charge duration too large"))?;
    Ok((p.v_th - p.v_reset) / (1.0 - p.leak().powi(k)))
}

/// One cell of the LIF quantizer.
///
/// `k` is the number of steps from reset to spike (the firing period), in
/// `1..=T`. `k == 0` marks the cell where no spike occurs within `T` steps;
/// it always sorts last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerRow {
    pub k: usize,
    pub firing_rate: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl QuantizerRow {
    pub fn never_fires(&self) -> bool {
        self.k == 0
    }

    /// Spike count over `t_count` steps implied by this row.
    pub fn spike_count(&self, t_count: usize) -> usize {
        if self.k == 0 {
            0
        } else {
            t_count / self.k
        }
    }

    /// Output code of this row: spikes on every `k`-th step.
    pub fn pattern(&self, t_count: usize) -> SpikeTrain {
        let bits = (0..t_count)
            .map(|t| self.k != 0 && (t + 1) % self.k == 0)
            .collect();
        SpikeTrain { bits }
    }
}

/// Input cells and firing rates of a LIF neuron stimulated for `T` steps.
///
/// Rows tile `(v_th - v_reset, upper]`: row `k` covers `[x_k, x_{k-1})` with
/// `x_0 = upper`, and the final `k = 0` row covers `(v_th, x_T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerTable {
    t_count: usize,
    params: LifParams,
    rows: Vec<QuantizerRow>,
}

/// Default sweep cap, as a multiple of the saturation input `v_th * tau`.
pub const DEFAULT_CAP_FACTOR: f64 = 1.5;

impl QuantizerTable {
    pub fn t_count(&self) -> usize {
        self.t_count
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    pub fn rows(&self) -> &[QuantizerRow] {
        &self.rows
    }

    /// Distinct firing rates, in descending order.
    pub fn distinct_rates(&self) -> Vec<f64> {
        let mut rates: Vec<f64> = Vec::new();
        for row in &self.rows {
            if rates.last() != Some(&row.firing_rate) {
                rates.push(row.firing_rate);
            }
        }
        rates
    }

    /// Distinct output codes (spike patterns); `T + 1` for every `T`.
    pub fn distinct_codes(&self) -> Vec<SpikeTrain> {
        let mut codes: Vec<SpikeTrain> = Vec::new();
        for row in &self.rows {
            let code = row.pattern(self.t_count);
            if !codes.contains(&code) {
                codes.push(code);
            }
        }
        codes
    }

    /// Boundaries `x_1 > x_2 > ... > x_T`.
    pub fn boundaries(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| !r.never_fires())
            .map(|r| r.x_lo)
            .collect()
    }

    /// Row whose cell contains `x`, or `None` below `v_th` or above the cap.
    pub fn lookup(&self, x: f64) -> Option<&QuantizerRow> {
        self.rows.iter().find(|r| {
            if r.k == 1 {
                x >= r.x_lo && x <= r.x_hi
            } else if r.never_fires() {
                x > r.x_lo && x < r.x_hi
            } else {
                x >= r.x_lo && x < r.x_hi
            }
        })
    }
}

/// Builds the quantizer table with the cap at `1.5 * v_th * tau`.
pub fn build_quantizer_table(t_count: usize, p: &LifParams) -> Result<QuantizerTable> {
    build_quantizer_table_with_cap(t_count, p, DEFAULT_CAP_FACTOR * p.saturation_input())
}

/// Builds the quantizer table for inputs up to `upper`.
///
/// Firing rates are obtained by simulating one representative input inside
/// each cell.
pub fn build_quantizer_table_with_cap(
    t_count: usize,
    p: &LifParams,
    upper: f64,
) -> Result<QuantizerTable> {
    if t_count == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    if !(upper >= p.saturation_input()) {
        return Err(Error::invalid(format!(
            "cap {upper} must be >= the saturation input {}",
            p.saturation_input()
        )));
    }
    let mut rows = Vec::with_capacity(t_count + 1);
    let mut x_hi = upper;
    for k in 1..=t_count {
        let x_lo = quantization_boundary(k, p)?;
        let probe = if k == 1 { x_lo } else { 0.5 * (x_lo + x_hi) };
        let firing_rate = spike_count(probe, t_count, p) as f64 / t_count as f64;
        rows.push(QuantizerRow {
            k,
            firing_rate,
            x_lo,
            x_hi,
        });
        x_hi = x_lo;
    }
    let probe = 0.5 * (p.silence_limit() + x_hi);
    let firing_rate = spike_count(probe, t_count, p) as f64 / t_count as f64;
    rows.push(QuantizerRow {
        k: 0,
        firing_rate,
        x_lo: p.silence_limit(),
        x_hi,
    });
    Ok(QuantizerTable {
        t_count,
        params: *p,
        rows,
    })
}
