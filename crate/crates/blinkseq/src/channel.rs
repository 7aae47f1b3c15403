//! Clock model, transmitter/receiver timing, exposure mixing, optical SNR
//! and bit-error probability, and the bit-level channel used by the
//! simulations.
//!
//! Times are in seconds. Inside the drift sampler they are expressed in
//! transmitter periods.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use statrs::function::erf::erfc;

use crate::codebook::Dictionary;
use crate::seqcore::BinarySequence;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JitterLaw {
    None,
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian(f64),
    /// Zero-mean Laplace with the given scale `b` (stddev `b·√2`).
    Laplace(f64),
}

impl JitterLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JitterLaw::None => 0.0,
            JitterLaw::Gaussian(s) => s * rng.sample::<f64, _>(StandardNormal),
            JitterLaw::Laplace(b) => {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() { b * e } else { -b * e }
            }
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            JitterLaw::None => 0.0,
            JitterLaw::Gaussian(s) | JitterLaw::Laplace(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockModel {
    pub nominal_period: f64,
    pub period_stddev: f64,
    pub jitter: JitterLaw,
    /// Instant the clock is switched on.
    pub start_offset: f64,
    pub seed: u64,
}

impl ClockModel {
    pub fn ideal(period: f64) -> Self {
        Self { nominal_period: period, period_stddev: 0.0, jitter: JitterLaw::None, start_offset: 0.0, seed: 0 }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_period > 0.0) || !(self.period_stddev >= 0.0) || !(self.jitter.scale() >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "clock needs T > 0, sigma_T >= 0, jitter scale >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Draws a true period from N(T, σ_T), redrawing the (practically
    /// impossible for σ_T ≪ T) nonpositive values.
    pub fn draw_period<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.period_stddev == 0.0 {
            return self.nominal_period;
        }
        let n = Normal::new(self.nominal_period, self.period_stddev).expect("validated stddev");
        loop {
            let t = n.sample(rng);
            if t > 0.0 {
                return t;
            }
        }
    }

    /// Fixes the clock's true period for one run.
    pub fn realize(&self) -> Result<RealizedClock> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let period = self.draw_period(&mut rng);
        Ok(RealizedClock { period, start_offset: self.start_offset, jitter: self.jitter, seed: self.seed })
    }
}

/// A clock whose period has been drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealizedClock {
    pub period: f64,
    pub start_offset: f64,
    pub jitter: JitterLaw,
    pub seed: u64,
}

impl RealizedClock {
    pub fn fixed(period: f64, start_offset: f64) -> Self {
        Self { period, start_offset, jitter: JitterLaw::None, seed: 0 }
    }

    /// Edge instants `t_0, t_1, …` with `t_k = t_{k-1} + T_j + n_k`.
    pub fn edges(&self) -> Edges {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        Edges { clock: *self, next: self.start_offset, k: 0, rng }
    }

    /// Instant of edge `k`; linear time when the clock jitters.
    pub fn edge(&self, k: u64) -> f64 {
        match self.jitter {
            JitterLaw::None => self.start_offset + k as f64 * self.period,
            _ => self.edges().nth(k as usize).expect("edge iterator is infinite"),
        }
    }
}

pub struct Edges {
    clock: RealizedClock,
    next: f64,
    k: u64,
    rng: ChaCha8Rng,
}

impl Iterator for Edges {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        let t = self.next;
        // floor keeps edges strictly increasing under heavy jitter
        let step = (self.clock.period + self.clock.jitter.sample(&mut self.rng)).max(1e-9 * self.clock.period);
        self.next += step;
        self.k += 1;
        Some(t)
    }
}

/// δ = T_rx/T_tx − 1. Positive when the receiver is slower.
pub fn relative_mismatch(tx: &RealizedClock, rx: &RealizedClock) -> f64 {
    rx.period / tx.period - 1.0
}

/// Receiver ticks mapped onto a constant-period transmitter, in transmitter
/// periods: tick `k` falls at `offset + k·(1+δ)`, so the sampled index is
/// `k + ⌊offset + k·δ⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftSampler {
    pub delta: f64,
    pub offset: f64,
}

impl DriftSampler {
    pub fn new(delta: f64, offset: f64) -> Self {
        Self { delta, offset }
    }

    pub fn from_clocks(tx: &RealizedClock, rx: &RealizedClock) -> Self {
        Self { delta: relative_mismatch(tx, rx), offset: (rx.start_offset - tx.start_offset) / tx.period }
    }

    /// Transmitter index sampled at receiver tick `k` (may be negative).
    #[inline]
    pub fn tx_index(&self, k: u64) -> i64 {
        k as i64 + (self.offset + k as f64 * self.delta).floor() as i64
    }

    /// Receiver tick instant in transmitter periods.
    #[inline]
    pub fn tick_time(&self, k: u64) -> f64 {
        self.offset + k as f64 * (1.0 + self.delta)
    }

    /// Fraction of an exposure of `tau` transmitter periods that overlaps
    /// the sampled bit.
    #[inline]
    pub fn mixing(&self, k: u64, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        let left = (self.tx_index(k) + 1) as f64 - self.tick_time(k);
        (left.clamp(0.0, tau)) / tau
    }
}

/// Transmitter bit index sampled at receiver tick `k0`, from the realized
/// edge times: the `n` with `t_tx(n) ≤ t_rx(k0) < t_tx(n+1)`.
pub fn sample_index_map(tx: &RealizedClock, rx: &RealizedClock, k0: u64) -> Result<i64> {
    let kt = if tx.jitter == JitterLaw::None && rx.jitter == JitterLaw::None {
        DriftSampler::from_clocks(tx, rx).tx_index(k0)
    } else {
        let t = rx.edge(k0);
        let mut n: i64 = -1;
        for e in tx.edges() {
            if e > t {
                break;
            }
            n += 1;
        }
        n
    };
    if kt < 0 {
        return Err(Error::PreBirth(k0));
    }
    Ok(kt)
}

/// Receiver ticks at which the sampled transmitter index did not advance by
/// exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftTrace {
    pub delta: f64,
    pub slip_positions: Vec<u64>,
    /// Index increments at the slips: 0 for a repeated bit, 2 for a skipped one.
    pub slip_steps: Vec<i64>,
}

pub fn drift_trace(tx: &RealizedClock, rx: &RealizedClock, ticks: u64) -> DriftTrace {
    let mut slip_positions = Vec::new();
    let mut slip_steps = Vec::new();
    let mut walker = IndexWalker::new(tx, rx);
    let mut prev = walker.next_index().0;
    for k in 1..ticks {
        let cur = walker.next_index().0;
        if cur - prev != 1 {
            slip_positions.push(k);
            slip_steps.push(cur - prev);
        }
        prev = cur;
    }
    DriftTrace { delta: relative_mismatch(tx, rx), slip_positions, slip_steps }
}

// Streams (k_t, mixing-left-time) for consecutive receiver ticks.
struct IndexWalker {
    mode: WalkMode,
    k: u64,
}

#[allow(clippy::large_enum_variant)]
enum WalkMode {
    Constant { sampler: DriftSampler, tx_period: f64 },
    Edges { tx: Edges, rx: Edges, tx_next: f64, n: i64 },
}

impl IndexWalker {
    fn new(tx: &RealizedClock, rx: &RealizedClock) -> Self {
        let mode = if tx.jitter == JitterLaw::None && rx.jitter == JitterLaw::None {
            WalkMode::Constant { sampler: DriftSampler::from_clocks(tx, rx), tx_period: tx.period }
        } else {
            let mut txe = tx.edges();
            let first = txe.next().unwrap_or(f64::INFINITY);
            WalkMode::Edges { tx: txe, rx: rx.edges(), tx_next: first, n: -1 }
        };
        Self { mode, k: 0 }
    }

    /// Returns `(k_t, time from the tick to the next transmitter edge)`.
    fn next_index(&mut self) -> (i64, f64) {
        let k = self.k;
        self.k += 1;
        match &mut self.mode {
            WalkMode::Constant { sampler, tx_period } => {
                let kt = sampler.tx_index(k);
                (kt, ((kt + 1) as f64 - sampler.tick_time(k)) * *tx_period)
            }
            WalkMode::Edges { tx, rx, tx_next, n } => {
                let t = rx.next().unwrap_or(f64::INFINITY);
                while *tx_next <= t {
                    *tx_next = tx.next().unwrap_or(f64::INFINITY);
                    *n += 1;
                }
                (*n, *tx_next - t)
            }
        }
    }
}

/// Draws the exposure-mixing coefficient: 1 with probability `(T−τ_e)/T`,
/// otherwise uniform on [0, 1].
pub fn exposure_mixing_sample<R: Rng + ?Sized>(tau_e: f64, period: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < tau_e / period {
        rng.random::<f64>()
    } else {
        1.0
    }
}

/// Lambertian link gain `K·R_o(φ)/d²`, `R_o(φ) = (m+1)cos^m(φ)/(2π)`,
/// `m = −ln 2 / ln cos(Φ½)`. Angles in radians.
pub fn lambertian_gain(k_gain: f64, distance: f64, departure: f64, half_power_angle: f64) -> f64 {
    let m = -std::f64::consts::LN_2 / half_power_angle.cos().ln();
    k_gain * (m + 1.0) * departure.cos().powf(m) / (2.0 * std::f64::consts::PI) / (distance * distance)
}

/// Parameters of the LED-to-pixel link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Emitted power P.
    pub power: f64,
    /// Channel gain h.
    pub gain: f64,
    /// Exposure time τ_e.
    pub exposure: f64,
    /// Clock period T.
    pub period: f64,
    /// Background level d_n.
    pub background: f64,
    /// σ²_th,1 (before exposure, per unit time).
    pub sigma2_th1: f64,
    /// σ²_th,2 (after exposure).
    pub sigma2_th2: f64,
    /// Shot-noise constant α.
    pub alpha: f64,
    /// Binarization threshold η_b.
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelParams {
    /// Independent flips with probability `p_b`.
    Bsc { p_b: f64 },
    Physical(PhysicalParams),
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelParams::Bsc { p_b } if (0.0..0.5).contains(p_b) => Ok(()),
            ChannelParams::Bsc { p_b } => Err(Error::InvalidParam(format!("p_b = {p_b} must lie in [0, 0.5)"))),
            ChannelParams::Physical(p) => p.validate(),
        }
    }

    /// Prepares per-sample observation for streams whose mean ones-density
    /// is `mean_ones` (it sets the shot-noise variance).
    pub fn observer(&self, mean_ones: f64) -> Observer {
        match *self {
            ChannelParams::Bsc { p_b } => Observer::Flip(p_b),
            ChannelParams::Physical(p) => Observer::Pixel {
                scale: p.gain * p.exposure * p.power,
                mean: p.background * p.exposure,
                sigma: p.noise_variance(mean_ones).sqrt(),
                threshold: p.threshold,
                tau: p.exposure / p.period,
            },
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.exposure > 0.0
            && self.exposure < self.period
            && self.sigma2_th2 > 0.0
            && self.sigma2_th1 >= 0.0
            && self.alpha >= 0.0
            && self.power >= 0.0
            && self.gain >= 0.0
            && self.background >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "physical channel needs 0 < tau_e < T, sigma2_th2 > 0 and nonnegative gains/noise (got {self:?})"
            )))
        }
    }

    /// Pixel noise variance `σ²_th,2 + (σ²_th,1 + (d_n + hP·E[s])α)τ_e`.
    pub fn noise_variance(&self, mean_ones: f64) -> f64 {
        self.sigma2_th2
            + (self.sigma2_th1 + (self.background + self.gain * self.power * mean_ones) * self.alpha) * self.exposure
    }
}

/// Ones density and adjacent-pair density of periodic streams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeqStats {
    /// `E[s]`
    pub mean: f64,
    /// E[s·s_next]
    pub pair_mean: f64,
}

/// Circular adjacent-pair frequencies `Pr(s_k = a, s_{k+1} = b)`, indexed
/// `[a][b]`, counted over all dictionary rows.
pub fn pair_priors(rows: &[BinarySequence]) -> [[f64; 2]; 2] {
    let mut c = [[0u64; 2]; 2];
    let mut n = 0u64;
    for r in rows {
        let l = r.len();
        for i in 0..l {
            c[r.bit(i) as usize][r.bit((i + 1) % l) as usize] += 1;
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    [[c[0][0] as f64 / n, c[0][1] as f64 / n], [c[1][0] as f64 / n, c[1][1] as f64 / n]]
}

impl SeqStats {
    pub fn from_rows(rows: &[BinarySequence]) -> Self {
        let p = pair_priors(rows);
        Self { mean: p[1][0] + p[1][1], pair_mean: p[1][1] }
    }
}

/// Optical SNR of one sample, averaged over exposure mixing.
pub fn snr(params: &PhysicalParams, stats: &SeqStats) -> f64 {
    let p = params;
    let r = p.exposure / (3.0 * p.period);
    let num = p.gain.powi(2) * p.power.powi(2) * p.exposure.powi(2)
        * ((1.0 - r) * stats.mean + r * stats.pair_mean);
    let den = p.exposure.powi(2) * p.background.powi(2)
        + p.exposure * (p.sigma2_th1 + p.alpha * p.background + p.alpha * p.gain * p.power * stats.mean)
        + p.sigma2_th2;
    num / den
}

fn phi(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

fn pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// ∫₀¹ Φ(u0 + (u1−u0)x) dx via the antiderivative uΦ(u) + φ(u).
fn mean_phi_on_segment(u0: f64, u1: f64) -> f64 {
    let du = u1 - u0;
    if du.abs() < 1e-6 {
        return phi(0.5 * (u0 + u1));
    }
    let g = |u: f64| u * phi(u) + pdf(u);
    ((g(u1) - g(u0)) / du).clamp(0.0, 1.0)
}

/// Probability that a sample with current bit `a`, next bit `b` is
/// binarized wrongly, averaged over the exposure-mixing distribution.
pub fn conditional_error(params: &PhysicalParams, mean_ones: f64, a: u8, b: u8) -> f64 {
    let p = params;
    let sigma = p.noise_variance(mean_ones).sqrt();
    let scale = p.gain * p.exposure * p.power;
    let level = |x: f64| scale * (x * a as f64 + (1.0 - x) * b as f64) + p.background * p.exposure;
    // standardized distance from the level to the wrong side of the threshold
    let u = |x: f64| {
        let z = (level(x) - p.threshold) / sigma;
        if a == 1 { -z } else { z }
    };
    let w_mix = p.exposure / p.period;
    (1.0 - w_mix) * phi(u(1.0)) + w_mix * mean_phi_on_segment(u(0.0), u(1.0))
}

/// Bit-error probability of the thresholded pixel, with pair priors counted
/// from the dictionary rows. The mixing integral is evaluated in closed
/// form (the pixel level is linear in the mixing coefficient).
pub fn bit_error_probability(params: &PhysicalParams, dict: &Dictionary) -> Result<f64> {
    params.validate()?;
    if dict.is_empty() {
        return Err(Error::InvalidParam("bit error probability needs a nonempty dictionary".into()));
    }
    let pri = pair_priors(&dict.rows);
    let mean = pri[1][0] + pri[1][1];
    let mut pb = 0.0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            pb += pri[a as usize][b as usize] * conditional_error(params, mean, a, b);
        }
    }
    Ok(pb.clamp(0.0, 1.0))
}

/// Per-sample observation model built by [`ChannelParams::observer`].
#[derive(Clone, Copy, Debug)]
pub enum Observer {
    Flip(f64),
    Pixel { scale: f64, mean: f64, sigma: f64, threshold: f64, tau: f64 },
}

impl Observer {
    /// Received bit for current bit `now`, following bit `next` and mixing
    /// coefficient `mix`.
    #[inline]
    pub fn observe<R: Rng + ?Sized>(&self, now: u8, next: u8, mix: f64, rng: &mut R) -> u8 {
        match *self {
            Observer::Flip(p) => {
                if p > 0.0 && rng.random::<f64>() < p { now ^ 1 } else { now }
            }
            Observer::Pixel { scale, mean, sigma, threshold, .. } => {
                let x = scale * (mix * now as f64 + (1.0 - mix) * next as f64)
                    + mean
                    + sigma * rng.sample::<f64, _>(StandardNormal);
                (x > threshold) as u8
            }
        }
    }

    /// Exposure in transmitter periods (0 for the flip channel).
    pub fn exposure_periods(&self) -> f64 {
        match *self {
            Observer::Flip(_) => 0.0,
            Observer::Pixel { tau, .. } => tau,
        }
    }
}

/// Samples `n_samples` receiver ticks of the transmitter repeating `row`
/// from phase `d`. Ticks before the transmitter's first edge read 0.
pub fn transmit(
    row: &BinarySequence,
    n_samples: usize,
    channel: &ChannelParams,
    tx: &ClockModel,
    rx: &ClockModel,
    phase: usize,
    seed: u64,
) -> Result<Vec<u8>> {
    channel.validate()?;
    let (txr, rxr) = (tx.realize()?, rx.realize()?);
    let l = row.len() as i64;
    let obs = channel.observer(row.weight() as f64 / l as f64);
    let tau_secs = obs.exposure_periods() * match channel {
        ChannelParams::Physical(p) => p.period,
        ChannelParams::Bsc { .. } => 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walker = IndexWalker::new(&txr, &rxr);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (kt, left) = walker.next_index();
        if kt < 0 {
            out.push(0);
            continue;
        }
        let now = row.bit((kt + phase as i64).rem_euclid(l) as usize);
        let next = row.bit((kt + 1 + phase as i64).rem_euclid(l) as usize);
        let mix = if tau_secs > 0.0 { left.clamp(0.0, tau_secs) / tau_secs } else { 1.0 };
        out.push(obs.observe(now, next, mix, &mut rng));
    }
    Ok(out)
}

/// Received-stream trace: `# key=value` header lines, then the samples as
/// `0`/`1` characters (whitespace ignored on read).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trace {
    pub header: BTreeMap<String, String>,
    pub samples: Vec<u8>,
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            out.push_str(&format!("# {k}={v}\n"));
        }
        for &b in &self.samples {
            out.push(if b == 1 { '1' } else { '0' });
        }
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut t = Trace::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.trim().split_once('=') {
                    t.header.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            for c in line.chars() {
                match c {
                    '0' => t.samples.push(0),
                    '1' => t.samples.push(1),
                    c if c.is_whitespace() => {}
                    c => return Err(Error::Parse(format!("trace line {}: unexpected character {c:?}", n + 1))),
                }
            }
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_clocks_map_identity() {
        let c = ClockModel::ideal(1.0 / 60.0).realize().unwrap();
        for k in [0, 1, 7, 1000, 123_456] {
            assert_eq!(sample_index_map(&c, &c, k).unwrap(), k as i64);
        }
    }

    #[test]
    fn receiver_before_transmitter_is_pre_birth() {
        let tx = RealizedClock::fixed(1.0, 5.0);
        let rx = RealizedClock::fixed(1.0, 0.5);
        assert_eq!(sample_index_map(&tx, &rx, 0), Err(Error::PreBirth(0)));
        assert_eq!(sample_index_map(&tx, &rx, 5).unwrap(), 0);
    }

    #[test]
    fn jittered_walk_matches_direct_map() {
        let mut tx = ClockModel::ideal(1.0);
        tx.jitter = JitterLaw::Laplace(0.01);
        tx.seed = 3;
        let mut rx = ClockModel::ideal(1.003);
        rx.jitter = JitterLaw::Gaussian(0.01);
        rx.start_offset = 0.4;
        rx.seed = 4;
        let (tx, rx) = (tx.realize().unwrap(), rx.realize().unwrap());
        let mut w = IndexWalker::new(&tx, &rx);
        for k in 0..300 {
            assert_eq!(w.next_index().0, sample_index_map(&tx, &rx, k).unwrap());
        }
    }

    #[test]
    fn snr_zero_power() {
        let p = PhysicalParams {
            power: 0.0, gain: 1.0, exposure: 0.1, period: 1.0, background: 0.1,
            sigma2_th1: 0.1, sigma2_th2: 0.1, alpha: 0.1, threshold: 0.5,
        };
        assert_eq!(snr(&p, &SeqStats { mean: 0.5, pair_mean: 0.25 }), 0.0);
    }

    #[test]
    fn mixing_segment_matches_midpoint_rule() {
        for (u0, u1) in [(-3.0, 2.0), (0.5, 0.5), (4.0, -1.0), (-9.0, -6.0)] {
            let n = 200_000;
            let direct: f64 = (0..n)
                .map(|i| phi(u0 + (u1 - u0) * (i as f64 + 0.5) / n as f64))
                .sum::<f64>()
                / n as f64;
            assert!((direct - mean_phi_on_segment(u0, u1)).abs() < 1e-9, "{u0} {u1}");
        }
    }

    #[test]
    fn trace_roundtrip() {
        let mut t = Trace::default();
        t.header.insert("seed".into(), "9".into());
        t.samples = vec![0, 1, 1, 0, 1];
        assert_eq!(Trace::from_text(&t.to_text()).unwrap(), t);
        assert!(Trace::from_text("01x").is_err());
    }
}
