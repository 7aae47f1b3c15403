//! Identification-time laws, Monte-Carlo identification experiments and
//! clock-limited group capacity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{ChannelParams, DriftSampler, SeqStats};
use crate::classifier::{Classifier, Decision};
use crate::codebook::{generate_nrz, hamming_filter_random, Dictionary, GenerationParams};
use crate::{Error, Result};

/// Threshold used by the identification experiments: nearest-row decoding
/// with a loose floor that only rejects windows closer to a complement.
pub const EXPERIMENT_THRESHOLD: f64 = 0.5;

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Closed-form law of the identification time `T_d` (in samples).
#[derive(Clone, Debug, PartialEq)]
pub struct IdTimeDistribution {
    pub len: usize,
    pub p_b: f64,
    pub hm: usize,
    /// `probs[i]` is `Pr(T_d = len + i)`; `None` where no closed form exists.
    pub probs: Vec<Option<f64>>,
    /// `q^L [L + 1.5pL² + pL/2]`: the mean with the tail beyond `2L`
    /// dropped. Only for `hm ≤ 2`.
    pub expected_approx: Option<f64>,
    /// `Σ n·Pr(T_d = n)` over the available terms.
    pub expected_truncated: f64,
    /// Probability mass not covered by the available terms.
    pub residual: f64,
}

impl IdTimeDistribution {
    pub fn prob(&self, n: usize) -> Option<f64> {
        if n < self.len {
            return Some(0.0);
        }
        self.probs.get(n - self.len).copied().flatten()
    }
}

/// Identification-time law when every window must be error-free (`hm ≤ 2`)
/// or may hold one error (`hm = 3`).
///
/// For `hm ≤ 2`, `T_d = n > L` needs an error at `n−L`, a clean window after
/// it, and no earlier clean window, which gives the exact recursion
/// `Pr(n) = p q^L (1 − Σ_{j=L}^{n−L−1} Pr(j))`. For `hm = 3` the closed forms
/// cover `n ≤ 2L`.
pub fn id_time_analytic(len: usize, p_b: f64, hm: usize, n_max: usize) -> Result<IdTimeDistribution> {
    if len == 0 || n_max < 2 * len || !(0.0..=1.0).contains(&p_b) {
        return Err(Error::InvalidParam(format!(
            "need L ≥ 1, n_max ≥ 2L and p_b in [0, 1] (L={len}, n_max={n_max}, p_b={p_b})"
        )));
    }
    let (p, q, l) = (p_b, 1.0 - p_b, len as i32);
    let mut probs: Vec<Option<f64>> = Vec::with_capacity(n_max - len + 1);
    let mut expected_approx = None;
    match hm {
        1 | 2 => {
            let ql = q.powi(l);
            let mut cum = vec![0.0f64; n_max + 2];
            for n in len..=n_max {
                let pr = if n == len {
                    ql
                } else {
                    let upto = n - len - 1;
                    let before = if upto >= len { cum[upto] } else { 0.0 };
                    p * ql * (1.0 - before)
                };
                cum[n] = cum[n - 1] + pr;
                probs.push(Some(pr));
            }
            let lf = len as f64;
            expected_approx = Some(ql * (lf + 1.5 * p * lf * lf + 0.5 * p * lf));
        }
        3 => {
            let qlm1 = q.powi(l - 1);
            probs.push(Some(q.powi(l) + len as f64 * p * qlm1));
            for m in 1..=(n_max - len) {
                if m <= len {
                    let lf = len as f64;
                    probs.push(Some(p * qlm1 * (lf * p - 1.0 + q.powi(m as i32))));
                } else {
                    probs.push(None);
                }
            }
        }
        _ => return Err(Error::InvalidParam(format!("analytic identification time covers hm in 1..=3, got {hm}"))),
    }
    let mut mass = 0.0;
    let mut mean = 0.0;
    for (i, pr) in probs.iter().enumerate() {
        if let Some(pr) = pr {
            mass += pr;
            mean += (len + i) as f64 * pr;
        }
    }
    Ok(IdTimeDistribution {
        len,
        p_b,
        hm,
        probs,
        expected_approx,
        expected_truncated: mean,
        residual: (1.0 - mass).max(0.0),
    })
}

/// Monte-Carlo of the error-pattern regime behind [`id_time_analytic`]:
/// independent bit errors with probability `p_b`; `T_d` is the first
/// `n ≥ L` whose last `L` samples contain at most `tolerated` errors.
/// Returns the histogram `counts[n]` (index 0 collects runs censored at
/// `n_max`).
pub fn error_regime_monte_carlo(
    len: usize,
    p_b: f64,
    tolerated: usize,
    trials: u64,
    n_max: usize,
    seed: u64,
) -> Vec<u64> {
    let samples: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let mut err = vec![false; n_max + 1];
            let mut in_window = 0usize;
            for n in 1..=n_max {
                err[n] = rng.random::<f64>() < p_b;
                in_window += err[n] as usize;
                if n > len && err[n - len] {
                    in_window -= 1;
                }
                if n >= len && in_window <= tolerated {
                    return n;
                }
            }
            0
        })
        .collect();
    let mut counts = vec![0u64; n_max + 1];
    for s in samples {
        counts[s] += 1;
    }
    counts
}

/// Settings of one identification experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub trials: u64,
    pub delta: f64,
    pub threshold: f64,
    pub seed: u64,
    /// Samples after which a trial without a correct decision is censored.
    pub max_samples: usize,
}

impl ExperimentConfig {
    pub fn new(trials: u64, delta: f64, seed: u64) -> Self {
        Self { trials, delta, threshold: EXPERIMENT_THRESHOLD, seed, max_samples: 10_000 }
    }
}

/// Outcome of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialOutcome {
    pub row: usize,
    /// Samples until the first correct decision, if reached.
    pub id_time: Option<u32>,
    /// Whether the first accepted decision named the right row, if any.
    pub first_correct: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub len: usize,
    pub hm: usize,
    pub rows: usize,
    pub channel: ChannelParams,
    pub config: ExperimentConfig,
    pub outcomes: Vec<TrialOutcome>,
    /// Trials whose first accepted decision was wrong.
    pub errors: u64,
    /// Trials with at least one accepted decision.
    pub decided: u64,
    /// Trials without a correct decision within `max_samples`.
    pub censored: u64,
    pub mean_id_time: f64,
    pub se_id_time: f64,
    pub p_ce: f64,
    pub se_p_ce: f64,
}

/// Runs the identification experiment with the default threshold and
/// censoring limit.
pub fn run_id_experiment(
    dict: &Dictionary,
    channel: &ChannelParams,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<SimReport> {
    run_id_experiment_with(dict, channel, &ExperimentConfig::new(trials, delta, seed))
}

/// Each trial draws a row, a phase and a receiver/transmitter clock offset,
/// streams the repeated row through the drifting channel into a fresh
/// classifier, and records the first accepted decision and the time to the
/// first correct one.
pub fn run_id_experiment_with(dict: &Dictionary, channel: &ChannelParams, cfg: &ExperimentConfig) -> Result<SimReport> {
    channel.validate()?;
    if cfg.trials == 0 {
        return Err(Error::InvalidParam("trials must be positive".into()));
    }
    let classifier = Classifier::new(dict, cfg.threshold)?.with_lookup();
    let stats = SeqStats::from_rows(&dict.rows);
    let observer = channel.observer(stats.mean);
    let tau = observer.exposure_periods();
    let l = dict.seq_len() as i64;
    let rows = &dict.rows;
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let m = rng.random_range(0..rows.len());
            let phase = rng.random_range(0..l);
            let sampler = DriftSampler::new(cfg.delta, rng.random::<f64>());
            let row = rows[m];
            let mut state = classifier.state();
            let mut first_correct = None;
            for k in 0..cfg.max_samples as u64 {
                let kt = sampler.tx_index(k) + phase;
                let now = row.bit(kt.rem_euclid(l) as usize);
                let next = row.bit((kt + 1).rem_euclid(l) as usize);
                let y = observer.observe(now, next, sampler.mixing(k, tau), &mut rng);
                if let Decision::Id(i) = state.classify(y).decision {
                    first_correct.get_or_insert(i == m);
                    if i == m {
                        return TrialOutcome { row: m, id_time: Some(k as u32 + 1), first_correct };
                    }
                }
            }
            TrialOutcome { row: m, id_time: None, first_correct }
        })
        .collect();
    Ok(summarize(dict, channel, cfg, outcomes))
}

fn summarize(dict: &Dictionary, channel: &ChannelParams, cfg: &ExperimentConfig, outcomes: Vec<TrialOutcome>) -> SimReport {
    let mut decided = 0u64;
    let mut errors = 0u64;
    let (mut n, mut sum, mut sum2) = (0u64, 0.0f64, 0.0f64);
    for o in &outcomes {
        if let Some(ok) = o.first_correct {
            decided += 1;
            errors += (!ok) as u64;
        }
        if let Some(t) = o.id_time {
            n += 1;
            sum += t as f64;
            sum2 += (t as f64).powi(2);
        }
    }
    let mean = if n > 0 { sum / n as f64 } else { f64::NAN };
    let var = if n > 1 { (sum2 - n as f64 * mean * mean) / (n as f64 - 1.0) } else { 0.0 };
    let p_ce = if decided > 0 { errors as f64 / decided as f64 } else { f64::NAN };
    SimReport {
        len: dict.seq_len(),
        hm: dict.params.min_distance,
        rows: dict.len(),
        channel: *channel,
        config: cfg.clone(),
        errors,
        decided,
        censored: outcomes.len() as u64 - n,
        mean_id_time: mean,
        se_id_time: (var.max(0.0) / n.max(1) as f64).sqrt(),
        p_ce,
        se_p_ce: (p_ce * (1.0 - p_ce) / decided.max(1) as f64).sqrt(),
        outcomes,
    }
}

/// Largest length for which all `J(J−1)` ordered links of a group are
/// drift-safe with probability ≥ `p_g`, given `T/σ_T`.
pub fn l_max(j: usize, p_g: f64, clock_quality: f64) -> f64 {
    let links = (j * (j - 1)) as f64;
    clock_quality * (0.5 * (1.0 - (p_g.ln() / links).exp())).sqrt()
}

/// One dictionary-parameter template; `None` run caps mean "no cap" (`L`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub min_power: f64,
    pub max_ones_run: Option<usize>,
    pub max_zeros_run: Option<usize>,
}

impl GridPoint {
    pub const UNCONSTRAINED: GridPoint = GridPoint { min_power: 0.0, max_ones_run: None, max_zeros_run: None };

    fn params(&self, len: usize, hm: usize) -> GenerationParams {
        let cap = |c: Option<usize>| c.unwrap_or(len).clamp(1, len);
        GenerationParams::nrz(len, self.min_power, cap(self.max_ones_run), cap(self.max_zeros_run), hm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityConfig {
    pub j_min: usize,
    pub j_max: usize,
    pub p_g: f64,
    pub clock_quality: f64,
    pub seqs_per_uav: usize,
    pub grid: Vec<GridPoint>,
    /// Restarts of the distance-3 search at each length.
    pub iterations: usize,
    pub seed: u64,
    /// Longest length tried when searching for `L_min`.
    pub max_len: usize,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            j_min: 2,
            j_max: 60,
            p_g: 0.999,
            clock_quality: 1e4,
            seqs_per_uav: 1,
            grid: vec![GridPoint::UNCONSTRAINED],
            iterations: 2_000,
            seed: crate::codebook::DEFAULT_SEED,
            max_len: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityCurve {
    pub config: CapacityConfig,
    pub j: Vec<usize>,
    pub l_max: Vec<f64>,
    /// Shortest length giving `J·seqs_per_uav` sequences; `None` beyond `max_len`.
    pub l_min_h1: Vec<Option<usize>>,
    pub l_min_h3: Vec<Option<usize>>,
    /// Smallest `J` whose `L_min` exceeds `L_max`.
    pub crossing_h1: Option<usize>,
    pub crossing_h3: Option<usize>,
}

// Largest dictionary over the grid at each length 1..=max_len, stopping
// once `need` sequences are reachable.
fn sizes_up_to(cfg: &CapacityConfig, hm: usize, need: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize];
    for len in 1..=cfg.max_len {
        let mut best = 0;
        if hm <= len {
            for g in &cfg.grid {
                let base = generate_nrz(&g.params(len, 1))?;
                let n = if hm == 1 {
                    base.len()
                } else {
                    hamming_filter_random(&base, hm, cfg.iterations, cfg.seed).len()
                };
                best = best.max(n);
            }
        }
        sizes.push(best);
        if best >= need {
            break;
        }
    }
    Ok(sizes)
}

fn l_min(sizes: &[usize], need: usize) -> Option<usize> {
    sizes.iter().position(|&s| s >= need)
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn capacity_curve(cfg: &CapacityConfig) -> Result<CapacityCurve> {
    if cfg.j_min < 2 || cfg.j_max < cfg.j_min {
        return Err(Error::InvalidParam("need 2 ≤ j_min ≤ j_max".into()));
    }
    if !(cfg.p_g > 0.0 && cfg.p_g < 1.0) || !(cfg.clock_quality > 0.0) || cfg.seqs_per_uav == 0 {
        return Err(Error::InvalidParam("need 0 < p_g < 1, T/sigma_T > 0 and seqs_per_uav ≥ 1".into()));
    }
    if cfg.grid.is_empty() {
        return Err(Error::InvalidParam("dictionary parameter grid is empty".into()));
    }
    let need = cfg.j_max * cfg.seqs_per_uav;
    let s1 = sizes_up_to(cfg, 1, need)?;
    let s3 = sizes_up_to(cfg, 3, need)?;
    let j: Vec<usize> = (cfg.j_min..=cfg.j_max).collect();
    let l_max_v: Vec<f64> = j.iter().map(|&j| l_max(j, cfg.p_g, cfg.clock_quality)).collect();
    let l_min_h1: Vec<Option<usize>> = j.iter().map(|&j| l_min(&s1, j * cfg.seqs_per_uav)).collect();
    let l_min_h3: Vec<Option<usize>> = j.iter().map(|&j| l_min(&s3, j * cfg.seqs_per_uav)).collect();
    let crossing = |lm: &[Option<usize>]| {
        j.iter()
            .zip(lm)
            .zip(&l_max_v)
            .find(|((_, m), &mx)| m.is_none_or(|m| m as f64 > mx))
            .map(|((&j, _), _)| j)
    };
    let crossing_h1 = crossing(&l_min_h1);
    let crossing_h3 = crossing(&l_min_h3);
    Ok(CapacityCurve { config: cfg.clone(), j, l_max: l_max_v, l_min_h1, l_min_h3, crossing_h1, crossing_h3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_identification_is_immediate() {
        let d = id_time_analytic(8, 0.0, 1, 16).unwrap();
        assert_eq!(d.prob(8), Some(1.0));
        assert_eq!(d.prob(7), Some(0.0));
        assert_eq!(d.prob(9), Some(0.0));
    }

    #[test]
    fn approx_mean_at_small_error_rate() {
        let d = id_time_analytic(8, 1e-3, 1, 160).unwrap();
        let e = d.expected_approx.unwrap();
        assert!((e - 8.031).abs() / 8.031 < 0.005, "{e}");
        assert!(d.residual < 1e-12);
    }

    #[test]
    fn hm3_tail_is_unavailable() {
        let d = id_time_analytic(13, 0.1, 3, 60).unwrap();
        assert!(d.prob(26).is_some());
        assert!(d.prob(27).is_none());
        assert!(d.expected_approx.is_none());
    }

    #[test]
    fn bad_inputs() {
        assert!(id_time_analytic(8, 0.1, 1, 15).is_err());
        assert!(id_time_analytic(8, 0.1, 4, 16).is_err());
    }

    #[test]
    fn l_max_two_uavs() {
        assert!((l_max(2, 0.999, 1e4) - 158.1).abs() < 0.05);
    }
}
