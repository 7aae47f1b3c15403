//! Codebook generation: power, circularity, run-length and distance tests
//! over the exhaustive set of length-`L` words, the closed-form cardinality
//! estimator, and Hamming-distance elimination.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::seqcore::{
    circular_hamming_words, is_canonical_word, max_run_word, BinarySequence, MAX_LEN,
};
use crate::{Error, Result};

pub const DEFAULT_SEARCH_ITERATIONS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

// Slack for products like 10 * 0.3 that land a hair above an integer.
const POWER_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coding {
    Nrz,
    Manchester,
}

impl Coding {
    /// Clock periods per data bit.
    pub fn periods_per_bit(self) -> usize {
        match self {
            Coding::Nrz => 1,
            Coding::Manchester => 2,
        }
    }
}

impl fmt::Display for Coding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coding::Nrz => "nrz",
            Coding::Manchester => "manchester",
        })
    }
}

impl FromStr for Coding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nrz" => Ok(Coding::Nrz),
            "manchester" => Ok(Coding::Manchester),
            other => Err(Error::Parse(format!("unknown coding {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationParams {
    pub length: usize,
    /// Minimum normalized average power, b̄.
    pub min_power: f64,
    /// N1
    pub max_ones_run: usize,
    /// N0
    pub max_zeros_run: usize,
    /// Hm
    pub min_distance: usize,
    pub coding: Coding,
    pub search_iterations: usize,
    pub seed: u64,
    pub enumeration_cap: usize,
}

impl GenerationParams {
    pub fn nrz(length: usize, min_power: f64, n1: usize, n0: usize, hm: usize) -> Self {
        Self {
            length,
            min_power,
            max_ones_run: n1,
            max_zeros_run: n0,
            min_distance: hm,
            coding: Coding::Nrz,
            search_iterations: DEFAULT_SEARCH_ITERATIONS,
            seed: DEFAULT_SEED,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    /// Manchester line coding fixes the power and run constraints at 0.5/2/2.
    pub fn manchester(length: usize, hm: usize) -> Self {
        Self { coding: Coding::Manchester, ..Self::nrz(length, 0.5, 2, 2, hm) }
    }

    pub fn with_search(mut self, iterations: usize, seed: u64) -> Self {
        self.search_iterations = iterations;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.length;
        let bad = |m: String| Err(Error::InvalidParam(m));
        if l == 0 || l > MAX_LEN {
            return Err(Error::InvalidLength(l));
        }
        if !(0.0..=1.0).contains(&self.min_power) {
            return bad(format!("bbar = {} must lie in [0, 1]", self.min_power));
        }
        if !(1..=l).contains(&self.max_ones_run) || !(1..=l).contains(&self.max_zeros_run) {
            return bad(format!(
                "run caps n1 = {}, n0 = {} must lie in [1, L = {l}]",
                self.max_ones_run, self.max_zeros_run
            ));
        }
        if !(1..=l).contains(&self.min_distance) {
            return bad(format!("hm = {} must lie in [1, L = {l}]", self.min_distance));
        }
        if self.search_iterations == 0 {
            return bad("search iterations must be positive".into());
        }
        Ok(())
    }

    /// ⌈L·b̄⌉
    pub fn min_weight(&self) -> usize {
        let w = (self.length as f64 * self.min_power - POWER_EPS).ceil().max(0.0) as usize;
        w.min(self.length)
    }

    fn check_cap(&self) -> Result<()> {
        if self.length > self.enumeration_cap {
            return Err(Error::OverCap { len: self.length, cap: self.enumeration_cap });
        }
        Ok(())
    }
}

/// Rows of the identification dictionary; a row index is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    pub params: GenerationParams,
    pub rows: Vec<BinarySequence>,
}

impl Dictionary {
    pub fn new(params: GenerationParams, rows: Vec<BinarySequence>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != params.length) {
            return Err(Error::LengthMismatch(r.len(), params.length));
        }
        Ok(Self { params, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.params.length
    }

    /// First `n` rows, as used when a fixed group size is wanted.
    pub fn truncated(&self, n: usize) -> Self {
        Self { params: self.params.clone(), rows: self.rows.iter().take(n).copied().collect() }
    }

    /// Plain-text form: `# key=value` header then one bit string per row.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        for (k, v) in [
            ("coding", p.coding.to_string()),
            ("L", p.length.to_string()),
            ("bbar", p.min_power.to_string()),
            ("n1", p.max_ones_run.to_string()),
            ("n0", p.max_zeros_run.to_string()),
            ("hm", p.min_distance.to_string()),
            ("iterations", p.search_iterations.to_string()),
            ("seed", p.seed.to_string()),
            ("cap", p.enumeration_cap.to_string()),
        ] {
            out.push_str(&format!("# {k}={v}\n"));
        }
        for r in &self.rows {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.trim().split_once('=') {
                    kv.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let row: BinarySequence = line
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            rows.push(row);
        }
        fn get<T: FromStr>(kv: &HashMap<String, String>, k: &str) -> Result<Option<T>> {
            kv.get(k)
                .map(|v| v.parse::<T>().map_err(|_| Error::Parse(format!("bad value for {k}: {v:?}"))))
                .transpose()
        }
        let length = match get::<usize>(&kv, "L")? {
            Some(l) => l,
            None => rows
                .first()
                .map(|r| r.len())
                .ok_or_else(|| Error::Parse("dictionary has neither rows nor an L header".into()))?,
        };
        let coding = get::<Coding>(&kv, "coding")?.unwrap_or(Coding::Nrz);
        let mut params = match coding {
            Coding::Nrz => GenerationParams::nrz(length, 0.0, length, length, 1),
            Coding::Manchester => GenerationParams::manchester(length, 1),
        };
        if let Some(v) = get(&kv, "bbar")? {
            params.min_power = v;
        }
        if let Some(v) = get(&kv, "n1")? {
            params.max_ones_run = v;
        }
        if let Some(v) = get(&kv, "n0")? {
            params.max_zeros_run = v;
        }
        if let Some(v) = get(&kv, "hm")? {
            params.min_distance = v;
        }
        if let Some(v) = get(&kv, "iterations")? {
            params.search_iterations = v;
        }
        if let Some(v) = get(&kv, "seed")? {
            params.seed = v;
        }
        if let Some(v) = get(&kv, "cap")? {
            params.enumeration_cap = v;
        }
        params.validate()?;
        Self::new(params, rows)
    }
}

/// Survivor counts after the power (A), circularity (B), ones (C) and
/// zeros (D) tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub power: u64,
    pub circularity: u64,
    pub ones: u64,
    pub zeros: u64,
}

impl std::ops::AddAssign for StageCounts {
    fn add_assign(&mut self, o: Self) {
        self.power += o.power;
        self.circularity += o.circularity;
        self.ones += o.ones;
        self.zeros += o.zeros;
    }
}

/// Per-weight stage counts, index ℓ = 0..=L.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionProfile {
    pub length: usize,
    pub estimated: Vec<StageCounts>,
    pub exact: Option<Vec<StageCounts>>,
}

fn total(v: &[StageCounts]) -> StageCounts {
    let mut t = StageCounts::default();
    for c in v {
        t += *c;
    }
    t
}

impl PartitionProfile {
    pub fn estimated_total(&self) -> StageCounts {
        total(&self.estimated)
    }

    pub fn exact_total(&self) -> Option<StageCounts> {
        self.exact.as_deref().map(total)
    }
}

/// Result of a generation run with its stagewise survivor totals.
#[derive(Clone, Debug)]
pub struct Generated {
    pub dictionary: Dictionary,
    pub stages: StageCounts,
}

// Exhaustive pass over S^L. Returns per-weight counts and the stage-D rows in
// ascending (canonical lexicographic) order.
fn enumerate_nrz(p: &GenerationParams) -> Result<(Vec<StageCounts>, Vec<BinarySequence>)> {
    p.validate()?;
    p.check_cap()?;
    let l = p.length;
    let wmin = p.min_weight();
    let mut counts = vec![StageCounts::default(); l + 1];
    let mut rows = Vec::new();
    let full = if l == 64 { u64::MAX } else { (1u64 << l) - 1 };
    for w in 0..=full {
        let wt = w.count_ones() as usize;
        if wt < wmin {
            continue;
        }
        let c = &mut counts[wt];
        c.power += 1;
        if !is_canonical_word(w, l) {
            continue;
        }
        c.circularity += 1;
        if max_run_word(w, l) > p.max_ones_run {
            continue;
        }
        c.ones += 1;
        if max_run_word(!w & full, l) > p.max_zeros_run {
            continue;
        }
        c.zeros += 1;
        rows.push(BinarySequence::new(w, l)?);
    }
    Ok((counts, rows))
}

/// Exact per-weight survivor counts by exhaustive enumeration.
pub fn exact_profile(params: &GenerationParams) -> Result<Vec<StageCounts>> {
    Ok(enumerate_nrz(params)?.0)
}

/// Estimated and exact per-weight counts.
pub fn partition_profile(params: &GenerationParams) -> Result<PartitionProfile> {
    let mut prof = estimate_cardinality(params)?;
    prof.exact = Some(exact_profile(params)?);
    Ok(prof)
}

fn binom(n: i64, k: i64) -> u64 {
    if n < 0 || k < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n as u128 - i) / (i + 1);
    }
    r as u64
}

/// Closed-form per-weight estimates of the stage survivor counts.
///
/// Rotation classes are approximated as `⌈C(L,ℓ)/L⌉`; the ones and zeros
/// tests subtract the count of words whose run straddles the cap. When the
/// two caps can both bind at a weight the zeros correction is reduced by the
/// ones correction already applied.
pub fn estimate_cardinality(params: &GenerationParams) -> Result<PartitionProfile> {
    params.validate()?;
    let l = params.length as i64;
    let n1 = params.max_ones_run as i64;
    let n0 = params.max_zeros_run as i64;
    let wmin = params.min_weight() as i64;
    let delta_c = |w: i64| binom(l - n1 - 2, w - n1 - 1);
    let delta_d = |w: i64| binom(l - n0 - 2, l - w - n0 - 1);
    let mut est = Vec::with_capacity(l as usize + 1);
    for w in 0..=l {
        let a = if w >= wmin { binom(l, w) } else { 0 };
        let b = if a == 0 {
            0
        } else if w == 0 || w == l {
            1
        } else {
            a.div_ceil(l as u64)
        };
        let c = if w <= n1 {
            b
        } else if w == l {
            0
        } else {
            b.saturating_sub(delta_c(w))
        };
        let d = if w == 0 {
            if n0 >= l { c } else { 0 }
        } else if n1 >= l - n0 {
            if w < l - n0 { c.saturating_sub(delta_d(w)) } else { c }
        } else if w < n1 {
            c.saturating_sub(delta_d(w))
        } else if w <= l - n0 {
            c.saturating_sub(delta_d(w).saturating_sub(delta_c(w)))
        } else {
            c
        };
        est.push(StageCounts { power: a, circularity: b, ones: c, zeros: d });
    }
    Ok(PartitionProfile { length: params.length, estimated: est, exact: None })
}

/// Coarse size of a distance-3 subset: `⌈|D|/(L+1)⌉`.
pub fn estimate_cardinality_hm3(exact_d: u64, len: usize) -> u64 {
    exact_d.div_ceil(len as u64 + 1)
}

/// Runs the requested distance test on stage-D survivors.
fn hamming_stage(input: Dictionary, hm: usize, iterations: usize, seed: u64) -> Dictionary {
    match hm {
        0 | 1 => input,
        2 => {
            let analytic = hamming_filter_analytic_hm2(&input);
            let random = hamming_filter_random(&input, 2, iterations, seed);
            if random.len() > analytic.len() { random } else { analytic }
        }
        _ => hamming_filter_random(&input, hm, iterations, seed),
    }
}

pub fn generate_nrz_detailed(params: &GenerationParams) -> Result<Generated> {
    if params.coding != Coding::Nrz {
        return Err(Error::InvalidParam("generate_nrz needs nrz coding".into()));
    }
    let (counts, rows) = enumerate_nrz(params)?;
    let stages = total(&counts);
    let d = Dictionary::new(params.clone(), rows)?;
    let dictionary =
        hamming_stage(d, params.min_distance, params.search_iterations, params.seed);
    Ok(Generated { dictionary, stages })
}

pub fn generate_nrz(params: &GenerationParams) -> Result<Dictionary> {
    Ok(generate_nrz_detailed(params)?.dictionary)
}

/// Rotation classes of S^L whose Manchester line signal is unambiguous.
///
/// A class is dropped when the encoded signal of another class is a rotation
/// of its own; a receiver sampling minibits could not tell them apart. Only
/// the two constant words collide (`0101…` vs `1010…`).
pub fn manchester_candidates(len: usize, cap: usize) -> Result<Vec<BinarySequence>> {
    if len == 0 || 2 * len > MAX_LEN {
        return Err(Error::InvalidLength(len));
    }
    if len > cap {
        return Err(Error::OverCap { len, cap });
    }
    let classes: Vec<BinarySequence> = (0..1u64 << len)
        .filter(|&w| is_canonical_word(w, len))
        .map(|w| BinarySequence::new(w, len))
        .collect::<Result<_>>()?;
    let mut line_count: HashMap<u64, usize> = HashMap::new();
    let mut lines = Vec::with_capacity(classes.len());
    for c in &classes {
        let line = c.manchester_encode()?.canonical().word();
        *line_count.entry(line).or_default() += 1;
        lines.push(line);
    }
    Ok(classes
        .into_iter()
        .zip(lines)
        .filter(|(_, line)| line_count[line] == 1)
        .map(|(c, _)| c)
        .collect())
}

pub fn generate_manchester_detailed(params: &GenerationParams) -> Result<Generated> {
    let p = GenerationParams {
        coding: Coding::Manchester,
        min_power: 0.5,
        max_ones_run: 2.min(params.length),
        max_zeros_run: 2.min(params.length),
        ..params.clone()
    };
    p.validate()?;
    let rows = manchester_candidates(p.length, p.enumeration_cap)?;
    let all = 1u64 << p.length;
    let stages = StageCounts {
        power: all,
        circularity: rows.len() as u64,
        ones: rows.len() as u64,
        zeros: rows.len() as u64,
    };
    let d = Dictionary::new(p.clone(), rows)?;
    let dictionary = hamming_stage(d, p.min_distance, p.search_iterations, p.seed);
    Ok(Generated { dictionary, stages })
}

pub fn generate_manchester(len: usize, hm: usize, iterations: usize, seed: u64) -> Result<Dictionary> {
    let p = GenerationParams::manchester(len, hm).with_search(iterations, seed);
    Ok(generate_manchester_detailed(&p)?.dictionary)
}

/// Dispatches on `params.coding`.
pub fn generate(params: &GenerationParams) -> Result<Generated> {
    match params.coding {
        Coding::Nrz => generate_nrz_detailed(params),
        Coding::Manchester => generate_manchester_detailed(params),
    }
}

/// Keeps the even-weight or odd-weight rows, whichever is larger (even on a
/// tie). Distinct rotation classes of equal weight differ in at least two
/// places, and weights of different parity differ by at least one, so the
/// chosen class has pairwise distance ≥ 2.
pub fn hamming_filter_analytic_hm2(input: &Dictionary) -> Dictionary {
    let (even, odd): (Vec<_>, Vec<_>) = input.rows.iter().partition(|r| r.weight() % 2 == 0);
    let rows = if odd.len() > even.len() { odd } else { even };
    Dictionary { params: input.params.clone(), rows }
}

// conflict[i] has bit j set when rows i and j are closer than hm.
fn conflict_bitsets(words: &[u64], len: usize, hm: usize) -> Vec<Vec<u64>> {
    let n = words.len();
    let nw = n.div_ceil(64);
    let mut conflict = vec![vec![0u64; nw]; n];
    for i in 0..n {
        for j in i + 1..n {
            if circular_hamming_words(words[i], words[j], len) < hm {
                conflict[i][j / 64] |= 1 << (j % 64);
                conflict[j][i / 64] |= 1 << (i % 64);
            }
        }
    }
    conflict
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

// One greedy pass over a seeded random permutation.
fn greedy_restart(conflict: &[Vec<u64>], seed: u64, restart: usize) -> Vec<usize> {
    let n = conflict.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut restart_rng(seed, restart));
    let mut kept_bits = vec![0u64; n.div_ceil(64)];
    let mut kept = Vec::new();
    for i in order {
        if conflict[i].iter().zip(&kept_bits).all(|(c, k)| c & k == 0) {
            kept_bits[i / 64] |= 1 << (i % 64);
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Randomized greedy search for a large subset with pairwise circular
/// distance ≥ `hm`. Restart `r` shuffles with its own ChaCha stream of
/// `seed`, so the best-of-`iterations` result does not depend on how the
/// restarts are scheduled; ties keep the lowest restart index.
pub fn hamming_filter_random(input: &Dictionary, hm: usize, iterations: usize, seed: u64) -> Dictionary {
    let len = input.seq_len();
    let words: Vec<u64> = input.rows.iter().map(|r| r.word()).collect();
    let conflict = conflict_bitsets(&words, len, hm);
    if conflict.iter().all(|c| c.iter().all(|&x| x == 0)) {
        return input.clone();
    }
    let iterations = iterations.max(1);
    let (_, best) = (0..iterations)
        .into_par_iter()
        .map(|r| (greedy_restart(&conflict, seed, r).len(), r))
        .reduce(
            || (0, usize::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let keep = greedy_restart(&conflict, seed, best);
    Dictionary {
        params: input.params.clone(),
        rows: keep.into_iter().map(|i| input.rows[i]).collect(),
    }
}

/// Re-checks every dictionary invariant using only the sequence primitives.
pub fn verify_dictionary(dict: &Dictionary) -> Result<()> {
    let p = &dict.params;
    let fail = |m: String| Err(Error::InvalidParam(m));
    let hm = p.min_distance.max(1);
    for (i, r) in dict.rows.iter().enumerate() {
        if r.len() != p.length {
            return Err(Error::LengthMismatch(r.len(), p.length));
        }
        if p.coding == Coding::Nrz {
            if r.weight() < p.min_weight() {
                return fail(format!("row {i} ({r}) has weight {} < {}", r.weight(), p.min_weight()));
            }
            if r.max_circular_run(1) > p.max_ones_run {
                return fail(format!("row {i} ({r}) has a run of ones longer than {}", p.max_ones_run));
            }
            if r.max_circular_run(0) > p.max_zeros_run {
                return fail(format!("row {i} ({r}) has a run of zeros longer than {}", p.max_zeros_run));
            }
        }
        for (j, s) in dict.rows.iter().enumerate().skip(i + 1) {
            let h = r.circular_hamming(s)?;
            if h < hm {
                return fail(format!("rows {i} and {j} are at circular distance {h} < {hm}"));
            }
        }
    }
    Ok(())
}
