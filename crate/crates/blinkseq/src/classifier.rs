//! Bank of circular correlators with a threshold decision.
//!
//! Scores use the bipolar map 0 → −1, 1 → +1, so the correlation of two
//! length-`L` words at one shift is `(L − 2·hamming)/L`.

use crate::codebook::Dictionary;
use crate::seqcore::{rotations, BinarySequence};
use crate::{Error, Result};

// Largest L for which the full window → decision table is built.
const LOOKUP_MAX_LEN: usize = 16;

/// Normalized best correlation of `window` against all rotations of `row`,
/// and the smallest right-shift of `row` achieving it.
pub fn correlate(window: &BinarySequence, row: &BinarySequence) -> Result<(f64, usize)> {
    if window.len() != row.len() {
        return Err(Error::LengthMismatch(window.len(), row.len()));
    }
    let l = row.len();
    let (dist, shift) = best_shift(window.word(), &rotations(row.word(), l));
    Ok(((l as f64 - 2.0 * dist as f64) / l as f64, shift))
}

#[inline]
fn best_shift(window: u64, rots: &[u64]) -> (usize, usize) {
    let mut best = (usize::MAX, 0);
    for (d, &r) in rots.iter().enumerate() {
        let h = (window ^ r).count_ones() as usize;
        if h < best.0 {
            best = (h, d);
        }
    }
    best
}

/// `(L − 2⌊(Hm−1)/2⌋)/L`: accepts windows within the correctable number of
/// flips of some row.
pub fn default_threshold(len: usize, hm: usize) -> f64 {
    (len - 2 * (hm.saturating_sub(1) / 2)).min(len) as f64 / len as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Id(usize),
    Reject,
    Undecided,
}

impl Decision {
    /// Row index, −1 for reject, −2 while undecided.
    pub fn code(&self) -> i64 {
        match *self {
            Decision::Id(i) => i as i64,
            Decision::Reject => -1,
            Decision::Undecided => -2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierOutput {
    pub decision: Decision,
    /// Best normalized correlation over all rows, in [−1, 1].
    pub score: f64,
    pub shift: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Best {
    row: u32,
    dist: u16,
    shift: u16,
}

/// Correlators for every dictionary row plus the decision threshold η_d.
#[derive(Clone, Debug)]
pub struct Classifier {
    len: usize,
    rots: Vec<Vec<u64>>,
    threshold: f64,
    // max accepted Hamming distance implied by the threshold
    max_dist: usize,
    lookup: Option<Vec<Best>>,
}

impl Classifier {
    pub fn new(dict: &Dictionary, threshold: f64) -> Result<Self> {
        if dict.is_empty() {
            return Err(Error::InvalidParam("classifier needs a nonempty dictionary".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidParam(format!("threshold {threshold} must lie in (0, 1]")));
        }
        let len = dict.seq_len();
        let rots = dict.rows.iter().map(|r| rotations(r.word(), len)).collect();
        // score (L−2h)/L ≥ η  ⇔  h ≤ L(1−η)/2; the epsilon absorbs η = k/L rounding
        let max_dist = ((len as f64 * (1.0 - threshold)) / 2.0 + 1e-9).floor() as usize;
        Ok(Self { len, rots, threshold, max_dist, lookup: None })
    }

    /// Threshold from [`default_threshold`] for the dictionary's `Hm`.
    pub fn with_default_threshold(dict: &Dictionary) -> Result<Self> {
        Self::new(dict, default_threshold(dict.seq_len(), dict.params.min_distance))
    }

    /// Precomputes the decision for every possible window when `L` is small.
    /// Decisions are identical to the direct scan.
    pub fn with_lookup(mut self) -> Self {
        if self.len <= LOOKUP_MAX_LEN {
            let table = (0..1u64 << self.len).map(|w| self.scan(w)).collect();
            self.lookup = Some(table);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.rots.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn scan(&self, window: u64) -> Best {
        let mut best = Best { row: 0, dist: u16::MAX, shift: 0 };
        for (i, rots) in self.rots.iter().enumerate() {
            let (h, d) = best_shift(window, rots);
            if (h as u16) < best.dist {
                best = Best { row: i as u32, dist: h as u16, shift: d as u16 };
            }
        }
        best
    }

    #[inline]
    fn best(&self, window: u64) -> Best {
        match &self.lookup {
            Some(t) => t[window as usize],
            None => self.scan(window),
        }
    }

    /// Decision on a full window (oldest sample first).
    pub fn decide(&self, window: &BinarySequence) -> Result<ClassifierOutput> {
        if window.len() != self.len {
            return Err(Error::LengthMismatch(window.len(), self.len));
        }
        Ok(self.decide_word(window.word()))
    }

    #[inline]
    pub(crate) fn decide_word(&self, window: u64) -> ClassifierOutput {
        let b = self.best(window);
        let decision = if (b.dist as usize) <= self.max_dist {
            Decision::Id(b.row as usize)
        } else {
            Decision::Reject
        };
        ClassifierOutput {
            decision,
            score: (self.len as f64 - 2.0 * b.dist as f64) / self.len as f64,
            shift: b.shift as usize,
        }
    }

    pub fn state(&self) -> ClassifierState<'_> {
        ClassifierState { bank: self, window: 0, seen: 0 }
    }
}

/// Per-stream classifier: the last `L` received bits and a sample counter.
#[derive(Clone, Debug)]
pub struct ClassifierState<'a> {
    bank: &'a Classifier,
    window: u64,
    seen: u64,
}

impl ClassifierState<'_> {
    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    /// Pushes one received bit and classifies the updated window.
    #[inline]
    pub fn classify(&mut self, bit: u8) -> ClassifierOutput {
        let l = self.bank.len;
        let mask = if l == 64 { u64::MAX } else { (1u64 << l) - 1 };
        self.window = ((self.window << 1) | (bit & 1) as u64) & mask;
        self.seen += 1;
        if self.seen < l as u64 {
            return ClassifierOutput { decision: Decision::Undecided, score: 0.0, shift: 0 };
        }
        self.bank.decide_word(self.window)
    }
}

/// Free-function form of [`ClassifierState::classify`].
pub fn classify(state: &mut ClassifierState<'_>, new_bit: u8) -> ClassifierOutput {
    state.classify(new_bit)
}
