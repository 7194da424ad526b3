//! Frame-to-gloss alignment loss (CTC).
//!
//! Exact negative log-likelihood of a gloss sequence under per-frame
//! distributions, computed with the standard forward recursion over the
//! blank-augmented target, entirely in log space. The gradient is defined
//! with respect to pre-softmax logits (the loss applies log-softmax
//! internally), so it composes directly with a linear classifier head:
//! d loss / d logit = softmax - posterior.
//!
//! Blank has id 0; gloss ids start at 1. Targets no alignment can produce
//! (fewer frames than symbols plus required separating blanks) are an
//! explicit error, never an infinite loss.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::mat::{log_add, log_sum_exp, Mat};

pub const BLANK: usize = 0;

/// Number of forward-pass evaluations since process start. Exists so tests
/// can prove a configuration (e.g. text-only training) never pays for CTC.
static FORWARD_CALLS: AtomicU64 = AtomicU64::new(0);

pub fn forward_calls() -> u64 {
    FORWARD_CALLS.load(Ordering::Relaxed)
}

/// G x (V+1) per-frame log-probabilities; column 0 is blank.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLogProbs {
    lp: Mat,
}

impl FrameLogProbs {
    /// Normalizes raw scores with a row-wise log-softmax.
    pub fn from_logits(logits: &Mat) -> Self {
        let mut lp = logits.clone();
        for i in 0..lp.rows() {
            let row = lp.row_mut(i);
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        FrameLogProbs { lp }
    }

    /// Accepts already-normalized log-probabilities; each row must
    /// log-sum-exp to 0 within 1e-9.
    pub fn from_log_probs(lp: Mat) -> Result<Self> {
        for i in 0..lp.rows() {
            let lse = log_sum_exp(lp.row(i));
            if lse.abs() > 1e-9 {
                return Err(Error::Argument(format!(
                    "frame {i} log-probabilities sum to exp({lse}), not 1"
                )));
            }
        }
        Ok(FrameLogProbs { lp })
    }

    pub fn frames(&self) -> usize {
        self.lp.rows()
    }

    /// Alphabet size including blank.
    pub fn symbols(&self) -> usize {
        self.lp.cols()
    }

    pub fn get(&self, frame: usize, symbol: usize) -> f64 {
        self.lp.at(frame, symbol)
    }

    pub fn as_mat(&self) -> &Mat {
        &self.lp
    }
}

/// Gloss sequence y_1..y_U without blanks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlossTarget {
    y: Vec<usize>,
}

impl GlossTarget {
    pub fn new(y: Vec<usize>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Argument("empty gloss target".into()));
        }
        if y.contains(&BLANK) {
            return Err(Error::Argument("gloss target contains blank id 0".into()));
        }
        Ok(GlossTarget { y })
    }

    pub fn ids(&self) -> &[usize] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Minimum number of frames any valid alignment needs: one per symbol
    /// plus a separating blank per adjacent equal pair.
    pub fn min_frames(&self) -> usize {
        let dups = self.y.windows(2).filter(|w| w[0] == w[1]).count();
        self.y.len() + dups
    }
}

/// Collapse map B: merge repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != BLANK {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

fn check_inputs(lp: &FrameLogProbs, y: &GlossTarget) -> Result<()> {
    let v = lp.symbols();
    if let Some(&bad) = y.ids().iter().find(|&&id| id >= v) {
        return Err(Error::Argument(format!(
            "gloss id {bad} out of range for alphabet of {v} (incl. blank)"
        )));
    }
    if lp.frames() < y.min_frames() {
        return Err(Error::Infeasible(format!(
            "target of {} symbols needs at least {} frames, got {}",
            y.len(),
            y.min_frames(),
            lp.frames()
        )));
    }
    Ok(())
}

/// Blank-augmented target: blank, y_1, blank, y_2, ..., y_U, blank.
fn augment(y: &[usize]) -> Vec<usize> {
    let mut l = Vec::with_capacity(2 * y.len() + 1);
    l.push(BLANK);
    for &s in y {
        l.push(s);
        l.push(BLANK);
    }
    l
}

/// A skip transition s-2 -> s is allowed when l'[s] is a symbol differing
/// from l'[s-2] (blanks may never be skipped between equal symbols).
fn can_skip(l: &[usize], s: usize) -> bool {
    s >= 2 && l[s] != BLANK && l[s] != l[s - 2]
}

/// Forward lattice: alpha[t][s] = log P(prefix alignments ending in state s
/// after emitting frame t).
fn forward_lattice(lp: &FrameLogProbs, l: &[usize]) -> Vec<Vec<f64>> {
    let g = lp.frames();
    let s_len = l.len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; s_len]; g];
    alpha[0][0] = lp.get(0, l[0]);
    if s_len > 1 {
        alpha[0][1] = lp.get(0, l[1]);
    }
    for t in 1..g {
        for s in 0..s_len {
            let mut a = alpha[t - 1][s];
            if s >= 1 {
                a = log_add(a, alpha[t - 1][s - 1]);
            }
            if can_skip(l, s) {
                a = log_add(a, alpha[t - 1][s - 2]);
            }
            if a != f64::NEG_INFINITY {
                alpha[t][s] = a + lp.get(t, l[s]);
            }
        }
    }
    alpha
}

/// Backward lattice: beta[t][s] = log P(suffix alignments from state s
/// starting with the emission at frame t).
fn backward_lattice(lp: &FrameLogProbs, l: &[usize]) -> Vec<Vec<f64>> {
    let g = lp.frames();
    let s_len = l.len();
    let mut beta = vec![vec![f64::NEG_INFINITY; s_len]; g];
    beta[g - 1][s_len - 1] = lp.get(g - 1, l[s_len - 1]);
    if s_len > 1 {
        beta[g - 1][s_len - 2] = lp.get(g - 1, l[s_len - 2]);
    }
    for t in (0..g - 1).rev() {
        for s in 0..s_len {
            let mut b = beta[t + 1][s];
            if s + 1 < s_len {
                b = log_add(b, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len && can_skip(l, s + 2) {
                b = log_add(b, beta[t + 1][s + 2]);
            }
            if b != f64::NEG_INFINITY {
                beta[t][s] = b + lp.get(t, l[s]);
            }
        }
    }
    beta
}

fn log_likelihood(alpha: &[Vec<f64>]) -> f64 {
    let last = alpha.last().expect("at least one frame");
    let s_len = last.len();
    let mut ll = last[s_len - 1];
    if s_len > 1 {
        ll = log_add(ll, last[s_len - 2]);
    }
    ll
}

/// Negative log-likelihood of the target under the frame distributions.
pub fn ctc_loss(lp: &FrameLogProbs, y: &GlossTarget) -> Result<f64> {
    check_inputs(lp, y)?;
    FORWARD_CALLS.fetch_add(1, Ordering::Relaxed);
    let l = augment(y.ids());
    let alpha = forward_lattice(lp, &l);
    let ll = log_likelihood(&alpha);
    if !ll.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite CTC likelihood {ll} for feasible target"
        )));
    }
    Ok(-ll)
}

/// Loss plus gradient with respect to the pre-softmax logits that produced
/// `lp`: d loss / d z[t][c] = p[t][c] - gamma[t][c], where gamma is the
/// posterior symbol occupancy from the forward-backward recursion.
pub fn ctc_loss_and_grad(lp: &FrameLogProbs, y: &GlossTarget) -> Result<(f64, Mat)> {
    check_inputs(lp, y)?;
    FORWARD_CALLS.fetch_add(1, Ordering::Relaxed);
    let l = augment(y.ids());
    let alpha = forward_lattice(lp, &l);
    let beta = backward_lattice(lp, &l);
    let ll = log_likelihood(&alpha);
    if !ll.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite CTC likelihood {ll} for feasible target"
        )));
    }

    let g = lp.frames();
    let v = lp.symbols();
    // gamma[t][c] = sum over lattice states with symbol c of
    // exp(alpha + beta - emission - log P); emission is subtracted because
    // both lattices include the frame-t factor.
    let mut grad = Mat::zeros(g, v);
    for t in 0..g {
        let mut occ = vec![f64::NEG_INFINITY; v];
        for (s, &sym) in l.iter().enumerate() {
            let a = alpha[t][s];
            let b = beta[t][s];
            if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                continue;
            }
            occ[sym] = log_add(occ[sym], a + b - lp.get(t, sym));
        }
        for c in 0..v {
            let gamma = if occ[c] == f64::NEG_INFINITY {
                0.0
            } else {
                (occ[c] - ll).exp()
            };
            *grad.at_mut(t, c) = lp.get(t, c).exp() - gamma;
        }
    }
    Ok((-ll, grad))
}

pub fn ctc_grad(lp: &FrameLogProbs, y: &GlossTarget) -> Result<Mat> {
    ctc_loss_and_grad(lp, y).map(|(_, g)| g)
}

/// Total posterior probability mass at frame `t` combining both lattices;
/// equals the sequence likelihood for every t. Exposed for the recursion
/// consistency checks.
pub fn frame_posterior_log_mass(lp: &FrameLogProbs, y: &GlossTarget, t: usize) -> Result<f64> {
    check_inputs(lp, y)?;
    let l = augment(y.ids());
    let alpha = forward_lattice(lp, &l);
    let beta = backward_lattice(lp, &l);
    let mut mass = f64::NEG_INFINITY;
    for (s, &sym) in l.iter().enumerate() {
        let (a, b) = (alpha[t][s], beta[t][s]);
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            continue;
        }
        mass = log_add(mass, a + b - lp.get(t, sym));
    }
    Ok(mass)
}

/// Brute-force reference: enumerate every (V+1)^G alignment path, keep the
/// ones that collapse to the target, and sum their probabilities. Only
/// usable for tiny G and V; exists as the independent oracle for the exact
/// recursion.
pub fn path_enumeration_log_likelihood(lp: &FrameLogProbs, y: &GlossTarget) -> Result<f64> {
    check_inputs(lp, y)?;
    let g = lp.frames();
    let v = lp.symbols();
    let total = (v as u64).checked_pow(g as u32).ok_or_else(|| {
        Error::Argument(format!("path enumeration infeasible for G={g}, V+1={v}"))
    })?;
    if total > 1_000_000 {
        return Err(Error::Argument(format!(
            "path enumeration would visit {total} paths; refuse"
        )));
    }
    let mut ll = f64::NEG_INFINITY;
    let mut path = vec![0usize; g];
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = (c % v as u64) as usize;
            c /= v as u64;
        }
        if collapse(&path) != y.ids() {
            continue;
        }
        let lp_path: f64 = path.iter().enumerate().map(|(t, &s)| lp.get(t, s)).sum();
        ll = log_add(ll, lp_path);
    }
    Ok(ll)
}

/// Brute-force gradient oracle via path-enumeration posteriors:
/// d loss / d z[t][c] = p[t][c] - gamma[t][c] with gamma computed by
/// summing matching-path probabilities directly.
pub fn path_enumeration_grad(lp: &FrameLogProbs, y: &GlossTarget) -> Result<Mat> {
    check_inputs(lp, y)?;
    let g = lp.frames();
    let v = lp.symbols();
    let total = (v as u64).pow(g as u32);
    let mut ll = f64::NEG_INFINITY;
    let mut occ = vec![vec![f64::NEG_INFINITY; v]; g];
    let mut path = vec![0usize; g];
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = (c % v as u64) as usize;
            c /= v as u64;
        }
        if collapse(&path) != y.ids() {
            continue;
        }
        let lp_path: f64 = path.iter().enumerate().map(|(t, &s)| lp.get(t, s)).sum();
        ll = log_add(ll, lp_path);
        for (t, &s) in path.iter().enumerate() {
            occ[t][s] = log_add(occ[t][s], lp_path);
        }
    }
    let mut grad = Mat::zeros(g, v);
    for t in 0..g {
        for c in 0..v {
            let gamma = if occ[t][c] == f64::NEG_INFINITY {
                0.0
            } else {
                (occ[t][c] - ll).exp()
            };
            *grad.at_mut(t, c) = lp.get(t, c).exp() - gamma;
        }
    }
    Ok(grad)
}
