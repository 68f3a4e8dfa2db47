//! Pair-verification metrics over cosine scores.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::geometry::{dot, Matrix};
use crate::report::fmt_sig;

/// Cosine scores of genuine (positive) and impostor (negative) pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairScoreSet {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// `(i, j, same_identity)`.
pub type Pair = (usize, usize, bool);

impl PairScoreSet {
    pub fn new(positive: Vec<f64>, negative: Vec<f64>) -> Result<Self> {
        let s = Self { positive, negative };
        s.check_range()?;
        Ok(s)
    }

    fn check_range(&self) -> Result<()> {
        if let Some(x) = self
            .positive
            .iter()
            .chain(&self.negative)
            .find(|x| !(-1.0..=1.0).contains(*x))
        {
            return domain_err!("score {x} outside [-1, 1]");
        }
        Ok(())
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return domain_err!(
                "need positive and negative scores, got {} and {}",
                self.positive.len(),
                self.negative.len()
            );
        }
        self.check_range()
    }

    /// `score,is_positive` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "score,is_positive")?;
        for x in &self.positive {
            writeln!(w, "{},1", fmt_sig(*x, 12))?;
        }
        for x in &self.negative {
            writeln!(w, "{},0", fmt_sig(*x, 12))?;
        }
        Ok(())
    }
}

/// Cosine of each pair, routed by its flag. Scores are clamped to
/// `[-1, 1]` to absorb rounding.
pub fn score_pairs(features: &Matrix, pairs: &[Pair]) -> Result<PairScoreSet> {
    let n = features.rows();
    let mut out = PairScoreSet::default();
    for &(i, j, same) in pairs {
        if i >= n || j >= n {
            return domain_err!("pair ({i}, {j}) out of range for {n} features");
        }
        let s = dot(features.row(i), features.row(j)).clamp(-1.0, 1.0);
        if same {
            out.positive.push(s);
        } else {
            out.negative.push(s);
        }
    }
    Ok(out)
}

/// All same-label pairs plus an equal number of seeded random
/// different-label pairs (or all of them, if there are fewer).
pub fn build_pairs(labels: &[usize], seed: u64) -> Vec<Pair> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                pos.push((i, j, true));
            } else {
                neg.push((i, j, false));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = pos.len().min(neg.len());
    let mut picked: Vec<usize> = sample(&mut rng, neg.len(), keep).into_vec();
    picked.sort_unstable();
    pos.extend(picked.into_iter().map(|k| neg[k]));
    pos
}

/// `i,j,same` CSV (same ∈ {0, 1, true, false}).
pub fn read_pairs_csv<R: Read>(r: R) -> Result<Vec<Pair>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || crate::Error::Domain(format!("pair row {}: expected i,j,same", line + 1));
        if rec.len() != 3 {
            return Err(bad());
        }
        let i = rec[0].trim().parse().map_err(|_| bad())?;
        let j = rec[1].trim().parse().map_err(|_| bad())?;
        let same = match rec[2].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad()),
        };
        out.push((i, j, same));
    }
    Ok(out)
}

pub fn write_pairs_csv<W: Write>(pairs: &[Pair], mut w: W) -> Result<()> {
    writeln!(w, "i,j,same")?;
    for &(i, j, s) in pairs {
        writeln!(w, "{i},{j},{}", u8::from(s))?;
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Number of elements of ascending `v` that are `>= t`.
fn count_at_least(v: &[f64], t: f64) -> usize {
    v.len() - v.partition_point(|&x| x < t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyResult {
    pub accuracy: f64,
    pub threshold: f64,
}

/// Best single-threshold accuracy, accepting scores `>= t`.
///
/// Candidates are −1, the midpoints between adjacent distinct scores, and a
/// reject-all threshold (+1, or the next float above it when a score equals
/// 1). Ties go to the smallest threshold.
pub fn best_threshold_accuracy(scores: &PairScoreSet) -> Result<AccuracyResult> {
    if scores.positive.is_empty() && scores.negative.is_empty() {
        return domain_err!("no scores");
    }
    scores.check_range()?;
    let pos = sorted(&scores.positive);
    let neg = sorted(&scores.negative);
    let mut all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let mut candidates = Vec::with_capacity(all.len() + 1);
    candidates.push(-1.0);
    candidates.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let top = *all.last().expect("nonempty");
    candidates.push(if top < 1.0 { 1.0 } else { 1.0f64.next_up() });

    let total = (pos.len() + neg.len()) as f64;
    let mut best = AccuracyResult {
        accuracy: -1.0,
        threshold: f64::NAN,
    };
    for t in candidates {
        let tp = count_at_least(&pos, t);
        let tn = neg.len() - count_at_least(&neg, t);
        let acc = (tp + tn) as f64 / total;
        if acc > best.accuracy {
            best = AccuracyResult {
                accuracy: acc,
                threshold: t,
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TarAtFar {
    pub tar: f64,
    pub far_target: f64,
    pub achieved_far: f64,
    pub threshold: f64,
    /// `far_target · N < 1`: no false accept is allowed, so the threshold
    /// sits just above the largest negative.
    pub below_resolution: bool,
}

/// True-accept rate at the loosest threshold whose false-accept rate does
/// not exceed `far_target`. Scores `>= threshold` are accepted.
///
/// With negatives sorted descending `n₀ ≥ n₁ ≥ …` and `k = ⌊far·N⌋`, the
/// threshold is the next float above `n_k` (at most `k` false accepts).
/// When `k ≥ N` every negative is admitted and the threshold is −1.
pub fn tar_at_far(scores: &PairScoreSet, far_target: f64) -> Result<TarAtFar> {
    scores.check_nonempty()?;
    if !(far_target > 0.0 && far_target <= 1.0) {
        return domain_err!("far_target must be in (0, 1], got {far_target}");
    }
    let n = scores.negative.len();
    let mut neg = scores.negative.clone();
    neg.sort_by(|a, b| b.total_cmp(a));
    let allowed = (far_target * n as f64).floor() as usize;
    let threshold = if allowed >= n {
        -1.0
    } else {
        neg[allowed].next_up()
    };
    let false_accepts = neg.iter().filter(|&&x| x >= threshold).count();
    let true_accepts = scores.positive.iter().filter(|&&x| x >= threshold).count();
    Ok(TarAtFar {
        tar: true_accepts as f64 / scores.positive.len() as f64,
        far_target,
        achieved_far: false_accepts as f64 / n as f64,
        threshold,
        below_resolution: allowed == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub pos_count: usize,
    pub neg_count: usize,
    pub pos_density: f64,
    pub neg_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreHistogram {
    pub bins: Vec<HistogramBin>,
    /// `Σ min(p, n)·width` of the unit-area densities; 0 for disjoint
    /// supports, 1 for identical ones.
    pub overlap: f64,
}

impl ScoreHistogram {
    /// `bin_low,bin_high,pos_density,neg_density`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_low,bin_high,pos_density,neg_density")?;
        for b in &self.bins {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_sig(b.low, 12),
                fmt_sig(b.high, 12),
                fmt_sig(b.pos_density, 12),
                fmt_sig(b.neg_density, 12)
            )?;
        }
        Ok(())
    }
}

/// Uniform histograms of both score lists over `[-1, 1]`.
pub fn score_histogram(scores: &PairScoreSet, bins: usize) -> Result<ScoreHistogram> {
    scores.check_nonempty()?;
    if bins == 0 {
        return domain_err!("histogram needs at least one bin");
    }
    let width = 2.0 / bins as f64;
    let bin_of = |x: f64| (((x + 1.0) / width).floor() as usize).min(bins - 1);
    let mut pos = vec![0usize; bins];
    let mut neg = vec![0usize; bins];
    scores.positive.iter().for_each(|&x| pos[bin_of(x)] += 1);
    scores.negative.iter().for_each(|&x| neg[bin_of(x)] += 1);

    let (np, nn) = (scores.positive.len() as f64, scores.negative.len() as f64);
    let mut overlap = 0.0;
    let out = (0..bins)
        .map(|b| {
            let pd = pos[b] as f64 / (np * width);
            let nd = neg[b] as f64 / (nn * width);
            overlap += pd.min(nd) * width;
            HistogramBin {
                low: -1.0 + b as f64 * width,
                high: if b + 1 == bins { 1.0 } else { -1.0 + (b + 1) as f64 * width },
                pos_count: pos[b],
                neg_count: neg[b],
                pos_density: pd,
                neg_density: nd,
            }
        })
        .collect();
    Ok(ScoreHistogram { bins: out, overlap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(p: &[f64], n: &[f64]) -> PairScoreSet {
        PairScoreSet::new(p.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn score_pairs_examples() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = score_pairs(&f, &[(0, 1, true), (0, 2, false)]).unwrap();
        assert_eq!(s.positive, vec![1.0]);
        assert_eq!(s.negative, vec![0.0]);
        assert_eq!(score_pairs(&f, &[]).unwrap(), PairScoreSet::default());
        assert!(score_pairs(&f, &[(0, 3, true)]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let r = best_threshold_accuracy(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(best_threshold_accuracy(&set(&[0.5], &[0.5])).unwrap().accuracy, 0.5);
        let r = best_threshold_accuracy(&set(&[0.9, 0.3], &[0.1, 0.6])).unwrap();
        assert_eq!(r.accuracy, 0.75);
        // smallest of the tying thresholds: midpoint of 0.1 and 0.3
        assert!((r.threshold - 0.2).abs() < 1e-15);
        assert!(best_threshold_accuracy(&set(&[], &[])).is_err());
        // one-sided sets are fine: rejecting everything is optimal
        assert_eq!(best_threshold_accuracy(&set(&[], &[0.1])).unwrap().accuracy, 1.0);
    }

    #[test]
    fn accuracy_reject_all_with_perfect_scores() {
        let r = best_threshold_accuracy(&set(&[0.0], &[1.0, 1.0])).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tar_examples() {
        let s = set(&[0.9, 0.8, 0.7], &[0.1, 0.2, 0.3]);
        let r = tar_at_far(&s, 1.0 / 3.0).unwrap();
        assert_eq!(r.tar, 1.0);
        assert!(r.achieved_far <= 1.0 / 3.0);
        assert!(r.threshold > 0.2 && r.threshold <= 0.3);

        let low = set(&[0.1, 0.2], &[0.5, 0.6, 0.7]);
        let r = tar_at_far(&low, 0.1).unwrap();
        assert_eq!(r.tar, 0.0);
        assert_eq!(r.achieved_far, 0.0);
        assert!(r.below_resolution);
        assert!(r.threshold > 0.7);

        let r = tar_at_far(&low, 1.0).unwrap();
        assert_eq!(r.achieved_far, 1.0);
        assert_eq!(r.tar, 1.0);

        assert!(tar_at_far(&s, 0.0).is_err());
        assert!(tar_at_far(&s, 1.5).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = score_histogram(&set(&[0.8, 0.8], &[-0.8]), 4).unwrap();
        assert_eq!(h.overlap, 0.0);
        assert_eq!(h.bins.len(), 4);
        assert_eq!(h.bins[3].pos_count, 2);
        assert_eq!(h.bins[0].neg_count, 1);

        let xs = [0.1, -0.3, 0.95, 1.0, -1.0];
        let h = score_histogram(&set(&xs, &xs), 7).unwrap();
        assert!((h.overlap - 1.0).abs() < 1e-12);

        assert!(score_histogram(&set(&[0.1], &[]), 4).is_err());
        assert!(score_histogram(&set(&[0.1], &[0.2]), 0).is_err());

        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("bin_low,bin_high,pos_density,neg_density\n-1,"));
    }

    #[test]
    fn pairs_balance_and_csv() {
        let labels = [0, 0, 0, 1, 1, 2];
        let pairs = build_pairs(&labels, 4);
        let pos = pairs.iter().filter(|p| p.2).count();
        assert_eq!(pos, 4);
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs, build_pairs(&labels, 4));
        let mut buf = Vec::new();
        write_pairs_csv(&pairs, &mut buf).unwrap();
        assert_eq!(read_pairs_csv(&buf[..]).unwrap(), pairs);
        assert!(read_pairs_csv("i,j,same\n0,1,maybe\n".as_bytes()).is_err());
    }

    #[test]
    fn score_range_enforced() {
        assert!(PairScoreSet::new(vec![1.5], vec![0.0]).is_err());
    }
}
