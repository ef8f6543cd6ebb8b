//! AUC and ROC with fake images as the positive class.
//!
//! A fake outranks a real when its score is strictly higher; ties count one
//! half (the Mann-Whitney convention).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(real: &[f64], fake: &[f64]) -> Result<()> {
    if real.is_empty() {
        return Err(Error::EmptyClass("real"));
    }
    if fake.is_empty() {
        return Err(Error::EmptyClass("fake"));
    }
    if real.iter().chain(fake).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    Ok(())
}

/// Sorted `(score, is_fake)` pairs, ascending.
fn pooled(real: &[f64], fake: &[f64]) -> Vec<(f64, bool)> {
    let mut all: Vec<(f64, bool)> = real
        .iter()
        .map(|&s| (s, false))
        .chain(fake.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    all
}

/// Probability that a random fake score exceeds a random real one.
///
/// Computed from mid-ranks in integer arithmetic, so the result is the exact
/// rational `(2 * wins + ties) / (2 * n_real * n_fake)` rounded once.
pub fn auc(real: &[f64], fake: &[f64]) -> Result<f64> {
    check(real, fake)?;
    let all = pooled(real, fake);
    // Twice the rank sum of the fakes, with 1-based mid-ranks.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let fakes = all[i..j].iter().filter(|e| e.1).count() as u128;
        // Ranks i+1..=j average to (i + 1 + j) / 2.
        twice_rank_sum += fakes * (i + 1 + j) as u128;
        i = j;
    }
    let nf = fake.len() as u128;
    let nr = real.len() as u128;
    let twice_u = twice_rank_sum - nf * (nf + 1);
    Ok(twice_u as f64 / (2 * nf * nr) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (x, y) in &self.points {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// ROC obtained by lowering the threshold through every distinct score.
/// Tied scores move the curve diagonally.
pub fn roc_curve(real: &[f64], fake: &[f64]) -> Result<RocCurve> {
    check(real, fake)?;
    let all = pooled(real, fake);
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut j = all.len();
    while j > 0 {
        let mut i = j - 1;
        while i > 0 && all[i - 1].0 == all[j - 1].0 {
            i -= 1;
        }
        for e in &all[i..j] {
            if e.1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / nr, tp as f64 / nf));
        j = i;
    }
    Ok(RocCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive pair counting, kept independent of the rank path.
    fn pairwise(real: &[f64], fake: &[f64]) -> f64 {
        let mut twice: u64 = 0;
        for f in fake {
            for r in real {
                twice += if f > r {
                    2
                } else if f == r {
                    1
                } else {
                    0
                };
            }
        }
        twice as f64 / (2 * real.len() * fake.len()) as f64
    }

    #[test]
    fn perfect_separation() {
        assert_eq!(auc(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 1.0);
        let roc = roc_curve(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
        assert!(roc.points.contains(&(0.0, 1.0)));
    }

    #[test]
    fn identical_lists() {
        let s = [0.3, 0.1, 0.7, 0.7];
        assert_eq!(auc(&s, &s).unwrap(), 0.5);
        let roc = roc_curve(&s, &s).unwrap();
        assert!(roc.points.iter().all(|(x, y)| x == y));
    }

    #[test]
    fn tied_example() {
        let (real, fake) = ([0.3, 0.5, 0.5], [0.5, 0.7]);
        assert_eq!(auc(&real, &fake).unwrap(), 5.0 / 6.0);
        assert_eq!(pairwise(&real, &fake), 5.0 / 6.0);
    }

    #[test]
    fn empty_classes() {
        assert!(matches!(auc(&[], &[1.0]), Err(Error::EmptyClass("real"))));
        assert!(matches!(auc(&[1.0], &[]), Err(Error::EmptyClass("fake"))));
        assert!(roc_curve(&[], &[1.0]).is_err());
        assert!(auc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn roc_endpoints() {
        let roc = roc_curve(&[0.2, 0.4, 0.1], &[0.3, 0.9]).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    fn grid_list() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0u8..5).prop_map(|k| k as f64 * 0.25), 1..=12)
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(real in grid_list(), fake in grid_list()) {
            prop_assert_eq!(auc(&real, &fake).unwrap(), pairwise(&real, &fake));
        }

        #[test]
        fn roc_area_matches_auc(
            real in prop::collection::vec(-1.0f64..1.0, 1..40),
            fake in prop::collection::vec(-1.0f64..1.0, 1..40),
        ) {
            let roc = roc_curve(&real, &fake).unwrap();
            prop_assert!((roc.trapezoid_area() - auc(&real, &fake).unwrap()).abs() < 1e-12);
            for w in roc.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn complement_identity(real in grid_list(), fake in grid_list()) {
            // Both sides are multiples of 1/(2 nr nf) with small numerators, so
            // the sum is exact.
            prop_assert_eq!(auc(&real, &fake).unwrap() + auc(&fake, &real).unwrap(), 1.0);
        }

        #[test]
        fn invariant_under_increasing_maps(
            real in prop::collection::vec(-3.0f64..3.0, 1..20),
            fake in prop::collection::vec(-3.0f64..3.0, 1..20),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let base = auc(&real, &fake).unwrap();
            let affine = |v: &Vec<f64>| v.iter().map(|x| a * x + b).collect::<Vec<_>>();
            let exp = |v: &Vec<f64>| v.iter().map(|x| x.exp()).collect::<Vec<_>>();
            prop_assert_eq!(auc(&affine(&real), &affine(&fake)).unwrap(), base);
            prop_assert_eq!(auc(&exp(&real), &exp(&fake)).unwrap(), base);
        }
    }
}
