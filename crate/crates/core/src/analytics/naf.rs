//! Neighbouring attack fraction.
//!
//! The neighbourhood of a comment is up to `n` comments immediately before
//! and after it on the same page, itself excluded. Pages are ordered by
//! timestamp with rev id breaking ties. Comments with an empty neighbourhood
//! are skipped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{welch_t, ScoredComment};
use crate::corpus::compare_page_order;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafValue {
    pub comment_id: String,
    pub is_attack: bool,
    pub neighbours: usize,
    pub naf: f64,
}

/// NAF of every comment with a non-empty neighbourhood, pages in id order.
pub fn naf_values(scored: &[ScoredComment], n: usize) -> Vec<NafValue> {
    let mut pages: BTreeMap<&str, Vec<&ScoredComment>> = BTreeMap::new();
    for s in scored {
        pages.entry(s.comment.page_id.as_str()).or_default().push(s);
    }
    let mut out = Vec::new();
    for page in pages.values_mut() {
        page.sort_by(|a, b| compare_page_order(&a.comment, &b.comment));
        // prefix[i] = attacks among page[..i]
        let mut prefix = vec![0usize; page.len() + 1];
        for (i, s) in page.iter().enumerate() {
            prefix[i + 1] = prefix[i] + usize::from(s.is_attack);
        }
        for (i, s) in page.iter().enumerate() {
            let lo = i.saturating_sub(n);
            let hi = (i + n + 1).min(page.len());
            let size = hi - lo - 1;
            if size == 0 {
                continue;
            }
            let attacks = prefix[hi] - prefix[lo] - usize::from(s.is_attack);
            out.push(NafValue {
                comment_id: s.comment.comment_id.clone(),
                is_attack: s.is_attack,
                neighbours: size,
                naf: attacks as f64 / size as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafClass {
    pub n_comments: u64,
    /// Mean of per-comment NAF; 0 for an empty class.
    pub mean_naf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafReport {
    pub n: usize,
    pub attack_centers: NafClass,
    pub non_attack_centers: NafClass,
    /// Welch t of attack minus non-attack means, when defined.
    pub t_statistic: Option<f64>,
}

pub fn neighboring_attack_fraction(scored: &[ScoredComment], n: usize) -> NafReport {
    assert!(n >= 1, "neighbourhood size must be at least 1");
    let values = naf_values(scored, n);
    let (a, b): (Vec<&NafValue>, Vec<&NafValue>) = values.iter().partition(|v| v.is_attack);
    let class = |v: &[&NafValue]| NafClass {
        n_comments: v.len() as u64,
        mean_naf: if v.is_empty() {
            0.0
        } else {
            v.iter().map(|x| x.naf).sum::<f64>() / v.len() as f64
        },
    };
    let xa: Vec<f64> = a.iter().map(|v| v.naf).collect();
    let xb: Vec<f64> = b.iter().map(|v| v.naf).collect();
    NafReport {
        n,
        attack_centers: class(&a),
        non_attack_centers: class(&b),
        t_statistic: welch_t(&xa, &xb).ok().map(|w| w.t),
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::sc;
    use super::*;

    #[test]
    fn hand_enumerated_page() {
        // pattern A N A N N, n = 1
        let pattern = [true, false, true, false, false];
        let scored: Vec<_> = pattern.iter().enumerate().map(|(i, a)| sc("p", i as u32, "u", true, i as i64, *a)).collect();
        let v: Vec<f64> = naf_values(&scored, 1).iter().map(|v| v.naf).collect();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 0.5, 0.0]);
        let r = neighboring_attack_fraction(&scored, 1);
        assert_eq!(r.attack_centers.mean_naf, 0.0);
        assert_eq!(r.non_attack_centers.mean_naf, 0.5);
    }

    #[test]
    fn zero_attacks() {
        let scored: Vec<_> = (0..4).map(|i| sc("p", i, "u", true, i as i64, false)).collect();
        let r = neighboring_attack_fraction(&scored, 2);
        assert_eq!((r.attack_centers.mean_naf, r.non_attack_centers.mean_naf), (0.0, 0.0));
        assert_eq!(r.attack_centers.n_comments, 0);
    }

    #[test]
    fn lone_comments_are_excluded() {
        let scored = vec![sc("p", 1, "u", true, 0, true), sc("q", 1, "u", true, 0, false)];
        assert!(naf_values(&scored, 3).is_empty());
    }

    #[test]
    fn whole_page_neighbourhood() {
        let pattern = [true, true, false, false, true, false];
        let scored: Vec<_> = pattern.iter().enumerate().map(|(i, a)| sc("p", i as u32, "u", true, i as i64, *a)).collect();
        for v in naf_values(&scored, 10) {
            let expected = (3 - usize::from(v.is_attack)) as f64 / 5.0;
            assert_eq!(v.naf, expected);
        }
    }

    #[test]
    fn rev_id_breaks_timestamp_ties() {
        let a = sc("p", 10, "u", true, 0, true);
        let b = sc("p", 9, "u", true, 0, false);
        let c = sc("p", 11, "u", true, 0, false);
        let v = naf_values(&[a, b, c], 1);
        let ids: Vec<&str> = v.iter().map(|x| x.comment_id.as_str()).collect();
        assert_eq!(ids, vec!["p:9", "p:10", "p:11"]);
    }
}
