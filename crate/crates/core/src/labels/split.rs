use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRatio {
    pub train: u32,
    pub dev: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio {
            train: 3,
            dev: 1,
            test: 1,
        }
    }
}

impl SplitRatio {
    /// Part sizes for `m` items by the largest-remainder method, so each part
    /// is within one item of its exact share.
    pub fn sizes(&self, m: usize) -> [usize; 3] {
        let w = [self.train as usize, self.dev as usize, self.test as usize];
        let total: usize = w.iter().sum();
        let mut sizes = [0usize; 3];
        let mut rem = [0usize; 3];
        for i in 0..3 {
            sizes[i] = m * w[i] / total;
            rem[i] = m * w[i] % total;
        }
        let mut left = m - sizes.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, split: Split) -> usize {
        self.ids(split).count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("need at least 5 comments to split, got {0}")]
    TooFew(usize),
    #[error("comment {0} appears more than once")]
    Duplicate(String),
}

/// Seeded train / dev / test assignment, optionally stratified by a grouping
/// key so each stratum is split in the same proportions.
pub fn split_dataset<F>(
    comment_ids: &[String],
    ratio: SplitRatio,
    seed: u64,
    stratum_of: Option<F>,
) -> Result<SplitAssignment, SplitError>
where
    F: Fn(&str) -> String,
{
    if comment_ids.len() < 5 {
        return Err(SplitError::TooFew(comment_ids.len()));
    }
    let mut strata: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for id in comment_ids {
        let key = stratum_of.as_ref().map(|f| f(id)).unwrap_or_default();
        strata.entry(key).or_default().push(id);
    }
    let mut rng = seed::rng(seed);
    let mut assignment = BTreeMap::new();
    for (_, mut ids) in strata {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let [train, dev, _] = ratio.sizes(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let s = if i < train {
                Split::Train
            } else if i < train + dev {
                Split::Dev
            } else {
                Split::Test
            };
            if assignment.insert(id.to_string(), s).is_some() {
                return Err(SplitError::Duplicate(id.to_string()));
            }
        }
    }
    Ok(SplitAssignment { seed, assignment })
}
