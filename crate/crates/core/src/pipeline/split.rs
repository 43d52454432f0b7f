//! Patient-wise train/validation/test splits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!("split fractions must lie in (0, 1), got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fractions: SplitFractions,
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
}

/// The three splits of a feature matrix, each in original sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: FeatureMatrix,
    pub val: FeatureMatrix,
    pub test: FeatureMatrix,
}

impl SplitPlan {
    /// Row indices (ascending) of samples whose patient falls in `split`.
    pub fn indices(&self, data: &FeatureMatrix, split: Split) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, p) in data.patient_ids().iter().enumerate() {
            match self.assignment.get(p) {
                Some(&s) if s == split => out.push(i),
                Some(_) => {}
                None => return Err(Error::Data(format!("patient {p:?} is not in the split plan"))),
            }
        }
        Ok(out)
    }

    pub fn apply(&self, data: &FeatureMatrix) -> Result<SplitData> {
        Ok(SplitData {
            train: data.select_rows(&self.indices(data, Split::Train)?),
            val: data.select_rows(&self.indices(data, Split::Val)?),
            test: data.select_rows(&self.indices(data, Split::Test)?),
        })
    }

    pub fn patient_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.assignment.values() {
            c[s.index()] += 1;
        }
        c
    }
}

/// Assigns whole patients to splits.
///
/// Patients are shuffled with the seed and laid end to end by sample count;
/// each patient goes to the split whose target sample range contains the
/// midpoint of its samples. Any split left empty takes the last patient of
/// the split with the most patients.
pub fn patient_split(data: &FeatureMatrix, fractions: SplitFractions, seed: u64) -> Result<SplitPlan> {
    fractions.validate()?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in data.patient_ids() {
        *counts.entry(p.as_str()).or_default() += 1;
    }
    if counts.len() < 3 {
        return Err(Error::Data(format!(
            "a patient-wise three-way split needs at least 3 patients, found {}",
            counts.len()
        )));
    }
    let mut patients: Vec<(&str, usize)> = counts.into_iter().collect();
    SplitMix64::new(derive_seed(seed, 0x5311)).shuffle(&mut patients);

    let total = data.len() as f64;
    let bounds = [fractions.train * total, (fractions.train + fractions.val) * total];
    let mut members: [Vec<&str>; 3] = Default::default();
    let mut cum = 0.0;
    for &(p, n) in &patients {
        let mid = cum + n as f64 / 2.0;
        let s = if mid < bounds[0] {
            0
        } else if mid < bounds[1] {
            1
        } else {
            2
        };
        members[s].push(p);
        cum += n as f64;
    }
    for s in 0..3 {
        if members[s].is_empty() {
            let donor = (0..3).max_by_key(|&d| (members[d].len(), 3 - d)).expect("three splits");
            let p = members[donor].pop().expect("donor has at least two patients");
            members[s].push(p);
        }
    }
    let assignment = Split::ALL
        .iter()
        .zip(&members)
        .flat_map(|(&split, ps)| ps.iter().map(move |p| (p.to_string(), split)))
        .collect();
    Ok(SplitPlan {
        fractions,
        seed,
        assignment,
    })
}
