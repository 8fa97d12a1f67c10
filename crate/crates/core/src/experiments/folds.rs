use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::ConditionCombo;
use crate::error::{Error, Result};

/// One condition held out; indices refer to the record list the folds were built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub combo: ConditionCombo,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// One fold per (temperature, velocity) combination, ordered by combination.
pub fn make_folds(combos: &[ConditionCombo]) -> Result<Vec<FoldSplit>> {
    let mut groups: BTreeMap<ConditionCombo, Vec<usize>> = BTreeMap::new();
    for (i, c) in combos.iter().enumerate() {
        groups.entry(*c).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::Folds(format!(
            "need at least two condition combinations, found {}",
            groups.len()
        )));
    }
    if let Some((c, idx)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Folds(format!("combination {c} has only {} record(s)", idx.len())));
    }
    Ok(groups
        .iter()
        .map(|(combo, eval)| FoldSplit {
            combo: *combo,
            train: (0..combos.len()).filter(|&i| combos[i] != *combo).collect(),
            eval: eval.clone(),
        })
        .collect())
}
