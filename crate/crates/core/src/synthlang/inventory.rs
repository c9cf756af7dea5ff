use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AffixId, GroupId, SetId, StemId};
use crate::error::{Error, Result};

/// A frequent affix combination used as one fine-grained morphological tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffixSet {
    pub id: SetId,
    pub group: GroupId,
    pub affixes: Vec<AffixId>,
    pub frequency: u64,
}

/// Affix-set inventory. Ids `0..num_groups` are the empty set of each group
/// (so every bare word has a set); the remaining ids are the top-K non-empty
/// combinations by descending corpus frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<AffixSet>", into = "Vec<AffixSet>")]
pub struct AffixSetInventory {
    sets: Vec<AffixSet>,
    index: HashMap<(GroupId, Vec<AffixId>), SetId>,
}

impl From<Vec<AffixSet>> for AffixSetInventory {
    fn from(sets: Vec<AffixSet>) -> Self {
        let index = sets
            .iter()
            .map(|s| ((s.group, s.affixes.clone()), s.id))
            .collect();
        AffixSetInventory { sets, index }
    }
}

impl From<AffixSetInventory> for Vec<AffixSet> {
    fn from(inv: AffixSetInventory) -> Self {
        inv.sets
    }
}

fn canonical(affixes: &[AffixId]) -> Vec<AffixId> {
    let mut v = affixes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl AffixSetInventory {
    /// Build from observed (group, affix list) pairs, one per corpus token.
    pub fn build(observations: &[(GroupId, Vec<AffixId>)], num_groups: usize, k: usize) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Data("cannot build an affix-set inventory from an empty corpus".into()));
        }
        if k == 0 {
            return Err(Error::Config("affix-set inventory size must be at least 1".into()));
        }
        let mut counts: BTreeMap<(GroupId, Vec<AffixId>), u64> = BTreeMap::new();
        for (g, a) in observations {
            if *g >= num_groups {
                return Err(Error::Data(format!("observation has group {g} outside 0..{num_groups}")));
            }
            *counts.entry((*g, canonical(a))).or_insert(0) += 1;
        }
        let mut sets: Vec<AffixSet> = (0..num_groups)
            .map(|g| AffixSet {
                id: g,
                group: g,
                affixes: Vec::new(),
                frequency: counts.get(&(g, Vec::new())).copied().unwrap_or(0),
            })
            .collect();
        let mut nonempty: Vec<(&(GroupId, Vec<AffixId>), &u64)> =
            counts.iter().filter(|((_, a), _)| !a.is_empty()).collect();
        // Descending frequency; ties keep the BTreeMap (group, affixes) order.
        nonempty.sort_by(|a, b| b.1.cmp(a.1));
        for ((g, a), &f) in nonempty.into_iter().take(k) {
            sets.push(AffixSet { id: sets.len(), group: *g, affixes: a.clone(), frequency: f });
        }
        Ok(sets.into())
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[AffixSet] {
        &self.sets
    }

    pub fn get(&self, id: SetId) -> Result<&AffixSet> {
        self.sets
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("unknown affix set id {id}")))
    }

    pub fn empty_set(&self, group: GroupId) -> SetId {
        group
    }

    pub fn lookup(&self, group: GroupId, affixes: &[AffixId]) -> Option<SetId> {
        self.index.get(&(group, canonical(affixes))).copied()
    }

    /// Map any affix combination to an inventory set: itself if present,
    /// otherwise the most frequent inventory subset of the same group (ties go
    /// to the larger subset, then the lower id).
    pub fn reduce(&self, group: GroupId, affixes: &[AffixId]) -> SetId {
        let c = canonical(affixes);
        if let Some(id) = self.lookup(group, &c) {
            return id;
        }
        self.sets
            .iter()
            .filter(|s| s.group == group && s.affixes.iter().all(|a| c.binary_search(a).is_ok()))
            .max_by(|a, b| {
                a.frequency
                    .cmp(&b.frequency)
                    .then(a.affixes.len().cmp(&b.affixes.len()))
                    .then(b.id.cmp(&a.id))
            })
            .map(|s| s.id)
            .unwrap_or(group)
    }
}

/// Add-one smoothed conditional frequency of affix sets given stems:
/// (count(s, a) + 1) / (count(s) + |sets|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemSetCorrelation {
    num_sets: usize,
    /// Per stem, sparse counts by set id.
    counts: Vec<BTreeMap<SetId, u64>>,
    totals: Vec<u64>,
}

impl StemSetCorrelation {
    pub fn build(observations: &[(StemId, SetId)], num_stems: usize, num_sets: usize) -> Result<Self> {
        let mut counts = vec![BTreeMap::new(); num_stems];
        let mut totals = vec![0u64; num_stems];
        for &(s, a) in observations {
            if s >= num_stems || a >= num_sets {
                return Err(Error::Data(format!("correlation observation ({s}, {a}) out of range")));
            }
            *counts[s].entry(a).or_insert(0) += 1;
            totals[s] += 1;
        }
        Ok(StemSetCorrelation { num_sets, counts, totals })
    }

    pub fn num_sets(&self) -> usize {
        self.num_sets
    }

    pub fn count(&self, stem: StemId, set: SetId) -> u64 {
        self.counts
            .get(stem)
            .and_then(|m| m.get(&set))
            .copied()
            .unwrap_or(0)
    }

    /// Smoothed value; stems outside the table behave as unseen stems.
    pub fn rho(&self, stem: StemId, set: SetId) -> f64 {
        let total = self.totals.get(stem).copied().unwrap_or(0);
        (self.count(stem, set) + 1) as f64 / (total + self.num_sets as u64) as f64
    }
}
