//! State-goal abstractions and aggregated occupancy tables.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::occupancy::{concentrability_flat, Kappa, OccupancyTable, Witness};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Partition of the `(s, c)` rows of an occupancy table, indexed
/// `c * n_states + s`, into dense class ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub classes: Vec<usize>,
    pub n_classes: usize,
}

impl Partition {
    pub fn identity(rows: usize) -> Self {
        Self {
            classes: (0..rows).collect(),
            n_classes: rows,
        }
    }

    pub fn single(rows: usize) -> Self {
        Self {
            classes: vec![0; rows],
            n_classes: 1,
        }
    }

    /// Relabels arbitrary keys densely in order of first appearance.
    pub fn from_keys<K: Ord + Clone>(keys: &[K]) -> Self {
        let mut ids = BTreeMap::new();
        let mut classes = Vec::with_capacity(keys.len());
        for k in keys {
            let next = ids.len();
            classes.push(*ids.entry(k.clone()).or_insert(next));
        }
        Self {
            classes,
            n_classes: ids.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n_classes];
        for &c in &self.classes {
            if c >= self.n_classes {
                return Err(Error::config(format!("class id {c} outside [0, {})", self.n_classes)));
            }
            seen[c] = true;
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(Error::config(format!("class id {c} is unused; ids must be dense")));
        }
        Ok(())
    }

    /// Splits every class into at most `k` random pieces.
    pub fn refine_random(&self, k: usize, rng: &mut Stream) -> Self {
        let keys: Vec<(usize, usize)> = self.classes.iter().map(|&c| (c, rng.random_range(0..k.max(1)))).collect();
        Self::from_keys(&keys)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes];
        for (row, &c) in self.classes.iter().enumerate() {
            out[c].push(row);
        }
        out
    }
}

/// `φ_h` over `(s, g)` and `φ_l` over `(s, ω)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionMap {
    pub high: Partition,
    pub low: Partition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    High,
    Low,
}

impl AbstractionMap {
    pub fn partition(&self, level: Level) -> &Partition {
        match level {
            Level::High => &self.high,
            Level::Low => &self.low,
        }
    }
}

/// Class-by-choice table: `d[c * n_cols + x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTable {
    pub n_classes: usize,
    pub n_cols: usize,
    pub d: Vec<f64>,
}

impl AggregatedTable {
    pub fn get(&self, c: usize, x: usize) -> f64 {
        self.d[c * self.n_cols + x]
    }

    pub fn total(&self) -> f64 {
        self.d.iter().sum()
    }
}

/// Sums the conditional masses `d(s, x | c)` over each class preimage.
pub fn aggregate_partition(d: &OccupancyTable, p: &Partition) -> Result<AggregatedTable> {
    let rows = d.n_states * d.n_conds;
    if p.classes.len() != rows {
        return Err(Error::shape(format!(
            "abstraction covers {} rows, table has {rows}",
            p.classes.len()
        )));
    }
    p.validate()?;
    let mut out = vec![0.0; p.n_classes * d.n_actions];
    for row in 0..rows {
        let c = p.classes[row];
        for x in 0..d.n_actions {
            out[c * d.n_actions + x] += d.d[row * d.n_actions + x];
        }
    }
    Ok(AggregatedTable {
        n_classes: p.n_classes,
        n_cols: d.n_actions,
        d: out,
    })
}

pub fn aggregate(d: &OccupancyTable, map: &AbstractionMap, level: Level) -> Result<AggregatedTable> {
    aggregate_partition(d, map.partition(level))
}

pub fn aggregated_concentrability(star: &AggregatedTable, bc: &AggregatedTable) -> Result<Kappa> {
    if (star.n_classes, star.n_cols) != (bc.n_classes, bc.n_cols) {
        return Err(Error::shape("aggregated tables differ in shape"));
    }
    let (value, at) = concentrability_flat(&star.d, &bc.d)?;
    Ok(Kappa {
        value,
        witness: at.map(|i| Witness {
            index: vec![i / star.n_cols, i % star.n_cols],
            d_star: star.d[i],
            d_bc: bc.d[i],
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> OccupancyTable {
        OccupancyTable {
            n_states: 2,
            n_actions: 2,
            n_conds: 2,
            norm: 0.1,
            d: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.0, 0.25, 0.25],
        }
    }

    #[test]
    fn identity_keeps_the_table() {
        let d = table();
        let a = aggregate_partition(&d, &Partition::identity(4)).unwrap();
        assert_eq!(a.d, d.d);
    }

    #[test]
    fn single_class_is_the_marginal() {
        let a = aggregate_partition(&table(), &Partition::single(4)).unwrap();
        assert_eq!(a.n_classes, 1);
        assert!((a.get(0, 0) - 1.15).abs() < 1e-12);
        assert!((a.get(0, 1) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn sparse_ids_are_rejected() {
        let p = Partition {
            classes: vec![0, 2, 0, 2],
            n_classes: 3,
        };
        assert!(aggregate_partition(&table(), &p).is_err());
    }

    #[test]
    fn from_keys_is_dense() {
        let p = Partition::from_keys(&["b", "a", "b", "c"]);
        assert_eq!(p.classes, vec![0, 1, 0, 2]);
        p.validate().unwrap();
    }
}
