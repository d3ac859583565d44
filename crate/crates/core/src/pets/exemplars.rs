use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PetError;

/// One worked example shown to few-shot style PETs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub task_id: String,
    pub prompt: String,
    pub solution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

/// Exactly three exemplars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Exemplar>", into = "Vec<Exemplar>")]
pub struct ExemplarSet([Exemplar; 3]);

impl ExemplarSet {
    pub fn new(items: [Exemplar; 3]) -> Self {
        Self(items)
    }

    pub fn items(&self) -> &[Exemplar; 3] {
        &self.0
    }

    pub fn task_ids(&self) -> BTreeSet<String> {
        self.0.iter().map(|e| e.task_id.clone()).collect()
    }
}

impl TryFrom<Vec<Exemplar>> for ExemplarSet {
    type Error = String;

    fn try_from(v: Vec<Exemplar>) -> Result<Self, Self::Error> {
        let n = v.len();
        v.try_into().map(ExemplarSet).map_err(|_| format!("an exemplar set holds exactly 3 entries, got {n}"))
    }
}

impl From<ExemplarSet> for Vec<Exemplar> {
    fn from(s: ExemplarSet) -> Self {
        s.0.into()
    }
}

/// The exemplar file: candidates from which fixed sets are drawn.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExemplarPool {
    pub entries: Vec<Exemplar>,
}

impl ExemplarPool {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<Exemplar> =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self { entries })
    }

    /// Draws three exemplars whose ids avoid `exclude`, deterministically for `seed`.
    pub fn draw(&self, seed: u64, exclude: &BTreeSet<String>) -> Result<ExemplarSet, PetError> {
        let mut candidates: Vec<&Exemplar> = self.entries.iter().filter(|e| !exclude.contains(&e.task_id)).collect();
        candidates.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        candidates.dedup_by(|a, b| a.task_id == b.task_id);
        if candidates.len() < 3 {
            return Err(PetError::MissingExemplars {
                pet: super::PetId::FewShot,
                reason: format!("only {} eligible exemplars after exclusions", candidates.len()),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        candidates.shuffle(&mut rng);
        let picked: Vec<Exemplar> = candidates.into_iter().take(3).cloned().collect();
        Ok(ExemplarSet::try_from(picked).expect("three candidates taken"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> ExemplarPool {
        ExemplarPool {
            entries: (0..n)
                .map(|i| Exemplar {
                    task_id: format!("ex{i}"),
                    prompt: format!("p{i}"),
                    solution: format!("s{i}"),
                    reasoning: None,
                })
                .collect(),
        }
    }

    #[test]
    fn draw_is_seeded_and_respects_exclusions() {
        let p = pool(8);
        let exclude: BTreeSet<String> = ["ex0", "ex1", "ex2"].iter().map(|s| s.to_string()).collect();
        let a = p.draw(7, &exclude).unwrap();
        let b = p.draw(7, &exclude).unwrap();
        assert_eq!(a, b);
        assert!(a.task_ids().is_disjoint(&exclude));
    }

    #[test]
    fn too_few_candidates() {
        let p = pool(4);
        let exclude: BTreeSet<String> = ["ex0", "ex1"].iter().map(|s| s.to_string()).collect();
        assert!(p.draw(1, &exclude).is_err());
    }

    #[test]
    fn set_requires_three() {
        let v: Vec<Exemplar> = pool(2).entries;
        assert!(ExemplarSet::try_from(v).is_err());
        let json = serde_json::to_string(&pool(3).entries).unwrap();
        let set: ExemplarSet = serde_json::from_str(&json).unwrap();
        assert_eq!(set.items().len(), 3);
    }
}
