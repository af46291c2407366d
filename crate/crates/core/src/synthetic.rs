//! Seeded toy knowledge graph with `mother`, `father` and `parent` relations,
//! where `parent` is exactly the union of the other two.
//!
//! Every child gets one random mother and one random father. All mother and
//! father facts go to the training split; the parent facts are divided
//! between train, validation and test, so the held-out parent facts are
//! always implied by training facts.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kgdata::{write_triples_file, SplitDataset, Triple, Vocabulary};

pub const MOTHER: usize = 0;
pub const FATHER: usize = 1;
pub const PARENT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyConfig {
    pub num_mothers: usize,
    pub num_fathers: usize,
    pub num_children: usize,
    /// Number of parent facts held out for validation.
    pub num_valid: usize,
    /// Number of parent facts held out for testing.
    pub num_test: usize,
    pub seed: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            num_mothers: 3,
            num_fathers: 3,
            num_children: 44,
            num_valid: 16,
            num_test: 16,
            seed: 7,
        }
    }
}

impl FamilyConfig {
    pub fn num_entities(&self) -> usize {
        self.num_mothers + self.num_fathers + self.num_children
    }
}

#[derive(Debug, Clone)]
pub struct FamilyKg {
    pub vocab: Vocabulary,
    pub data: SplitDataset,
}

pub fn family_kg(config: &FamilyConfig) -> Result<FamilyKg> {
    let FamilyConfig {
        num_mothers,
        num_fathers,
        num_children,
        num_valid,
        num_test,
        seed,
    } = *config;
    if num_mothers == 0 || num_fathers == 0 || num_children == 0 {
        return Err(Error::InvalidArgument(
            "family graph needs mothers, fathers and children".into(),
        ));
    }
    if num_valid + num_test > 2 * num_children {
        return Err(Error::InvalidArgument(format!(
            "cannot hold out {} of {} parent facts",
            num_valid + num_test,
            2 * num_children
        )));
    }

    let mut entities = Vec::with_capacity(config.num_entities());
    entities.extend((0..num_mothers).map(|i| format!("mother_{i}")));
    entities.extend((0..num_fathers).map(|i| format!("father_{i}")));
    entities.extend((0..num_children).map(|i| format!("child_{i}")));
    let relations = ["mother", "father", "parent"].map(String::from).to_vec();
    let vocab = Vocabulary::from_names(entities, relations)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let child0 = num_mothers + num_fathers;
    let mut train = Vec::new();
    let mut parent = Vec::new();
    for c in child0..child0 + num_children {
        let m = rng.random_range(0..num_mothers);
        let f = num_mothers + rng.random_range(0..num_fathers);
        train.push(Triple::new(m, MOTHER, c));
        train.push(Triple::new(f, FATHER, c));
        parent.push(Triple::new(m, PARENT, c));
        parent.push(Triple::new(f, PARENT, c));
    }
    parent.shuffle(&mut rng);
    let test = parent.split_off(parent.len() - num_test);
    let valid = parent.split_off(parent.len() - num_valid);
    train.extend(parent);
    train.shuffle(&mut rng);

    Ok(FamilyKg {
        vocab,
        data: SplitDataset { train, valid, test },
    })
}

impl FamilyKg {
    /// Writes `train.txt`, `valid.txt` and `test.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_triples_file(&dir.join("train.txt"), &self.data.train, &self.vocab)?;
        write_triples_file(&dir.join("valid.txt"), &self.data.valid, &self.vocab)?;
        write_triples_file(&dir.join("test.txt"), &self.data.test, &self.vocab)
    }
}
