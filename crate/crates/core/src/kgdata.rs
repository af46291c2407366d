//! Triple files, vocabularies, positive/negative sampling and the filter index
//! used for filtered ranking.
//!
//! Triple files are UTF-8 text with one `subject<TAB>relation<TAB>object`
//! fact per line and no header, the distribution format of FB15K-237 and
//! WN18RR.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// One `(subject, relation, object)` fact as vocabulary indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

impl Triple {
    pub fn new(subject: usize, relation: usize, object: usize) -> Self {
        Triple {
            subject,
            relation,
            object,
        }
    }

    pub fn entity(&self, slot: Slot) -> usize {
        match slot {
            Slot::Subject => self.subject,
            Slot::Object => self.object,
        }
    }

    /// Copy of the triple with the entity in `slot` replaced.
    pub fn with_entity(&self, slot: Slot, entity: usize) -> Self {
        let mut t = *self;
        match slot {
            Slot::Subject => t.subject = entity,
            Slot::Object => t.object = entity,
        }
        t
    }
}

/// Entity position within a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Subject,
    Object,
}

impl Slot {
    pub fn other(self) -> Slot {
        match self {
            Slot::Subject => Slot::Object,
            Slot::Object => Slot::Subject,
        }
    }
}

/// Name tables for entities and relations. Indices follow first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scans `paths` in order and collects every entity and relation name.
    pub fn build<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::NoInput);
        }
        let mut vocab = Vocabulary::new();
        for path in paths {
            for_each_record(path.as_ref(), |_, s, r, o| {
                vocab.add_entity(s);
                vocab.add_relation(r);
                vocab.add_entity(o);
                Ok(())
            })?;
        }
        Ok(vocab)
    }

    /// Builds a vocabulary from explicit name lists, rejecting duplicates.
    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        for e in &entities {
            if vocab.entity_index.contains_key(e) {
                return Err(Error::InvalidArgument(format!("duplicate entity `{e}`")));
            }
            vocab.add_entity(e);
        }
        for r in &relations {
            if vocab.relation_index.contains_key(r) {
                return Err(Error::InvalidArgument(format!("duplicate relation `{r}`")));
            }
            vocab.add_relation(r);
        }
        Ok(vocab)
    }

    pub fn add_entity(&mut self, name: &str) -> usize {
        if let Some(&i) = self.entity_index.get(name) {
            return i;
        }
        let i = self.entities.len();
        self.entities.push(name.to_owned());
        self.entity_index.insert(name.to_owned(), i);
        i
    }

    pub fn add_relation(&mut self, name: &str) -> usize {
        if let Some(&i) = self.relation_index.get(name) {
            return i;
        }
        let i = self.relations.len();
        self.relations.push(name.to_owned());
        self.relation_index.insert(name.to_owned(), i);
        i
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relations.get(id).map(String::as_str)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    /// Writes `entities.dict` and `relations.dict` (`index<TAB>name`) into `dir`.
    pub fn write_dicts(&self, dir: &Path) -> Result<()> {
        write_dict(&dir.join("entities.dict"), &self.entities)?;
        write_dict(&dir.join("relations.dict"), &self.relations)
    }

    pub fn read_dicts(dir: &Path) -> Result<Self> {
        let entities = read_dict(&dir.join("entities.dict"))?;
        let relations = read_dict(&dir.join("relations.dict"))?;
        Self::from_names(entities, relations)
    }
}

fn write_dict(path: &Path, names: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, name) in names.iter().enumerate() {
        writeln!(w, "{i}\t{name}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_dict(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut names = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        let ok = fields.len() == 2 && fields[0].parse::<usize>().ok() == Some(names.len());
        if !ok {
            return Err(Error::MalformedLine {
                path: path.to_owned(),
                line: n + 1,
                found: fields.len(),
            });
        }
        names.push(fields[1].to_owned());
    }
    Ok(names)
}

fn for_each_record<F>(path: &Path, mut f: F) -> Result<()>
where
    F: FnMut(usize, &str, &str, &str) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedLine {
                path: path.to_owned(),
                line: n + 1,
                found: fields.len(),
            });
        }
        f(n + 1, fields[0], fields[1], fields[2])?;
    }
    Ok(())
}

/// Reads a triple file, resolving names through `vocab`. Output follows file order.
pub fn load_triples(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let mut triples = Vec::new();
    let unknown = |line, kind, token: &str| Error::UnknownToken {
        path: path.to_owned(),
        line,
        kind,
        token: token.to_owned(),
    };
    for_each_record(path, |line, s, r, o| {
        let subject = vocab.entity_id(s).ok_or_else(|| unknown(line, "entity", s))?;
        let relation = vocab.relation_id(r).ok_or_else(|| unknown(line, "relation", r))?;
        let object = vocab.entity_id(o).ok_or_else(|| unknown(line, "entity", o))?;
        triples.push(Triple::new(subject, relation, object));
        Ok(())
    })?;
    Ok(triples)
}

/// Writes triples in the tab-separated name format, one per line.
pub fn write_triples<W: Write>(mut w: W, triples: &[Triple], vocab: &Vocabulary) -> Result<()> {
    for t in triples {
        let name = |opt: Option<&str>, what: &str, id: usize| {
            opt.map(str::to_owned)
                .ok_or_else(|| Error::OutOfRange(format!("{what} id {id}")))
        };
        let s = name(vocab.entity_name(t.subject), "entity", t.subject)?;
        let r = name(vocab.relation_name(t.relation), "relation", t.relation)?;
        let o = name(vocab.entity_name(t.object), "entity", t.object)?;
        writeln!(w, "{s}\t{r}\t{o}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_triples_file(path: &Path, triples: &[Triple], vocab: &Vocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_triples(&mut w, triples, vocab)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Train/validation/test triples under one shared vocabulary.
#[derive(Debug, Clone, Default)]
pub struct SplitDataset {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl SplitDataset {
    /// Builds the vocabulary over `train, valid, test` (in that order) and loads all three splits.
    pub fn load(train: &Path, valid: &Path, test: &Path) -> Result<(Vocabulary, Self)> {
        let vocab = Vocabulary::build(&[train, valid, test])?;
        let data = SplitDataset {
            train: load_triples(train, &vocab)?,
            valid: load_triples(valid, &vocab)?,
            test: load_triples(test, &vocab)?,
        };
        Ok((vocab, data))
    }

    pub fn split(&self, which: Split) -> &[Triple] {
        match which {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn check(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        for t in self.train.iter().chain(&self.valid).chain(&self.test) {
            if t.subject >= num_entities || t.object >= num_entities || t.relation >= num_relations {
                return Err(Error::OutOfRange(format!(
                    "triple {t:?} outside N={num_entities}, K={num_relations}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// Which splits feed the filter index. Defaults to all three.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSplits(pub Vec<Split>);

impl Default for FilterSplits {
    fn default() -> Self {
        FilterSplits(vec![Split::Train, Split::Valid, Split::Test])
    }
}

impl FromStr for FilterSplits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut splits = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let split: Split = part.parse()?;
            if !splits.contains(&split) {
                splits.push(split);
            }
        }
        if splits.is_empty() {
            return Err(Error::InvalidArgument("empty filter split list".into()));
        }
        Ok(FilterSplits(splits))
    }
}

impl std::fmt::Display for FilterSplits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<String> = self.0.iter().map(Split::to_string).collect();
        f.write_str(&names.join(","))
    }
}

/// Known answers per query, for filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    objects: HashMap<(usize, usize), Vec<usize>>,
    subjects: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn build<'a, I>(splits: I) -> Self
    where
        I: IntoIterator<Item = &'a [Triple]>,
    {
        let mut index = FilterIndex::default();
        for split in splits {
            for t in split {
                index.objects.entry((t.relation, t.subject)).or_default().push(t.object);
                index
                    .subjects
                    .entry((t.relation, t.object))
                    .or_default()
                    .push(t.subject);
            }
        }
        for answers in index.objects.values_mut().chain(index.subjects.values_mut()) {
            answers.sort_unstable();
            answers.dedup();
        }
        index
    }

    pub fn from_dataset(data: &SplitDataset, splits: &FilterSplits) -> Self {
        Self::build(splits.0.iter().map(|&s| data.split(s)))
    }

    /// Sorted true objects for `(relation, subject)`.
    pub fn objects(&self, relation: usize, subject: usize) -> &[usize] {
        self.objects.get(&(relation, subject)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sorted true subjects for `(relation, object)`.
    pub fn subjects(&self, relation: usize, object: usize) -> &[usize] {
        self.subjects.get(&(relation, object)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Known answers for the open `slot` of `triple`, the other slot held fixed.
    pub fn answers(&self, triple: &Triple, slot: Slot) -> &[usize] {
        match slot {
            Slot::Object => self.objects(triple.relation, triple.subject),
            Slot::Subject => self.subjects(triple.relation, triple.object),
        }
    }
}

/// Shuffles `0..len` and cuts it into consecutive batches; the last one may be short.
pub fn epoch_batches<R: Rng + ?Sized>(len: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Uniform sample of `batch_size` distinct training triples.
pub fn sample_positive_batch<R: Rng + ?Sized>(train: &[Triple], batch_size: usize, rng: &mut R) -> Result<Vec<Triple>> {
    if batch_size > train.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {batch_size} exceeds {} training triples",
            train.len()
        )));
    }
    let mut picked = index::sample(rng, train.len(), batch_size).into_vec();
    picked.shuffle(rng);
    Ok(picked.into_iter().map(|i| train[i]).collect())
}

/// Draws `num_negatives` distinct replacement entities for `slot`, never the
/// original one. Known true triples are not filtered out.
pub fn corrupt<R: Rng + ?Sized>(
    triple: &Triple,
    slot: Slot,
    num_negatives: usize,
    num_entities: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let original = triple.entity(slot);
    if original >= num_entities {
        return Err(Error::OutOfRange(format!("entity {original} with N={num_entities}")));
    }
    if num_negatives > num_entities - 1 {
        return Err(Error::InvalidArgument(format!(
            "{num_negatives} negatives requested but only {} candidates",
            num_entities - 1
        )));
    }
    Ok(index::sample(rng, num_entities - 1, num_negatives)
        .into_iter()
        .map(|c| if c >= original { c + 1 } else { c })
        .collect())
}

/// Resolves the triple files named in a path list, reporting missing ones by path.
pub fn require_files(paths: &[PathBuf]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::io(
                p.clone(),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
    }
    Ok(())
}
