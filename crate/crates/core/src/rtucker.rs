//! The Relational Tucker3 decomposition.
//!
//! A model holds an entity matrix `E` (N × d_e), a relation matrix `R`
//! (K × d_r) and a core tensor `G` made of `d_r` frontal slices, each
//! `d_e × d_e`. Relation `k` gets the mixing matrix `M_k = Σ_l r_kl G_l` and
//! triples are scored as `e_iᵀ M_k e_j`. Bilinear models are RT models whose
//! core is fixed ([`fixed_core`]) or whose relation matrix is the identity
//! ([`constrained_view`]).

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bilinear::{mixing_matrix, AnalogyBlock, AnalogyLayout, BilinearKind, BilinearModel, MixingMatrix};
use crate::error::{Error, Result};
use crate::kgdata::Slot;
use crate::sparsity::{apply_gates, HardConcreteGates, HardConcreteParams};

/// Core tensor stored as `d_r` frontal slices of shape `d_e × d_e`, with an
/// optional mask of structurally fixed (non-free) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    values: Array3<f64>,
    fixed: Option<Array3<bool>>,
}

impl CoreTensor {
    /// Wraps slice-major values of shape `(d_r, d_e, d_e)`.
    pub fn new(values: Array3<f64>) -> Result<Self> {
        let (d_r, rows, cols) = values.dim();
        if d_r == 0 {
            return Err(Error::Dimension("core tensor needs at least one slice".into()));
        }
        if rows != cols || rows == 0 {
            return Err(Error::Dimension(format!(
                "core slices must be square and non-empty, got {rows}x{cols}"
            )));
        }
        Ok(CoreTensor { values, fixed: None })
    }

    pub fn zeros(entity_dim: usize, relation_dim: usize) -> Result<Self> {
        Self::new(Array3::zeros((relation_dim, entity_dim, entity_dim)))
    }

    pub fn from_slices(slices: &[Array2<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Dimension("core tensor needs at least one slice".into()))?;
        let dim = first.dim();
        let mut values = Array3::zeros((slices.len(), dim.0, dim.1));
        for (l, slice) in slices.iter().enumerate() {
            if slice.dim() != dim {
                return Err(Error::Dimension(format!(
                    "slice {l} is {:?}, slice 0 is {dim:?}",
                    slice.dim()
                )));
            }
            values.index_axis_mut(Axis(0), l).assign(slice);
        }
        Self::new(values)
    }

    pub fn with_fixed_mask(mut self, mask: Array3<bool>) -> Result<Self> {
        if mask.dim() != self.values.dim() {
            return Err(Error::Dimension(format!(
                "fixed mask {:?} vs core {:?}",
                mask.dim(),
                self.values.dim()
            )));
        }
        self.fixed = Some(mask);
        Ok(self)
    }

    /// Marks every entry as fixed.
    pub fn all_fixed(self) -> Self {
        let mask = Array3::from_elem(self.values.dim(), true);
        CoreTensor {
            values: self.values,
            fixed: Some(mask),
        }
    }

    pub fn entity_dim(&self) -> usize {
        self.values.dim().1
    }

    pub fn relation_dim(&self) -> usize {
        self.values.dim().0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, l: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), l)
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn fixed_mask(&self) -> Option<&Array3<bool>> {
        self.fixed.as_ref()
    }

    pub fn is_fixed(&self, l: usize, a: usize, b: usize) -> bool {
        self.fixed.as_ref().is_some_and(|m| m[[l, a, b]])
    }

    pub fn is_fully_fixed(&self) -> bool {
        self.fixed.as_ref().is_some_and(|m| m.iter().all(|&f| f))
    }
}

/// `G ×₃ r = Σ_l r_l G_l`.
pub fn mode3_product(core: &CoreTensor, r: ArrayView1<f64>) -> Result<MixingMatrix> {
    if r.len() != core.relation_dim() {
        return Err(Error::Dimension(format!(
            "relation vector has {} entries, core has {} slices",
            r.len(),
            core.relation_dim()
        )));
    }
    let d = core.entity_dim();
    let mut m = Array2::zeros((d, d));
    for (l, &w) in r.iter().enumerate() {
        if w != 0.0 {
            m.scaled_add(w, &core.slice(l));
        }
    }
    Ok(m)
}

/// Fixed core tensor reproducing a bilinear model: `mode3_product(core, r)`
/// equals [`mixing_matrix`] for every `r`. All entries are marked fixed.
pub fn fixed_core(model: &BilinearModel) -> Result<CoreTensor> {
    let d = model.entity_dim();
    let d_r = model.relation_dim();
    let mut g = Array3::<f64>::zeros((d_r, d, d));
    match model.kind() {
        BilinearKind::Rescal => {
            // slice k holds a single one at row ⌊k / d⌋, column k mod d
            for k in 0..d_r {
                g[[k, k / d, k % d]] = 1.0;
            }
        }
        BilinearKind::DistMult => {
            for k in 0..d {
                g[[k, k, k]] = 1.0;
            }
        }
        BilinearKind::Cp => {
            let h = d / 2;
            for k in 0..h {
                g[[k, k, h + k]] = 1.0;
            }
        }
        BilinearKind::ComplEx => {
            let h = d / 2;
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        g[[k, i, j]] = complex_core_entry(h, i, j, k);
                    }
                }
            }
        }
        BilinearKind::Analogy(layout) => {
            let mut pos = 0;
            for block in &layout.0 {
                match block {
                    AnalogyBlock::Scalar => g[[pos, pos, pos]] = 1.0,
                    AnalogyBlock::Pair => {
                        g[[pos, pos, pos]] = 1.0;
                        g[[pos, pos + 1, pos + 1]] = 1.0;
                        g[[pos + 1, pos + 1, pos]] = 1.0;
                        g[[pos + 1, pos, pos + 1]] = -1.0;
                    }
                }
                pos += block.size();
            }
        }
    }
    Ok(CoreTensor::new(g)?.all_fixed())
}

/// Entry `(i, j, k)` of the ComplEx core, 0-based, for `d_e = 2h`.
fn complex_core_entry(h: usize, i: usize, j: usize, k: usize) -> f64 {
    if k < h {
        if (i == k && j == k) || (i == k + h && j == k + h) {
            return 1.0;
        }
    } else {
        if i == k - h && j == k {
            return 1.0;
        }
        if i == k && j == k - h {
            return -1.0;
        }
    }
    0.0
}

/// Relation-side parameters of the constrained core tensor view: `R = I_K`
/// (fixed) and one core slice per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedView {
    pub relations: Array2<f64>,
    pub core: CoreTensor,
}

impl ConstrainedView {
    pub fn into_model(self, entities: Array2<f64>) -> Result<RtModel> {
        let mut model = RtModel::new(ModelKind::Drt, entities, self.relations, self.core)?;
        model.relations_fixed = true;
        Ok(model)
    }
}

/// Places the given mixing matrices directly into the core (`G_k = M_k`) with
/// `R` fixed to the identity. Core entries stay free.
pub fn constrained_view(mixing: &[Array2<f64>]) -> Result<ConstrainedView> {
    let core = CoreTensor::from_slices(mixing)?;
    Ok(ConstrainedView {
        relations: Array2::eye(mixing.len()),
        core,
    })
}

/// Constrained view of a bilinear model: `G_k = mixing_matrix(model, r_k)`,
/// with every core entry fixed except one canonical position per entry of
/// `r_k`; tied or structurally zero positions are not free parameters.
pub fn constrained_bilinear_view(model: &BilinearModel, relations: ArrayView2<f64>) -> Result<ConstrainedView> {
    if relations.ncols() != model.relation_dim() {
        return Err(Error::Dimension(format!(
            "relation matrix has {} columns, {} expects {}",
            relations.ncols(),
            model.kind().name(),
            model.relation_dim()
        )));
    }
    let mats = relations
        .outer_iter()
        .map(|r| mixing_matrix(model, r))
        .collect::<Result<Vec<_>>>()?;
    let view = constrained_view(&mats)?;
    let d = model.entity_dim();
    let mut free = Array2::from_elem((d, d), false);
    for (a, b) in canonical_positions(model) {
        free[[a, b]] = true;
    }
    let mask = Array3::from_shape_fn(view.core.values().dim(), |(_, a, b)| !free[[a, b]]);
    Ok(ConstrainedView {
        relations: view.relations,
        core: view.core.with_fixed_mask(mask)?,
    })
}

fn canonical_positions(model: &BilinearModel) -> Vec<(usize, usize)> {
    let d = model.entity_dim();
    match model.kind() {
        BilinearKind::Rescal => (0..d * d).map(|k| (k / d, k % d)).collect(),
        BilinearKind::DistMult => (0..d).map(|l| (l, l)).collect(),
        BilinearKind::Cp => (0..d / 2).map(|l| (l, d / 2 + l)).collect(),
        BilinearKind::ComplEx => {
            let h = d / 2;
            (0..h).map(|l| (l, l)).chain((0..h).map(|l| (l, h + l))).collect()
        }
        BilinearKind::Analogy(layout) => {
            let mut out = Vec::new();
            let mut pos = 0;
            for block in &layout.0 {
                out.push((pos, pos));
                if *block == AnalogyBlock::Pair {
                    out.push((pos + 1, pos));
                }
                pos += block.size();
            }
            out
        }
    }
}

/// Family of an RT model: a bilinear model under the fixed-core view, a
/// dense RT (free core), or a sparse RT (free core behind L0 gates).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Bilinear(BilinearKind),
    Drt,
    Srt,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Bilinear(k) => k.name(),
            ModelKind::Drt => "drt",
            ModelKind::Srt => "srt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Bilinear(BilinearKind::Analogy(layout)) if !layout.0.is_empty() => write!(f, "analogy:{layout}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match (name.to_ascii_lowercase().as_str(), arg) {
            ("complex", None) => ModelKind::Bilinear(BilinearKind::ComplEx),
            ("distmult", None) => ModelKind::Bilinear(BilinearKind::DistMult),
            ("rescal", None) => ModelKind::Bilinear(BilinearKind::Rescal),
            ("cp", None) => ModelKind::Bilinear(BilinearKind::Cp),
            ("analogy", None) => ModelKind::Bilinear(BilinearKind::Analogy(AnalogyLayout(Vec::new()))),
            ("analogy", Some(layout)) => ModelKind::Bilinear(BilinearKind::Analogy(layout.parse()?)),
            ("drt", None) => ModelKind::Drt,
            ("srt", None) => ModelKind::Srt,
            _ => return Err(Error::InvalidArgument(format!("unknown model `{s}`"))),
        };
        Ok(kind)
    }
}

/// Normal initialization scales for a fresh model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub embedding_std: f64,
    pub core_std: f64,
    pub gates: HardConcreteParams,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            embedding_std: 0.1,
            core_std: 0.1,
            gates: HardConcreteParams::default(),
        }
    }
}

/// Full parameter set `{E, R, G}` plus optional L0 gates on `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct RtModel {
    pub kind: ModelKind,
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
    /// `R` is not a free parameter (constrained view).
    pub relations_fixed: bool,
    /// Free core values; the effective core is these times the gates.
    pub core: CoreTensor,
    pub gates: Option<HardConcreteGates>,
}

impl RtModel {
    pub fn new(kind: ModelKind, entities: Array2<f64>, relations: Array2<f64>, core: CoreTensor) -> Result<Self> {
        let model = RtModel {
            kind,
            entities,
            relations,
            relations_fixed: false,
            core,
            gates: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_gates(mut self, gates: HardConcreteGates) -> Result<Self> {
        if gates.len() != self.core.len() {
            return Err(Error::Dimension(format!(
                "{} gates for {} core entries",
                gates.len(),
                self.core.len()
            )));
        }
        self.gates = Some(gates);
        Ok(self)
    }

    /// Checks shape compatibility and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (n, d_e) = self.entities.dim();
        let (k, d_r) = self.relations.dim();
        if n == 0 || d_e == 0 || k == 0 || d_r == 0 {
            return Err(Error::Dimension(format!(
                "empty model: N={n}, d_e={d_e}, K={k}, d_r={d_r}"
            )));
        }
        if self.core.entity_dim() != d_e || self.core.relation_dim() != d_r {
            return Err(Error::Dimension(format!(
                "E has d_e={d_e}, R has d_r={d_r}, core is {}x{}x{}",
                self.core.entity_dim(),
                self.core.entity_dim(),
                self.core.relation_dim()
            )));
        }
        if let Some(g) = &self.gates {
            if g.len() != self.core.len() {
                return Err(Error::Dimension("gate count differs from core size".into()));
            }
        }
        let finite = self
            .entities
            .iter()
            .chain(self.relations.iter())
            .chain(self.core.values().iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Random model of the given family. Bilinear kinds get their fixed core
    /// and ignore `relation_dim`; SRT additionally gets gates.
    pub fn init<R: Rng + ?Sized>(
        kind: ModelKind,
        num_entities: usize,
        num_relations: usize,
        entity_dim: usize,
        relation_dim: usize,
        init: &InitConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let kind = match kind {
            ModelKind::Bilinear(BilinearKind::Analogy(layout)) if layout.0.is_empty() => {
                ModelKind::Bilinear(BilinearKind::Analogy(AnalogyLayout::default_for(entity_dim)))
            }
            other => other,
        };
        let normal =
            |std: f64| Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(format!("init std {std}: {e}")));
        let emb = normal(init.embedding_std)?;
        let (core, relation_dim) = match &kind {
            ModelKind::Bilinear(b) => {
                let bm = BilinearModel::new(b.clone(), entity_dim)?;
                (fixed_core(&bm)?, bm.relation_dim())
            }
            ModelKind::Drt | ModelKind::Srt => {
                let dist = normal(init.core_std)?;
                let values = Array3::from_shape_simple_fn((relation_dim, entity_dim, entity_dim), || dist.sample(rng));
                (CoreTensor::new(values)?, relation_dim)
            }
        };
        let entities = Array2::from_shape_simple_fn((num_entities, entity_dim), || emb.sample(rng));
        let relations = Array2::from_shape_simple_fn((num_relations, relation_dim), || emb.sample(rng));
        let mut model = RtModel::new(kind.clone(), entities, relations, core)?;
        if kind == ModelKind::Srt {
            let gates = HardConcreteGates::init(model.core.len(), init.gates, rng)?;
            model = model.with_gates(gates)?;
        }
        Ok(model)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.nrows()
    }

    pub fn entity_dim(&self) -> usize {
        self.entities.ncols()
    }

    pub fn relation_dim(&self) -> usize {
        self.relations.ncols()
    }

    /// Core used for scoring: free values times the deterministic gates.
    /// Fixed entries are not gated.
    pub fn effective_core(&self) -> Cow<'_, CoreTensor> {
        match &self.gates {
            None => Cow::Borrowed(&self.core),
            Some(g) => {
                Cow::Owned(apply_gates(&self.core, &g.deterministic()).expect("gate count checked on construction"))
            }
        }
    }

    fn check_relation(&self, k: usize) -> Result<()> {
        if k >= self.num_relations() {
            return Err(Error::OutOfRange(format!(
                "relation {k} with K={}",
                self.num_relations()
            )));
        }
        Ok(())
    }

    fn check_entity(&self, e: usize) -> Result<()> {
        if e >= self.num_entities() {
            return Err(Error::OutOfRange(format!("entity {e} with N={}", self.num_entities())));
        }
        Ok(())
    }

    /// Effective `M_k`.
    pub fn mixing_matrix(&self, k: usize) -> Result<MixingMatrix> {
        self.check_relation(k)?;
        mode3_product(&self.effective_core(), self.relations.row(k))
    }

    /// Effective mixing matrices for all relations.
    pub fn mixing_matrices(&self) -> Result<Vec<MixingMatrix>> {
        let core = self.effective_core();
        self.relations.outer_iter().map(|r| mode3_product(&core, r)).collect()
    }

    /// `e_iᵀ (G ×₃ r_k) e_j`.
    pub fn score(&self, i: usize, k: usize, j: usize) -> Result<f64> {
        self.check_entity(i)?;
        self.check_entity(j)?;
        let m = self.mixing_matrix(k)?;
        Ok(self.entities.row(i).dot(&m.dot(&self.entities.row(j))))
    }

    /// Scores of every entity placed in `open`, the other slot holding `entity`.
    pub fn score_all(&self, k: usize, entity: usize, open: Slot) -> Result<Array1<f64>> {
        let m = self.mixing_matrix(k)?;
        self.score_all_with(&m, entity, open)
    }

    /// As [`RtModel::score_all`] with a precomputed `M_k`.
    pub fn score_all_with(&self, m: &MixingMatrix, entity: usize, open: Slot) -> Result<Array1<f64>> {
        self.check_entity(entity)?;
        let e = self.entities.row(entity);
        let v = match open {
            // s(n) = e_sᵀ M e_n = (Mᵀ e_s) · e_n
            Slot::Object => m.t().dot(&e),
            // s(n) = e_nᵀ M e_o
            Slot::Subject => m.dot(&e),
        };
        Ok(self.entities.dot(&v))
    }
}

/// Rewrites a Tucker3 decomposition `(A, B, C, H)` with `I = J` as an RT
/// model: `E = [A B]`, `R = C`, `G_l = [[0, H_l], [0, 0]]`. `h` has shape
/// `(d_a, d_b, d_c)`.
pub fn tucker3_to_rt(a: ArrayView2<f64>, b: ArrayView2<f64>, c: ArrayView2<f64>, h: &Array3<f64>) -> Result<RtModel> {
    let (d_a, d_b, d_c) = h.dim();
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.ncols() != d_a || b.ncols() != d_b || c.ncols() != d_c {
        return Err(Error::Dimension(format!(
            "factor widths ({}, {}, {}) vs core {:?}",
            a.ncols(),
            b.ncols(),
            c.ncols(),
            h.dim()
        )));
    }
    let d_e = d_a + d_b;
    let mut entities = Array2::zeros((a.nrows(), d_e));
    entities.slice_mut(s![.., ..d_a]).assign(&a);
    entities.slice_mut(s![.., d_a..]).assign(&b);
    let mut g = Array3::zeros((d_c, d_e, d_e));
    for l in 0..d_c {
        g.slice_mut(s![l, ..d_a, d_a..]).assign(&h.slice(s![.., .., l]));
    }
    RtModel::new(ModelKind::Drt, entities, c.to_owned(), CoreTensor::new(g)?)
}
