//! Bilinear scoring `s(i, k, j) = e_iᵀ M_k e_j` and the per-model maps from a
//! relation vector `r_k` to its mixing matrix `M_k`.
//!
//! HolE is not provided; its circular-correlation score is equivalent to
//! ComplEx.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Dense `d_e × d_e` matrix mediating subject/object interactions.
pub type MixingMatrix = Array2<f64>;

/// One diagonal block of an Analogy mixing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalogyBlock {
    /// A single real entry `x`.
    Scalar,
    /// A 2×2 block `[[x, -y], [y, x]]`.
    Pair,
}

impl AnalogyBlock {
    pub fn size(self) -> usize {
        match self {
            AnalogyBlock::Scalar => 1,
            AnalogyBlock::Pair => 2,
        }
    }
}

/// Block layout of an Analogy mixing matrix, written as a string of block
/// sizes, e.g. `"2211"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalogyLayout(pub Vec<AnalogyBlock>);

impl AnalogyLayout {
    /// All 2×2 blocks, with one trailing scalar block when `dim` is odd.
    pub fn default_for(dim: usize) -> Self {
        let mut blocks = vec![AnalogyBlock::Pair; dim / 2];
        if dim % 2 == 1 {
            blocks.push(AnalogyBlock::Scalar);
        }
        AnalogyLayout(blocks)
    }

    pub fn dim(&self) -> usize {
        self.0.iter().map(|b| b.size()).sum()
    }
}

impl FromStr for AnalogyLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '1' => Ok(AnalogyBlock::Scalar),
                '2' => Ok(AnalogyBlock::Pair),
                other => Err(Error::InvalidArgument(format!(
                    "analogy layout: block size `{other}` is not 1 or 2"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("empty analogy layout".into()));
        }
        Ok(AnalogyLayout(blocks))
    }
}

impl fmt::Display for AnalogyLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{}", b.size())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BilinearKind {
    Rescal,
    DistMult,
    Cp,
    ComplEx,
    Analogy(AnalogyLayout),
}

impl BilinearKind {
    pub fn name(&self) -> &'static str {
        match self {
            BilinearKind::Rescal => "rescal",
            BilinearKind::DistMult => "distmult",
            BilinearKind::Cp => "cp",
            BilinearKind::ComplEx => "complex",
            BilinearKind::Analogy(_) => "analogy",
        }
    }
}

/// A bilinear model family at a given entity embedding size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilinearModel {
    kind: BilinearKind,
    entity_dim: usize,
}

impl BilinearModel {
    pub fn new(kind: BilinearKind, entity_dim: usize) -> Result<Self> {
        if entity_dim == 0 {
            return Err(Error::Dimension("entity size must be positive".into()));
        }
        match &kind {
            BilinearKind::Cp | BilinearKind::ComplEx if !entity_dim.is_multiple_of(2) => {
                return Err(Error::Dimension(format!(
                    "{} needs an even entity size, got {entity_dim}",
                    kind.name()
                )));
            }
            BilinearKind::Analogy(layout) if layout.dim() != entity_dim => {
                return Err(Error::Dimension(format!(
                    "analogy layout `{layout}` covers {} dims, entity size is {entity_dim}",
                    layout.dim()
                )));
            }
            _ => {}
        }
        Ok(BilinearModel { kind, entity_dim })
    }

    pub fn rescal(d: usize) -> Result<Self> {
        Self::new(BilinearKind::Rescal, d)
    }

    pub fn distmult(d: usize) -> Result<Self> {
        Self::new(BilinearKind::DistMult, d)
    }

    pub fn cp(d: usize) -> Result<Self> {
        Self::new(BilinearKind::Cp, d)
    }

    pub fn complex(d: usize) -> Result<Self> {
        Self::new(BilinearKind::ComplEx, d)
    }

    pub fn analogy(d: usize) -> Result<Self> {
        Self::new(BilinearKind::Analogy(AnalogyLayout::default_for(d)), d)
    }

    pub fn kind(&self) -> &BilinearKind {
        &self.kind
    }

    pub fn entity_dim(&self) -> usize {
        self.entity_dim
    }

    /// Relation embedding size implied by the family.
    pub fn relation_dim(&self) -> usize {
        let d = self.entity_dim;
        match self.kind {
            BilinearKind::Rescal => d * d,
            BilinearKind::Cp => d / 2,
            BilinearKind::DistMult | BilinearKind::ComplEx | BilinearKind::Analogy(_) => d,
        }
    }
}

/// Builds `M_k` from `r_k`.
///
/// RESCAL fills the matrix row by row (`r_1 = M[0,0], r_2 = M[0,1], …`), the
/// layout that makes its fixed core tensor match the slice pictures for
/// `d_e = 2`. CP places `diag(r)` in the upper-right block. ComplEx uses
/// `[[diag(r_left), diag(r_right)], [-diag(r_right), diag(r_left)]]`. Analogy
/// consumes `r` left to right across its blocks.
pub fn mixing_matrix(model: &BilinearModel, r: ArrayView1<f64>) -> Result<MixingMatrix> {
    let d = model.entity_dim;
    if r.len() != model.relation_dim() {
        return Err(Error::Dimension(format!(
            "{} with d_e={d} expects |r|={}, got {}",
            model.kind.name(),
            model.relation_dim(),
            r.len()
        )));
    }
    let mut m = Array2::zeros((d, d));
    match &model.kind {
        BilinearKind::Rescal => {
            for (idx, &v) in r.iter().enumerate() {
                m[[idx / d, idx % d]] = v;
            }
        }
        BilinearKind::DistMult => {
            for (l, &v) in r.iter().enumerate() {
                m[[l, l]] = v;
            }
        }
        BilinearKind::Cp => {
            let h = d / 2;
            for (l, &v) in r.iter().enumerate() {
                m[[l, h + l]] = v;
            }
        }
        BilinearKind::ComplEx => {
            let h = d / 2;
            for l in 0..h {
                let (re, im) = (r[l], r[h + l]);
                m[[l, l]] = re;
                m[[h + l, h + l]] = re;
                m[[l, h + l]] = im;
                m[[h + l, l]] = -im;
            }
        }
        BilinearKind::Analogy(layout) => {
            let mut pos = 0;
            let mut next = 0;
            for block in &layout.0 {
                match block {
                    AnalogyBlock::Scalar => {
                        m[[pos, pos]] = r[next];
                    }
                    AnalogyBlock::Pair => {
                        let (x, y) = (r[next], r[next + 1]);
                        m[[pos, pos]] = x;
                        m[[pos, pos + 1]] = -y;
                        m[[pos + 1, pos]] = y;
                        m[[pos + 1, pos + 1]] = x;
                    }
                }
                pos += block.size();
                next += block.size();
            }
        }
    }
    Ok(m)
}

fn check_bilinear_dims(e_i: ArrayView1<f64>, m: ArrayView2<f64>, e_j: ArrayView1<f64>) -> Result<()> {
    let (rows, cols) = m.dim();
    if rows != e_i.len() || cols != e_j.len() {
        return Err(Error::Dimension(format!(
            "e_i has {}, M is {rows}x{cols}, e_j has {}",
            e_i.len(),
            e_j.len()
        )));
    }
    Ok(())
}

/// `e_iᵀ M e_j`.
pub fn score_direct(e_i: ArrayView1<f64>, m: ArrayView2<f64>, e_j: ArrayView1<f64>) -> Result<f64> {
    check_bilinear_dims(e_i, m, e_j)?;
    Ok(e_i.dot(&m.dot(&e_j)))
}

/// Partial derivatives of the bilinear score.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearGrad {
    /// `M e_j`
    pub subject: Array1<f64>,
    /// `Mᵀ e_i`
    pub object: Array1<f64>,
    /// `e_i e_jᵀ`
    pub mixing: Array2<f64>,
}

pub fn score_grad_direct(e_i: ArrayView1<f64>, m: ArrayView2<f64>, e_j: ArrayView1<f64>) -> Result<BilinearGrad> {
    check_bilinear_dims(e_i, m, e_j)?;
    let mixing = Array2::from_shape_fn(m.dim(), |(a, b)| e_i[a] * e_j[b]);
    Ok(BilinearGrad {
        subject: m.dot(&e_j),
        object: m.t().dot(&e_i),
        mixing,
    })
}
