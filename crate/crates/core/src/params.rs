//! Parameter accounting: non-zero free parameters (nnfp), the effective
//! relation embedding size `d_r* = (nnfp(G) + nnfp(R)) / K` and the
//! effective number of parameters `nnfp(G) + nnfp(R) + nnfp(E)`.
//!
//! "Non-zero" is exact floating-point zero. Gated cores are counted after
//! applying the deterministic test-time gates.

use std::fmt;

use crate::rtucker::RtModel;

/// Entries that are not structurally fixed and not exactly zero.
pub fn nnfp(values: &[f64], fixed: Option<&[bool]>) -> usize {
    match fixed {
        None => values.iter().filter(|&&v| v != 0.0).count(),
        Some(mask) => values.iter().zip(mask).filter(|(&v, &f)| !f && v != 0.0).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamReport {
    pub nnfp_entities: usize,
    pub nnfp_relations: usize,
    pub nnfp_core: usize,
    pub num_relations: usize,
    pub effective_relation_size: f64,
    pub effective_total: usize,
}

impl ParamReport {
    pub fn from_counts(nnfp_entities: usize, nnfp_relations: usize, nnfp_core: usize, num_relations: usize) -> Self {
        ParamReport {
            nnfp_entities,
            nnfp_relations,
            nnfp_core,
            num_relations,
            effective_relation_size: (nnfp_core + nnfp_relations) as f64 / num_relations as f64,
            effective_total: nnfp_core + nnfp_relations + nnfp_entities,
        }
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nnfp(E)\t{}", self.nnfp_entities)?;
        writeln!(f, "nnfp(R)\t{}", self.nnfp_relations)?;
        writeln!(f, "nnfp(G)\t{}", self.nnfp_core)?;
        writeln!(f, "relations\t{}", self.num_relations)?;
        writeln!(f, "effective_relation_size\t{}", self.effective_relation_size)?;
        write!(f, "effective_parameters\t{}", self.effective_total)
    }
}

pub fn param_report(model: &RtModel) -> ParamReport {
    let core = model.effective_core();
    let mask = core.fixed_mask().map(|m| m.as_slice().expect("standard layout mask"));
    let nnfp_core = nnfp(core.values().as_slice().expect("standard layout core"), mask);
    let nnfp_relations = if model.relations_fixed {
        0
    } else {
        nnfp(model.relations.as_slice().expect("standard layout R"), None)
    };
    let nnfp_entities = nnfp(model.entities.as_slice().expect("standard layout E"), None);
    ParamReport::from_counts(nnfp_entities, nnfp_relations, nnfp_core, model.num_relations())
}

/// `(nnfp(G) + nnfp(R)) / K`.
pub fn effective_relation_size(model: &RtModel) -> f64 {
    param_report(model).effective_relation_size
}

/// `nnfp(G) + nnfp(R) + nnfp(E)`.
pub fn effective_num_params(model: &RtModel) -> usize {
    param_report(model).effective_total
}
