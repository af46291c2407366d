use ndarray::{arr2, Array2, Array3};

use rtucker_core::synthetic::{family_kg, FamilyConfig, FATHER, MOTHER, PARENT};
use rtucker_core::*;

/// Hand-built RT model with `r_mother = (1, 0)`, `r_father = (0, 1)`,
/// `r_parent = (1, 1)` and `G_1 = M_mother`, `G_2 = M_father`.
///
/// Parents carry a one-hot code in the first block of coordinates, children
/// the code of each parent in the second block, and every entity a constant
/// bias coordinate. `M_mother` pairs mother codes and subtracts a quarter on
/// the bias, so true facts score 3/4 and everything else -1/4; the sum
/// `M_mother + M_father` scores true parent facts 1/2 and the rest -1/2.
fn two_slice_parent_model(config: &FamilyConfig, kg: &synthetic::FamilyKg) -> RtModel {
    let p = config.num_mothers + config.num_fathers;
    let d_e = 2 * p + 1;
    let bias = 2 * p;
    let n = config.num_entities();
    let mut entities = Array2::zeros((n, d_e));
    for e in 0..p {
        entities[[e, e]] = 1.0;
    }
    for t in &kg.data.train {
        if t.relation == MOTHER || t.relation == FATHER {
            entities[[t.object, p + t.subject]] = 1.0;
        }
    }
    entities.column_mut(bias).fill(1.0);

    let mut g = Array3::zeros((2, d_e, d_e));
    for e in 0..p {
        let slice = if e < config.num_mothers { 0 } else { 1 };
        g[[slice, e, p + e]] = 1.0;
    }
    g[[0, bias, bias]] = -0.25;
    g[[1, bias, bias]] = -0.25;
    let relations = arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    RtModel::new(ModelKind::Drt, entities, relations, CoreTensor::new(g).unwrap()).unwrap()
}

#[test]
fn parent_reconstructed_from_mother_and_father_slices() {
    let config = FamilyConfig::default();
    let kg = family_kg(&config).unwrap();
    let model = two_slice_parent_model(&config, &kg);
    assert_eq!(model.relation_dim(), 2);
    assert_eq!(model.num_relations(), 3);

    let facts: Vec<Triple> = [&kg.data.train, &kg.data.valid, &kg.data.test]
        .into_iter()
        .flatten()
        .copied()
        .collect();
    let is_fact = |s: usize, r: usize, o: usize| facts.contains(&Triple::new(s, r, o));
    let n = config.num_entities();
    for s in 0..n {
        for o in 0..n {
            let truth_p = is_fact(s, MOTHER, o) || is_fact(s, FATHER, o);
            assert_eq!(truth_p, is_fact(s, PARENT, o));
            for r in [MOTHER, FATHER, PARENT] {
                let score = model.score(s, r, o).unwrap();
                assert_eq!(score > 0.0, is_fact(s, r, o), "({s}, {r}, {o}) scored {score}");
                assert!(score != 0.0);
            }
        }
    }

    let filter = FilterIndex::from_dataset(&kg.data, &FilterSplits::default());
    let report = evaluate(&model, &kg.data.valid, &filter, &EvalConfig::default()).unwrap();
    assert_eq!(report.mrr, 1.0);
}
