//! Shared generators for the oracle test suites.

use num_rational::BigRational;
use num_traits::FromPrimitive;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use sddbn::model::{BayesianNetwork, CptNode, CptTree, SufficientStats, VariableId};

fn random_tree(
    rng: &mut StdRng,
    available: &[VariableId],
    depth_left: usize,
) -> CptNode<f64> {
    if depth_left == 0 || available.is_empty() || rng.gen::<f64>() < 0.45 {
        let stats = SufficientStats::new(rng.gen_range(0..50), rng.gen_range(0..50));
        let CptTree { root } = CptTree::leaf_from_counts(stats, &1.0).unwrap();
        return root;
    }
    let pick = rng.gen_range(0..available.len());
    let test = available[pick];
    let rest: Vec<VariableId> = available
        .iter()
        .copied()
        .filter(|v| *v != test)
        .collect();
    CptNode::Split {
        test,
        child_true: Box::new(random_tree(rng, &rest, depth_left - 1)),
        child_false: Box::new(random_tree(rng, &rest, depth_left - 1)),
    }
}

/// Random network: shuffled ordering, random CPT-trees of bounded depth,
/// leaf probabilities smoothed from random counts at alpha 1.
pub fn random_network(rng: &mut StdRng, n_vars: usize, max_depth: usize) -> BayesianNetwork<f64> {
    let names: Vec<String> = (0..n_vars).map(|i| format!("X{i}")).collect();
    let mut ordering: Vec<VariableId> = (0..n_vars as u32).map(VariableId).collect();
    ordering.shuffle(rng);
    let mut bn = BayesianNetwork::new(names, ordering.clone(), 1.0).unwrap();
    for (pos, var) in ordering.iter().enumerate() {
        let preds = &ordering[..pos];
        let tree = CptTree {
            root: random_tree(rng, preds, max_depth),
        };
        bn.set_cpt(*var, tree).unwrap();
    }
    bn
}

fn node_to_rational(node: &CptNode<f64>) -> CptNode<BigRational> {
    match node {
        CptNode::Leaf {
            count_true,
            count_false,
            prob_true,
        } => CptNode::Leaf {
            count_true: *count_true,
            count_false: *count_false,
            prob_true: BigRational::from_f64(*prob_true).unwrap(),
        },
        CptNode::Split {
            test,
            child_true,
            child_false,
        } => CptNode::Split {
            test: *test,
            child_true: Box::new(node_to_rational(child_true)),
            child_false: Box::new(node_to_rational(child_false)),
        },
    }
}

/// Exact-rational mirror of a network: every leaf probability becomes the
/// exact rational value of its double.
pub fn to_rational(bn: &BayesianNetwork<f64>) -> BayesianNetwork<BigRational> {
    let alpha = BigRational::from_f64(*bn.alpha()).unwrap();
    let mut out = BayesianNetwork::new(
        bn.names().to_vec(),
        bn.ordering().to_vec(),
        alpha,
    )
    .unwrap();
    for i in 0..bn.var_count() {
        let var = VariableId(i as u32);
        let tree = CptTree {
            root: node_to_rational(&bn.cpt(var).root),
        };
        out.set_cpt(var, tree).unwrap();
    }
    out
}
