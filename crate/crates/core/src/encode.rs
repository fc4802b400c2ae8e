//! Encoding of a Bayesian network with CPT-trees into an SDD plus a weight
//! map, so weighted model counting answers probability queries.
//!
//! One circuit variable per network variable serves as its indicator, one
//! circuit variable per CPT-tree leaf as its parameter. For each leaf with
//! path condition `g` the constraint `g => (x <-> theta)` is conjoined into
//! the root. Indicator weights are (1, 1); parameter weights (p, 1-p), so
//! parameters of non-matching leaves integrate out to 1 and the total weight
//! of the circuit is the joint's normalization constant, 1.

use std::fmt::Display;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{BayesianNetwork, CptNode, VariableId};
use crate::num::Scalar;
use crate::sdd::{SddId, SddManager, WeightMap};
use crate::semiring::Semiring;
use crate::vtree::{right_linear_vtree, CircuitVar, Vtree};

/// CPT-tree structure without parameters; what the circuit shape depends on.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Shape {
    Leaf,
    Split {
        test: VariableId,
        child_true: Box<Shape>,
        child_false: Box<Shape>,
    },
}

impl Shape {
    fn of<T>(node: &CptNode<T>) -> Shape {
        match node {
            CptNode::Leaf { .. } => Shape::Leaf,
            CptNode::Split {
                test,
                child_true,
                child_false,
            } => Shape::Split {
                test: *test,
                child_true: Box::new(Shape::of(child_true)),
                child_false: Box::new(Shape::of(child_false)),
            },
        }
    }

    fn leaf_count(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Split {
                child_true,
                child_false,
                ..
            } => child_true.leaf_count() + child_false.leaf_count(),
        }
    }

    /// Root-to-leaf paths in preorder, true child first.
    fn leaf_paths(&self) -> Vec<Vec<(VariableId, bool)>> {
        fn walk(
            s: &Shape,
            path: &mut Vec<(VariableId, bool)>,
            out: &mut Vec<Vec<(VariableId, bool)>>,
        ) {
            match s {
                Shape::Leaf => out.push(path.clone()),
                Shape::Split {
                    test,
                    child_true,
                    child_false,
                } => {
                    path.push((*test, true));
                    walk(child_true, path, out);
                    path.pop();
                    path.push((*test, false));
                    walk(child_false, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Replaces the leaf at `path` with a split on `test`.
    fn apply_split(&mut self, path: &[(VariableId, bool)], test: VariableId) -> Result<()> {
        let mut node = self;
        for (want, branch) in path {
            match node {
                Shape::Split {
                    test: t,
                    child_true,
                    child_false,
                } if t == want => {
                    node = if *branch { child_true } else { child_false };
                }
                _ => {
                    return Err(Error::Lookup(format!(
                        "path step ({want}, {branch}) not found"
                    )))
                }
            }
        }
        match node {
            Shape::Leaf => {
                *node = Shape::Split {
                    test,
                    child_true: Box::new(Shape::Leaf),
                    child_false: Box::new(Shape::Leaf),
                };
                Ok(())
            }
            Shape::Split { .. } => Err(Error::Lookup("path does not end at a leaf".into())),
        }
    }
}

/// Mapping between network variables/leaves and circuit variables, plus the
/// literal weights.
#[derive(Clone, Debug)]
pub struct EncodingMap<T> {
    /// indicator circuit variable per network variable.
    pub indicator: Vec<CircuitVar>,
    /// parameter circuit variable per (network variable, leaf preorder index).
    pub parameters: Vec<Vec<CircuitVar>>,
    pub weights: WeightMap<T>,
}

/// A network compiled to an SDD with its weight map.
pub struct CompiledModel<T> {
    pub manager: SddManager,
    pub root: SddId,
    pub encoding: EncodingMap<T>,
    ordering: Vec<VariableId>,
    position: Vec<usize>,
    shapes: Vec<Shape>,
    pub fingerprint: u64,
}

impl<T: Scalar> CompiledModel<T> {
    pub fn indicator(&self, var: VariableId) -> CircuitVar {
        self.encoding.indicator[var.index()]
    }

    pub fn var_count(&self) -> usize {
        self.encoding.indicator.len()
    }

    pub fn ordering(&self) -> &[VariableId] {
        &self.ordering
    }

    /// Elements of the committed circuit.
    pub fn size(&self) -> u64 {
        self.manager.size(self.root).expect("own root")
    }

    /// Total circuit weight; 1 for a well-formed encoding.
    pub fn normalization(&self) -> T
    where
        T: Semiring,
    {
        self.manager
            .wmc(self.root, &self.encoding.weights)
            .expect("own root")
    }

    /// Copy of the weight map with the weight of each literal contradicting
    /// the evidence set to zero. The circuit itself is untouched.
    pub fn condition_on_evidence(&self, evidence: &[(VariableId, bool)]) -> Result<WeightMap<T>>
    where
        T: Semiring,
    {
        let mut weights = self.encoding.weights.clone();
        for (i, (var, value)) in evidence.iter().enumerate() {
            if var.index() >= self.var_count() {
                return Err(Error::Input(format!("evidence variable {var} out of range")));
            }
            if evidence[..i]
                .iter()
                .any(|(w, b)| w == var && b != value)
            {
                return Err(Error::Input(format!(
                    "contradictory evidence on variable {var}"
                )));
            }
            weights.set_literal(self.indicator(*var), !value, <T as Semiring>::zero());
        }
        Ok(weights)
    }

    /// Size change of re-encoding with one extra split, measured on a scratch
    /// compilation. The committed model is not mutated and scratch nodes are
    /// released when the call returns.
    pub fn incremental_split_size(
        &self,
        variable: VariableId,
        leaf_path: &[(VariableId, bool)],
        test: VariableId,
        max_elements: Option<u64>,
    ) -> Result<i64> {
        if variable.index() >= self.var_count() || test.index() >= self.var_count() {
            return Err(Error::Lookup(format!(
                "variable {variable} or test {test} out of range"
            )));
        }
        if self.position[test.index()] >= self.position[variable.index()] {
            return Err(Error::Structure(format!(
                "test {test} does not precede variable {variable}"
            )));
        }
        if leaf_path.iter().any(|(v, _)| *v == test) {
            return Err(Error::Structure(format!(
                "test {test} already appears on the path"
            )));
        }
        let mut shapes = self.shapes.clone();
        shapes[variable.index()].apply_split(leaf_path, test)?;
        let before = self.size() as i64;
        let trial = compile_shapes(&self.ordering, &shapes, max_elements)?;
        let after = trial.manager.size(trial.root).expect("own root") as i64;
        Ok(after - before)
    }

    /// Writes the sidecar mapping file: `ind <bn-var> <circuit-var>` and
    /// `par <bn-var> <leaf-index> <circuit-var> <w-pos> <w-neg>` lines with
    /// weights as decimals with 17 significant digits.
    pub fn save_encoding_map<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "c encoding map: indicators and leaf parameters").unwrap();
        for (i, cv) in self.encoding.indicator.iter().enumerate() {
            writeln!(buf, "ind {i} {}", cv.get()).unwrap();
        }
        for (i, params) in self.encoding.parameters.iter().enumerate() {
            for (leaf, cv) in params.iter().enumerate() {
                let wp = self.encoding.weights.get(*cv, true).to_f64_lossy();
                let wn = self.encoding.weights.get(*cv, false).to_f64_lossy();
                writeln!(buf, "par {i} {leaf} {} {wp:.16e} {wn:.16e}", cv.get()).unwrap();
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Parsed sidecar mapping file.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMapFile {
    pub indicator: Vec<(usize, u32)>,
    pub parameters: Vec<(usize, usize, u32, f64, f64)>,
}

pub fn load_encoding_map<R: BufRead>(reader: R) -> Result<EncodingMapFile> {
    let mut indicator = Vec::new();
    let mut parameters = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let t = line.trim();
        if t.is_empty() || t == "c" || t.starts_with("c ") {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let bad = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        match toks[0] {
            "ind" if toks.len() == 3 => {
                let var = toks[1].parse().map_err(|_| bad("bad variable".into()))?;
                let cv = toks[2].parse().map_err(|_| bad("bad circuit var".into()))?;
                indicator.push((var, cv));
            }
            "par" if toks.len() == 6 => {
                let var = toks[1].parse().map_err(|_| bad("bad variable".into()))?;
                let leaf = toks[2].parse().map_err(|_| bad("bad leaf index".into()))?;
                let cv = toks[3].parse().map_err(|_| bad("bad circuit var".into()))?;
                let wp = toks[4].parse().map_err(|_| bad("bad weight".into()))?;
                let wn = toks[5].parse().map_err(|_| bad("bad weight".into()))?;
                parameters.push((var, leaf, cv, wp, wn));
            }
            other => return Err(bad(format!("unknown map line tag `{other}`"))),
        }
    }
    Ok(EncodingMapFile {
        indicator,
        parameters,
    })
}

struct ShapeCircuit {
    manager: SddManager,
    root: SddId,
    indicator: Vec<CircuitVar>,
    parameters: Vec<Vec<CircuitVar>>,
}

/// Lays out circuit variables (per network variable: indicator first, then
/// its leaf parameters in preorder) and conjoins all leaf constraints in
/// network order. Checks the running size against `max_elements` after every
/// conjoined constraint.
fn compile_shapes(
    ordering: &[VariableId],
    shapes: &[Shape],
    max_elements: Option<u64>,
) -> Result<ShapeCircuit> {
    let v = shapes.len();
    let mut indicator = vec![CircuitVar::new(u32::MAX); v];
    let mut parameters: Vec<Vec<CircuitVar>> = vec![Vec::new(); v];
    let mut order: Vec<CircuitVar> = Vec::new();
    let mut next = 1u32;
    for var in ordering {
        let cv = CircuitVar::new(next);
        next += 1;
        indicator[var.index()] = cv;
        order.push(cv);
        for _ in 0..shapes[var.index()].leaf_count() {
            let pv = CircuitVar::new(next);
            next += 1;
            parameters[var.index()].push(pv);
            order.push(pv);
        }
    }

    let vtree = if order.is_empty() {
        Vtree::empty()
    } else {
        right_linear_vtree(&order)?
    };
    let mut manager = SddManager::new(vtree)?;
    let mut root = manager.true_node();
    for var in ordering {
        let x = indicator[var.index()];
        for (leaf_idx, path) in shapes[var.index()].leaf_paths().iter().enumerate() {
            let theta = parameters[var.index()][leaf_idx];
            // g => (x <-> theta), as a disjunction of negated path literals
            // with the biconditional
            let x_pos = manager.literal(x, true);
            let x_neg = manager.literal(x, false);
            let t_pos = manager.literal(theta, true);
            let t_neg = manager.literal(theta, false);
            let both = manager.conjoin(x_pos, t_pos)?;
            let neither = manager.conjoin(x_neg, t_neg)?;
            let mut constraint = manager.disjoin(both, neither)?;
            for (p_var, branch) in path {
                let lit = manager.literal(indicator[p_var.index()], !branch);
                constraint = manager.disjoin(constraint, lit)?;
            }
            root = manager.conjoin(root, constraint)?;
            if let Some(max) = max_elements {
                let size = manager.size(root).expect("own root");
                if size > max {
                    return Err(Error::TractabilityBound { size, limit: max });
                }
            }
        }
    }
    Ok(ShapeCircuit {
        manager,
        root,
        indicator,
        parameters,
    })
}

/// Compiles a network into a [`CompiledModel`], with no size bound.
pub fn encode<T: Scalar + Semiring + Display>(bn: &BayesianNetwork<T>) -> Result<CompiledModel<T>> {
    encode_bounded(bn, None)
}

/// Compiles a network, failing with a tractability-bound error carrying the
/// partial size if the circuit exceeds `max_elements` during construction.
pub fn encode_bounded<T: Scalar + Semiring + Display>(
    bn: &BayesianNetwork<T>,
    max_elements: Option<u64>,
) -> Result<CompiledModel<T>> {
    bn.validate()?;
    let shapes: Vec<Shape> = (0..bn.var_count())
        .map(|i| Shape::of(&bn.cpt(VariableId(i as u32)).root))
        .collect();
    let circuit = compile_shapes(bn.ordering(), &shapes, max_elements)?;

    let mut weights: WeightMap<T> = WeightMap::unit(circuit.manager.var_count());
    for i in 0..bn.var_count() {
        let var = VariableId(i as u32);
        for (leaf_idx, (_, leaf)) in bn.cpt(var).leaves_with_paths().into_iter().enumerate() {
            let p = match leaf {
                CptNode::Leaf { prob_true, .. } => prob_true.clone(),
                CptNode::Split { .. } => unreachable!("leaves_with_paths returns leaves"),
            };
            let cv = circuit.parameters[i][leaf_idx];
            weights.set(cv, p.clone(), <T as Semiring>::one() - p);
        }
    }

    let mut position = vec![0usize; bn.var_count()];
    for (k, var) in bn.ordering().iter().enumerate() {
        position[var.index()] = k;
    }
    let root = circuit.root;
    let mut manager = circuit.manager;
    manager.inc_ref(root)?;
    Ok(CompiledModel {
        manager,
        root,
        encoding: EncodingMap {
            indicator: circuit.indicator,
            parameters: circuit.parameters,
            weights,
        },
        ordering: bn.ordering().to_vec(),
        position,
        shapes,
        fingerprint: bn.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CptTree;

    fn single_var(p: f64) -> BayesianNetwork<f64> {
        let mut bn = BayesianNetwork::independent(vec!["X".into()], 1.0).unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(p)).unwrap();
        bn
    }

    fn chain() -> BayesianNetwork<f64> {
        let mut bn =
            BayesianNetwork::independent(vec!["X".into(), "Y".into()], 1.0).unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(0.3)).unwrap();
        bn.set_cpt(
            VariableId(1),
            CptTree::split(VariableId(0), CptTree::leaf(0.8), CptTree::leaf(0.1)),
        )
        .unwrap();
        bn
    }

    #[test]
    fn single_variable_normalizes_and_conditions() {
        let model = encode(&single_var(0.3)).unwrap();
        assert!((model.normalization() - 1.0).abs() < 1e-12);
        let w = model
            .condition_on_evidence(&[(VariableId(0), true)])
            .unwrap();
        let p = model.manager.wmc(model.root, &w).unwrap();
        assert!((p - 0.3).abs() < 1e-12);
    }

    #[test]
    fn chain_marginal_via_conditioning() {
        let model = encode(&chain()).unwrap();
        assert!((model.normalization() - 1.0).abs() < 1e-12);
        let w = model
            .condition_on_evidence(&[(VariableId(1), true)])
            .unwrap();
        let p = model.manager.wmc(model.root, &w).unwrap();
        assert!((p - 0.31).abs() < 1e-12);
    }

    #[test]
    fn empty_network_compiles_to_true() {
        let bn = BayesianNetwork::<f64>::independent(vec![], 1.0).unwrap();
        let model = encode(&bn).unwrap();
        assert!(model.manager.is_true(model.root));
        assert!((model.normalization() - 1.0).abs() < 1e-15);
        assert_eq!(model.size(), 0);
    }

    #[test]
    fn evidence_edge_cases() {
        let model = encode(&single_var(0.3)).unwrap();
        let w = model.condition_on_evidence(&[]).unwrap();
        let p = model.manager.wmc(model.root, &w).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(matches!(
            model.condition_on_evidence(&[(VariableId(0), true), (VariableId(0), false)]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn encoding_is_deterministic() {
        let bn = chain();
        let m1 = encode(&bn).unwrap();
        let m2 = encode(&bn).unwrap();
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        m1.manager.save_sdd(m1.root, &mut b1).unwrap();
        m2.manager.save_sdd(m2.root, &mut b2).unwrap();
        assert_eq!(b1, b2);
        let mut v1 = Vec::new();
        let mut v2 = Vec::new();
        m1.manager.vtree().save(&mut v1).unwrap();
        m2.manager.vtree().save(&mut v2).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn trial_split_matches_full_recompile_and_leaves_model_alone() {
        let data = crate::data::Dataset::from_rows(
            vec!["X".into(), "Y".into()],
            vec![vec![1, 1], vec![0, 0], vec![1, 0], vec![0, 1]],
        )
        .unwrap();
        let mut bn =
            BayesianNetwork::independent(vec!["X".into(), "Y".into()], 1.0).unwrap();
        bn.fit_marginals(&data).unwrap();
        let model = encode(&bn).unwrap();
        let size_before = model.size();

        let delta = model
            .incremental_split_size(VariableId(1), &[], VariableId(0), None)
            .unwrap();
        assert_eq!(model.size(), size_before, "trial must not grow the model");

        let split_bn = bn
            .apply_split(VariableId(1), &[], VariableId(0), &data)
            .unwrap();
        let split_model = encode(&split_bn).unwrap();
        assert_eq!(split_model.size() as i64 - size_before as i64, delta);
    }

    #[test]
    fn inadmissible_split_reports_bound() {
        let model = encode(&chain()).unwrap();
        let err = model
            .incremental_split_size(VariableId(1), &[(VariableId(0), true)], VariableId(0), None)
            .unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
        let err = model
            .incremental_split_size(VariableId(0), &[], VariableId(1), None)
            .unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
        // a hard bound below the current size trips immediately
        let err = model
            .incremental_split_size(VariableId(1), &[(VariableId(0), true)], VariableId(1), Some(1))
            .unwrap_err();
        assert!(
            matches!(err, Error::Structure(_) | Error::TractabilityBound { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn sidecar_map_round_trips() {
        let model = encode(&chain()).unwrap();
        let mut bytes = Vec::new();
        model.save_encoding_map(&mut bytes).unwrap();
        let parsed = load_encoding_map(bytes.as_slice()).unwrap();
        assert_eq!(parsed.indicator.len(), 2);
        assert_eq!(parsed.parameters.len(), 3); // one leaf for X, two for Y
        let (_, _, _, wp, wn) = parsed.parameters[1];
        assert!((wp + wn - 1.0).abs() < 1e-12);
    }
}
