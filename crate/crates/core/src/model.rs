//! Binary Bayesian networks with decision-tree conditional distributions.
//!
//! A network is an ordering over variables plus one CPT-tree per variable.
//! Every test in a variable's tree must precede the variable in the ordering,
//! so acyclicity holds by construction. Leaves keep their raw counts next to
//! the smoothed probability, which lets parameters be refit under a different
//! Dirichlet `alpha` without re-scanning data.

use std::collections::BTreeSet;
use std::fmt::{Display, Write as _};
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Network variable, dense `0..V-1`, also the dataset column index.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VariableId(pub u32);

impl VariableId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl Display for VariableId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Counts of a binary variable within one leaf context.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Default)]
pub struct SufficientStats {
    pub count_true: u64,
    pub count_false: u64,
}

impl SufficientStats {
    pub fn new(count_true: u64, count_false: u64) -> Self {
        SufficientStats {
            count_true,
            count_false,
        }
    }

    pub fn total(&self) -> u64 {
        self.count_true + self.count_false
    }

    /// Column counts over the whole dataset.
    pub fn from_column(data: &Dataset, var: VariableId) -> Self {
        let mut s = SufficientStats::default();
        for r in 0..data.n_rows() {
            if data.get(r, var.index()) {
                s.count_true += 1;
            } else {
                s.count_false += 1;
            }
        }
        s
    }
}

/// Dirichlet posterior-mean estimate `(count_true + a) / (n + 2a)`.
pub fn estimate_leaf_prob<T: Scalar>(count_true: u64, count_false: u64, alpha: &T) -> Result<T> {
    if *alpha <= T::zero() {
        return Err(Error::Config(format!(
            "smoothing alpha must be positive, got {alpha:?}"
        )));
    }
    let two_alpha = alpha.clone() + alpha.clone();
    let num = T::from_count(count_true) + alpha.clone();
    let den = T::from_count(count_true + count_false) + two_alpha;
    Ok(num / den)
}

fn leaf_log_likelihood(stats: SufficientStats, alpha: f64) -> Result<f64> {
    let p = estimate_leaf_prob::<f64>(stats.count_true, stats.count_false, &alpha)?;
    Ok(stats.count_true as f64 * p.ln() + stats.count_false as f64 * (1.0 - p).ln())
}

/// Log-likelihood gain of replacing one smoothed leaf by two, on the rows
/// that reach the parent leaf. May be negative under smoothing.
pub fn split_gain(
    parent: SufficientStats,
    true_branch: SufficientStats,
    false_branch: SufficientStats,
    alpha: f64,
) -> Result<f64> {
    if parent.count_true != true_branch.count_true + false_branch.count_true
        || parent.count_false != true_branch.count_false + false_branch.count_false
    {
        return Err(Error::Internal(format!(
            "branch counts {true_branch:?} + {false_branch:?} do not partition parent {parent:?}"
        )));
    }
    Ok(leaf_log_likelihood(true_branch, alpha)?
        + leaf_log_likelihood(false_branch, alpha)?
        - leaf_log_likelihood(parent, alpha)?)
}

/// One node of a CPT-tree.
#[derive(Clone, Debug, PartialEq)]
pub enum CptNode<T> {
    Leaf {
        count_true: u64,
        count_false: u64,
        prob_true: T,
    },
    Split {
        test: VariableId,
        child_true: Box<CptNode<T>>,
        child_false: Box<CptNode<T>>,
    },
}

/// Decision tree over predecessor variables with smoothed leaf
/// probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct CptTree<T> {
    pub root: CptNode<T>,
}

impl<T: Scalar> CptTree<T> {
    /// Single leaf with explicit probability and no counts.
    pub fn leaf(prob_true: T) -> Self {
        CptTree {
            root: CptNode::Leaf {
                count_true: 0,
                count_false: 0,
                prob_true,
            },
        }
    }

    /// Single smoothed leaf from counts.
    pub fn leaf_from_counts(stats: SufficientStats, alpha: &T) -> Result<Self> {
        Ok(CptTree {
            root: CptNode::Leaf {
                count_true: stats.count_true,
                count_false: stats.count_false,
                prob_true: estimate_leaf_prob(stats.count_true, stats.count_false, alpha)?,
            },
        })
    }

    pub fn split(test: VariableId, child_true: CptTree<T>, child_false: CptTree<T>) -> Self {
        CptTree {
            root: CptNode::Split {
                test,
                child_true: Box::new(child_true.root),
                child_false: Box::new(child_false.root),
            },
        }
    }

    /// Probability of the owner being true given the assignment.
    pub fn prob_true<F: Fn(VariableId) -> bool>(&self, assignment: &F) -> &T {
        let mut node = &self.root;
        loop {
            match node {
                CptNode::Leaf { prob_true, .. } => return prob_true,
                CptNode::Split {
                    test,
                    child_true,
                    child_false,
                } => {
                    node = if assignment(*test) {
                        child_true
                    } else {
                        child_false
                    };
                }
            }
        }
    }

    /// Preorder index (true child first) of the leaf the assignment reaches.
    pub fn leaf_index<F: Fn(VariableId) -> bool>(&self, assignment: &F) -> usize {
        fn walk<T, F: Fn(VariableId) -> bool>(
            node: &CptNode<T>,
            assignment: &F,
            next: &mut usize,
        ) -> Option<usize> {
            match node {
                CptNode::Leaf { .. } => {
                    let i = *next;
                    *next += 1;
                    Some(i)
                }
                CptNode::Split {
                    test,
                    child_true,
                    child_false,
                } => {
                    if assignment(*test) {
                        walk(child_true, assignment, next)
                    } else {
                        let mut skipped = *next;
                        count_leaves(child_true, &mut skipped);
                        *next = skipped;
                        walk(child_false, assignment, next)
                    }
                }
            }
        }
        fn count_leaves<T>(node: &CptNode<T>, next: &mut usize) {
            match node {
                CptNode::Leaf { .. } => *next += 1,
                CptNode::Split {
                    child_true,
                    child_false,
                    ..
                } => {
                    count_leaves(child_true, next);
                    count_leaves(child_false, next);
                }
            }
        }
        let mut next = 0usize;
        walk(&self.root, assignment, &mut next).unwrap()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves_with_paths().len()
    }

    /// Leaves in preorder (true child first), each with its root-to-leaf
    /// path of (test, branch) pairs.
    pub fn leaves_with_paths(&self) -> Vec<(Vec<(VariableId, bool)>, &CptNode<T>)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        fn walk<'a, T>(
            node: &'a CptNode<T>,
            path: &mut Vec<(VariableId, bool)>,
            out: &mut Vec<(Vec<(VariableId, bool)>, &'a CptNode<T>)>,
        ) {
            match node {
                CptNode::Leaf { .. } => out.push((path.clone(), node)),
                CptNode::Split {
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
        walk(&self.root, &mut path, &mut out);
        out
    }

    /// Variables tested anywhere in the tree.
    pub fn test_vars(&self) -> BTreeSet<VariableId> {
        let mut vars = BTreeSet::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if let CptNode::Split {
                test,
                child_true,
                child_false,
            } = node
            {
                vars.insert(*test);
                stack.push(child_true);
                stack.push(child_false);
            }
        }
        vars
    }
}

/// An ordering over binary variables plus one CPT-tree per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesianNetwork<T> {
    ordering: Vec<VariableId>,
    /// ordering position, indexed by variable.
    position: Vec<usize>,
    names: Vec<String>,
    cpts: Vec<CptTree<T>>,
    alpha: T,
}

impl<T: Scalar> BayesianNetwork<T> {
    /// Network with the given ordering and all-independent variables at the
    /// uninformed smoothed estimate 1/2.
    pub fn new(names: Vec<String>, ordering: Vec<VariableId>, alpha: T) -> Result<Self> {
        if alpha <= T::zero() {
            return Err(Error::Config("alpha must be positive".into()));
        }
        let v = names.len();
        if ordering.len() != v {
            return Err(Error::Input(format!(
                "ordering length {} does not match {} variables",
                ordering.len(),
                v
            )));
        }
        let mut position = vec![usize::MAX; v];
        for (k, var) in ordering.iter().enumerate() {
            if var.index() >= v || position[var.index()] != usize::MAX {
                return Err(Error::Input(format!(
                    "ordering is not a permutation of 0..{v}"
                )));
            }
            position[var.index()] = k;
        }
        let cpts = (0..v)
            .map(|_| CptTree::leaf_from_counts(SufficientStats::default(), &alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(BayesianNetwork {
            ordering,
            position,
            names,
            cpts,
            alpha,
        })
    }

    /// Identity-ordered network.
    pub fn independent(names: Vec<String>, alpha: T) -> Result<Self> {
        let v = names.len() as u32;
        let ordering = (0..v).map(VariableId).collect();
        Self::new(names, ordering, alpha)
    }

    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    pub fn ordering(&self) -> &[VariableId] {
        &self.ordering
    }

    pub fn position_of(&self, var: VariableId) -> usize {
        self.position[var.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name_of(&self, var: VariableId) -> &str {
        &self.names[var.index()]
    }

    pub fn variable_named(&self, name: &str) -> Option<VariableId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| VariableId(i as u32))
    }

    pub fn alpha(&self) -> &T {
        &self.alpha
    }

    pub fn cpt(&self, var: VariableId) -> &CptTree<T> {
        &self.cpts[var.index()]
    }

    /// Replaces one variable's tree, enforcing ordering-consistency and leaf
    /// probabilities strictly inside (0, 1).
    pub fn set_cpt(&mut self, var: VariableId, tree: CptTree<T>) -> Result<()> {
        self.check_tree(var, &tree)?;
        self.cpts[var.index()] = tree;
        Ok(())
    }

    fn check_tree(&self, owner: VariableId, tree: &CptTree<T>) -> Result<()> {
        for (path, leaf) in tree.leaves_with_paths() {
            let mut seen = BTreeSet::new();
            for (test, _) in &path {
                if !seen.insert(*test) {
                    return Err(Error::Structure(format!(
                        "variable {test} tested twice on one path of {owner}'s tree"
                    )));
                }
                if self.position_of(*test) >= self.position_of(owner) {
                    return Err(Error::Structure(format!(
                        "test {test} does not precede owner {owner} in the ordering"
                    )));
                }
            }
            if let CptNode::Leaf { prob_true, .. } = leaf {
                if *prob_true <= T::zero() || *prob_true >= T::one() {
                    return Err(Error::Structure(format!(
                        "leaf probability {prob_true:?} of variable {owner} not in (0,1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks every structural invariant of the network.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.var_count() {
            let var = VariableId(i as u32);
            self.check_tree(var, &self.cpts[i])?;
        }
        Ok(())
    }

    /// Parents of a variable: the set of tests in its tree.
    pub fn parents(&self, var: VariableId) -> BTreeSet<VariableId> {
        self.cpts[var.index()].test_vars()
    }

    /// Undirected parent relation as normalized pairs.
    pub fn skeleton(&self) -> BTreeSet<(VariableId, VariableId)> {
        let mut edges = BTreeSet::new();
        for i in 0..self.var_count() {
            let var = VariableId(i as u32);
            for p in self.parents(var) {
                edges.insert((p.min(var), p.max(var)));
            }
        }
        edges
    }

    pub fn total_splits(&self) -> usize {
        self.cpts.iter().map(|t| t.leaf_count() - 1).sum()
    }

    /// Joint probability of one complete assignment.
    pub fn joint_prob<F: Fn(VariableId) -> bool>(&self, assignment: &F) -> T {
        let mut p = T::one();
        for i in 0..self.var_count() {
            let var = VariableId(i as u32);
            let cond = self.cpts[i].prob_true(assignment).clone();
            let factor = if assignment(var) {
                cond
            } else {
                T::one() - cond
            };
            p = p * factor;
        }
        p
    }

    /// Fits every root leaf's counts and probability from the dataset
    /// columns. Trees with splits are left alone.
    pub fn fit_marginals(&mut self, data: &Dataset) -> Result<()> {
        self.check_schema(data)?;
        for i in 0..self.var_count() {
            if let CptNode::Leaf { .. } = self.cpts[i].root {
                let stats = SufficientStats::from_column(data, VariableId(i as u32));
                self.cpts[i] = CptTree::leaf_from_counts(stats, &self.alpha)?;
            }
        }
        Ok(())
    }

    fn check_schema(&self, data: &Dataset) -> Result<()> {
        if data.n_cols() != self.var_count() {
            return Err(Error::Schema(format!(
                "dataset has {} columns, network has {} variables",
                data.n_cols(),
                self.var_count()
            )));
        }
        Ok(())
    }

    /// Total log-likelihood of the dataset under the network.
    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        self.check_schema(data)?;
        let mut ll = 0.0f64;
        for r in 0..data.n_rows() {
            let row = data.row(r);
            let assignment = |v: VariableId| row[v.index()] != 0;
            for i in 0..self.var_count() {
                let p = self.cpts[i].prob_true(&assignment).to_f64_lossy();
                ll += if assignment(VariableId(i as u32)) {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                };
            }
        }
        Ok(ll)
    }

    /// Returns a copy with the addressed leaf replaced by a split on `test`,
    /// both new leaves refit from the dataset.
    pub fn apply_split(
        &self,
        variable: VariableId,
        leaf_path: &[(VariableId, bool)],
        test: VariableId,
        data: &Dataset,
    ) -> Result<Self> {
        self.check_schema(data)?;
        if variable.index() >= self.var_count() || test.index() >= self.var_count() {
            return Err(Error::Lookup(format!(
                "variable {variable} or test {test} out of range"
            )));
        }
        if self.position_of(test) >= self.position_of(variable) {
            return Err(Error::Structure(format!(
                "test {test} does not precede variable {variable} in the ordering"
            )));
        }
        if leaf_path.iter().any(|(v, _)| *v == test) {
            return Err(Error::Structure(format!(
                "test {test} already appears on the path"
            )));
        }

        let mut next = self.clone();
        {
            let mut node = &mut next.cpts[variable.index()].root;
            for (want_test, branch) in leaf_path {
                match node {
                    CptNode::Split {
                        test: t,
                        child_true,
                        child_false,
                    } if t == want_test => {
                        node = if *branch { child_true } else { child_false };
                    }
                    _ => {
                        return Err(Error::Lookup(format!(
                            "path step ({want_test}, {branch}) not found in {variable}'s tree"
                        )))
                    }
                }
            }
            if !matches!(node, CptNode::Leaf { .. }) {
                return Err(Error::Lookup(format!(
                    "path does not end at a leaf of {variable}'s tree"
                )));
            }

            let mut branch_true = SufficientStats::default();
            let mut branch_false = SufficientStats::default();
            for r in 0..data.n_rows() {
                let row = data.row(r);
                if leaf_path
                    .iter()
                    .any(|(v, b)| (row[v.index()] != 0) != *b)
                {
                    continue;
                }
                let stats = if row[test.index()] != 0 {
                    &mut branch_true
                } else {
                    &mut branch_false
                };
                if row[variable.index()] != 0 {
                    stats.count_true += 1;
                } else {
                    stats.count_false += 1;
                }
            }

            let alpha = next.alpha.clone();
            let make_leaf = |s: SufficientStats| -> Result<CptNode<T>> {
                Ok(CptNode::Leaf {
                    count_true: s.count_true,
                    count_false: s.count_false,
                    prob_true: estimate_leaf_prob(s.count_true, s.count_false, &alpha)?,
                })
            };
            *node = CptNode::Split {
                test,
                child_true: Box::new(make_leaf(branch_true)?),
                child_false: Box::new(make_leaf(branch_false)?),
            };
        }
        next.validate()?;
        Ok(next)
    }

    /// Recomputes every leaf probability from its stored counts under a new
    /// smoothing parameter.
    pub fn refit(&self, alpha: T) -> Result<Self> {
        if alpha <= T::zero() {
            return Err(Error::Config("alpha must be positive".into()));
        }
        fn walk<T: Scalar>(node: &mut CptNode<T>, alpha: &T) -> Result<()> {
            match node {
                CptNode::Leaf {
                    count_true,
                    count_false,
                    prob_true,
                } => {
                    *prob_true = estimate_leaf_prob(*count_true, *count_false, alpha)?;
                    Ok(())
                }
                CptNode::Split {
                    child_true,
                    child_false,
                    ..
                } => {
                    walk(child_true, alpha)?;
                    walk(child_false, alpha)
                }
            }
        }
        let mut next = self.clone();
        for tree in &mut next.cpts {
            walk(&mut tree.root, &alpha)?;
        }
        next.alpha = alpha;
        Ok(next)
    }

    /// Stable structural hash of the serialized network.
    pub fn fingerprint(&self) -> u64
    where
        T: Display,
    {
        let mut bytes = Vec::new();
        self.save(&mut bytes).expect("in-memory write");
        // FNV-1a, fixed offsets; deterministic across runs and platforms
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

impl<T: Scalar + Display> BayesianNetwork<T> {
    /// Text serialization: `bn V`, `alpha`, `name`, `order`, and one `cpt`
    /// line per variable with its tree in preorder (`S <test>` / `L <ct>
    /// <cf> <prob>`, true child first).
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "c binary bayesian network with cpt-trees").unwrap();
        writeln!(buf, "bn {}", self.var_count()).unwrap();
        writeln!(buf, "alpha {}", self.alpha).unwrap();
        for (i, name) in self.names.iter().enumerate() {
            writeln!(buf, "name {i} {name}").unwrap();
        }
        let order: Vec<String> = self.ordering.iter().map(|v| v.to_string()).collect();
        writeln!(buf, "order {}", order.join(" ")).unwrap();
        for i in 0..self.var_count() {
            let mut line = format!("cpt {i}");
            fn walk<T: Display>(node: &CptNode<T>, line: &mut String) {
                match node {
                    CptNode::Leaf {
                        count_true,
                        count_false,
                        prob_true,
                    } => write!(line, " L {count_true} {count_false} {prob_true}").unwrap(),
                    CptNode::Split {
                        test,
                        child_true,
                        child_false,
                    } => {
                        write!(line, " S {test}").unwrap();
                        walk(child_true, line);
                        walk(child_false, line);
                    }
                }
            }
            walk(&self.cpts[i].root, &mut line);
            writeln!(buf, "{line}").unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

impl<T: Scalar + FromStr> BayesianNetwork<T> {
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut var_count: Option<usize> = None;
        let mut alpha: Option<T> = None;
        let mut names: Vec<Option<String>> = Vec::new();
        let mut ordering: Option<Vec<VariableId>> = None;
        let mut cpts: Vec<Option<CptTree<T>>> = Vec::new();

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
                "bn" => {
                    let v = toks
                        .get(1)
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| bad("expected variable count".into()))?;
                    var_count = Some(v);
                    names = vec![None; v];
                    cpts = (0..v).map(|_| None).collect();
                }
                "alpha" => {
                    let a = toks
                        .get(1)
                        .and_then(|s| s.parse::<T>().ok())
                        .ok_or_else(|| bad("expected alpha value".into()))?;
                    alpha = Some(a);
                }
                "name" => {
                    let i = toks
                        .get(1)
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| bad("expected variable index".into()))?;
                    let name = toks
                        .get(2)
                        .ok_or_else(|| bad("expected variable name".into()))?;
                    if i >= names.len() {
                        return Err(bad(format!("name index {i} out of range")));
                    }
                    names[i] = Some((*name).to_string());
                }
                "order" => {
                    let ids = toks[1..]
                        .iter()
                        .map(|s| s.parse::<u32>().map(VariableId))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("expected ordering of variable ids".into()))?;
                    ordering = Some(ids);
                }
                "cpt" => {
                    let i = toks
                        .get(1)
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| bad("expected variable index".into()))?;
                    if i >= cpts.len() {
                        return Err(bad(format!("cpt index {i} out of range")));
                    }
                    let mut pos = 2usize;
                    let root = parse_cpt_node::<T>(&toks, &mut pos, lineno)?;
                    if pos != toks.len() {
                        return Err(bad("trailing tokens after cpt tree".into()));
                    }
                    cpts[i] = Some(CptTree { root });
                }
                other => return Err(bad(format!("unknown network line tag `{other}`"))),
            }
        }

        let v = var_count.ok_or(Error::Parse {
            line: 0,
            message: "missing `bn` header".into(),
        })?;
        let alpha = alpha.ok_or(Error::Parse {
            line: 0,
            message: "missing `alpha` line".into(),
        })?;
        let names: Vec<String> = names
            .into_iter()
            .enumerate()
            .map(|(i, n)| n.unwrap_or_else(|| format!("X{i}")))
            .collect();
        let ordering = ordering.ok_or(Error::Parse {
            line: 0,
            message: "missing `order` line".into(),
        })?;
        let mut bn = BayesianNetwork::new(names, ordering, alpha)?;
        for (i, tree) in cpts.into_iter().enumerate() {
            let tree = tree.ok_or(Error::Parse {
                line: 0,
                message: format!("missing cpt line for variable {i}"),
            })?;
            bn.set_cpt(VariableId(i as u32), tree)?;
        }
        if v != bn.var_count() {
            return Err(Error::Parse {
                line: 0,
                message: "variable count mismatch".into(),
            });
        }
        Ok(bn)
    }
}

fn parse_cpt_node<T: Scalar + FromStr>(
    toks: &[&str],
    pos: &mut usize,
    lineno: usize,
) -> Result<CptNode<T>> {
    let bad = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let tag = toks
        .get(*pos)
        .ok_or_else(|| bad("unexpected end of cpt tree".into()))?;
    *pos += 1;
    match *tag {
        "L" => {
            if *pos + 3 > toks.len() {
                return Err(bad("leaf needs counts and probability".into()));
            }
            let count_true = toks[*pos]
                .parse::<u64>()
                .map_err(|_| bad("bad true count".into()))?;
            let count_false = toks[*pos + 1]
                .parse::<u64>()
                .map_err(|_| bad("bad false count".into()))?;
            let prob_true = toks[*pos + 2]
                .parse::<T>()
                .map_err(|_| bad("bad leaf probability".into()))?;
            *pos += 3;
            Ok(CptNode::Leaf {
                count_true,
                count_false,
                prob_true,
            })
        }
        "S" => {
            let test = toks
                .get(*pos)
                .and_then(|s| s.parse::<u32>().ok())
                .map(VariableId)
                .ok_or_else(|| bad("bad split test variable".into()))?;
            *pos += 1;
            let child_true = parse_cpt_node(toks, pos, lineno)?;
            let child_false = parse_cpt_node(toks, pos, lineno)?;
            Ok(CptNode::Split {
                test,
                child_true: Box::new(child_true),
                child_false: Box::new(child_false),
            })
        }
        other => Err(bad(format!("unknown cpt node tag `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn dataset(names: &[&str], rows: &[&[u8]]) -> Dataset {
        Dataset::from_rows(
            names.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn leaf_estimate_basic() {
        let p = estimate_leaf_prob::<f64>(3, 7, &1.0).unwrap();
        assert!((p - 4.0 / 12.0).abs() < 1e-15);
        let p = estimate_leaf_prob::<f64>(0, 0, &1.0).unwrap();
        assert_eq!(p, 0.5);
        assert!(estimate_leaf_prob::<f64>(1, 1, &0.0).is_err());
        assert!(estimate_leaf_prob::<f64>(1, 1, &-1.0).is_err());
    }

    #[test]
    fn leaf_estimate_stays_inside_unit_interval() {
        let p = estimate_leaf_prob::<f64>(1000, 0, &0.00001).unwrap();
        assert!(p > 0.99999 && p < 1.0);
        let q = estimate_leaf_prob::<f64>(0, 1000, &0.00001).unwrap();
        assert!(q > 0.0 && q < 0.00001);
    }

    #[test]
    fn split_gain_pure_split_approaches_n_log2() {
        // parent (50,50) split into (50,0)/(0,50); alpha -> 0 gives 100 ln 2
        let gain = split_gain(
            SufficientStats::new(50, 50),
            SufficientStats::new(50, 0),
            SufficientStats::new(0, 50),
            1e-9,
        )
        .unwrap();
        assert!((gain - 100.0 * std::f64::consts::LN_2).abs() < 1e-4);
    }

    #[test]
    fn split_gain_no_information_is_nonpositive() {
        // both branches repeat the parent proportions
        let gain = split_gain(
            SufficientStats::new(40, 60),
            SufficientStats::new(20, 30),
            SufficientStats::new(20, 30),
            1.0,
        )
        .unwrap();
        assert!(gain <= 0.0);
        let tiny = split_gain(
            SufficientStats::new(40, 60),
            SufficientStats::new(20, 30),
            SufficientStats::new(20, 30),
            1e-12,
        )
        .unwrap();
        assert!(tiny.abs() < 1e-6);
    }

    #[test]
    fn split_gain_rejects_non_partition() {
        assert!(split_gain(
            SufficientStats::new(10, 10),
            SufficientStats::new(3, 3),
            SufficientStats::new(3, 3),
            1.0
        )
        .is_err());
    }

    #[test]
    fn log_likelihood_uniform_leaf() {
        let mut bn = BayesianNetwork::independent(vec!["X".into()], 1.0).unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(0.5)).unwrap();
        let data = dataset(&["X"], &[&[1], &[0], &[1], &[1]]);
        let ll = bn.log_likelihood(&data).unwrap();
        assert!((ll - 4.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_empty_dataset_is_zero() {
        let bn = BayesianNetwork::independent(vec!["X".into(), "Y".into()], 1.0).unwrap();
        let data = dataset(&["X", "Y"], &[]);
        assert_eq!(bn.log_likelihood(&data).unwrap(), 0.0);
    }

    #[test]
    fn log_likelihood_schema_mismatch() {
        let bn = BayesianNetwork::independent(vec!["X".into()], 1.0).unwrap();
        let data = dataset(&["X", "Y"], &[&[1, 0]]);
        assert!(matches!(
            bn.log_likelihood(&data),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn apply_split_adds_one_parent() {
        let data = dataset(
            &["X", "Y"],
            &[&[1, 1], &[1, 1], &[0, 0], &[0, 0], &[1, 0], &[0, 1]],
        );
        let mut bn = BayesianNetwork::independent(vec!["X".into(), "Y".into()], 1.0).unwrap();
        bn.fit_marginals(&data).unwrap();
        let split = bn
            .apply_split(VariableId(1), &[], VariableId(0), &data)
            .unwrap();
        assert_eq!(
            split.parents(VariableId(1)),
            [VariableId(0)].into_iter().collect()
        );
        assert_eq!(split.parents(VariableId(0)), BTreeSet::new());
        // counts: rows with X=1: Y = 1,1,0 ; rows with X=0: Y = 0,0,1
        match &split.cpt(VariableId(1)).root {
            CptNode::Split {
                child_true,
                child_false,
                ..
            } => {
                assert!(
                    matches!(**child_true, CptNode::Leaf { count_true: 2, count_false: 1, .. })
                );
                assert!(
                    matches!(**child_false, CptNode::Leaf { count_true: 1, count_false: 2, .. })
                );
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn split_then_likelihood_difference_equals_gain() {
        let data = dataset(
            &["X", "Y"],
            &[&[1, 1], &[1, 1], &[1, 0], &[0, 0], &[0, 0], &[0, 1]],
        );
        let mut bn = BayesianNetwork::independent(vec!["X".into(), "Y".into()], 1.0).unwrap();
        bn.fit_marginals(&data).unwrap();
        let before = bn.log_likelihood(&data).unwrap();
        let split = bn
            .apply_split(VariableId(1), &[], VariableId(0), &data)
            .unwrap();
        let after = split.log_likelihood(&data).unwrap();
        let gain = split_gain(
            SufficientStats::new(3, 3),
            SufficientStats::new(2, 1),
            SufficientStats::new(1, 2),
            1.0,
        )
        .unwrap();
        assert!((after - before - gain).abs() < 1e-12);
    }

    #[test]
    fn illegal_split_on_successor_is_rejected() {
        let data = dataset(&["X", "Y"], &[&[1, 1], &[0, 0]]);
        let bn = BayesianNetwork::independent(vec!["X".into(), "Y".into()], 1.0).unwrap();
        assert!(matches!(
            bn.apply_split(VariableId(0), &[], VariableId(1), &data),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn refit_uses_stored_counts() {
        let data = dataset(&["X"], &[&[1], &[1], &[1], &[0]]);
        let mut bn = BayesianNetwork::<f64>::independent(vec!["X".into()], 1.0).unwrap();
        bn.fit_marginals(&data).unwrap();
        let refit = bn.refit(0.5).unwrap();
        match &refit.cpt(VariableId(0)).root {
            CptNode::Leaf { prob_true, .. } => {
                assert!((prob_true - 3.5 / 5.0).abs() < 1e-15);
            }
            _ => panic!("expected leaf"),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let data = dataset(
            &["A", "B", "C"],
            &[&[1, 1, 0], &[0, 1, 1], &[1, 0, 0], &[0, 0, 1]],
        );
        let mut bn = BayesianNetwork::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![VariableId(2), VariableId(0), VariableId(1)],
            0.1,
        )
        .unwrap();
        bn.fit_marginals(&data).unwrap();
        let bn = bn
            .apply_split(VariableId(1), &[], VariableId(2), &data)
            .unwrap();
        let mut bytes = Vec::new();
        bn.save(&mut bytes).unwrap();
        let back = BayesianNetwork::<f64>::load(bytes.as_slice()).unwrap();
        assert_eq!(bn, back);
        assert_eq!(bn.fingerprint(), back.fingerprint());
    }
}
