//! Sentential decision diagrams over right-linear vtrees.
//!
//! Nodes are hash-consed in a manager, so two structurally identical nodes
//! always share an id and semantic equality under a fixed vtree reduces to id
//! equality. Under right-linear vtrees every decision node has exactly two
//! elements whose primes are the positive and negative literal of the vtree
//! leaf on its left, which makes the diagrams coincide with ordered BDDs
//! while keeping the (prime, sub) element structure explicit.
//!
//! Weighted model counting is generic over a [`Semiring`] and smooths on the
//! fly: when a child skips vtree leaves, the missing variables contribute a
//! factor of `w(x) + w(-x)` each.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU32, Ordering};

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::semiring::{Semiring, ShiftPolynomial};
use crate::vtree::{CircuitVar, Vtree, VtreeNodeId};

static NEXT_MANAGER_TAG: AtomicU32 = AtomicU32::new(1);

const FALSE_IDX: u32 = 0;
const TRUE_IDX: u32 = 1;

/// Handle to a node owned by one manager. Handles from other managers are
/// rejected with an ownership error.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct SddId {
    mgr: u32,
    idx: u32,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ApplyOp {
    Conjoin,
    Disjoin,
}

#[derive(Clone, Debug)]
enum Node {
    False,
    True,
    Literal {
        var: CircuitVar,
        positive: bool,
    },
    Decision {
        vtree: VtreeNodeId,
        /// (prime, sub) pairs, sorted by prime id.
        elements: Box<[(u32, u32)]>,
    },
}

/// Per-literal weights for weighted model counting.
#[derive(Clone, Debug)]
pub struct WeightMap<S> {
    pos: Vec<S>,
    neg: Vec<S>,
}

impl<S: Semiring> WeightMap<S> {
    /// All weights set to `one`, for `var_count` circuit variables.
    pub fn unit(var_count: usize) -> Self {
        WeightMap {
            pos: vec![S::one(); var_count],
            neg: vec![S::one(); var_count],
        }
    }
}

impl<S> WeightMap<S> {
    pub fn var_count(&self) -> usize {
        self.pos.len()
    }

    pub fn set(&mut self, var: CircuitVar, w_pos: S, w_neg: S) {
        let i = (var.get() - 1) as usize;
        self.pos[i] = w_pos;
        self.neg[i] = w_neg;
    }

    pub fn set_literal(&mut self, var: CircuitVar, positive: bool, w: S) {
        let i = (var.get() - 1) as usize;
        if positive {
            self.pos[i] = w;
        } else {
            self.neg[i] = w;
        }
    }

    pub fn get(&self, var: CircuitVar, positive: bool) -> &S {
        let i = (var.get() - 1) as usize;
        if positive {
            &self.pos[i]
        } else {
            &self.neg[i]
        }
    }

    /// Applies `f` to every weight, producing a map over another semiring.
    pub fn map<S2>(&self, mut f: impl FnMut(CircuitVar, bool, &S) -> S2) -> WeightMap<S2> {
        let n = self.pos.len();
        let mut pos = Vec::with_capacity(n);
        let mut neg = Vec::with_capacity(n);
        for i in 0..n {
            let var = CircuitVar::new(i as u32 + 1);
            pos.push(f(var, true, &self.pos[i]));
            neg.push(f(var, false, &self.neg[i]));
        }
        WeightMap { pos, neg }
    }
}

/// Hash-consed SDD store over one fixed right-linear vtree.
pub struct SddManager {
    tag: u32,
    vtree: Vtree,
    nodes: Vec<Node>,
    unique: HashMap<(u32, Box<[(u32, u32)]>), u32>,
    apply_cache: HashMap<(u8, u32, u32), u32>,
    negate_cache: HashMap<u32, u32>,
    external_refs: HashMap<u32, u64>,
}

impl SddManager {
    /// Creates a manager for a right-linear vtree. Constants and all
    /// literals are allocated eagerly.
    pub fn new(vtree: Vtree) -> Result<Self> {
        if !vtree.is_right_linear() {
            return Err(Error::Input(
                "manager requires a right-linear vtree".into(),
            ));
        }
        let v = vtree.var_count();
        let mut nodes = Vec::with_capacity(2 + 2 * v);
        nodes.push(Node::False);
        nodes.push(Node::True);
        for i in 0..v {
            let var = CircuitVar::new(i as u32 + 1);
            nodes.push(Node::Literal {
                var,
                positive: false,
            });
            nodes.push(Node::Literal {
                var,
                positive: true,
            });
        }
        Ok(SddManager {
            tag: NEXT_MANAGER_TAG.fetch_add(1, Ordering::Relaxed),
            vtree,
            nodes,
            unique: HashMap::new(),
            apply_cache: HashMap::new(),
            negate_cache: HashMap::new(),
            external_refs: HashMap::new(),
        })
    }

    pub fn vtree(&self) -> &Vtree {
        &self.vtree
    }

    pub fn var_count(&self) -> usize {
        self.vtree.var_count()
    }

    /// Total number of (prime, sub) elements ever allocated, live or dead.
    pub fn total_elements(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Decision { elements, .. } => elements.len() as u64,
                _ => 0,
            })
            .sum()
    }

    fn id(&self, idx: u32) -> SddId {
        SddId {
            mgr: self.tag,
            idx,
        }
    }

    fn check(&self, id: SddId) -> Result<u32> {
        if id.mgr != self.tag || id.idx as usize >= self.nodes.len() {
            return Err(Error::ForeignNode(format!(
                "node {:?} is not owned by manager {}",
                id, self.tag
            )));
        }
        Ok(id.idx)
    }

    pub fn false_node(&self) -> SddId {
        self.id(FALSE_IDX)
    }

    pub fn true_node(&self) -> SddId {
        self.id(TRUE_IDX)
    }

    fn lit_idx(&self, var: CircuitVar, positive: bool) -> u32 {
        2 + 2 * (var.get() - 1) + positive as u32
    }

    pub fn literal(&self, var: CircuitVar, positive: bool) -> SddId {
        assert!(
            (var.get() as usize) <= self.var_count(),
            "literal variable out of range"
        );
        self.id(self.lit_idx(var, positive))
    }

    pub fn is_true(&self, id: SddId) -> bool {
        id.mgr == self.tag && id.idx == TRUE_IDX
    }

    pub fn is_false(&self, id: SddId) -> bool {
        id.mgr == self.tag && id.idx == FALSE_IDX
    }

    pub fn is_constant(&self, id: SddId) -> bool {
        self.is_true(id) || self.is_false(id)
    }

    /// Vtree leaf position of the node's top variable; `var_count` for
    /// constants (they sit below every variable).
    fn level(&self, idx: u32) -> usize {
        match &self.nodes[idx as usize] {
            Node::False | Node::True => self.var_count(),
            Node::Literal { var, .. } => self.vtree.position_of(*var),
            Node::Decision { vtree, .. } => self.vtree.position_of_node(*vtree),
        }
    }

    /// (high, low) cofactors with respect to the variable at `level`.
    fn cofactors(&self, idx: u32, level: usize) -> (u32, u32) {
        match &self.nodes[idx as usize] {
            Node::Literal { var, positive } if self.vtree.position_of(*var) == level => {
                if *positive {
                    (TRUE_IDX, FALSE_IDX)
                } else {
                    (FALSE_IDX, TRUE_IDX)
                }
            }
            Node::Decision { vtree, elements } if self.vtree.position_of_node(*vtree) == level => {
                let mut hi = FALSE_IDX;
                let mut lo = FALSE_IDX;
                for (p, s) in elements.iter() {
                    match &self.nodes[*p as usize] {
                        Node::Literal { positive: true, .. } => hi = *s,
                        Node::Literal {
                            positive: false, ..
                        } => lo = *s,
                        Node::True => {
                            hi = *s;
                            lo = *s;
                        }
                        _ => unreachable!("prime of a right-linear decision is a literal"),
                    }
                }
                (hi, lo)
            }
            _ => (idx, idx),
        }
    }

    /// Canonicalizing constructor for a decision on the variable at `level`.
    ///
    /// Applies compression (equal subs merge, so `hi == lo` collapses) and
    /// trimming (`(x, true)/(-x, false)` collapses to the literal), then
    /// hash-conses.
    fn make_decision(&mut self, level: usize, hi: u32, lo: u32) -> u32 {
        if hi == lo {
            return hi;
        }
        let var = self.vtree.var_at(level);
        if hi == TRUE_IDX && lo == FALSE_IDX {
            return self.lit_idx(var, true);
        }
        if hi == FALSE_IDX && lo == TRUE_IDX {
            return self.lit_idx(var, false);
        }
        debug_assert!(level + 1 < self.var_count());
        let vtree_id = self.vtree.internal_id_at(level);
        let pos = self.lit_idx(var, true);
        let neg = self.lit_idx(var, false);
        // neg literals are allocated before pos, so this order is sorted.
        let elements: Box<[(u32, u32)]> = Box::new([(neg, lo), (pos, hi)]);
        let key = (vtree_id.0, elements);
        if let Some(&idx) = self.unique.get(&key) {
            return idx;
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node::Decision {
            vtree: vtree_id,
            elements: key.1.clone(),
        });
        self.unique.insert(key, idx);
        idx
    }

    fn apply_rec(&mut self, op: ApplyOp, a: u32, b: u32) -> u32 {
        match op {
            ApplyOp::Conjoin => {
                if a == FALSE_IDX || b == FALSE_IDX {
                    return FALSE_IDX;
                }
                if a == TRUE_IDX {
                    return b;
                }
                if b == TRUE_IDX {
                    return a;
                }
            }
            ApplyOp::Disjoin => {
                if a == TRUE_IDX || b == TRUE_IDX {
                    return TRUE_IDX;
                }
                if a == FALSE_IDX {
                    return b;
                }
                if b == FALSE_IDX {
                    return a;
                }
            }
        }
        if a == b {
            return a;
        }
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        let key = (op as u8, x, y);
        if let Some(&r) = self.apply_cache.get(&key) {
            return r;
        }
        let level = self.level(x).min(self.level(y));
        let (x1, x0) = self.cofactors(x, level);
        let (y1, y0) = self.cofactors(y, level);
        let hi = self.apply_rec(op, x1, y1);
        let lo = self.apply_rec(op, x0, y0);
        let r = self.make_decision(level, hi, lo);
        self.apply_cache.insert(key, r);
        r
    }

    /// Boolean conjunction of two nodes, canonical under the manager's vtree.
    pub fn conjoin(&mut self, a: SddId, b: SddId) -> Result<SddId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let r = self.apply_rec(ApplyOp::Conjoin, a, b);
        Ok(self.id(r))
    }

    pub fn disjoin(&mut self, a: SddId, b: SddId) -> Result<SddId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let r = self.apply_rec(ApplyOp::Disjoin, a, b);
        Ok(self.id(r))
    }

    fn negate_rec(&mut self, idx: u32) -> u32 {
        match &self.nodes[idx as usize] {
            Node::False => return TRUE_IDX,
            Node::True => return FALSE_IDX,
            Node::Literal { var, positive } => {
                let (var, positive) = (*var, *positive);
                return self.lit_idx(var, !positive);
            }
            Node::Decision { .. } => {}
        }
        if let Some(&r) = self.negate_cache.get(&idx) {
            return r;
        }
        let (level, hi, lo) = {
            let level = self.level(idx);
            let (hi, lo) = self.cofactors(idx, level);
            (level, hi, lo)
        };
        let nhi = self.negate_rec(hi);
        let nlo = self.negate_rec(lo);
        let r = self.make_decision(level, nhi, nlo);
        self.negate_cache.insert(idx, r);
        self.negate_cache.insert(r, idx);
        r
    }

    pub fn negate(&mut self, a: SddId) -> Result<SddId> {
        let a = self.check(a)?;
        let r = self.negate_rec(a);
        Ok(self.id(r))
    }

    fn condition_rec(
        &mut self,
        idx: u32,
        target: usize,
        value: bool,
        memo: &mut HashMap<u32, u32>,
    ) -> u32 {
        let level = self.level(idx);
        if level > target {
            return idx;
        }
        if level == target {
            let (hi, lo) = self.cofactors(idx, level);
            return if value { hi } else { lo };
        }
        if let Some(&r) = memo.get(&idx) {
            return r;
        }
        let (hi, lo) = self.cofactors(idx, level);
        let chi = self.condition_rec(hi, target, value, memo);
        let clo = self.condition_rec(lo, target, value, memo);
        let r = self.make_decision(level, chi, clo);
        memo.insert(idx, r);
        r
    }

    /// Restriction of `a` to `var = value`. The result no longer mentions
    /// `var`.
    pub fn condition(&mut self, a: SddId, var: CircuitVar, value: bool) -> Result<SddId> {
        let a = self.check(a)?;
        if var.get() as usize > self.var_count() {
            return Err(Error::Input(format!(
                "condition variable {} out of range",
                var.get()
            )));
        }
        let target = self.vtree.position_of(var);
        let mut memo = HashMap::new();
        let r = self.condition_rec(a, target, value, &mut memo);
        Ok(self.id(r))
    }

    /// Weighted model count over an arbitrary semiring, smoothing on the fly.
    pub fn wmc<S: Semiring>(&self, root: SddId, weights: &WeightMap<S>) -> Result<S> {
        let root = self.check(root)?;
        let v = self.var_count();
        if weights.var_count() != v {
            return Err(Error::Config(format!(
                "weight map covers {} variables, circuit has {}",
                weights.var_count(),
                v
            )));
        }
        // factor[k]: contribution of the variable at position k when it is
        // skipped; tail[k]: product of factors from position k to the end.
        let mut factor = Vec::with_capacity(v);
        for k in 0..v {
            let var = self.vtree.var_at(k);
            factor.push(weights.get(var, true).plus(weights.get(var, false)));
        }
        let mut tail = vec![S::one(); v + 1];
        for k in (0..v).rev() {
            tail[k] = factor[k].times(&tail[k + 1]);
        }
        let mut memo: HashMap<u32, S> = HashMap::new();
        let value = self.wmc_rec(root, weights, &factor, &tail, &mut memo);
        let result = self.gap_product(0, self.level(root), &factor).times(&value);
        Ok(result)
    }

    fn gap_product<S: Semiring>(&self, from: usize, to: usize, factor: &[S]) -> S {
        let mut acc = S::one();
        for f in &factor[from..to] {
            acc = acc.times(f);
        }
        acc
    }

    /// Smoothed value of the node over the variable scope from its own level
    /// to the end of the ordering.
    fn wmc_rec<S: Semiring>(
        &self,
        idx: u32,
        weights: &WeightMap<S>,
        factor: &[S],
        tail: &[S],
        memo: &mut HashMap<u32, S>,
    ) -> S {
        match &self.nodes[idx as usize] {
            Node::False => return S::zero(),
            Node::True => return S::one(),
            Node::Literal { var, positive } => {
                let p = self.vtree.position_of(*var);
                return weights.get(*var, *positive).times(&tail[p + 1]);
            }
            Node::Decision { .. } => {}
        }
        if let Some(v) = memo.get(&idx) {
            return v.clone();
        }
        let level = self.level(idx);
        let var = self.vtree.var_at(level);
        let (hi, lo) = self.cofactors(idx, level);
        let mut acc = S::zero();
        for (positive, child) in [(true, hi), (false, lo)] {
            if child == FALSE_IDX {
                continue;
            }
            let child_val = self.wmc_rec(child, weights, factor, tail, memo);
            let gap = self.gap_product(level + 1, self.level(child), factor);
            let term = weights.get(var, positive).times(&gap).times(&child_val);
            acc = acc.plus(&term);
        }
        memo.insert(idx, acc.clone());
        acc
    }

    /// Weighted model count over the shift-polynomial semiring; coefficient
    /// `d` of the result is the weight of assignments whose tracked signed
    /// count equals `d`.
    pub fn gf_wmc<T: Semiring>(
        &self,
        root: SddId,
        weights: &WeightMap<ShiftPolynomial<T>>,
    ) -> Result<ShiftPolynomial<T>> {
        self.wmc(root, weights)
    }

    /// Exact number of satisfying assignments over all circuit variables.
    pub fn model_count(&self, root: SddId) -> Result<BigUint> {
        let weights: WeightMap<BigUint> = WeightMap::unit(self.var_count());
        self.wmc(root, &weights)
    }

    fn reachable(&self, root: u32) -> Vec<u32> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        let mut out = Vec::new();
        while let Some(idx) = stack.pop() {
            if seen[idx as usize] {
                continue;
            }
            seen[idx as usize] = true;
            out.push(idx);
            if let Node::Decision { elements, .. } = &self.nodes[idx as usize] {
                for (p, s) in elements.iter() {
                    stack.push(*p);
                    stack.push(*s);
                }
            }
        }
        out
    }

    /// Size of the diagram rooted at `root`: total elements of reachable
    /// decision nodes.
    pub fn size(&self, root: SddId) -> Result<u64> {
        let root = self.check(root)?;
        Ok(self
            .reachable(root)
            .into_iter()
            .map(|i| match &self.nodes[i as usize] {
                Node::Decision { elements, .. } => elements.len() as u64,
                _ => 0,
            })
            .sum())
    }

    /// Number of reachable decision nodes (the companion counter to
    /// [`SddManager::size`]).
    pub fn count_nodes(&self, root: SddId) -> Result<u64> {
        let root = self.check(root)?;
        Ok(self
            .reachable(root)
            .into_iter()
            .filter(|i| matches!(self.nodes[*i as usize], Node::Decision { .. }))
            .count() as u64)
    }

    /// Registers an external reference; live size is measured from these.
    pub fn inc_ref(&mut self, id: SddId) -> Result<()> {
        let idx = self.check(id)?;
        *self.external_refs.entry(idx).or_insert(0) += 1;
        Ok(())
    }

    pub fn dec_ref(&mut self, id: SddId) -> Result<()> {
        let idx = self.check(id)?;
        match self.external_refs.get_mut(&idx) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.external_refs.remove(&idx);
            }
            None => {
                return Err(Error::Internal(format!(
                    "dereference of unreferenced node {:?}",
                    id
                )))
            }
        }
        Ok(())
    }

    /// Total elements reachable from externally referenced roots.
    pub fn live_size(&self) -> u64 {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<u32> = self.external_refs.keys().copied().collect();
        stack.sort_unstable();
        let mut total = 0u64;
        while let Some(idx) = stack.pop() {
            if seen[idx as usize] {
                continue;
            }
            seen[idx as usize] = true;
            if let Node::Decision { elements, .. } = &self.nodes[idx as usize] {
                total += elements.len() as u64;
                for (p, s) in elements.iter() {
                    stack.push(*p);
                    stack.push(*s);
                }
            }
        }
        total
    }

    /// Drops the apply and negate caches. Unique nodes are kept, so
    /// canonicity is unaffected.
    pub fn clear_apply_cache(&mut self) {
        self.apply_cache.clear();
        self.negate_cache.clear();
    }

    /// Variables appearing in the function rooted at `root`.
    pub fn support(&self, root: SddId) -> Result<BTreeSet<CircuitVar>> {
        let root = self.check(root)?;
        let mut vars = BTreeSet::new();
        for idx in self.reachable(root) {
            match &self.nodes[idx as usize] {
                Node::Literal { var, .. } => {
                    vars.insert(*var);
                }
                Node::Decision { vtree, .. } => {
                    vars.insert(self.vtree.var_at(self.vtree.position_of_node(*vtree)));
                }
                _ => {}
            }
        }
        Ok(vars)
    }

    /// Evaluates the node under a complete assignment (for oracles).
    pub fn evaluate(&self, root: SddId, assignment: &[bool]) -> Result<bool> {
        let mut idx = self.check(root)?;
        loop {
            match &self.nodes[idx as usize] {
                Node::False => return Ok(false),
                Node::True => return Ok(true),
                Node::Literal { var, positive } => {
                    return Ok(assignment[(var.get() - 1) as usize] == *positive)
                }
                Node::Decision { vtree, .. } => {
                    let level = self.vtree.position_of_node(*vtree);
                    let var = self.vtree.var_at(level);
                    let (hi, lo) = self.cofactors(idx, level);
                    idx = if assignment[(var.get() - 1) as usize] {
                        hi
                    } else {
                        lo
                    };
                }
            }
        }
    }

    /// Conjoins a CNF given as clauses of (variable, sign) literals.
    /// Internal helper for tests and benchmarks, not a supported input path.
    pub fn compile_cnf(&mut self, clauses: &[Vec<(CircuitVar, bool)>]) -> Result<SddId> {
        let mut acc = self.true_node();
        for clause in clauses {
            let mut c = self.false_node();
            for (var, positive) in clause {
                let lit = self.literal(*var, *positive);
                c = self.disjoin(c, lit)?;
            }
            acc = self.conjoin(acc, c)?;
        }
        Ok(acc)
    }

    /// Checks the defining structural invariants of every decision node
    /// reachable from `root`: primes pairwise inconsistent, primes exhaustive,
    /// no false prime, no duplicated sub, and both components inside the
    /// scopes of the vtree children.
    pub fn validate(&mut self, root: SddId) -> Result<()> {
        let root_idx = self.check(root)?;
        for idx in self.reachable(root_idx) {
            let (vtree_id, elements) = match &self.nodes[idx as usize] {
                Node::Decision { vtree, elements } => (*vtree, elements.clone()),
                _ => continue,
            };
            if elements.is_empty() {
                return Err(Error::Internal(format!(
                    "decision node {idx} has no elements"
                )));
            }
            let (left, right) = self.vtree.children(vtree_id).ok_or_else(|| {
                Error::Internal(format!("decision node {idx} placed at a vtree leaf"))
            })?;
            let (l_lo, l_hi) = self.vtree.scope_positions(left);
            let (r_lo, r_hi) = self.vtree.scope_positions(right);

            let mut subs_seen = BTreeSet::new();
            for (p, s) in elements.iter() {
                if *p == FALSE_IDX {
                    return Err(Error::Internal(format!(
                        "decision node {idx} has a false prime"
                    )));
                }
                if !subs_seen.insert(*s) {
                    return Err(Error::Internal(format!(
                        "decision node {idx} is not compressed: duplicate sub"
                    )));
                }
                for var in self.support(self.id(*p))? {
                    let pos = self.vtree.position_of(var);
                    if pos < l_lo || pos >= l_hi {
                        return Err(Error::Internal(format!(
                            "prime of node {idx} escapes the left vtree scope"
                        )));
                    }
                }
                for var in self.support(self.id(*s))? {
                    let pos = self.vtree.position_of(var);
                    if pos < r_lo || pos >= r_hi {
                        return Err(Error::Internal(format!(
                            "sub of node {idx} escapes the right vtree scope"
                        )));
                    }
                }
            }
            // partition: pairwise conjunction false, disjunction true
            let mut all = self.false_node();
            for (i, (p, _)) in elements.iter().enumerate() {
                for (q, _) in elements.iter().skip(i + 1) {
                    let c = self.conjoin(self.id(*p), self.id(*q))?;
                    if !self.is_false(c) {
                        return Err(Error::Internal(format!(
                            "primes of node {idx} are not pairwise inconsistent"
                        )));
                    }
                }
                all = self.disjoin(all, self.id(*p))?;
            }
            if !self.is_true(all) {
                return Err(Error::Internal(format!(
                    "primes of node {idx} do not cover all cases"
                )));
            }
        }
        Ok(())
    }

    /// Serializes the diagram rooted at `root`; children precede parents and
    /// ids are file-local.
    pub fn save_sdd<W: Write>(&self, root: SddId, mut out: W) -> Result<()> {
        let root_idx = self.check(root)?;
        let mut file_id: HashMap<u32, usize> = HashMap::new();
        let mut lines: Vec<String> = Vec::new();
        let mut order: Vec<u32> = Vec::new();
        // iterative post-order so children are emitted first
        let mut stack: Vec<(u32, bool)> = vec![(root_idx, false)];
        let mut visited = vec![false; self.nodes.len()];
        while let Some((idx, expanded)) = stack.pop() {
            if expanded {
                if !visited[idx as usize] {
                    visited[idx as usize] = true;
                    order.push(idx);
                }
                continue;
            }
            if visited[idx as usize] {
                continue;
            }
            stack.push((idx, true));
            if let Node::Decision { elements, .. } = &self.nodes[idx as usize] {
                for (p, s) in elements.iter().rev() {
                    stack.push((*s, false));
                    stack.push((*p, false));
                }
            }
        }
        for idx in &order {
            let fid = file_id.len();
            file_id.insert(*idx, fid);
            let line = match &self.nodes[*idx as usize] {
                Node::False => format!("F {fid}"),
                Node::True => format!("T {fid}"),
                Node::Literal { var, positive } => {
                    let leaf = self.vtree.leaf_id_at(self.vtree.position_of(*var));
                    let lit = if *positive {
                        var.get() as i64
                    } else {
                        -(var.get() as i64)
                    };
                    format!("L {fid} {} {lit}", leaf.0)
                }
                Node::Decision { vtree, elements } => {
                    let mut s = format!("D {fid} {} {}", vtree.0, elements.len());
                    for (p, sub) in elements.iter() {
                        write!(s, " {} {}", file_id[p], file_id[sub]).unwrap();
                    }
                    s
                }
            };
            lines.push(line);
        }
        let mut buf = String::new();
        writeln!(buf, "c ids are file-local; children precede parents").unwrap();
        writeln!(buf, "sdd {}", lines.len()).unwrap();
        for l in lines {
            writeln!(buf, "{l}").unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Loads a diagram saved by [`SddManager::save_sdd`] into this manager
    /// (the vtree must match), returning the root.
    pub fn load_sdd<R: BufRead>(&mut self, reader: R) -> Result<SddId> {
        let mut declared: Option<usize> = None;
        let mut by_file_id: HashMap<u32, u32> = HashMap::new();
        let mut last: Option<u32> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let t = line.trim();
            if t.is_empty() || t == "c" || t.starts_with("c ") {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            let parse = |s: &str, what: &str| -> Result<i64> {
                s.parse::<i64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("expected {what}, found `{s}`"),
                })
            };
            let bad = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            match toks[0] {
                "sdd" => {
                    if toks.len() != 2 {
                        return Err(bad("header must be `sdd N`".into()));
                    }
                    declared = Some(parse(toks[1], "node count")? as usize);
                }
                "F" | "T" => {
                    if toks.len() != 2 {
                        return Err(bad("constant line must be `F <id>` or `T <id>`".into()));
                    }
                    let fid = parse(toks[1], "node id")? as u32;
                    let idx = if toks[0] == "T" { TRUE_IDX } else { FALSE_IDX };
                    by_file_id.insert(fid, idx);
                    last = Some(idx);
                }
                "L" => {
                    if toks.len() != 4 {
                        return Err(bad("literal line must be `L <id> <vtree> <lit>`".into()));
                    }
                    let fid = parse(toks[1], "node id")? as u32;
                    let vt = parse(toks[2], "vtree id")? as u32;
                    let lit = parse(toks[3], "signed literal")?;
                    if lit == 0 {
                        return Err(bad("literal 0 is not valid".into()));
                    }
                    let var = CircuitVar::new(lit.unsigned_abs() as u32);
                    if var.get() as usize > self.var_count() {
                        return Err(bad(format!("variable {} out of range", var.get())));
                    }
                    let expect = self.vtree.leaf_id_at(self.vtree.position_of(var));
                    if expect.0 != vt {
                        return Err(bad(format!(
                            "literal {} declared at vtree node {}, expected {}",
                            lit, vt, expect.0
                        )));
                    }
                    let idx = self.lit_idx(var, lit > 0);
                    by_file_id.insert(fid, idx);
                    last = Some(idx);
                }
                "D" => {
                    if toks.len() < 4 {
                        return Err(bad("decision line too short".into()));
                    }
                    let fid = parse(toks[1], "node id")? as u32;
                    let vt = parse(toks[2], "vtree id")? as u32;
                    let k = parse(toks[3], "element count")? as usize;
                    if toks.len() != 4 + 2 * k {
                        return Err(bad(format!(
                            "decision declares {k} elements but carries {}",
                            (toks.len() - 4) / 2
                        )));
                    }
                    if (vt as usize) >= self.vtree.node_count() || self.vtree.is_leaf(VtreeNodeId(vt))
                    {
                        return Err(bad(format!("vtree node {vt} is not internal")));
                    }
                    let level = self.vtree.position_of_node(VtreeNodeId(vt));
                    let mut hi: Option<u32> = None;
                    let mut lo: Option<u32> = None;
                    for e in 0..k {
                        let pf = parse(toks[4 + 2 * e], "prime id")? as u32;
                        let sf = parse(toks[5 + 2 * e], "sub id")? as u32;
                        let p = *by_file_id
                            .get(&pf)
                            .ok_or_else(|| bad(format!("prime {pf} not yet defined")))?;
                        let s = *by_file_id
                            .get(&sf)
                            .ok_or_else(|| bad(format!("sub {sf} not yet defined")))?;
                        match &self.nodes[p as usize] {
                            Node::Literal { var, positive }
                                if self.vtree.position_of(*var) == level =>
                            {
                                if *positive {
                                    hi = Some(s);
                                } else {
                                    lo = Some(s);
                                }
                            }
                            Node::True => {
                                hi = Some(s);
                                lo = Some(s);
                            }
                            _ => {
                                return Err(bad(format!(
                                    "prime {pf} is not a literal of the decision variable"
                                )))
                            }
                        }
                    }
                    let (hi, lo) = match (hi, lo) {
                        (Some(h), Some(l)) => (h, l),
                        _ => return Err(bad("decision does not cover both phases".into())),
                    };
                    let idx = self.make_decision(level, hi, lo);
                    by_file_id.insert(fid, idx);
                    last = Some(idx);
                }
                other => return Err(bad(format!("unknown sdd line tag `{other}`"))),
            }
        }
        if declared != Some(by_file_id.len()) {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "sdd header declares {:?} nodes, file defines {}",
                    declared,
                    by_file_id.len()
                ),
            });
        }
        last.map(|idx| self.id(idx)).ok_or(Error::Parse {
            line: 0,
            message: "sdd file defines no nodes".into(),
        })
    }
}
