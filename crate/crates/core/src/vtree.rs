//! Vtrees: full binary trees over circuit variables that fix how decision
//! nodes decompose.
//!
//! Only right-linear vtrees are constructed here (the left child of every
//! internal node is a leaf), which makes the diagrams coincide with ordered
//! BDDs and ties the vtree to the learner's variable ordering. The data
//! structure and the text format stay general so saved files describe the
//! tree explicitly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Circuit variable, 1-based so signed literals serialize DIMACS-style.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CircuitVar(u32);

impl CircuitVar {
    pub fn new(v: u32) -> Self {
        assert!(v >= 1, "circuit variables are 1-based");
        CircuitVar(v)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

/// Vtree node id in in-order numbering.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VtreeNodeId(pub u32);

#[derive(Clone, Debug, PartialEq)]
enum VtreeNode {
    Leaf { var: CircuitVar },
    Internal { left: VtreeNodeId, right: VtreeNodeId },
}

/// A full binary tree whose leaves carry the circuit variables; node ids are
/// dense in-order positions. The zero-variable vtree is empty and only arises
/// for degenerate (variable-free) circuits.
#[derive(Clone, Debug, PartialEq)]
pub struct Vtree {
    nodes: Vec<VtreeNode>,
    root: Option<VtreeNodeId>,
    /// position in the left-to-right leaf order, indexed by variable.
    position_of_var: Vec<usize>,
    /// circuit variable at each leaf position.
    var_at_position: Vec<CircuitVar>,
}

/// Builds the right-linear vtree whose left-to-right leaves follow `ordering`.
pub fn right_linear_vtree(ordering: &[CircuitVar]) -> Result<Vtree> {
    if ordering.is_empty() {
        return Err(Error::Input("vtree ordering must be non-empty".into()));
    }
    let mut seen = vec![false; ordering.len()];
    let mut max = 0u32;
    for v in ordering {
        max = max.max(v.get());
        let i = v.index();
        if i >= seen.len() || seen[i] {
            return Err(Error::Input(format!(
                "duplicate or out-of-range circuit variable {} in vtree ordering",
                v.get()
            )));
        }
        seen[i] = true;
    }
    if max as usize != ordering.len() {
        return Err(Error::Input(
            "circuit variables must be exactly 1..=V".into(),
        ));
    }

    let v = ordering.len();
    let mut nodes = vec![VtreeNode::Leaf { var: ordering[0] }; 2 * v - 1];
    // In-order ids of a right-linear tree: leaf k at 2k, internal above
    // positions k.. at 2k+1, last leaf at 2V-2.
    for (k, var) in ordering.iter().enumerate() {
        nodes[2 * k] = VtreeNode::Leaf { var: *var };
        if k + 1 < v {
            let right = if k + 1 == v - 1 {
                VtreeNodeId(2 * (k + 1) as u32)
            } else {
                VtreeNodeId((2 * (k + 1) + 1) as u32)
            };
            nodes[2 * k + 1] = VtreeNode::Internal {
                left: VtreeNodeId(2 * k as u32),
                right,
            };
        }
    }
    let root = if v == 1 { VtreeNodeId(0) } else { VtreeNodeId(1) };

    let mut position_of_var = vec![0usize; v];
    for (k, var) in ordering.iter().enumerate() {
        position_of_var[var.index()] = k;
    }
    Ok(Vtree {
        nodes,
        root: Some(root),
        position_of_var,
        var_at_position: ordering.to_vec(),
    })
}

impl Vtree {
    /// Vtree over zero variables; holds no nodes.
    pub fn empty() -> Self {
        Vtree {
            nodes: Vec::new(),
            root: None,
            position_of_var: Vec::new(),
            var_at_position: Vec::new(),
        }
    }

    pub fn var_count(&self) -> usize {
        self.var_at_position.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> Option<VtreeNodeId> {
        self.root
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf-order position of a variable.
    pub fn position_of(&self, var: CircuitVar) -> usize {
        self.position_of_var[var.index()]
    }

    pub fn var_at(&self, position: usize) -> CircuitVar {
        self.var_at_position[position]
    }

    /// Leaf node id for the variable at `position` (right-linear layout).
    pub fn leaf_id_at(&self, position: usize) -> VtreeNodeId {
        VtreeNodeId(2 * position as u32)
    }

    /// Internal node id whose left child is the leaf at `position`.
    /// For the last position there is no internal node above it.
    pub fn internal_id_at(&self, position: usize) -> VtreeNodeId {
        debug_assert!(position + 1 < self.var_count());
        VtreeNodeId((2 * position + 1) as u32)
    }

    /// Position decoded from a node id (right-linear layout).
    pub fn position_of_node(&self, id: VtreeNodeId) -> usize {
        (id.0 as usize) / 2
    }

    pub fn is_leaf(&self, id: VtreeNodeId) -> bool {
        matches!(self.nodes[id.0 as usize], VtreeNode::Leaf { .. })
    }

    pub fn leaf_var(&self, id: VtreeNodeId) -> Option<CircuitVar> {
        match self.nodes[id.0 as usize] {
            VtreeNode::Leaf { var } => Some(var),
            VtreeNode::Internal { .. } => None,
        }
    }

    pub fn children(&self, id: VtreeNodeId) -> Option<(VtreeNodeId, VtreeNodeId)> {
        match self.nodes[id.0 as usize] {
            VtreeNode::Leaf { .. } => None,
            VtreeNode::Internal { left, right } => Some((left, right)),
        }
    }

    /// Variables in the subtree rooted at `id`, as leaf positions
    /// `[lo, hi)`. Right-linear layout makes scopes contiguous.
    pub fn scope_positions(&self, id: VtreeNodeId) -> (usize, usize) {
        let pos = self.position_of_node(id);
        if self.is_leaf(id) {
            (pos, pos + 1)
        } else {
            (pos, self.var_count())
        }
    }

    /// Serializes in the text format: header `vtree N`, leaf lines
    /// `L <id> <var>`, internal lines `I <id> <left> <right>`.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "c vtree with in-order node ids").unwrap();
        writeln!(buf, "vtree {}", self.nodes.len()).unwrap();
        // children precede parents: emit leaves first, then internals
        // bottom-up (descending id works for the right-linear layout).
        for (i, n) in self.nodes.iter().enumerate() {
            if let VtreeNode::Leaf { var } = n {
                writeln!(buf, "L {} {}", i, var.get()).unwrap();
            }
        }
        for i in (0..self.nodes.len()).rev() {
            if let VtreeNode::Internal { left, right } = &self.nodes[i] {
                writeln!(buf, "I {} {} {}", i, left.0, right.0).unwrap();
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Parses the text format emitted by [`Vtree::save`].
    pub fn load<R: BufRead>(reader: R) -> Result<Vtree> {
        let mut declared: Option<usize> = None;
        let mut nodes: HashMap<u32, VtreeNode> = HashMap::new();
        let mut referenced: Vec<u32> = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let t = line.trim();
            if t.is_empty() || t == "c" || t.starts_with("c ") {
                continue;
            }
            let mut it = t.split_whitespace();
            let tag = it.next().unwrap();
            let parse_u32 = |s: Option<&str>, what: &str| -> Result<u32> {
                s.and_then(|x| x.parse::<u32>().ok()).ok_or(Error::Parse {
                    line: lineno,
                    message: format!("expected {what}"),
                })
            };
            match tag {
                "vtree" => {
                    declared = Some(parse_u32(it.next(), "node count")? as usize);
                }
                "L" => {
                    let id = parse_u32(it.next(), "node id")?;
                    let var = parse_u32(it.next(), "variable")?;
                    if var == 0 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "circuit variables are 1-based".into(),
                        });
                    }
                    nodes.insert(
                        id,
                        VtreeNode::Leaf {
                            var: CircuitVar::new(var),
                        },
                    );
                }
                "I" => {
                    let id = parse_u32(it.next(), "node id")?;
                    let left = parse_u32(it.next(), "left child")?;
                    let right = parse_u32(it.next(), "right child")?;
                    referenced.push(left);
                    referenced.push(right);
                    nodes.insert(
                        id,
                        VtreeNode::Internal {
                            left: VtreeNodeId(left),
                            right: VtreeNodeId(right),
                        },
                    );
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unknown vtree line tag `{tag}`"),
                    })
                }
            }
        }

        let n = nodes.len();
        if declared != Some(n) {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "vtree header declares {:?} nodes, file has {}",
                    declared, n
                ),
            });
        }
        if n == 0 {
            return Ok(Vtree::empty());
        }
        let mut vec_nodes = Vec::with_capacity(n);
        for id in 0..n as u32 {
            let node = nodes.remove(&id).ok_or(Error::Parse {
                line: 0,
                message: format!("vtree node ids are not consecutive: missing {id}"),
            })?;
            vec_nodes.push(node);
        }
        let mut is_child = vec![false; n];
        for r in referenced {
            if r as usize >= n {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("child id {r} out of range"),
                });
            }
            is_child[r as usize] = true;
        }
        let roots: Vec<u32> = (0..n as u32).filter(|i| !is_child[*i as usize]).collect();
        if roots.len() != 1 {
            return Err(Error::Parse {
                line: 0,
                message: format!("vtree must have exactly one root, found {}", roots.len()),
            });
        }
        let root = VtreeNodeId(roots[0]);

        // Recover the left-to-right leaf order and check in-order numbering.
        let mut order = Vec::new();
        collect_leaves(&vec_nodes, root, &mut order)?;
        let v = order.len();
        let mut position_of_var = vec![usize::MAX; v];
        for (k, var) in order.iter().enumerate() {
            let i = var.index();
            if i >= v || position_of_var[i] != usize::MAX {
                return Err(Error::Parse {
                    line: 0,
                    message: "leaf variables must be exactly 1..=V, each once".into(),
                });
            }
            position_of_var[i] = k;
        }
        let tree = Vtree {
            nodes: vec_nodes,
            root: Some(root),
            position_of_var,
            var_at_position: order,
        };
        tree.check_in_order()?;
        Ok(tree)
    }

    fn check_in_order(&self) -> Result<()> {
        let mut next = 0u32;
        let mut stack = vec![(self.root.unwrap(), false)];
        while let Some((id, visited)) = stack.pop() {
            match self.nodes[id.0 as usize] {
                VtreeNode::Leaf { .. } => {
                    if id.0 != next {
                        return Err(Error::Parse {
                            line: 0,
                            message: format!("node id {} is not its in-order position", id.0),
                        });
                    }
                    next += 1;
                }
                VtreeNode::Internal { left, right } => {
                    if visited {
                        if id.0 != next {
                            return Err(Error::Parse {
                                line: 0,
                                message: format!("node id {} is not its in-order position", id.0),
                            });
                        }
                        next += 1;
                        stack.push((right, false));
                    } else {
                        stack.push((id, true));
                        stack.push((left, false));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when every internal node's left child is a leaf.
    pub fn is_right_linear(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            VtreeNode::Leaf { .. } => true,
            VtreeNode::Internal { left, .. } => self.is_leaf(*left),
        })
    }
}

fn collect_leaves(nodes: &[VtreeNode], id: VtreeNodeId, out: &mut Vec<CircuitVar>) -> Result<()> {
    match nodes[id.0 as usize] {
        VtreeNode::Leaf { var } => out.push(var),
        VtreeNode::Internal { left, right } => {
            collect_leaves(nodes, left, out)?;
            collect_leaves(nodes, right, out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(ids: &[u32]) -> Vec<CircuitVar> {
        ids.iter().map(|v| CircuitVar::new(*v)).collect()
    }

    #[test]
    fn single_variable_is_one_leaf() {
        let t = right_linear_vtree(&vars(&[1])).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.root(), Some(VtreeNodeId(0)));
        assert_eq!(t.leaf_var(VtreeNodeId(0)), Some(CircuitVar::new(1)));
    }

    #[test]
    fn three_variables_right_linear_shape() {
        let t = right_linear_vtree(&vars(&[1, 2, 3])).unwrap();
        assert_eq!(t.node_count(), 5);
        let root = t.root().unwrap();
        let (l, r) = t.children(root).unwrap();
        assert_eq!(t.leaf_var(l), Some(CircuitVar::new(1)));
        let (rl, rr) = t.children(r).unwrap();
        assert_eq!(t.leaf_var(rl), Some(CircuitVar::new(2)));
        assert_eq!(t.leaf_var(rr), Some(CircuitVar::new(3)));
        assert!(t.is_right_linear());
    }

    #[test]
    fn in_order_ids_are_consecutive() {
        for v in 1..8usize {
            let order: Vec<CircuitVar> = (1..=v as u32).map(CircuitVar::new).collect();
            let t = right_linear_vtree(&order).unwrap();
            assert_eq!(t.node_count(), 2 * v - 1);
            t.check_in_order().unwrap();
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(right_linear_vtree(&vars(&[1, 2, 1])).is_err());
        assert!(right_linear_vtree(&[]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let order = vars(&[2, 1, 3, 4]);
        let t = right_linear_vtree(&order).unwrap();
        let mut buf = Vec::new();
        t.save(&mut buf).unwrap();
        let back = Vtree::load(buf.as_slice()).unwrap();
        assert_eq!(t, back);
        let mut buf2 = Vec::new();
        back.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
