//! Probabilistic queries against a compiled model: conditionals, symmetric
//! count comparisons between the two observation periods, the drug odds
//! analysis, and increment distributions. Also the brute-force joint oracle
//! used throughout the test suites.

use crate::data::{GroupTag, Period, VarKind, VariableMeta};
use crate::encode::CompiledModel;
use crate::error::{Error, Result};
use crate::model::{BayesianNetwork, VariableId};
use crate::num::Scalar;
use crate::semiring::{Semiring, ShiftPolynomial};

/// A consistent partial assignment.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Evidence {
    assignments: Vec<(VariableId, bool)>,
}

impl Evidence {
    pub fn empty() -> Self {
        Evidence::default()
    }

    pub fn single(var: VariableId, value: bool) -> Self {
        Evidence {
            assignments: vec![(var, value)],
        }
    }

    pub fn new(mut pairs: Vec<(VariableId, bool)>) -> Result<Self> {
        pairs.sort();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Input(format!(
                    "variable {} assigned twice in evidence",
                    w[0].0
                )));
            }
        }
        Ok(Evidence { assignments: pairs })
    }

    pub fn assignments(&self) -> &[(VariableId, bool)] {
        &self.assignments
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Union of two evidence sets; agreeing duplicates collapse,
    /// contradictions are an input error.
    pub fn union(&self, other: &Evidence) -> Result<Evidence> {
        let mut pairs = self.assignments.clone();
        for (var, value) in &other.assignments {
            match pairs.iter().find(|(w, _)| w == var) {
                Some((_, b)) if b != value => {
                    return Err(Error::Input(format!(
                        "evidence sets disagree on variable {var}"
                    )))
                }
                Some(_) => {}
                None => pairs.push((*var, *value)),
            }
        }
        pairs.sort();
        Ok(Evidence {
            assignments: pairs,
        })
    }

    /// Whether a complete assignment satisfies the evidence.
    pub fn matches<F: Fn(VariableId) -> bool>(&self, assignment: &F) -> bool {
        self.assignments
            .iter()
            .all(|(var, value)| assignment(*var) == *value)
    }
}

/// Paired period variables of one disease group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSpec {
    pub tag: GroupTag,
    pub t1_vars: Vec<VariableId>,
    pub t2_vars: Vec<VariableId>,
}

impl GroupSpec {
    pub fn new(tag: GroupTag, t1_vars: Vec<VariableId>, t2_vars: Vec<VariableId>) -> Result<Self> {
        if t1_vars.len() != t2_vars.len() {
            return Err(Error::Input(format!(
                "group {tag:?} has {} T1 variables but {} T2 variables",
                t1_vars.len(),
                t2_vars.len()
            )));
        }
        if t1_vars.iter().any(|v| t2_vars.contains(v)) {
            return Err(Error::Input(
                "T1 and T2 variable sets must be disjoint".into(),
            ));
        }
        Ok(GroupSpec {
            tag,
            t1_vars,
            t2_vars,
        })
    }

    /// Builds the group's spec from variable metadata, pairing periods by
    /// disease code.
    pub fn from_meta(metas: &[VariableMeta], tag: GroupTag) -> Result<Self> {
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        for (i, m) in metas.iter().enumerate() {
            if m.kind == VarKind::Disease && m.group == Some(tag) {
                match m.period {
                    Period::T1 => t1.push((m.code().to_string(), VariableId(i as u32))),
                    Period::T2 => t2.push((m.code().to_string(), VariableId(i as u32))),
                }
            }
        }
        t1.sort();
        t2.sort();
        let codes1: Vec<&String> = t1.iter().map(|(c, _)| c).collect();
        let codes2: Vec<&String> = t2.iter().map(|(c, _)| c).collect();
        if codes1 != codes2 {
            return Err(Error::Schema(format!(
                "group {tag:?} periods are not paired by code: T1 {codes1:?} vs T2 {codes2:?}"
            )));
        }
        GroupSpec::new(
            tag,
            t1.into_iter().map(|(_, v)| v).collect(),
            t2.into_iter().map(|(_, v)| v).collect(),
        )
    }
}

/// Distribution of the increment size, conditioned on an increase.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementDistribution<T> {
    pub k_max: usize,
    /// `probs[k-1]` is the probability of exactly `k` more diseases, given
    /// an increase; truncated at `k_max`, normalized over the full support.
    pub probs: Vec<T>,
}

fn check_vars<T: Scalar>(model: &CompiledModel<T>, vars: &[VariableId]) -> Result<()> {
    for v in vars {
        if v.index() >= model.var_count() {
            return Err(Error::Input(format!("variable {v} not in the model")));
        }
    }
    Ok(())
}

/// `P(target | given)` by two weighted model counts.
pub fn probability<T: Scalar + Semiring>(
    model: &CompiledModel<T>,
    target: &Evidence,
    given: &Evidence,
) -> Result<T> {
    let merged = target.union(given)?;
    let denom_w = model.condition_on_evidence(given.assignments())?;
    let denom = model.manager.wmc(model.root, &denom_w)?;
    if Semiring::is_zero(&denom) {
        return Err(Error::UndefinedConditional(
            "conditioning evidence has probability zero".into(),
        ));
    }
    let num_w = model.condition_on_evidence(merged.assignments())?;
    let num = model.manager.wmc(model.root, &num_w)?;
    Ok(num / denom)
}

/// One generating-function pass: coefficient `d` is the probability mass of
/// assignments consistent with the evidence whose group count changes by `d`
/// from T1 to T2.
pub fn signed_count_distribution<T: Scalar + Semiring>(
    model: &CompiledModel<T>,
    spec: &GroupSpec,
    given: &Evidence,
) -> Result<ShiftPolynomial<T>> {
    check_vars(model, &spec.t1_vars)?;
    check_vars(model, &spec.t2_vars)?;
    let base = model.condition_on_evidence(given.assignments())?;
    let mut shift = vec![0i32; base.var_count()];
    for v in &spec.t2_vars {
        shift[(model.indicator(*v).get() - 1) as usize] = 1;
    }
    for v in &spec.t1_vars {
        shift[(model.indicator(*v).get() - 1) as usize] = -1;
    }
    let weights = base.map(|var, positive, w| {
        let d = if positive {
            shift[(var.get() - 1) as usize]
        } else {
            0
        };
        ShiftPolynomial::monomial(d, w.clone())
    });
    model.manager.gf_wmc(model.root, &weights)
}

/// `P(# group diseases in T2 > # in T1 | given)`.
pub fn count_increase_prob<T: Scalar + Semiring>(
    model: &CompiledModel<T>,
    spec: &GroupSpec,
    given: &Evidence,
) -> Result<T> {
    let poly = signed_count_distribution(model, spec, given)?;
    let total = poly.total();
    if Semiring::is_zero(&total) {
        return Err(Error::UndefinedConditional(
            "evidence has probability zero".into(),
        ));
    }
    Ok(poly.total_where(|d| d > 0) / total)
}

/// Ratio of the increase probability after the drug over the baseline
/// increase probability. 1 exactly when the drug is independent of the
/// increase event.
pub fn increase_odds<T: Scalar + Semiring>(
    model: &CompiledModel<T>,
    spec: &GroupSpec,
    drug: VariableId,
) -> Result<T> {
    check_vars(model, &[drug])?;
    let with_drug =
        count_increase_prob(model, spec, &Evidence::single(drug, true)).map_err(|e| match e {
            Error::UndefinedConditional(_) => Error::UndefinedConditional(format!(
                "drug {drug} has probability zero under the model"
            )),
            other => other,
        })?;
    let baseline = count_increase_prob(model, spec, &Evidence::empty())?;
    if Semiring::is_zero(&baseline) {
        return Err(Error::UndefinedConditional(
            "baseline increase probability is zero".into(),
        ));
    }
    Ok(with_drug / baseline)
}

/// `p_k = P(exactly k more | increase)` for `k = 1..=k_max`, from the same
/// generating-function pass as the increase probability.
pub fn increment_distribution<T: Scalar + Semiring>(
    model: &CompiledModel<T>,
    spec: &GroupSpec,
    k_max: usize,
) -> Result<IncrementDistribution<T>> {
    if k_max < 1 {
        return Err(Error::Input("k_max must be at least 1".into()));
    }
    let poly = signed_count_distribution(model, spec, &Evidence::empty())?;
    let increase_mass = poly.total_where(|d| d > 0);
    if Semiring::is_zero(&increase_mass) {
        return Err(Error::UndefinedConditional(
            "increase event has probability zero".into(),
        ));
    }
    // full-support normalization: the conditional probabilities over all
    // positive offsets must sum to one, regardless of the reported k_max
    let mut full = <T as Semiring>::zero();
    for (d, c) in poly.terms() {
        if d > 0 {
            full = full + c.clone() / increase_mass.clone();
        }
    }
    let one = <T as Semiring>::one();
    let drift = if full > one {
        full.clone() - one
    } else {
        one - full.clone()
    };
    if drift.to_f64_lossy() > 1e-9 {
        return Err(Error::Internal(format!(
            "increment distribution does not normalize: {full:?}"
        )));
    }
    let probs = (1..=k_max)
        .map(|k| poly.coeff(k as i32) / increase_mass.clone())
        .collect();
    Ok(IncrementDistribution { k_max, probs })
}

/// Exhaustive joint distribution of a network; assignment `a` sets variable
/// `i` to bit `i` of `a`.
pub struct JointTable<T> {
    pub n_vars: usize,
    probs: Vec<T>,
}

impl<T: Scalar> JointTable<T> {
    pub fn prob(&self, assignment: u32) -> &T {
        &self.probs[assignment as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &T)> {
        self.probs.iter().enumerate().map(|(a, p)| (a as u32, p))
    }

    /// Total mass of assignments satisfying the evidence.
    pub fn mass(&self, evidence: &Evidence) -> T {
        let mut total = T::zero();
        for (a, p) in self.iter() {
            let assignment = |v: VariableId| (a >> v.index()) & 1 == 1;
            if evidence.matches(&assignment) {
                total = total + p.clone();
            }
        }
        total
    }
}

/// Brute-force joint by direct CPD products; refuses more than 20 variables.
pub fn brute_force_joint<T: Scalar>(bn: &BayesianNetwork<T>) -> Result<JointTable<T>> {
    let v = bn.var_count();
    if v > 20 {
        return Err(Error::Input(format!(
            "brute-force oracle is limited to 20 variables, network has {v}"
        )));
    }
    let n = 1u32 << v;
    let mut probs = Vec::with_capacity(n as usize);
    let mut total = T::zero();
    for a in 0..n {
        let assignment = |var: VariableId| (a >> var.index()) & 1 == 1;
        let p = bn.joint_prob(&assignment);
        total = total + p.clone();
        probs.push(p);
    }
    let one = T::one();
    let drift = if total > one {
        total.clone() - one
    } else {
        one - total.clone()
    };
    if drift.to_f64_lossy() > 1e-12 {
        return Err(Error::Internal(format!(
            "joint probabilities sum to {total:?}, not 1"
        )));
    }
    Ok(JointTable { n_vars: v, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::encode;
    use crate::model::CptTree;

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
    fn self_conditioning_is_one() {
        let model = encode(&chain()).unwrap();
        let e = Evidence::single(VariableId(0), true);
        let p = probability(&model, &e, &e).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_over_empty_is_one() {
        let model = encode(&chain()).unwrap();
        let p = probability(&model, &Evidence::empty(), &Evidence::empty()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_marginal() {
        let model = encode(&chain()).unwrap();
        let p = probability(
            &model,
            &Evidence::single(VariableId(1), true),
            &Evidence::empty(),
        )
        .unwrap();
        assert!((p - 0.31).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_evidence_is_undefined() {
        // X forced essentially true, conditioning on the epsilon branch is
        // fine; conditioning on contradictory evidence is an input error
        let model = encode(&chain()).unwrap();
        let t = Evidence::single(VariableId(0), true);
        let g = Evidence::single(VariableId(0), false);
        assert!(matches!(
            probability(&model, &t, &g),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn evidence_validation() {
        assert!(Evidence::new(vec![(VariableId(0), true), (VariableId(0), false)]).is_err());
        let a = Evidence::single(VariableId(0), true);
        let b = Evidence::single(VariableId(0), false);
        assert!(a.union(&b).is_err());
        assert!(a.union(&a).unwrap().assignments().len() == 1);
    }

    /// Independent fair coins, one disease pair per group tag.
    fn coin_pair() -> (BayesianNetwork<f64>, GroupSpec) {
        let mut bn = BayesianNetwork::independent(
            vec!["D_T1".into(), "D_T2".into()],
            1.0,
        )
        .unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(0.5)).unwrap();
        bn.set_cpt(VariableId(1), CptTree::leaf(0.5)).unwrap();
        let spec = GroupSpec::new(GroupTag::K, vec![VariableId(0)], vec![VariableId(1)]).unwrap();
        (bn, spec)
    }

    #[test]
    fn coin_pair_increase_probability() {
        let (bn, spec) = coin_pair();
        let model = encode(&bn).unwrap();
        let p = count_increase_prob(&model, &spec, &Evidence::empty()).unwrap();
        assert!((p - 0.25).abs() < 1e-12);
    }

    #[test]
    fn copied_pair_has_no_increase() {
        // near-deterministic copy: leaf probabilities must stay inside (0,1)
        let mut bn = BayesianNetwork::independent(
            vec!["D_T1".into(), "D_T2".into()],
            1.0,
        )
        .unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(0.5)).unwrap();
        bn.set_cpt(
            VariableId(1),
            CptTree::split(
                VariableId(0),
                CptTree::leaf(1.0 - 1e-12),
                CptTree::leaf(1e-12),
            ),
        )
        .unwrap();
        let spec = GroupSpec::new(GroupTag::K, vec![VariableId(0)], vec![VariableId(1)]).unwrap();
        let model = encode(&bn).unwrap();
        let p = count_increase_prob(&model, &spec, &Evidence::empty()).unwrap();
        assert!(p < 1e-9, "increase probability {p} should vanish");
    }

    #[test]
    fn disconnected_drug_has_odds_one() {
        let mut bn = BayesianNetwork::<f64>::independent(
            vec!["N02".into(), "D_T1".into(), "D_T2".into()],
            1.0,
        )
        .unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(0.1)).unwrap();
        bn.set_cpt(VariableId(1), CptTree::leaf(0.4)).unwrap();
        bn.set_cpt(
            VariableId(2),
            CptTree::split(VariableId(1), CptTree::leaf(0.7), CptTree::leaf(0.2)),
        )
        .unwrap();
        let spec = GroupSpec::new(GroupTag::K, vec![VariableId(1)], vec![VariableId(2)]).unwrap();
        let model = encode(&bn).unwrap();
        let odds = increase_odds(&model, &spec, VariableId(0)).unwrap();
        assert!((odds - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_increment_is_always_one() {
        let (bn, spec) = coin_pair();
        let model = encode(&bn).unwrap();
        let dist = increment_distribution(&model, &spec, 4).unwrap();
        assert!((dist.probs[0] - 1.0).abs() < 1e-12);
        assert!(dist.probs[1..].iter().all(|p| *p == 0.0));
    }

    #[test]
    fn brute_force_single_variable() {
        let mut bn = BayesianNetwork::<f64>::independent(vec!["X".into()], 1.0).unwrap();
        bn.set_cpt(VariableId(0), CptTree::leaf(0.3)).unwrap();
        let joint = brute_force_joint(&bn).unwrap();
        assert!((joint.prob(0b1) - 0.3).abs() < 1e-15);
        assert!((joint.prob(0b0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn brute_force_chain_matches_hand_products() {
        let joint = brute_force_joint(&chain()).unwrap();
        // assignment bit 0 = X, bit 1 = Y
        assert!((joint.prob(0b11) - 0.24).abs() < 1e-15);
        assert!((joint.prob(0b01) - 0.06).abs() < 1e-15);
        assert!((joint.prob(0b10) - 0.07).abs() < 1e-15);
        assert!((joint.prob(0b00) - 0.63).abs() < 1e-15);
    }

    #[test]
    fn brute_force_refuses_large_networks() {
        let names: Vec<String> = (0..21).map(|i| format!("X{i}")).collect();
        let bn = BayesianNetwork::<f64>::independent(names, 1.0).unwrap();
        assert!(matches!(brute_force_joint(&bn), Err(Error::Input(_))));
    }

    #[test]
    fn group_spec_from_meta_pairs_by_code() {
        use crate::data::VariableMeta;
        let metas = vec![
            VariableMeta::drug("N02"),
            VariableMeta::disease("K86_T1", GroupTag::K, Period::T1),
            VariableMeta::disease("K74_T1", GroupTag::K, Period::T1),
            VariableMeta::disease("K74_T2", GroupTag::K, Period::T2),
            VariableMeta::disease("K86_T2", GroupTag::K, Period::T2),
        ];
        let spec = GroupSpec::from_meta(&metas, GroupTag::K).unwrap();
        assert_eq!(spec.t1_vars, vec![VariableId(2), VariableId(1)]);
        assert_eq!(spec.t2_vars, vec![VariableId(3), VariableId(4)]);
    }
}
