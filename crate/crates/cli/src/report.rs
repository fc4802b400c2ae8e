//! Report assembly for the analyze command: the odds grid, baseline
//! denominators, and increment distributions, in TSV and human-readable
//! forms.

use sddbn::data::{GroupTag, VarKind, VariableMeta};
use sddbn::error::{Error, Result};
use sddbn::model::VariableId;
use sddbn::query::{
    count_increase_prob, increase_odds, increment_distribution, Evidence, GroupSpec,
};
use sddbn::CompiledModel64;

pub struct GroupReport {
    pub tag: GroupTag,
    pub baseline_increase: f64,
    /// increment probabilities for k = 1..=k_max, conditioned on increase
    pub increments: Vec<f64>,
}

pub struct DrugRow {
    pub name: String,
    /// odds per group, `None` when the drug has probability zero
    pub odds: Vec<Option<f64>>,
}

pub struct Report {
    pub groups: Vec<GroupReport>,
    pub drugs: Vec<DrugRow>,
    pub k_max: usize,
}

fn group_label(tag: GroupTag) -> &'static str {
    match tag {
        GroupTag::K => "cardiovascular",
        GroupTag::L => "musculo_skeletal",
    }
}

fn group_code(tag: GroupTag) -> &'static str {
    match tag {
        GroupTag::K => "K",
        GroupTag::L => "L",
    }
}

pub fn build_report(
    model: &CompiledModel64,
    metas: &[VariableMeta],
    k_max: usize,
) -> Result<Report> {
    let mut groups = Vec::new();
    let mut specs: Vec<(GroupTag, GroupSpec)> = Vec::new();
    for tag in [GroupTag::K, GroupTag::L] {
        let spec = GroupSpec::from_meta(metas, tag)?;
        if spec.t1_vars.is_empty() {
            return Err(Error::Schema(format!(
                "metadata declares no diseases for group {tag:?}"
            )));
        }
        let baseline = count_increase_prob(model, &spec, &Evidence::empty())?;
        let dist = increment_distribution(model, &spec, k_max)?;
        groups.push(GroupReport {
            tag,
            baseline_increase: baseline,
            increments: dist.probs,
        });
        specs.push((tag, spec));
    }

    let mut drugs = Vec::new();
    for (i, meta) in metas.iter().enumerate() {
        if meta.kind != VarKind::Drug {
            continue;
        }
        let var = VariableId(i as u32);
        let mut odds = Vec::new();
        for (_, spec) in &specs {
            match increase_odds(model, spec, var) {
                Ok(o) => odds.push(Some(o)),
                Err(Error::UndefinedConditional(_)) => odds.push(None),
                Err(e) => return Err(e),
            }
        }
        drugs.push(DrugRow {
            name: meta.name.clone(),
            odds,
        });
    }
    Ok(Report {
        groups,
        drugs,
        k_max,
    })
}

impl Report {
    /// Machine layout, three sections: odds grid (rows = drug groups,
    /// columns = disease groups), baseline denominators, increment grid.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# odds\n");
        out.push_str("drug");
        for g in &self.groups {
            out.push('\t');
            out.push_str(group_label(g.tag));
        }
        out.push('\n');
        for d in &self.drugs {
            out.push_str(&d.name);
            for o in &d.odds {
                out.push('\t');
                match o {
                    Some(v) => out.push_str(&format!("{v:.9}")),
                    None => out.push_str("undefined"),
                }
            }
            out.push('\n');
        }
        out.push_str("# denominators\n");
        out.push_str("group\tbaseline_increase_prob\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{}\t{:.9}\n",
                group_code(g.tag),
                g.baseline_increase
            ));
        }
        out.push_str("# increments\n");
        out.push_str("group");
        for k in 1..=self.k_max {
            out.push_str(&format!("\tk{k}"));
        }
        out.push('\n');
        for g in &self.groups {
            out.push_str(group_code(g.tag));
            for p in &g.increments {
                out.push_str(&format!("\t{p:.9}"));
            }
            out.push('\n');
        }
        out
    }

    /// Two-decimal tables shaped like the published ones.
    pub fn to_human(&self) -> String {
        let mut out = String::new();
        out.push_str("Odds of additional diseases within a group after a drug treatment\n");
        out.push_str(&format!("{:<10}", "drug"));
        for g in &self.groups {
            out.push_str(&format!("{:>18}", group_label(g.tag)));
        }
        out.push('\n');
        for d in &self.drugs {
            out.push_str(&format!("{:<10}", d.name));
            for o in &d.odds {
                match o {
                    Some(v) => out.push_str(&format!("{v:>18.2}")),
                    None => out.push_str(&format!("{:>18}", "undefined")),
                }
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str("Baseline probability of an increase per group\n");
        for g in &self.groups {
            out.push_str(&format!(
                "  {} ({}): {:.2}\n",
                group_code(g.tag),
                group_label(g.tag),
                g.baseline_increase
            ));
        }
        out.push('\n');
        out.push_str("Probability of exactly k more diseases, given an increase\n");
        out.push_str(&format!("{:<10}", "group"));
        for k in 1..=self.k_max {
            out.push_str(&format!("{:>8}", format!("k={k}")));
        }
        out.push('\n');
        for g in &self.groups {
            out.push_str(&format!("{:<10}", group_code(g.tag)));
            for p in &g.increments {
                out.push_str(&format!("{p:>8.2}"));
            }
            out.push('\n');
        }
        out
    }
}
