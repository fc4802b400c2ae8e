//! Dataset ingestion, variable metadata, splitting, and synthetic cohorts.
//!
//! Data files are plain CSV with a header row and 0/1 cells. Variable
//! metadata lives in a sidecar text file, one line per variable:
//! `<name> <disease|drug> <K|L|-> <T1|T2>`, `#` starting comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{BayesianNetwork, VariableId};
use crate::num::Scalar;

/// Row-major binary records with column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    cells: Vec<u8>,
    n_cols: usize,
}

impl Dataset {
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        let n_cols = names.len();
        let mut cells = Vec::with_capacity(rows.len() * n_cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Input(format!(
                    "row {r} has {} cells, expected {n_cols}",
                    row.len()
                )));
            }
            for (c, cell) in row.iter().enumerate() {
                if *cell > 1 {
                    return Err(Error::Input(format!(
                        "cell at row {r}, column {c} is not binary"
                    )));
                }
                cells.push(*cell);
            }
        }
        Ok(Dataset {
            names,
            cells,
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.cells.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.n_cols + col] != 0
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.cells[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Fraction of rows with a 1 in the column.
    pub fn marginal(&self, col: usize) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        let ones: u64 = (0..self.n_rows()).filter(|r| self.get(*r, col)).count() as u64;
        ones as f64 / self.n_rows() as f64
    }

    fn subset(&self, rows: &[usize]) -> Dataset {
        let mut cells = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        Dataset {
            names: self.names.clone(),
            cells,
            n_cols: self.n_cols,
        }
    }

    pub fn save_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "{}", self.names.join(",")).unwrap();
        for r in 0..self.n_rows() {
            let row: Vec<&str> = self
                .row(r)
                .iter()
                .map(|c| if *c != 0 { "1" } else { "0" })
                .collect();
            writeln!(buf, "{}", row.join(",")).unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum VarKind {
    Disease,
    Drug,
}

/// Disease group tag: K cardiovascular, L musculo-skeletal.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum GroupTag {
    K,
    L,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Period {
    T1,
    T2,
}

/// Per-variable metadata carried by the sidecar file.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableMeta {
    pub name: String,
    pub kind: VarKind,
    pub group: Option<GroupTag>,
    pub period: Period,
}

impl VariableMeta {
    pub fn disease(name: &str, group: GroupTag, period: Period) -> Self {
        VariableMeta {
            name: name.to_string(),
            kind: VarKind::Disease,
            group: Some(group),
            period,
        }
    }

    pub fn drug(name: &str) -> Self {
        VariableMeta {
            name: name.to_string(),
            kind: VarKind::Drug,
            group: None,
            period: Period::T1,
        }
    }

    /// Disease code with the `_T1`/`_T2` suffix stripped.
    pub fn code(&self) -> &str {
        self.name
            .strip_suffix("_T1")
            .or_else(|| self.name.strip_suffix("_T2"))
            .unwrap_or(&self.name)
    }
}

/// Validates metadata internally and against a header.
pub fn check_meta(metas: &[VariableMeta], names: &[String]) -> Result<()> {
    if metas.len() != names.len() {
        return Err(Error::Schema(format!(
            "metadata describes {} variables, data has {}",
            metas.len(),
            names.len()
        )));
    }
    for (meta, name) in metas.iter().zip(names) {
        if &meta.name != name {
            return Err(Error::Schema(format!(
                "metadata name {} does not match column {}",
                meta.name, name
            )));
        }
        if meta.kind == VarKind::Drug && meta.period != Period::T1 {
            return Err(Error::Schema(format!(
                "drug {} must have period T1",
                meta.name
            )));
        }
        if meta.kind == VarKind::Disease && meta.group.is_none() {
            return Err(Error::Schema(format!(
                "disease {} must carry a group tag",
                meta.name
            )));
        }
    }
    // every T2 disease needs a T1 counterpart with the same code
    for meta in metas {
        if meta.kind == VarKind::Disease && meta.period == Period::T2 {
            let found = metas.iter().any(|m| {
                m.kind == VarKind::Disease
                    && m.period == Period::T1
                    && m.code() == meta.code()
                    && m.group == meta.group
            });
            if !found {
                return Err(Error::Schema(format!(
                    "T2 disease {} has no T1 counterpart",
                    meta.name
                )));
            }
        }
    }
    Ok(())
}

pub fn save_meta<W: Write>(metas: &[VariableMeta], mut out: W) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "# name kind group period").unwrap();
    for m in metas {
        let kind = match m.kind {
            VarKind::Disease => "disease",
            VarKind::Drug => "drug",
        };
        let group = match m.group {
            Some(GroupTag::K) => "K",
            Some(GroupTag::L) => "L",
            None => "-",
        };
        let period = match m.period {
            Period::T1 => "T1",
            Period::T2 => "T2",
        };
        writeln!(buf, "{} {kind} {group} {period}", m.name).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn load_meta<R: BufRead>(reader: R) -> Result<Vec<VariableMeta>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: "metadata line must be `<name> <disease|drug> <K|L|-> <T1|T2>`".into(),
            });
        }
        let kind = match toks[1] {
            "disease" => VarKind::Disease,
            "drug" => VarKind::Drug,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown kind `{other}`"),
                })
            }
        };
        let group = match toks[2] {
            "K" => Some(GroupTag::K),
            "L" => Some(GroupTag::L),
            "-" => None,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown group `{other}`"),
                })
            }
        };
        let period = match toks[3] {
            "T1" => Period::T1,
            "T2" => Period::T2,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown period `{other}`"),
                })
            }
        };
        out.push(VariableMeta {
            name: toks[0].to_string(),
            kind,
            group,
            period,
        });
    }
    Ok(out)
}

/// Sidecar metadata path next to a data file: the extension becomes `meta`.
pub fn meta_path_for(data_path: &Path) -> PathBuf {
    data_path.with_extension("meta")
}

/// Loads a CSV with its sidecar metadata file (`<stem>.meta` alongside).
pub fn load_csv(path: &Path) -> Result<(Dataset, Vec<VariableMeta>)> {
    load_csv_with_meta(path, &meta_path_for(path))
}

pub fn load_csv_with_meta(
    data_path: &Path,
    meta_path: &Path,
) -> Result<(Dataset, Vec<VariableMeta>)> {
    let data = load_csv_only(data_path)?;
    let metas = load_meta(BufReader::new(File::open(meta_path).map_err(|e| {
        Error::Schema(format!(
            "missing metadata sidecar {}: {e}",
            meta_path.display()
        ))
    })?))?;
    check_meta(&metas, data.names())?;
    Ok((data, metas))
}

/// Loads just the CSV, validating every cell is 0 or 1.
pub fn load_csv_only(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: format!("bad header: {e}"),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let n_cols = names.len();
    let mut cells: Vec<u8> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: r + 2,
            message: format!("bad record: {e}"),
        })?;
        if record.len() != n_cols {
            return Err(Error::Parse {
                line: r + 2,
                message: format!("row has {} cells, expected {n_cols}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            match cell.trim() {
                "0" => cells.push(0),
                "1" => cells.push(1),
                other => {
                    return Err(Error::Parse {
                        line: r + 2,
                        message: format!(
                            "cell value `{other}` at row {}, column {} ({}) is not 0/1",
                            r + 1,
                            c + 1,
                            names[c]
                        ),
                    })
                }
            }
        }
    }
    Ok(Dataset {
        names,
        cells,
        n_cols,
    })
}

/// Deterministic shuffle split into (train, valid, test) with
/// largest-remainder rounding of the proportions.
pub fn split_dataset(
    data: &Dataset,
    proportions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Input("cannot split an empty dataset".into()));
    }
    let (a, b, c) = proportions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "proportions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let exact = [a * n as f64, b * n as f64, c * n as f64];
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut remainder = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| {
        let fi = exact[i] - exact[i].floor();
        let fj = exact[j] - exact[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for &i in &order {
        if remainder == 0 {
            break;
        }
        sizes[i] += 1;
        remainder -= 1;
    }

    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let train = data.subset(&rows[..sizes[0]]);
    let valid = data.subset(&rows[sizes[0]..sizes[0] + sizes[1]]);
    let test = data.subset(&rows[sizes[0] + sizes[1]..]);
    Ok((train, valid, test))
}

/// Ground-truth network plus sampling parameters for a synthetic cohort.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub network: BayesianNetwork<f64>,
    pub n_rows: usize,
    pub seed: u64,
}

/// Ancestral sampling in network order, deterministic under the seed.
pub fn generate(spec: &SyntheticSpec) -> Dataset {
    let bn = &spec.network;
    let v = bn.var_count();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells = Vec::with_capacity(spec.n_rows * v);
    let mut row = vec![0u8; v];
    for _ in 0..spec.n_rows {
        for var in bn.ordering() {
            let p = {
                let row_ref = &row;
                bn.cpt(*var)
                    .prob_true(&|w: VariableId| row_ref[w.index()] != 0)
                    .to_f64_lossy()
            };
            row[var.index()] = (rng.gen::<f64>() < p) as u8;
        }
        cells.extend_from_slice(&row);
    }
    Dataset {
        names: bn.names().to_vec(),
        cells,
        n_cols: v,
    }
}

/// Drug groups and their baseline prevalences.
pub const DRUG_PREVALENCE: [(&str, f64); 16] = [
    ("C01", 0.072),
    ("C02", 0.060),
    ("C03", 0.006),
    ("C04", 0.142),
    ("C05", 0.001),
    ("C07", 0.037),
    ("C08", 0.162),
    ("C09", 0.066),
    ("C10", 0.145),
    ("M01", 0.123),
    ("M02", 0.333),
    ("M03", 0.005),
    ("M04", 0.002),
    ("M05", 0.011),
    ("M09", 0.021),
    ("N02", 0.008),
];

pub fn drug_prevalence(code: &str) -> Option<f64> {
    DRUG_PREVALENCE
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, p)| *p)
}

/// Demo cohort: 4 drugs and 4+4 paired diseases per group (20 variables).
///
/// Drug prevalences come from the baseline prevalence table; disease
/// dynamics make each T2 disease persist from its T1 state, with three drug
/// effects (C01 and M02 raise cardiovascular T2 diseases, M01 raises a
/// musculo-skeletal one) and one drug (C08) disconnected from every disease.
pub fn demo_cohort_truth() -> (BayesianNetwork<f64>, Vec<VariableMeta>) {
    use crate::model::CptTree;

    let drugs = ["C01", "C08", "M01", "M02"];
    let k_codes = ["K74", "K77", "K86", "K90"];
    let l_codes = ["L84", "L88", "L90", "L95"];

    let mut metas: Vec<VariableMeta> = Vec::new();
    for d in drugs {
        metas.push(VariableMeta::drug(d));
    }
    for c in k_codes {
        metas.push(VariableMeta::disease(
            &format!("{c}_T1"),
            GroupTag::K,
            Period::T1,
        ));
    }
    for c in l_codes {
        metas.push(VariableMeta::disease(
            &format!("{c}_T1"),
            GroupTag::L,
            Period::T1,
        ));
    }
    for c in k_codes {
        metas.push(VariableMeta::disease(
            &format!("{c}_T2"),
            GroupTag::K,
            Period::T2,
        ));
    }
    for c in l_codes {
        metas.push(VariableMeta::disease(
            &format!("{c}_T2"),
            GroupTag::L,
            Period::T2,
        ));
    }

    let names: Vec<String> = metas.iter().map(|m| m.name.clone()).collect();
    let index: HashMap<String, VariableId> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), VariableId(i as u32)))
        .collect();
    let id = |name: &str| *index.get(name).unwrap_or_else(|| panic!("missing {name}"));
    let mut bn = BayesianNetwork::independent(names, 1.0).unwrap();

    for d in drugs {
        let p = drug_prevalence(d).unwrap();
        bn.set_cpt(id(d), CptTree::leaf(p)).unwrap();
    }
    let t1_prev = [
        ("K74_T1", 0.20),
        ("K77_T1", 0.12),
        ("K86_T1", 0.25),
        ("K90_T1", 0.08),
        ("L84_T1", 0.28),
        ("L88_T1", 0.15),
        ("L90_T1", 0.22),
        ("L95_T1", 0.10),
    ];
    for (name, p) in t1_prev {
        bn.set_cpt(id(name), CptTree::leaf(p)).unwrap();
    }

    // persistence: P(T2 | T1=1) high, P(T2 | T1=0) low
    let persist = |bn: &mut BayesianNetwork<f64>, code: &str, high: f64, low: f64| {
        let t1 = bn.variable_named(&format!("{code}_T1")).unwrap();
        let t2 = bn.variable_named(&format!("{code}_T2")).unwrap();
        let tree = CptTree::split(t1, CptTree::leaf(high), CptTree::leaf(low));
        bn.set_cpt(t2, tree).unwrap();
    };
    persist(&mut bn, "K77", 0.70, 0.10);
    persist(&mut bn, "K90", 0.65, 0.06);
    persist(&mut bn, "L88", 0.72, 0.12);
    persist(&mut bn, "L95", 0.66, 0.08);

    // drug-affected diseases: split on the drug first, then on persistence
    let affected = |bn: &mut BayesianNetwork<f64>,
                    code: &str,
                    drug: &str,
                    on_drug: (f64, f64),
                    off_drug: (f64, f64)| {
        let t1 = bn.variable_named(&format!("{code}_T1")).unwrap();
        let t2 = bn.variable_named(&format!("{code}_T2")).unwrap();
        let d = bn.variable_named(drug).unwrap();
        let tree = CptTree::split(
            d,
            CptTree::split(t1, CptTree::leaf(on_drug.0), CptTree::leaf(on_drug.1)),
            CptTree::split(t1, CptTree::leaf(off_drug.0), CptTree::leaf(off_drug.1)),
        );
        bn.set_cpt(t2, tree).unwrap();
    };
    // C01 worsens K74, M02 worsens K86 (cross-group), M01 worsens L84
    affected(&mut bn, "K74", "C01", (0.85, 0.40), (0.70, 0.12));
    affected(&mut bn, "K86", "M02", (0.82, 0.35), (0.68, 0.14));
    affected(&mut bn, "L84", "M01", (0.86, 0.42), (0.70, 0.15));
    // L90 persists with no drug effect
    persist(&mut bn, "L90", 0.68, 0.11);

    bn.validate().unwrap();
    check_meta(&metas, bn.names()).unwrap();
    (bn, metas)
}
