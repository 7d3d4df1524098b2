//! Syntactic instance features, feature CSV files and min-max scaling.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csp::{Constraint, ConstraintKind, CspInstance, Formula, Global, Polarity, Term};

/// Version tag of the built-in catalog. Feature vectors are only comparable
/// within one version.
pub const CATALOG_VERSION: &str = "csp-v1";

/// Catalog version assigned to feature tables read from CSV whose header is
/// not the built-in catalog.
pub const EXTERNAL_CATALOG_VERSION: &str = "external";

/// How a feature reacts when every constraint of an instance is duplicated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Depends only on the variables.
    Variable,
    /// Additive over constraints: doubles.
    Count,
    /// Percentages, averages and maxima: unchanged.
    Ratio,
}

use FeatureKind::{Count, Ratio, Variable};

const BUILTIN: &[(&str, FeatureKind)] = &[
    // variables
    ("num_int_vars", Variable),
    ("num_bool_vars", Variable),
    ("num_vars", Variable),
    ("num_noncontiguous_domains", Variable),
    ("min_domain_size", Variable),
    ("max_domain_size", Variable),
    ("avg_domain_size", Variable),
    ("stddev_domain_size", Variable),
    ("sum_log2_domain_size", Variable),
    // constraint census
    ("num_constraints", Count),
    ("num_intensional_constraints", Count),
    ("num_extensional_constraints", Count),
    ("num_global_constraints", Count),
    ("pct_intensional", Ratio),
    ("pct_extensional", Ratio),
    ("pct_global", Ratio),
    // operators
    ("num_arithmetic_constraints", Count),
    ("num_linear_constraints", Count),
    ("num_comparisons", Count),
    ("num_additions", Count),
    ("num_multiplications", Count),
    ("sum_domain_size_in_multiplications", Count),
    ("num_div_mod", Count),
    ("num_abs_min_max", Count),
    ("num_boolean_connectives", Count),
    ("avg_constraint_arity", Ratio),
    ("max_constraint_arity", Ratio),
    // globals
    ("num_alldifferent", Count),
    ("num_weightedsum", Count),
    ("num_cumulative", Count),
    ("num_element", Count),
    ("num_opaque_globals", Count),
    ("avg_global_arity", Ratio),
    ("max_global_arity", Ratio),
    // domains per constraint class
    ("avg_domain_size_intensional", Ratio),
    ("avg_domain_size_extensional", Ratio),
    ("avg_domain_size_global", Ratio),
    // tables
    ("num_support_tables", Count),
    ("num_conflict_tables", Count),
    ("avg_table_size", Ratio),
    ("avg_extensional_arity", Ratio),
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature csv header must start with 'instance_id'")]
    BadHeader,
    #[error("duplicate feature name '{0}' in header")]
    DuplicateFeature(String),
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column '{column}': '{value}' is not a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column '{column}': value {value} is not finite")]
    NonFinite { row: usize, column: String, value: f64 },
    #[error("duplicate instance id '{0}'")]
    DuplicateId(String),
    #[error("feature vector '{id}' has {found} values, catalog has {expected}")]
    LengthMismatch { id: String, expected: usize, found: usize },
    #[error("cannot fit normalization on an empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub version: String,
    pub names: Vec<String>,
}

impl FeatureCatalog {
    pub fn builtin() -> Self {
        FeatureCatalog {
            version: CATALOG_VERSION.to_string(),
            names: BUILTIN.iter().map(|(n, _)| n.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Catalog dump: a version line followed by one name per line.
    pub fn dump(&self) -> String {
        let mut out = format!("# catalog_version={}\n", self.version);
        for n in &self.names {
            out.push_str(n);
            out.push('\n');
        }
        out
    }
}

/// Kind of a built-in feature, `None` for unknown names.
pub fn builtin_kind(name: &str) -> Option<FeatureKind> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub instance_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, catalog: &FeatureCatalog, name: &str) -> Option<f64> {
        catalog.index_of(name).and_then(|i| self.values.get(i).copied())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn mean(xs: &[f64]) -> f64 {
    ratio(xs.iter().sum(), xs.len() as f64)
}

/// Top-level terms of a constraint (comparison sides, table arguments, global
/// arguments).
fn constraint_terms(c: &Constraint) -> Vec<&Term> {
    match c {
        Constraint::Intensional(f) => {
            let mut out = Vec::new();
            f.visit_terms(&mut |t| out.push(t));
            out
        }
        Constraint::Extensional { args, .. } => args.iter().collect(),
        Constraint::Global(g) => g.terms(),
    }
}

/// Computes the built-in feature vector of an instance. Total and
/// deterministic; ratios over empty sets are 0.
pub fn extract_features(inst: &CspInstance) -> FeatureVector {
    let catalog_len = BUILTIN.len();
    let mut v = vec![0.0; catalog_len];
    let mut set = |name: &str, value: f64| {
        let i = BUILTIN.iter().position(|(n, _)| *n == name).expect("feature name in catalog");
        v[i] = value;
    };

    let sizes: Vec<f64> = inst.int_vars.iter().map(|x| x.domain.size() as f64).collect();
    let domain_size = |name: &str| inst.int_var(name).map_or(0.0, |x| x.domain.size() as f64);

    set("num_int_vars", inst.int_vars.len() as f64);
    set("num_bool_vars", inst.bool_vars.len() as f64);
    set("num_vars", (inst.int_vars.len() + inst.bool_vars.len()) as f64);
    set("num_noncontiguous_domains", inst.int_vars.iter().filter(|x| !x.domain.is_contiguous()).count() as f64);
    if !sizes.is_empty() {
        let avg = mean(&sizes);
        let var = mean(&sizes.iter().map(|s| (s - avg) * (s - avg)).collect::<Vec<_>>());
        set("min_domain_size", sizes.iter().copied().fold(f64::INFINITY, f64::min));
        set("max_domain_size", sizes.iter().copied().fold(0.0, f64::max));
        set("avg_domain_size", avg);
        set("stddev_domain_size", var.sqrt());
        set("sum_log2_domain_size", sizes.iter().map(|s| s.log2()).sum());
    }

    let n = inst.constraints.len() as f64;
    let count_kind = |k: ConstraintKind| inst.constraints.iter().filter(|c| c.kind() == k).count() as f64;
    let (ni, ne, ng) = (
        count_kind(ConstraintKind::Intensional),
        count_kind(ConstraintKind::Extensional),
        count_kind(ConstraintKind::Global),
    );
    set("num_constraints", n);
    set("num_intensional_constraints", ni);
    set("num_extensional_constraints", ne);
    set("num_global_constraints", ng);
    set("pct_intensional", ratio(ni, n));
    set("pct_extensional", ratio(ne, n));
    set("pct_global", ratio(ng, n));

    let (mut arithmetic, mut linear, mut comparisons, mut connectives) = (0usize, 0usize, 0usize, 0usize);
    let (mut additions, mut mults, mut mult_dom, mut divmod, mut absminmax) = (0usize, 0usize, 0.0f64, 0usize, 0usize);
    let mut arities = Vec::with_capacity(inst.constraints.len());
    let mut global_arities = Vec::new();
    let (mut n_alldiff, mut n_wsum, mut n_cumul, mut n_elem, mut n_opaque) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut class_vars: [BTreeSet<&str>; 3] = Default::default();
    let (mut supports, mut conflicts) = (0usize, 0usize);
    let (mut table_sizes, mut table_arities) = (Vec::new(), Vec::new());

    for c in &inst.constraints {
        let vars = inst.constraint_int_vars(c);
        arities.push(vars.len() as f64);
        let class = match c.kind() {
            ConstraintKind::Intensional => 0,
            ConstraintKind::Extensional => 1,
            ConstraintKind::Global => 2,
        };
        class_vars[class].extend(vars.iter().copied());

        for t in constraint_terms(c) {
            t.visit(&mut |node| match node {
                Term::Add(_) | Term::Sub(_) | Term::Neg(_) => additions += 1,
                Term::Mul(_) => {
                    mults += 1;
                    let mut mv = Vec::new();
                    node.collect_vars(&mut mv);
                    let distinct: BTreeSet<&str> = mv.into_iter().collect();
                    mult_dom += distinct.iter().map(|name| domain_size(name)).sum::<f64>();
                }
                Term::Div(..) | Term::Mod(..) => divmod += 1,
                Term::Abs(_) | Term::Min(_) | Term::Max(_) => absminmax += 1,
                Term::Const(_) | Term::Var(_) => {}
            });
        }

        match c {
            Constraint::Intensional(f) => {
                let mut rels = 0usize;
                let mut all_linear = true;
                f.visit(&mut |g| match g {
                    Formula::Rel(_, a, b) => {
                        rels += 1;
                        all_linear &= a.linearize().is_some() && b.linearize().is_some();
                    }
                    Formula::Not(_)
                    | Formula::And(_)
                    | Formula::Or(_)
                    | Formula::Imp(..)
                    | Formula::Iff(..)
                    | Formula::Xor(..) => connectives += 1,
                    Formula::Const(_) | Formula::BoolVar(_) => {}
                });
                comparisons += rels;
                if rels > 0 {
                    arithmetic += 1;
                    if all_linear {
                        linear += 1;
                    }
                }
            }
            Constraint::Extensional { relation, .. } => {
                let r = &inst.relations[*relation];
                match r.polarity {
                    Polarity::Supports => supports += 1,
                    Polarity::Conflicts => conflicts += 1,
                }
                table_sizes.push(r.tuples().len() as f64);
                table_arities.push(r.arity as f64);
            }
            Constraint::Global(g) => {
                global_arities.push(g.arity() as f64);
                match g {
                    Global::AllDifferent(_) => n_alldiff += 1,
                    Global::WeightedSum { .. } => n_wsum += 1,
                    Global::Cumulative { .. } => n_cumul += 1,
                    Global::Element { .. } => n_elem += 1,
                    Global::Opaque { .. } => n_opaque += 1,
                }
            }
        }
    }

    set("num_arithmetic_constraints", arithmetic as f64);
    set("num_linear_constraints", linear as f64);
    set("num_comparisons", comparisons as f64);
    set("num_additions", additions as f64);
    set("num_multiplications", mults as f64);
    set("sum_domain_size_in_multiplications", mult_dom);
    set("num_div_mod", divmod as f64);
    set("num_abs_min_max", absminmax as f64);
    set("num_boolean_connectives", connectives as f64);
    set("avg_constraint_arity", mean(&arities));
    set("max_constraint_arity", arities.iter().copied().fold(0.0, f64::max));
    set("num_alldifferent", n_alldiff as f64);
    set("num_weightedsum", n_wsum as f64);
    set("num_cumulative", n_cumul as f64);
    set("num_element", n_elem as f64);
    set("num_opaque_globals", n_opaque as f64);
    set("avg_global_arity", mean(&global_arities));
    set("max_global_arity", global_arities.iter().copied().fold(0.0, f64::max));
    let class_avg = |vars: &BTreeSet<&str>| mean(&vars.iter().map(|name| domain_size(name)).collect::<Vec<_>>());
    set("avg_domain_size_intensional", class_avg(&class_vars[0]));
    set("avg_domain_size_extensional", class_avg(&class_vars[1]));
    set("avg_domain_size_global", class_avg(&class_vars[2]));
    set("num_support_tables", supports as f64);
    set("num_conflict_tables", conflicts as f64);
    set("avg_table_size", mean(&table_sizes));
    set("avg_extensional_arity", mean(&table_arities));

    FeatureVector { instance_id: inst.source_id.clone(), values: v }
}

/// Reads a feature table. The header is `instance_id,<name1>,...`; every cell
/// must be a finite number and instance ids must be unique.
pub fn read_feature_csv<R: Read>(reader: R) -> Result<(FeatureCatalog, Vec<FeatureVector>), FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("instance_id") {
        return Err(FeatureError::BadHeader);
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(FeatureError::DuplicateFeature(n.clone()));
        }
    }
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != names.len() + 1 {
            return Err(FeatureError::Ragged { row, expected: names.len() + 1, found: rec.len() });
        }
        let id = rec[0].to_string();
        let mut values = Vec::with_capacity(names.len());
        for (cell, column) in rec.iter().skip(1).zip(&names) {
            let value: f64 = cell.parse().map_err(|_| FeatureError::NonNumeric {
                row,
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(FeatureError::NonFinite { row, column: column.clone(), value });
            }
            values.push(value);
        }
        if !ids.insert(id.clone()) {
            return Err(FeatureError::DuplicateId(id));
        }
        out.push(FeatureVector { instance_id: id, values });
    }
    let builtin = FeatureCatalog::builtin();
    let catalog = if names == builtin.names {
        builtin
    } else {
        FeatureCatalog { version: EXTERNAL_CATALOG_VERSION.to_string(), names }
    };
    Ok((catalog, out))
}

pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<(FeatureCatalog, Vec<FeatureVector>), FeatureError> {
    read_feature_csv(std::fs::File::open(path)?)
}

pub fn write_feature_csv<W: Write>(
    writer: W,
    catalog: &FeatureCatalog,
    vectors: &[FeatureVector],
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("instance_id").chain(catalog.names.iter().map(String::as_str)))?;
    for v in vectors {
        if v.values.len() != catalog.len() {
            return Err(FeatureError::LengthMismatch {
                id: v.instance_id.clone(),
                expected: catalog.len(),
                found: v.values.len(),
            });
        }
        let mut row = Vec::with_capacity(v.values.len() + 1);
        row.push(v.instance_id.clone());
        row.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_feature_csv(
    path: impl AsRef<Path>,
    catalog: &FeatureCatalog,
    vectors: &[FeatureVector],
) -> Result<(), FeatureError> {
    write_feature_csv(std::fs::File::create(path)?, catalog, vectors)
}

/// Per-feature min-max bounds fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scales into `[0, 1]`, clamping values outside the training range.
    /// Constant training columns map to 0.
    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }
}

pub fn normalize_fit(train: &[FeatureVector]) -> Result<NormalizationParams, FeatureError> {
    let first = train.first().ok_or(FeatureError::EmptyTrainingSet)?;
    let dim = first.values.len();
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for v in train {
        if v.values.len() != dim {
            return Err(FeatureError::LengthMismatch {
                id: v.instance_id.clone(),
                expected: dim,
                found: v.values.len(),
            });
        }
        for (j, &x) in v.values.iter().enumerate() {
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    Ok(NormalizationParams { min, max })
}

pub fn normalize_apply(params: &NormalizationParams, v: &FeatureVector) -> FeatureVector {
    FeatureVector { instance_id: v.instance_id.clone(), values: params.apply_values(&v.values) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::parse_instance;

    fn fv(id: &str, values: &[f64]) -> FeatureVector {
        FeatureVector { instance_id: id.into(), values: values.to_vec() }
    }

    #[test]
    fn catalog_is_unique_and_large_enough() {
        let c = FeatureCatalog::builtin();
        assert!(c.len() >= 28);
        let unique: HashSet<_> = c.names.iter().collect();
        assert_eq!(unique.len(), c.len());
        assert!(c.dump().starts_with("# catalog_version=csp-v1\nnum_int_vars\n"));
    }

    #[test]
    fn empty_instance_is_all_zero() {
        let v = extract_features(&parse_instance(b"").unwrap());
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_variable_no_constraints() {
        let c = FeatureCatalog::builtin();
        let v = extract_features(&parse_instance(b"(int x 1 10)").unwrap());
        assert_eq!(v.get(&c, "max_domain_size"), Some(10.0));
        assert_eq!(v.get(&c, "num_constraints"), Some(0.0));
        for (name, kind) in BUILTIN {
            if *kind != Variable {
                assert_eq!(v.get(&c, name), Some(0.0), "{name}");
            }
        }
    }

    #[test]
    fn multiplication_features() {
        let c = FeatureCatalog::builtin();
        let v =
            extract_features(&parse_instance(b"(int x 1 4)(int y 0 9)(= (* x y) (* 2 x)) (<= (div x 2) y)").unwrap());
        assert_eq!(v.get(&c, "num_multiplications"), Some(2.0));
        // (* x y): 4 + 10, (* 2 x): 4
        assert_eq!(v.get(&c, "sum_domain_size_in_multiplications"), Some(18.0));
        assert_eq!(v.get(&c, "num_div_mod"), Some(1.0));
        assert_eq!(v.get(&c, "num_arithmetic_constraints"), Some(2.0));
        assert_eq!(v.get(&c, "num_linear_constraints"), Some(0.0));
    }

    #[test]
    fn csv_read_paths() {
        let (cat, rows) = read_feature_csv("instance_id,a,b,c\ni1,1,2,3\ni2,4,5.5,-6\n".as_bytes()).unwrap();
        assert_eq!(cat.names, vec!["a", "b", "c"]);
        assert_eq!(cat.version, EXTERNAL_CATALOG_VERSION);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].values, vec![4.0, 5.5, -6.0]);

        assert!(matches!(read_feature_csv("instance_id,a\ni1,inf\n".as_bytes()), Err(FeatureError::NonFinite { .. })));
        assert!(matches!(
            read_feature_csv("instance_id,a\ni1,1\ni1,2\n".as_bytes()),
            Err(FeatureError::DuplicateId(_))
        ));
        assert!(matches!(
            read_feature_csv("instance_id,a,b\ni1,1\n".as_bytes()),
            Err(FeatureError::Ragged { row: 2, .. })
        ));
        assert!(matches!(read_feature_csv("instance_id,a\ni1,x\n".as_bytes()), Err(FeatureError::NonNumeric { .. })));
        assert!(matches!(read_feature_csv("id,a\ni1,1\n".as_bytes()), Err(FeatureError::BadHeader)));
    }

    #[test]
    fn builtin_header_round_trips_catalog() {
        let cat = FeatureCatalog::builtin();
        let v = extract_features(&parse_instance_id(b"(int x 1 3)(int y 1 3)(!= x y)", "a"));
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &cat, std::slice::from_ref(&v)).unwrap();
        let (cat2, rows) = read_feature_csv(buf.as_slice()).unwrap();
        assert_eq!(cat2, cat);
        assert_eq!(rows, vec![v]);
    }

    fn parse_instance_id(src: &[u8], id: &str) -> CspInstance {
        crate::csp::parse_instance_with_id(src, id).unwrap()
    }

    #[test]
    fn min_max_scaling() {
        let p = normalize_fit(&[fv("a", &[0.0, 3.0]), fv("b", &[10.0, 3.0])]).unwrap();
        assert_eq!(normalize_apply(&p, &fv("q", &[5.0, 3.0])).values, vec![0.5, 0.0]);
        assert_eq!(normalize_apply(&p, &fv("q", &[15.0, 7.0])).values, vec![1.0, 0.0]);
        assert_eq!(normalize_apply(&p, &fv("q", &[-1.0, -7.0])).values, vec![0.0, 0.0]);
        assert!(matches!(normalize_fit(&[]), Err(FeatureError::EmptyTrainingSet)));
    }
}
