//! Local cell suppression for k-anonymity over quasi-identifiers and
//! l-diversity over confidential attributes.
//!
//! Values are suppressed by overwriting cells with [`NA`]; rows are never
//! removed. `NA` is an ordinary category when records are grouped, so
//! suppressed rows only ever merge with other rows carrying `NA` in the same
//! positions.
//!
//! # k-phase
//!
//! Rows that sit in classes smaller than `k` form a pool. Suppression
//! subsets `S` of the quasi-identifiers are tried in increasing size; among
//! subsets of equal size, those suppressing later-listed fields (per
//! `qi_order`) come first. For each `S`, pooled rows are grouped by their
//! signature with `S` replaced by `NA`; a group is committed when its size,
//! plus any already-settled rows with the same signature, reaches `k`.
//! Committed rows leave the pool. Rows still pooled once `S` covers every
//! quasi-identifier share the all-`NA` signature; if they number fewer than
//! `k`, rows committed earlier are moved into that class, first from classes
//! with more than `k` members, then whole classes. Only when the pooled rows
//! together cannot reach `k` is the input infeasible.
//!
//! # l-phase
//!
//! Runs on the k-anonymous output. For each class and confidential field,
//! distinct concrete values are counted (empty, missing-label and `NA` cells
//! do not count). A class with at least one but fewer than `l` distinct
//! values has that field suppressed on every member.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::dataset::{Dataset, NA};
use crate::error::{Error, Result};
use crate::par::{Exec, CHUNK_ROWS};
use crate::recode::RecodeRule;
use crate::schema::{FieldClass, FieldSpec, Schema};

/// Key code standing for `NA` in every column.
const NA_KEY: u32 = u32::MAX;

pub(crate) type Key = SmallVec<[u32; 8]>;

/// Quasi-identifier values of one class, in `qi_order`.
pub type QiSignature = Vec<String>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivalenceClass {
    pub signature: QiSignature,
    pub members: Vec<usize>,
}

impl EquivalenceClass {
    pub fn frequency(&self) -> usize {
        self.members.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiversityStat {
    pub signature: QiSignature,
    pub field: String,
    pub frequency: usize,
    pub distinct: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionReason {
    KAnonymity,
    LDiversity,
}

impl SuppressionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SuppressionReason::KAnonymity => "k_anonymity",
            SuppressionReason::LDiversity => "l_diversity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuppressionAction {
    pub row: usize,
    pub field: String,
    pub reason: SuppressionReason,
    /// Kept in memory for reporting; never serialized.
    #[serde(skip)]
    pub prior_value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuppressionPlan {
    actions: Vec<SuppressionAction>,
}

impl SuppressionPlan {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a plan, rejecting duplicate (row, field) targets.
    pub fn from_actions(actions: Vec<SuppressionAction>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &actions {
            if !seen.insert((a.row, a.field.as_str())) {
                return Err(Error::DuplicateAction {
                    row: a.row,
                    field: a.field.clone(),
                });
            }
        }
        Ok(SuppressionPlan { actions })
    }

    pub fn actions(&self) -> &[SuppressionAction] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Concatenate plans from successive phases.
    pub fn merged(&self, other: &SuppressionPlan) -> SuppressionPlan {
        let mut actions = self.actions.clone();
        actions.extend(other.actions.iter().cloned());
        SuppressionPlan { actions }
    }

    /// Audit export: `row,field,reason`. Prior values are not written.
    pub fn to_audit_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["row", "field", "reason"]).expect("in-memory");
        for a in &self.actions {
            w.write_record([a.row.to_string().as_str(), &a.field, a.reason.as_str()])
                .expect("in-memory");
        }
        String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
    }

    pub fn from_audit_csv(text: &str) -> Result<SuppressionPlan> {
        #[derive(Deserialize)]
        struct Row {
            row: usize,
            field: String,
            reason: SuppressionReason,
        }
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut actions = Vec::new();
        for r in rdr.deserialize::<Row>() {
            let r = r.map_err(|e| Error::csv("<audit plan>", e))?;
            actions.push(SuppressionAction {
                row: r.row,
                field: r.field,
                reason: r.reason,
                prior_value: String::new(),
            });
        }
        SuppressionPlan::from_actions(actions)
    }
}

/// Column positions of the quasi-identifiers and each column's `NA` code.
struct QiColumns {
    cols: Vec<usize>,
    na: Vec<Option<u32>>,
}

impl QiColumns {
    fn new(ds: &Dataset, qi_order: &[String]) -> Result<Self> {
        let cols: Vec<usize> = qi_order
            .iter()
            .map(|q| ds.require_column(q))
            .collect::<Result<_>>()?;
        let na = cols.iter().map(|&c| ds.column_at(c).code_of(NA)).collect();
        Ok(QiColumns { cols, na })
    }

    fn key(&self, ds: &Dataset, row: usize) -> Key {
        self.cols
            .iter()
            .zip(&self.na)
            .map(|(&c, &na)| {
                let code = ds.column_at(c).code(row);
                if Some(code) == na { NA_KEY } else { code }
            })
            .collect()
    }

    fn signature(&self, ds: &Dataset, key: &Key) -> QiSignature {
        key.iter()
            .zip(&self.cols)
            .map(|(&code, &c)| {
                if code == NA_KEY {
                    NA.to_owned()
                } else {
                    ds.column_at(c).value_of(code).to_owned()
                }
            })
            .collect()
    }
}

/// Hash-partition rows by key. Groups come back ordered by first member and
/// members are ascending.
fn group_by_key(ds: &Dataset, qi: &QiColumns, exec: Exec) -> Vec<(Key, Vec<usize>)> {
    let partials = exec.map_chunks(ds.n_rows(), CHUNK_ROWS, |range| {
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut groups: Vec<(Key, Vec<usize>)> = Vec::new();
        for row in range {
            let key = qi.key(ds, row);
            match index.get(&key) {
                Some(&g) => groups[g].1.push(row),
                None => {
                    index.insert(key.clone(), groups.len());
                    groups.push((key, vec![row]));
                }
            }
        }
        groups
    });
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut groups: Vec<(Key, Vec<usize>)> = Vec::new();
    for part in partials {
        for (key, members) in part {
            match index.get(&key) {
                Some(&g) => groups[g].1.extend(members),
                None => {
                    index.insert(key.clone(), groups.len());
                    groups.push((key, members));
                }
            }
        }
    }
    groups
}

pub fn compute_classes(ds: &Dataset, qi_order: &[String]) -> Result<Vec<EquivalenceClass>> {
    compute_classes_with(ds, qi_order, Exec::default())
}

/// Partition rows by quasi-identifier signature. Classes are sorted by
/// signature.
pub fn compute_classes_with(
    ds: &Dataset,
    qi_order: &[String],
    exec: Exec,
) -> Result<Vec<EquivalenceClass>> {
    let qi = QiColumns::new(ds, qi_order)?;
    let mut classes: Vec<EquivalenceClass> = group_by_key(ds, &qi, exec)
        .into_iter()
        .map(|(key, members)| EquivalenceClass {
            signature: qi.signature(ds, &key),
            members,
        })
        .collect();
    classes.sort_by(|a, b| a.signature.cmp(&b.signature));
    Ok(classes)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KOptions {
    /// Suppress every quasi-identifier on rows that cannot reach `k` instead
    /// of failing.
    pub allow_infeasible: bool,
    pub exec: Exec,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KPlanOutcome {
    pub plan: SuppressionPlan,
    /// Rows left in a class below `k` (only non-empty with `allow_infeasible`).
    pub unresolved: Vec<usize>,
}

/// Suppression subsets as bitmasks over `qi_order` positions, in trial order.
pub fn suppression_subsets(n_qi: usize) -> Vec<u32> {
    assert!(n_qi < 32, "too many quasi-identifiers");
    let mut masks: Vec<u32> = (1..(1u32 << n_qi)).collect();
    masks.sort_by(|a, b| a.count_ones().cmp(&b.count_ones()).then(b.cmp(a)));
    masks
}

/// Non-QI fields derived from QI fields; they are suppressed alongside their
/// sources. Returns (dependent column index, QI positions it derives from).
fn dependent_fields(ds: &Dataset, schema: &Schema) -> Vec<(usize, u32)> {
    let pos = |name: &str| schema.qi_order.iter().position(|q| q == name);
    schema
        .fields
        .iter()
        .filter(|f| f.class != FieldClass::QuasiIdentifier)
        .filter_map(|f| match &f.recode {
            Some(RecodeRule::FipsDerive {
                state_field,
                county_field,
            }) => {
                let mask = [state_field, county_field]
                    .into_iter()
                    .filter_map(|s| pos(s))
                    .fold(0u32, |m, p| m | (1 << p));
                let col = ds.column_index(&f.name)?;
                (mask != 0).then_some((col, mask))
            }
            _ => None,
        })
        .collect()
}

pub fn plan_k_suppression(ds: &Dataset, schema: &Schema) -> Result<SuppressionPlan> {
    plan_k_suppression_with(ds, schema, KOptions::default()).map(|o| o.plan)
}

pub fn plan_k_suppression_with(
    ds: &Dataset,
    schema: &Schema,
    opts: KOptions,
) -> Result<KPlanOutcome> {
    let k = schema.thresholds.k;
    let qi = QiColumns::new(ds, &schema.qi_order)?;
    let n_qi = qi.cols.len();

    let mut settled: HashMap<Key, usize> = HashMap::new();
    let mut pool: Vec<(usize, Key)> = Vec::new();
    for (key, members) in group_by_key(ds, &qi, opts.exec) {
        if members.len() >= k {
            settled.insert(key, members.len());
        } else {
            pool.extend(members.into_iter().map(|r| (r, key.clone())));
        }
    }
    pool.sort_unstable_by_key(|(r, _)| *r);

    // (row, suppressed mask) in commit order, and commit indices per signature.
    let mut assigned: Vec<(usize, u32)> = Vec::new();
    let mut committed: HashMap<Key, Vec<usize>> = HashMap::new();
    let masked = |key: &Key, mask: u32| -> Key {
        key.iter()
            .enumerate()
            .map(|(p, &c)| if mask & (1 << p) != 0 { NA_KEY } else { c })
            .collect()
    };

    for mask in suppression_subsets(n_qi) {
        if pool.is_empty() {
            break;
        }
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut candidates: Vec<(Key, Vec<usize>)> = Vec::new();
        for (i, (_, key)) in pool.iter().enumerate() {
            let key = masked(key, mask);
            match index.get(&key) {
                Some(&g) => candidates[g].1.push(i),
                None => {
                    index.insert(key.clone(), candidates.len());
                    candidates.push((key, vec![i]));
                }
            }
        }
        let mut taken = vec![false; pool.len()];
        for (key, members) in candidates {
            let already = settled.get(&key).copied().unwrap_or(0);
            if members.len() + already < k {
                continue;
            }
            let slots = committed.entry(key.clone()).or_default();
            for &i in &members {
                slots.push(assigned.len());
                assigned.push((pool[i].0, mask));
                taken[i] = true;
            }
            *settled.entry(key).or_insert(0) += members.len();
        }
        let mut i = 0;
        pool.retain(|_| {
            i += 1;
            !taken[i - 1]
        });
    }

    let full_mask = if n_qi == 0 { 0 } else { (1u32 << n_qi) - 1 };
    let mut unresolved = Vec::new();
    if !pool.is_empty() {
        // The leftover rows all share the all-NA signature yet fall short
        // of k. Complete that class with rows committed earlier.
        let all_na: Key = std::iter::repeat_n(NA_KEY, n_qi).collect();
        let mut have = pool.len() + settled.get(&all_na).copied().unwrap_or(0);
        let mut groups: Vec<(usize, usize, &Vec<usize>)> = committed
            .iter()
            .filter(|(key, _)| **key != all_na)
            .map(|(key, slots)| (settled[key], 0, slots))
            .collect();
        groups.sort_by_key(|(_, _, slots)| slots[0]);
        for g in groups.iter_mut() {
            if have >= k {
                break;
            }
            let (total, taken, slots) = g;
            let t = (*total - k).min(k - have).min(slots.len());
            *taken = t;
            have += t;
        }
        if have < k {
            let mut order: Vec<usize> = (0..groups.len()).collect();
            order.sort_by_key(|&g| (groups[g].2.len() - groups[g].1, groups[g].2[0]));
            for g in order {
                if have >= k {
                    break;
                }
                let (_, taken, slots) = &mut groups[g];
                if *taken < slots.len() {
                    have += slots.len() - *taken;
                    *taken = slots.len();
                }
            }
        }
        if have >= k {
            for (_, taken, slots) in &groups {
                for &slot in &slots[slots.len() - taken..] {
                    assigned[slot].1 = full_mask;
                }
            }
        } else if opts.allow_infeasible {
            unresolved = pool.iter().map(|(r, _)| *r).collect();
        } else {
            return Err(Error::InsufficientRecords {
                remaining: pool.len(),
                k,
            });
        }
        assigned.extend(pool.iter().map(|(r, _)| (*r, full_mask)));
    }

    let dependents = dependent_fields(ds, schema);
    let mut plan = SuppressionPlan::new();
    for (row, mask) in assigned {
        let targets = qi
            .cols
            .iter()
            .enumerate()
            .filter(|(p, _)| mask & (1 << p) != 0)
            .map(|(_, &c)| c)
            .chain(
                dependents
                    .iter()
                    .filter(|(_, sources)| mask & sources != 0)
                    .map(|(c, _)| *c),
            );
        for c in targets {
            let prior = ds.get(row, c);
            if prior != NA {
                plan.actions.push(SuppressionAction {
                    row,
                    field: ds.column_at(c).name().to_owned(),
                    reason: SuppressionReason::KAnonymity,
                    prior_value: prior.to_owned(),
                });
            }
        }
    }
    Ok(KPlanOutcome { plan, unresolved })
}

pub(crate) fn is_concrete(field: Option<&FieldSpec>, value: &str) -> bool {
    let v = value.trim();
    !v.is_empty() && v != NA && field.and_then(|f| f.missing_label.as_deref()) != Some(v)
}

/// Distinct concrete values of `field` per class.
pub fn diversity_stats(
    ds: &Dataset,
    schema: &Schema,
    field: &str,
) -> Result<Vec<DiversityStat>> {
    let spec = schema.field(field);
    let col = ds.column(field).ok_or_else(|| Error::UnknownField(field.to_owned()))?;
    Ok(compute_classes(ds, &schema.qi_order)?
        .into_iter()
        .map(|class| {
            let distinct: HashSet<u32> = class
                .members
                .iter()
                .filter(|&&r| is_concrete(spec, col.get(r)))
                .map(|&r| col.code(r))
                .collect();
            DiversityStat {
                frequency: class.frequency(),
                signature: class.signature,
                field: field.to_owned(),
                distinct: distinct.len(),
            }
        })
        .collect())
}

pub fn plan_l_suppression(ds: &Dataset, schema: &Schema) -> Result<SuppressionPlan> {
    plan_l_suppression_with(ds, schema, Exec::default())
}

pub fn plan_l_suppression_with(
    ds: &Dataset,
    schema: &Schema,
    exec: Exec,
) -> Result<SuppressionPlan> {
    let l = schema.thresholds.l;
    let classes = compute_classes_with(ds, &schema.qi_order, exec)?;
    let mut plan = SuppressionPlan::new();
    for field in schema.fields_of(FieldClass::ConfidentialAttribute) {
        let Some(col) = ds.column(&field.name) else {
            continue;
        };
        for class in &classes {
            let distinct: HashSet<u32> = class
                .members
                .iter()
                .filter(|&&r| is_concrete(Some(field), col.get(r)))
                .map(|&r| col.code(r))
                .collect();
            if distinct.is_empty() || distinct.len() >= l {
                continue;
            }
            for &row in class.members.iter().filter(|&&r| col.get(r) != NA) {
                plan.actions.push(SuppressionAction {
                    row,
                    field: field.name.clone(),
                    reason: SuppressionReason::LDiversity,
                    prior_value: col.get(row).to_owned(),
                });
            }
        }
    }
    Ok(plan)
}

/// Set every targeted cell to `NA`. Row count and order are unchanged.
pub fn apply_plan(ds: &Dataset, plan: &SuppressionPlan) -> Result<Dataset> {
    let mut by_column: HashMap<usize, Vec<usize>> = HashMap::new();
    for a in plan.actions() {
        if a.row >= ds.n_rows() {
            return Err(Error::RowOutOfRange {
                row: a.row,
                rows: ds.n_rows(),
            });
        }
        let c = ds.require_column(&a.field)?;
        by_column.entry(c).or_default().push(a.row);
    }
    let mut out = ds.clone();
    for (c, rows) in by_column {
        for row in rows {
            out.set(row, c, NA);
        }
    }
    Ok(out)
}
