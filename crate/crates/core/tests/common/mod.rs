#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use case_privacy::{Dataset, Schema, NA};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CONF: &str = "conf";

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Schema with quasi-identifiers `q0..` over `v0..` and one confidential
/// date field.
pub fn random_schema(domains: &[usize], k: usize, l: usize) -> Schema {
    let mut fields: Vec<serde_json::Value> = domains
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            serde_json::json!({
                "name": format!("q{i}"),
                "class": "quasi_identifier",
                "type": "category",
                "domain": (0..d).map(|v| format!("v{v}")).collect::<Vec<_>>(),
            })
        })
        .collect();
    fields.push(serde_json::json!({
        "name": CONF,
        "class": "confidential_attribute",
        "type": "date",
    }));
    let qi: Vec<String> = (0..domains.len()).map(|i| format!("q{i}")).collect();
    let json = serde_json::json!({
        "name": "random",
        "thresholds": {"k": k, "l": l},
        "release_delay_days": 14,
        "qi_order": qi,
        "fields": fields,
    });
    Schema::parse(&json.to_string()).expect("schema")
}

/// Skewed values so that rare combinations are common. Confidential dates
/// come from a small pool; some are empty.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, domains: &[usize], dates: usize) -> Dataset {
    let mut cols: Vec<String> = (0..domains.len()).map(|i| format!("q{i}")).collect();
    cols.push(CONF.to_owned());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let mut row: Vec<String> = domains
                .iter()
                .map(|&d| {
                    let mut v = 0;
                    while v + 1 < d && rng.random_bool(0.45) {
                        v += 1;
                    }
                    format!("v{v}")
                })
                .collect();
            row.push(if rng.random_bool(0.1) {
                String::new()
            } else {
                format!("2020-03-{:02}", 1 + rng.random_range(0..dates.max(1)))
            });
            row
        })
        .collect();
    Dataset::from_rows(&col_refs, &rows).expect("rectangular")
}

fn cols(ds: &Dataset, qi: &[String]) -> Vec<usize> {
    qi.iter().map(|q| ds.column_index(q).expect("qi column")).collect()
}

fn same(ds: &Dataset, c: &[usize], a: usize, b: usize) -> bool {
    c.iter().all(|&i| ds.get(a, i) == ds.get(b, i))
}

/// Class id of each row: the smallest row index with the same signature.
pub fn brute_class_ids(ds: &Dataset, qi: &[String]) -> Vec<usize> {
    let c = cols(ds, qi);
    (0..ds.n_rows())
        .map(|r| (0..=r).find(|&s| same(ds, &c, r, s)).unwrap())
        .collect()
}

/// Size of each row's class, by pairwise comparison.
pub fn brute_frequencies(ds: &Dataset, qi: &[String]) -> Vec<usize> {
    let c = cols(ds, qi);
    (0..ds.n_rows())
        .map(|r| (0..ds.n_rows()).filter(|&s| same(ds, &c, r, s)).count())
        .collect()
}

pub fn brute_k_ok(ds: &Dataset, qi: &[String], k: usize) -> bool {
    brute_frequencies(ds, qi).into_iter().all(|f| f >= k)
}

fn concrete(v: &str) -> bool {
    !v.trim().is_empty() && v != NA
}

pub fn brute_l_ok(ds: &Dataset, qi: &[String], field: &str, l: usize) -> bool {
    let c = cols(ds, qi);
    let f = ds.column_index(field).unwrap();
    (0..ds.n_rows()).all(|r| {
        let members: Vec<usize> = (0..ds.n_rows()).filter(|&s| same(ds, &c, r, s)).collect();
        let distinct: HashSet<&str> = members
            .iter()
            .map(|&s| ds.get(s, f))
            .filter(|v| concrete(v))
            .collect();
        distinct.is_empty() || distinct.len() >= l
    })
}

pub fn violating_rows(ds: &Dataset, qi: &[String], k: usize) -> Vec<usize> {
    brute_frequencies(ds, qi)
        .into_iter()
        .enumerate()
        .filter(|(_, f)| *f < k)
        .map(|(r, _)| r)
        .collect()
}

/// Cells changed by suppressing every quasi-identifier on every violating row.
pub fn baseline_cells(ds: &Dataset, qi: &[String], k: usize) -> usize {
    let c = cols(ds, qi);
    violating_rows(ds, qi, k)
        .into_iter()
        .map(|r| c.iter().filter(|&&i| ds.get(r, i) != NA).count())
        .sum()
}

/// Minimum number of quasi-identifier cells that must be set to NA, touching
/// only violating rows, for the dataset to become k-anonymous. `None` when
/// impossible.
///
/// Any solution partitions the violating rows into groups that each end on
/// one signature; a group's cheapest signature keeps every position where
/// its members agree. Minimizing over set partitions by subset DP is exact.
pub fn exhaustive_min_cells(ds: &Dataset, qi: &[String], k: usize) -> Option<usize> {
    let c = cols(ds, qi);
    let q = c.len();
    let viol = violating_rows(ds, qi, k);
    let n = viol.len();
    assert!(n <= 16, "oracle limited to small instances");
    if n == 0 {
        return Some(0);
    }
    let freq = brute_frequencies(ds, qi);
    let mut settled: HashMap<Vec<&str>, usize> = HashMap::new();
    for (r, &f) in freq.iter().enumerate() {
        if f >= k {
            *settled.entry(c.iter().map(|&i| ds.get(r, i)).collect()).or_insert(0) += 1;
        }
    }
    let rows: Vec<Vec<&str>> = viol
        .iter()
        .map(|&r| c.iter().map(|&i| ds.get(r, i)).collect())
        .collect();

    // Cheapest feasible signature per group.
    let full = 1usize << n;
    let mut group_cost: Vec<Option<usize>> = vec![None; full];
    for (g, cost) in group_cost.iter_mut().enumerate().skip(1) {
        let members: Vec<usize> = (0..n).filter(|i| g & (1 << i) != 0).collect();
        let first = &rows[members[0]];
        let forced: usize = (0..q)
            .filter(|&p| members.iter().any(|&m| rows[m][p] != first[p]))
            .fold(0, |m, p| m | (1 << p));
        let mut best: Option<usize> = None;
        for mask in 0..(1usize << q) {
            if mask & forced != forced {
                continue;
            }
            let sig: Vec<&str> = (0..q)
                .map(|p| if mask & (1 << p) != 0 { NA } else { first[p] })
                .collect();
            let have = members.len() + settled.get(&sig).copied().unwrap_or(0);
            if have < k {
                continue;
            }
            let cost: usize = members
                .iter()
                .map(|&m| (0..q).filter(|&p| mask & (1 << p) != 0 && rows[m][p] != NA).count())
                .sum();
            best = Some(best.map_or(cost, |b: usize| b.min(cost)));
        }
        *cost = best;
    }
    let mut best: Vec<Option<usize>> = vec![None; full];
    best[0] = Some(0);
    for s in 1..full {
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        // Groups containing the lowest member of `s`.
        let mut sub = rest;
        let mut acc: Option<usize> = None;
        loop {
            let g = sub | low;
            if let (Some(gc), Some(b)) = (group_cost[g], best[s ^ g]) {
                acc = Some(acc.map_or(gc + b, |a: usize| a.min(gc + b)));
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        best[s] = acc;
    }
    best[full - 1]
}

/// Cells that differ between two equally shaped datasets.
pub fn changed_cells(a: &Dataset, b: &Dataset) -> usize {
    assert_eq!(a.n_rows(), b.n_rows());
    (0..a.n_rows())
        .map(|r| (0..a.n_columns()).filter(|&c| a.get(r, c) != b.get(r, c)).count())
        .sum()
}

/// Minimum class frequency over every non-empty subset of `qi`.
pub fn projection_min(ds: &Dataset, qi: &[String]) -> Option<usize> {
    let mut min: Option<usize> = None;
    for mask in 1u32..(1 << qi.len()) {
        let subset: Vec<String> = qi
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, q)| q.clone())
            .collect();
        let classes = case_privacy::compute_classes(ds, &subset).unwrap();
        if let Some(m) = classes.iter().map(|c| c.frequency()).min() {
            min = Some(min.map_or(m, |x: usize| x.min(m)));
        }
    }
    min
}
