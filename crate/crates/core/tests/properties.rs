mod common;

use std::collections::HashSet;

use case_privacy::ingest::{
    apply_release_window, dataset_to_csv, deduplicate, parse_date, read_dataset_from,
};
use case_privacy::recode::{bin_age, project_release, recode_dataset};
use case_privacy::report::{link_scan, suppression_summary, CatalogEntry, SynonymMap};
use case_privacy::schema::{Domain, ValueType};
use case_privacy::suppress::{compute_classes_with, plan_k_suppression_with, KOptions};
use case_privacy::synth::{synth_raw, SynthConfig};
use case_privacy::verify::{verify_k_anonymity, verify_release};
use case_privacy::{anonymize, apply_plan, Dataset, Exec, Schema, NA};
use chrono::{Duration, NaiveDate};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Params {
    seed: u64,
    n: usize,
    domains: Vec<usize>,
    k: usize,
    l: usize,
    dates: usize,
}

fn params(max_rows: usize, max_qi: usize, max_domain: usize) -> impl Strategy<Value = Params> {
    (
        any::<u64>(),
        0..=max_rows,
        prop::collection::vec(2..=max_domain, 1..=max_qi),
        prop::sample::select(vec![2usize, 3, 5]),
        1usize..=2,
        1usize..=5,
    )
        .prop_map(|(seed, n, domains, k, l, dates)| Params {
            seed,
            n,
            domains,
            k,
            l,
            dates,
        })
}

fn build(p: &Params) -> (Schema, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    (
        random_schema(&p.domains, p.k, p.l),
        random_dataset(&mut rng, p.n, &p.domains, p.dates),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn classes_match_pairwise_grouping(p in params(50, 3, 4)) {
        let (schema, ds) = build(&p);
        let ids = brute_class_ids(&ds, &schema.qi_order);
        for exec in [Exec::Sequential, Exec::Parallel] {
            let classes = compute_classes_with(&ds, &schema.qi_order, exec).unwrap();
            let mut seen = vec![false; ds.n_rows()];
            for c in &classes {
                prop_assert!(c.frequency() >= 1);
                for &m in &c.members {
                    prop_assert!(!seen[m]);
                    seen[m] = true;
                    prop_assert_eq!(ids[m], ids[c.members[0]]);
                }
                let expected = ids.iter().filter(|&&i| i == ids[c.members[0]]).count();
                prop_assert_eq!(c.frequency(), expected);
            }
            prop_assert!(seen.iter().all(|&s| s));
            prop_assert!(classes.windows(2).all(|w| w[0].signature < w[1].signature));
        }
    }

    #[test]
    fn suppression_guarantees(p in params(120, 4, 5)) {
        let (schema, ds) = build(&p);
        let qi = schema.qi_order.clone();
        let violators = violating_rows(&ds, &qi, p.k);
        match anonymize(&ds, &schema, KOptions::default()) {
            Err(_) => prop_assert!(violators.len() < p.k),
            Ok(anon) => {
                let out = &anon.dataset;
                prop_assert_eq!(out.n_rows(), ds.n_rows());
                prop_assert!(brute_k_ok(out, &qi, p.k));
                prop_assert!(brute_l_ok(out, &qi, CONF, p.l));
                let after_k = apply_plan(&ds, &anon.k_plan).unwrap();
                let pooled: HashSet<usize> = violators.iter().copied().collect();
                for r in 0..ds.n_rows() {
                    if !pooled.contains(&r) {
                        prop_assert_eq!(ds.row(r), after_k.row(r));
                    }
                }
                prop_assert!(anon.k_plan.actions().iter().all(|a| pooled.contains(&a.row)));
                prop_assert!(anon.plan().actions().iter().all(|a| out.value(a.row, &a.field) == Some(NA)));

                let again = anonymize(out, &schema, KOptions::default()).unwrap();
                prop_assert!(again.plan().is_empty());
                prop_assert_eq!(projection_min(out, &qi).is_none_or(|m| m >= p.k), true);
            }
        }
    }

    #[test]
    fn plans_do_not_depend_on_execution(p in params(300, 4, 6)) {
        let (schema, ds) = build(&p);
        let run = |exec| {
            anonymize(&ds, &schema, KOptions { allow_infeasible: true, exec })
                .map(|a| (a.plan(), a.dataset))
                .unwrap()
        };
        prop_assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
    }

    #[test]
    fn never_more_than_all_fields_on_violators(p in params(60, 3, 4)) {
        let (schema, ds) = build(&p);
        if let Ok(out) = plan_k_suppression_with(&ds, &schema, KOptions::default()) {
            prop_assert!(out.plan.len() <= baseline_cells(&ds, &schema.qi_order, p.k));
        }
    }

    #[test]
    fn summary_conserves_actions(p in params(120, 3, 5)) {
        let (schema, ds) = build(&p);
        if let Ok(anon) = anonymize(&ds, &schema, KOptions::default()) {
            let plan = anon.plan();
            let summary = suppression_summary(&plan, ds.n_rows(), &schema.qi_order);
            prop_assert_eq!(summary.total(), plan.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn verifier_agrees_with_pairwise_check(p in params(25, 3, 3)) {
        let (schema, ds) = build(&p);
        let check = verify_k_anonymity(&ds, &schema.qi_order, p.k).unwrap();
        prop_assert_eq!(check.violations.is_empty(), brute_k_ok(&ds, &schema.qi_order, p.k));
        let freq = brute_frequencies(&ds, &schema.qi_order);
        prop_assert_eq!(check.min_frequency, freq.iter().copied().min());
        let brute_violating_classes: HashSet<usize> = brute_class_ids(&ds, &schema.qi_order)
            .into_iter()
            .zip(&freq)
            .filter(|(_, &f)| f < p.k)
            .map(|(id, _)| id)
            .collect();
        prop_assert_eq!(check.violations.len(), brute_violating_classes.len());
    }
}

fn keyed(rows: &[(u8, u8)]) -> (Dataset, Vec<Option<NaiveDate>>) {
    let base = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
    let data: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, (key, _))| vec![format!("C{key}"), i.to_string()])
        .collect();
    let dates = rows
        .iter()
        .map(|(_, d)| Some(base + Duration::days(i64::from(*d % 5))))
        .collect();
    (Dataset::from_rows(&["case_id", "payload"], &data).unwrap(), dates)
}

fn report_dates(days: &[u16]) -> Dataset {
    let base = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let rows: Vec<Vec<String>> = days
        .iter()
        .map(|d| vec![(base + Duration::days(i64::from(*d))).format("%Y-%m-%d").to_string()])
        .collect();
    Dataset::from_rows(&["cdc_report_dt"], &rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dedup_is_idempotent(rows in prop::collection::vec((0u8..10, any::<u8>()), 0..40)) {
        let key = names(&["case_id"]);
        let (ds, dates) = keyed(&rows);
        let (once, kept) = deduplicate(&ds, &key, &dates).unwrap();
        let kept_dates: Vec<_> = kept.iter().map(|&r| dates[r]).collect();
        let (twice, _) = deduplicate(&once, &key, &kept_dates).unwrap();
        prop_assert_eq!(&once, &twice);
        let distinct: HashSet<&str> = (0..ds.n_rows()).map(|r| ds.get(r, 0)).collect();
        prop_assert_eq!(once.n_rows(), distinct.len());
    }

    #[test]
    fn wider_window_never_adds_rows(days in prop::collection::vec(0u16..300, 0..60), a in 0u32..60, b in 0u32..60) {
        let ds = report_dates(&days);
        let release = NaiveDate::from_ymd_opt(2020, 12, 4).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let narrow = apply_release_window(&ds, "cdc_report_dt", release, lo).unwrap();
        let wide = apply_release_window(&ds, "cdc_report_dt", release, hi).unwrap();
        prop_assert!(wide.n_rows() <= narrow.n_rows());
    }

    #[test]
    fn csv_round_trip_is_byte_identical(seed in any::<u64>(), rows in 0usize..60) {
        let schema = Schema::public_use();
        let ds = synth_raw(&schema, &SynthConfig { rows, seed, ..Default::default() });
        let bytes = dataset_to_csv(&ds);
        let back = read_dataset_from(bytes.as_slice(), &schema).unwrap();
        prop_assert_eq!(dataset_to_csv(&back), bytes);
    }

    #[test]
    fn age_from_dob_matches_direct_age(age in 0i64..110, offset in 0i64..365) {
        let bins = match &Schema::public_use().field("age_group").unwrap().recode {
            Some(case_privacy::recode::RecodeRule::AgeBin { bins, .. }) => bins.clone(),
            _ => unreachable!(),
        };
        let onset = NaiveDate::from_ymd_opt(2020, 7, 15).unwrap();
        let dob = onset
            .checked_sub_months(chrono::Months::new(12 * age as u32))
            .unwrap()
            - Duration::days(offset.min(180));
        let direct = bin_age(Some(age), None, None, &bins).label.to_owned();
        let via_dob = bin_age(None, Some(dob), Some(onset), &bins).label.to_owned();
        prop_assert_eq!(direct, via_dob);
    }
}

fn blank_some(ds: &Dataset, seed: u64) -> Dataset {
    let mut out = ds.clone();
    let mut x = seed | 1;
    for c in 0..out.n_columns() {
        for r in 0..out.n_rows() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            if x.is_multiple_of(11) {
                out.set(r, c, "");
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn recode_is_total_idempotent_and_row_preserving(seed in any::<u64>(), rows in 1usize..200, scientific in any::<bool>()) {
        let schema = if scientific { Schema::scientific_use() } else { Schema::public_use() };
        let raw = synth_raw(&schema, &SynthConfig { rows, seed, ..Default::default() });
        let raw = blank_some(&raw, seed);
        let processing = parse_date("2020-12-04").unwrap();
        let once = recode_dataset(&raw, &schema, processing, Exec::Sequential).unwrap().dataset;
        let twice = recode_dataset(&once, &schema, processing, Exec::Parallel).unwrap().dataset;
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.n_rows(), raw.n_rows());
        let case_col = once.column_index("case_id").unwrap();
        for r in 0..raw.n_rows() {
            prop_assert_eq!(once.get(r, case_col), raw.value(r, "case_id").unwrap());
        }
        for f in schema.released_fields().filter(|f| f.value_type == ValueType::Category) {
            if matches!(f.domain, Some(Domain::Reference { .. })) && f.missing_label.is_none() && f.recode.is_none() {
                // Free-entry geography is carried through unchanged.
                continue;
            }
            let col = once.column(&f.name).unwrap();
            for v in col.distinct_values() {
                prop_assert!(schema.category_allows(f, v), "{} = {:?}", f.name, v);
            }
        }
        let released = project_release(&once, &schema).unwrap();
        let anon = anonymize(&released, &schema, KOptions { allow_infeasible: true, ..Default::default() }).unwrap();
        if anon.unresolved.is_empty() {
            let report = verify_release(&anon.dataset, &schema, Exec::Sequential).unwrap();
            prop_assert!(report.passed(), "{:?}", report);
        }
    }

    #[test]
    fn link_scan_order_is_total(entries in prop::collection::vec(
        (0u8..6, prop::collection::vec(prop::sample::select(vec![
            "sex", "Age", "state", "county", "deaths", "hcw", "race", "zip",
        ]), 1..5)),
        0..12,
    )) {
        let catalog: Vec<CatalogEntry> = entries
            .iter()
            .map(|(n, cols)| CatalogEntry {
                name: format!("d{n}"),
                columns: cols.iter().map(|c| c.to_string()).collect(),
                source_url: format!("https://example.org/{}", cols.join("-")),
            })
            .collect();
        let schema = Schema::scientific_use();
        let report = link_scan(&schema, &catalog, &SynonymMap::bundled());
        prop_assert_eq!(report.entries.len(), catalog.len());
        for w in report.entries.windows(2) {
            prop_assert!(
                (w[0].overlap, &w[1].name, &w[1].source_url) >= (w[1].overlap, &w[0].name, &w[0].source_url)
            );
        }
        let mut reversed = catalog.clone();
        reversed.reverse();
        prop_assert_eq!(link_scan(&schema, &reversed, &SynonymMap::bundled()), report);
    }
}
