use proptest::prelude::*;

use super::*;
use crate::data::{Schema, Value};
use Intervention::*;

fn scores(es: f64, th: f64, rrh: f64, prev: f64) -> BTreeMap<Intervention, f64> {
    [(Es, es), (Th, th), (Rrh, rrh), (Prev, prev)].into_iter().collect()
}

#[test]
fn resolve_examples() {
    assert_eq!(resolve_one_vs_all(&scores(0.6, 0.8, 0.1, 0.2)).unwrap(), Th);
    assert_eq!(resolve_one_vs_all(&scores(0.5, 0.5, 0.1, 0.2)).unwrap(), Es);
    assert_eq!(resolve_one_vs_all(&scores(0.0, 0.0, 0.0, 0.0)).unwrap(), Prev);
    assert_eq!(resolve_one_vs_all(&scores(0.1, 0.3, 0.3, 0.0)).unwrap(), Rrh);
    let mut m = scores(0.1, 0.2, 0.3, 0.4);
    m.remove(&Rrh);
    assert!(matches!(resolve_one_vs_all(&m), Err(Error::MissingScore(c)) if c == "RRH"));
    assert!(resolve_one_vs_all(&scores(1.5, 0.0, 0.0, 0.0)).is_err());
}

#[test]
fn resolve_columns() {
    let cols: BTreeMap<_, _> = [
        (Es, vec![0.9, 0.1]),
        (Th, vec![0.2, 0.7]),
        (Rrh, vec![0.0, 0.0]),
        (Prev, vec![0.0, 0.7]),
    ]
    .into_iter()
    .collect();
    assert_eq!(resolve_all(&cols).unwrap(), vec![Es, Prev]);
}

#[test]
fn crosstab_examples() {
    let t = cross_tab(&[Es, Th, Rrh, Prev], &[Es, Th, Rrh, Prev]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(t.counts[i][j], u64::from(i == j));
        }
    }
    assert_eq!(cross_tab(&[], &[]).unwrap(), CrossTab::default());
    assert!(matches!(cross_tab(&[Es], &[]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn crosstab_reference_layout() {
    // headline proportions of the reference analysis: 12,546 rows,
    // 9,481 on the diagonal
    let mut t = CrossTab::default();
    t.counts[0][0] = 9_481;
    t.counts[0][1] = 3_065;
    let text = t.to_text();
    assert!(text.contains("total 12546, matched 9481, mismatched 3065"));
    assert!(text.lines().next().unwrap().ends_with("ES      TH     RRH    Prev"));
}

#[test]
fn subgroup_examples() {
    let ids: Vec<String> = (0..3).map(|i| format!("h{i}")).collect();
    let none = extract_subgroups(&[Es, Th, Prev], &[Es, Th, Prev], &ids).unwrap();
    assert_eq!(none, (vec![], vec![]));
    let one = extract_subgroups(&[Es], &[Th], &ids[..1]).unwrap();
    assert_eq!(one, (vec!["h0".to_string()], vec![]));
    let both = extract_subgroups(&[Th, Es, Rrh], &[Es, Th, Es], &ids).unwrap();
    assert_eq!(both, (vec!["h1".to_string()], vec!["h0".to_string()]));
}

fn label(k: u8) -> Intervention {
    Intervention::ALL[k as usize % 4]
}

proptest! {
    #[test]
    fn argmax_is_invariant_under_increasing_maps(v in proptest::collection::vec(0.0f64..1.0, 4)) {
        let a = scores(v[0], v[1], v[2], v[3]);
        let b: BTreeMap<_, _> = a.iter().map(|(&k, &s)| (k, (s * s + s) / 2.0)).collect();
        prop_assert_eq!(resolve_one_vs_all(&a).unwrap(), resolve_one_vs_all(&b).unwrap());
    }

    #[test]
    fn crosstab_conservation(pairs in proptest::collection::vec((0u8..4, 0u8..4), 0..200)) {
        let p: Vec<_> = pairs.iter().map(|x| label(x.0)).collect();
        let a: Vec<_> = pairs.iter().map(|x| label(x.1)).collect();
        let t = cross_tab(&p, &a).unwrap();
        let g = subgroup_indices(&p, &a).unwrap();
        prop_assert_eq!(g.es_to_th.len() as u64, t.get(Es, Th));
        prop_assert_eq!(g.th_to_es.len() as u64, t.get(Th, Es));
        let other = t.mismatched() - t.get(Es, Th) - t.get(Th, Es);
        prop_assert_eq!(g.es_to_th.len() as u64 + g.th_to_es.len() as u64 + other + t.matched(), p.len() as u64);
    }
}

fn small_cohort() -> (Vec<HouseholdRecord>, Vec<Intervention>) {
    let s = Schema::household();
    let mut recs = Vec::new();
    let mut pred = Vec::new();
    for i in 0..60 {
        let mut r = HouseholdRecord::blank(format!("h{i}"), &s);
        r.set(&s, "HUDChronicHomeless", Value::Flag(i % 3 == 0)).unwrap();
        r.set_level(&s, "HasMentalHealthProblem", if i % 2 == 0 { "Yes" } else { "No" }).unwrap();
        r.p_reentry_es = Some(0.3 + (i % 7) as f64 * 0.05);
        r.p_reentry_th = Some(0.3);
        let p = if i < 30 { Es } else { Th };
        r.actual = match i {
            0..=4 => Th,
            30..=33 => Es,
            _ => p,
        };
        recs.push(r);
        pred.push(p);
    }
    (recs, pred)
}

#[test]
fn analyze_small_cohort() {
    let (recs, pred) = small_cohort();
    let scorer = VulnerabilityScorer::standard(&Schema::household()).unwrap();
    let cfg = AnalyzeConfig {
        n_resamples: 200,
        seed: 5,
        exclude_observed: false,
    };
    let r = analyze(&recs, &pred, &scorer, &cfg).unwrap();
    assert_eq!(r.subgroup_es_to_th, vec!["h0", "h1", "h2", "h3", "h4"]);
    assert_eq!(r.subgroup_th_to_es.len() as u64, r.crosstab.get(Th, Es));
    assert_eq!(r.tests.es_to_th_vs.group_size, 5);
    assert_eq!(r.tests.es_to_th_vs.population_size, 30);
    assert_eq!(r.tests.th_to_es_mb.group_size, 4);
    // VS of h0..h4 is chronic + mental: 2,0,1,1,1 -> 1.0
    assert!((r.tests.es_to_th_vs.observed_mean - 1.0).abs() < 1e-12);
    assert_eq!(r, analyze(&recs, &pred, &scorer, &cfg).unwrap());
    let back: DiscretionReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    let text = r.to_text();
    assert_eq!(text.lines().filter(|l| l.starts_with("EStoTH  ") || l.starts_with("THtoES  ")).count(), 4);
}

#[test]
fn analyze_needs_counterfactuals() {
    let (mut recs, pred) = small_cohort();
    recs[40].p_reentry_th = None;
    let scorer = VulnerabilityScorer::standard(&Schema::household()).unwrap();
    assert!(matches!(
        analyze(&recs, &pred, &scorer, &AnalyzeConfig::default()),
        Err(Error::MissingCounterfactuals(id)) if id == "h40"
    ));
}

#[test]
fn analyze_empty_subgroup_errors() {
    let (mut recs, pred) = small_cohort();
    for r in recs.iter_mut().take(5) {
        r.actual = Es;
    }
    let scorer = VulnerabilityScorer::standard(&Schema::household()).unwrap();
    assert!(matches!(
        analyze(&recs, &pred, &scorer, &AnalyzeConfig::default()),
        Err(Error::EmptyGroup)
    ));
}
