use std::str::FromStr;

use bigdecimal::BigDecimal;
use proptest::prelude::*;

use llm_interop::domain::{
    classify_failure, ConversionTask, DatasetVersion, FailureCause, PipelineStage, RawError, Strategy as Approach,
};
use llm_interop::equivalence::{canonicalize, equivalent, texts_equivalent};
use llm_interop::geoconv::{
    boundary_to_provider, provider_to_geo_reference, Dec, FieldBoundary, Geometry, Position,
};
use llm_interop::stats::{cohens_h, pass_at_k, power_two_prop, two_prop_test, Proportion};
use llm_interop::strategies::{build_prompt, fingerprint_schema, PromptTemplate};

fn counts() -> impl Strategy<Value = (u64, u64)> {
    (1u64..2000).prop_flat_map(|n| (Just(n), 0..=n))
}

fn json_value() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        Just(serde_json::Value::Null),
        any::<bool>().prop_map(serde_json::Value::Bool),
        (-1_000_000i64..1_000_000, 0u32..6).prop_map(|(m, s)| {
            let s = if m % 10 == 0 { 0 } else { s };
            let d = BigDecimal::new(m.into(), s as i64);
            serde_json::Value::Number(serde_json::Number::from_str(&d.to_string()).unwrap())
        }),
        "[a-z ]{0,6}".prop_map(serde_json::Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(serde_json::Value::Array),
            prop::collection::btree_map("[a-d]{1,2}", inner, 0..4)
                .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
        ]
    })
}

fn reversed_keys(v: &serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => {
            serde_json::Value::Object(m.iter().rev().map(|(k, v)| (k.clone(), reversed_keys(v))).collect())
        }
        serde_json::Value::Array(xs) => serde_json::Value::Array(xs.iter().map(reversed_keys).collect()),
        other => other.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pass_at_k_is_monotone_in_c_and_k((n, c) in counts(), k in 1u64..20) {
        let k = k.min(n);
        let v = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        if c < n {
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= v - 1e-12);
        }
        if k < n {
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= v - 1e-12);
        }
    }

    #[test]
    fn z_test_is_symmetric((n1, c1) in counts(), (n2, c2) in counts(), corrected in any::<bool>()) {
        let a = Proportion::new(c1, n1).unwrap();
        let b = Proportion::new(c2, n2).unwrap();
        let (z_ab, p_ab) = two_prop_test(a, b, corrected);
        let (z_ba, p_ba) = two_prop_test(b, a, corrected);
        prop_assert!((z_ab + z_ba).abs() < 1e-12);
        prop_assert!((p_ab - p_ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p_ab));
    }

    #[test]
    fn continuity_correction_never_lowers_p((n1, c1) in counts(), (n2, c2) in counts()) {
        let a = Proportion::new(c1, n1).unwrap();
        let b = Proportion::new(c2, n2).unwrap();
        let (_, corrected) = two_prop_test(a, b, true);
        let (_, plain) = two_prop_test(a, b, false);
        prop_assert!(corrected >= plain - 1e-15);
    }

    #[test]
    fn cohens_h_is_antisymmetric_and_bounded(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
        let h = cohens_h(p1, p2).unwrap();
        prop_assert!((h + cohens_h(p2, p1).unwrap()).abs() < 1e-12);
        prop_assert!(h.abs() <= std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn power_grows_with_effect_and_sample(h in 0.0f64..1.5, dh in 0.0f64..0.5, n in 2u64..5000, dn in 0u64..500) {
        let base = power_two_prop(h, n, 0.05).unwrap();
        prop_assert!(power_two_prop(h + dh, n, 0.05).unwrap() >= base - 1e-12);
        prop_assert!(power_two_prop(h, n + dn, 0.05).unwrap() >= base - 1e-12);
        prop_assert!(power_two_prop(-h, n, 0.05).unwrap() == base);
    }

    #[test]
    fn equivalence_is_reflexive_symmetric_and_order_free(a in json_value(), b in json_value()) {
        let ta = a.to_string();
        let tb = b.to_string();
        prop_assert!(texts_equivalent(&ta, &ta, None).unwrap().is_ok());
        let reordered = serde_json::to_string_pretty(&reversed_keys(&a)).unwrap();
        prop_assert!(texts_equivalent(&ta, &reordered, None).unwrap().is_ok());
        let ab = texts_equivalent(&ta, &tb, None).unwrap().is_ok();
        let ba = texts_equivalent(&tb, &ta, None).unwrap().is_ok();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(ab, a == b);
    }

    #[test]
    fn wider_tolerance_accepts_more(x in -100_000i64..100_000, y in -100_000i64..100_000, t in 0u32..50_000, dt in 0u32..50_000) {
        let a = canonicalize(&format!("[{}]", BigDecimal::new(x.into(), 3))).unwrap();
        let b = canonicalize(&format!("[{}]", BigDecimal::new(y.into(), 3))).unwrap();
        let narrow = BigDecimal::new(t.into(), 3);
        let wide = BigDecimal::new((t + dt).into(), 3);
        let gap = (x - y).unsigned_abs();
        prop_assert_eq!(equivalent(&a, &b, Some(&narrow)).is_ok(), gap <= t as u64);
        if equivalent(&a, &b, Some(&narrow)).is_ok() {
            prop_assert!(equivalent(&a, &b, Some(&wide)).is_ok());
        }
    }

    #[test]
    fn prompts_embed_inputs_verbatim(input in "[ -~\n]{1,200}", target in "[ -~\n]{1,200}", codegen in any::<bool>()) {
        let strategy = if codegen { Approach::Codegen } else { Approach::Direct };
        let task = ConversionTask::gateway("e", input.clone(), target.clone()).unwrap();
        let prompt = build_prompt(&PromptTemplate::builtin(strategy), &task);
        prop_assert!(prompt.contains(&input));
        prop_assert!(prompt.contains(&target));
    }

    #[test]
    fn fingerprint_ignores_values(a in json_value(), seed in any::<u64>()) {
        let perturbed = perturb(&a, seed);
        let target = r#"{"type": "FeatureCollection"}"#;
        prop_assert_eq!(
            fingerprint_schema(&a.to_string(), target, "t"),
            fingerprint_schema(&perturbed.to_string(), target, "t")
        );
    }

    #[test]
    fn geo_reference_swaps_to_lon_lat(
        pts in prop::collection::vec((-179_999_999i64..179_999_999, -89_999_999i64..89_999_999), 3..12),
        ha in 1u64..10_000_000,
        v in 0usize..4,
    ) {
        let dec = |m: i64| Dec::from_big(&BigDecimal::new(m.into(), 6));
        let mut ring: Vec<Position> = pts.iter().map(|&(lon, lat)| Position::new(dec(lon), dec(lat))).collect();
        ring.push(ring[0].clone());
        let area = Dec::from_big(&BigDecimal::new(ha.into(), 2));
        let b = FieldBoundary {
            id: "f1".into(),
            name: "n".into(),
            source_type: "s".into(),
            created_time: "2024-01-01T00:00:00Z".into(),
            modified_time: "2024-01-01T00:00:00Z".into(),
            rings: vec![ring.clone()],
            area_ha: area.clone(),
        };
        let version = DatasetVersion::ALL[v];
        let provider = boundary_to_provider(&b);
        let reparsed = llm_interop::geoconv::ProviderBoundaryDoc::parse(&provider.to_pretty_json()).unwrap();
        prop_assert_eq!(&reparsed, &provider);
        let geo = provider_to_geo_reference(&reparsed, version).unwrap();
        prop_assert_eq!(geo.version(), Some(version));
        let Geometry::Polygon { coordinates } = &geo.features[0].geometry else {
            panic!("single ring must yield a Polygon");
        };
        let got: Vec<(String, String)> = coordinates[0].iter().map(|[x, y]| (x.as_str().to_string(), y.as_str().to_string())).collect();
        let want: Vec<(String, String)> = ring.iter().map(|p| (p.lon.as_str().to_string(), p.lat.as_str().to_string())).collect();
        prop_assert_eq!(got, want);
        if version == DatasetVersion::V4 {
            let acres = geo.features[0].properties.area_acres.as_ref().unwrap().to_big();
            let factor = BigDecimal::from_str("2.471053814671653").unwrap();
            prop_assert_eq!(acres, area.to_big() * factor);
        }
    }
}

fn perturb(v: &serde_json::Value, seed: u64) -> serde_json::Value {
    match v {
        serde_json::Value::Number(_) => serde_json::json!(seed % 997),
        serde_json::Value::String(s) => serde_json::Value::String(format!("{s}{}", seed % 7)),
        serde_json::Value::Bool(b) => serde_json::Value::Bool(*b ^ (seed % 2 == 1)),
        serde_json::Value::Array(xs) => serde_json::Value::Array(xs.iter().map(|x| perturb(x, seed)).collect()),
        serde_json::Value::Object(m) => {
            serde_json::Value::Object(m.iter().map(|(k, x)| (k.clone(), perturb(x, seed))).collect())
        }
        serde_json::Value::Null => serde_json::Value::Null,
    }
}

#[test]
fn classification_is_total() {
    let stages = [
        PipelineStage::LlmCall,
        PipelineStage::Extraction,
        PipelineStage::Compile,
        PipelineStage::Execute,
        PipelineStage::Parse,
        PipelineStage::Compare,
    ];
    let raws = [
        RawError::StopReason("length".into()),
        RawError::StopReason("stop".into()),
        RawError::Transport("reset".into()),
        RawError::Timeout("deadline".into()),
        RawError::Empty,
        RawError::Message("boom".into()),
    ];
    let mut seen = std::collections::BTreeSet::new();
    for s in stages {
        for r in &raws {
            seen.insert(classify_failure(s, r));
        }
    }
    let all: std::collections::BTreeSet<FailureCause> = FailureCause::ALL.into_iter().collect();
    assert_eq!(seen, all);
}
