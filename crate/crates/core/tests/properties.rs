use labelreach::metrics::{confusion, report, ConfusionMatrix};
use labelreach::prep::{assign_splits, make_tile_grid, SplitKind};
use labelreach::raster::{decode_grid, encode_grid, EmbeddingRaster, Grid, LabelRaster, NODATA};
use labelreach::report::{metrics_table, parse_metrics_table, round2, TableRow};
use proptest::prelude::*;

fn labels(w: u32, h: u32, max_id: u16) -> impl Strategy<Value = LabelRaster> {
    let ids = prop_oneof![9 => 0..max_id, 1 => Just(NODATA)];
    proptest::collection::vec(ids, (w * h) as usize).prop_map(move |v| LabelRaster::new(w, h, v).unwrap())
}

proptest! {
    #[test]
    fn embedding_round_trip(
        (w, h, b, values) in (1u32..9, 1u32..9, 1u32..4).prop_flat_map(|(w, h, b)| {
            let n = (w * h * b) as usize;
            (Just(w), Just(h), Just(b), proptest::collection::vec(proptest::num::f32::NORMAL | proptest::num::f32::SUBNORMAL | proptest::num::f32::ZERO, n))
        })
    ) {
        let n = values.len();
        let e = EmbeddingRaster::new(w, h, b, values).unwrap();
        let bytes = encode_grid(&e);
        prop_assert_eq!(bytes.len(), 24 + 4 * n);
        match decode_grid(&bytes).unwrap() {
            // bitwise, so -0.0 must survive too
            Grid::Embedding(d) => prop_assert!(d.values().iter().zip(e.values()).all(|(a, b)| a.to_bits() == b.to_bits())),
            Grid::Labels(_) => prop_assert!(false, "decoded as labels"),
        }
    }

    #[test]
    fn label_round_trip(l in (1u32..12, 1u32..12).prop_flat_map(|(w, h)| labels(w, h, 40))) {
        let bytes = encode_grid(&l);
        prop_assert_eq!(decode_grid(&bytes).unwrap().into_labels().unwrap(), l);
        prop_assert!(decode_grid(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn splits_partition_eligible_tiles(
        tiles in 1u32..12,
        ft in 0.0f64..1.0,
        fv_share in 0.0f64..1.0,
        seed in any::<u64>(),
        mask in any::<u64>(),
    ) {
        let grid = make_tile_grid(tiles * 4, 8, 4).unwrap();
        let fv = (1.0 - ft) * fv_share;
        let eligible = |i: usize| mask >> (i % 64) & 1 == 1;
        let n = (0..grid.len()).filter(|&i| eligible(i)).count();
        let res = assign_splits(&grid, (ft, fv), seed, eligible);
        if n == 0 {
            prop_assert!(res.is_err());
            return Ok(());
        }
        let s = res.unwrap();
        for i in 0..grid.len() {
            prop_assert_eq!(s.kinds[i] == SplitKind::Excluded, !eligible(i));
        }
        let counted = s.count(SplitKind::Train) + s.count(SplitKind::Val) + s.count(SplitKind::Test);
        prop_assert_eq!(counted, n);
        prop_assert_eq!(s.count(SplitKind::Train), (ft * n as f64 + 1e-9).floor() as usize);
        let again = assign_splits(&grid, (ft, fv), seed, eligible).unwrap();
        prop_assert_eq!(again.kinds, s.kinds);
    }

    #[test]
    fn metrics_invariant_under_pixel_permutation(
        pair in (1u32..10).prop_flat_map(|w| (labels(w, 6, 5), labels(w, 6, 5))),
        rot in 0usize..60,
    ) {
        let (t, p) = pair;
        let w = t.width();
        let n = t.ids().len();
        let shift = |l: &LabelRaster| {
            let mut ids = l.ids().to_vec();
            ids.rotate_left(rot % n);
            ids.reverse();
            LabelRaster::new(w, 6, ids).unwrap()
        };
        let a = confusion(&t, &p, 5).unwrap();
        prop_assert_eq!(&a, &confusion(&shift(&t), &shift(&p), 5).unwrap());
        if a.total() > 0 {
            prop_assert_eq!(report(&a).unwrap(), report(&confusion(&shift(&t), &shift(&p), 5).unwrap()).unwrap());
        }
    }

    #[test]
    fn jaccard_f1_identity(rows in proptest::collection::vec(proptest::collection::vec(0u64..50, 4), 4)) {
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        prop_assume!(cm.total() > 0);
        let r = report(&cm).unwrap();
        for c in &r.per_class {
            prop_assert!((c.jaccard - c.f1 / (2.0 - c.f1)).abs() < 1e-12);
            prop_assert!(c.jaccard <= c.f1 + 1e-15);
        }
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
    }

    #[test]
    fn table_round_trips_to_two_decimals(vals in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..5)) {
        let reports: Vec<_> = vals
            .iter()
            .map(|&(a, j, f)| labelreach::MetricsReport { accuracy: a, macro_jaccard: j, macro_f1: f, per_class: Vec::new() })
            .collect();
        let names: Vec<String> = (0..reports.len()).map(|i| format!("M{i}")).collect();
        let rows: Vec<TableRow<'_>> = reports
            .iter()
            .zip(&names)
            .map(|(r, m)| TableRow { model: m, split: "Test", report: r })
            .collect();
        let parsed = parse_metrics_table(&metrics_table(&rows)).unwrap();
        prop_assert_eq!(parsed.len(), reports.len());
        for ((m, s, v), r) in parsed.iter().zip(&reports) {
            prop_assert!(m.starts_with('M'));
            prop_assert_eq!(s, "Test");
            prop_assert_eq!(round2(v[0]), round2(r.accuracy));
            prop_assert_eq!(round2(v[1]), round2(r.macro_jaccard));
            prop_assert_eq!(round2(v[2]), round2(r.macro_f1));
        }
    }
}
