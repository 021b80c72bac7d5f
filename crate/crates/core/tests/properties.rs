//! Invariants of the statistics and of the data layer.

use ordpat::breaktest::{t_statistic, w_statistic, BreakTestConfig};
use ordpat::dataio::{read_pair_csv, read_pair_json, write_pair_csv, write_pair_json};
use ordpat::estimators::{estimate_p, estimate_q};
use ordpat::metrics::{PatternMetric, WeightFunction};
use ordpat::{Order, PairedSeries};
use proptest::prelude::*;

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-20i32..20, n), prop::collection::vec(-20i32..20, n)))
        .prop_map(|(a, b)| (a.into_iter().map(f64::from).collect(), b.into_iter().map(f64::from).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn break_test_ignores_increasing_transforms((x, y) in series(20..200), h in 1usize..4) {
        let o = Order::new(h).unwrap();
        let cfg = BreakTestConfig::default();
        let a = t_statistic(&PairedSeries::new(x.clone(), y.clone()).unwrap(), o, &cfg);
        let tx: Vec<f64> = x.iter().map(|v| (v / 7.0).exp() + 3.0).collect();
        let ty: Vec<f64> = y.iter().map(|v| v.powi(3) - 2.0).collect();
        let b = t_statistic(&PairedSeries::new(tx, ty).unwrap(), o, &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.statistic, b.statistic);
                prop_assert_eq!(a.trajectory, b.trajectory);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "only one side degenerate"),
        }
    }

    #[test]
    fn weighted_test_with_discrete_indicator_is_classical((x, y) in series(20..200), h in 1usize..4) {
        let o = Order::new(h).unwrap();
        let s = PairedSeries::new(x, y).unwrap();
        let cfg = BreakTestConfig::default();
        let t = t_statistic(&s, o, &cfg);
        let w = w_statistic(&s, o, &PatternMetric::Discrete, &WeightFunction::IndicatorAtZero, &cfg);
        match (t, w) {
            (Ok(t), Ok(w)) => prop_assert_eq!(t, w),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "results disagree on degeneracy"),
        }
    }

    #[test]
    fn estimates_symmetric_in_the_pair((x, y) in series(5..100), h in 1usize..4) {
        let o = Order::new(h).unwrap();
        let s = PairedSeries::new(x, y).unwrap();
        prop_assert_eq!(estimate_p(&s, o).unwrap(), estimate_p(&s.swapped(), o).unwrap());
        prop_assert!((estimate_q(&s, o).unwrap() - estimate_q(&s.swapped(), o).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pair_csv_round_trip((x, y) in series(1..50), scale in 0.001f64..1000.0) {
        let x: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let s = PairedSeries::new(x, y).unwrap();
        let mut buf = Vec::new();
        write_pair_csv(&s, &mut buf).unwrap();
        let back = read_pair_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.x(), s.x());
        prop_assert_eq!(back.y(), s.y());
    }

    #[test]
    fn pair_json_round_trip((x, y) in series(1..50)) {
        let stamps: Vec<String> = (0..x.len()).map(|i| format!("2001-{:02}-{:02}", i / 28 + 1, i % 28 + 1)).collect();
        let s = PairedSeries::with_timestamps(x, y, stamps).unwrap();
        let mut buf = Vec::new();
        write_pair_json(&s, &mut buf).unwrap();
        prop_assert_eq!(read_pair_json(buf.as_slice()).unwrap(), s);
    }
}
