mod common;

use common::{random_dataset, rng};
use csfs::cssvm::{train_p2, train_p3, CsSvmSpec};
use csfs::dataio::{
    binarize_labels, encode_categoricals, impute_median, scale_features, Column, Dataset, RawTable, ScaleMode,
};
use csfs::fs_milp::TimeBudget;
use csfs::kernels::{eval_kernel, gram, KernelSpec};
use csfs::metrics::{empirical_thresholds, rates, ThresholdMode, Thresholds};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, dim)
}

/// Two points and a mask of a common random dimension.
fn pair_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (1usize..7).prop_flat_map(|d| (point(d), point(d), prop::collection::vec(any::<bool>(), d)))
}

fn project(v: &[f64], mask: &[bool]) -> Array1<f64> {
    v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect()
}

fn labels(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n).prop_filter("both classes", |v| v.iter().any(|&b| b) && v.iter().any(|&b| !b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn masked_kernel_equals_kernel_on_projection((a, b, mask) in pair_and_mask(), gamma in 0.01f64..4.0) {
        let pa = project(&a, &mask);
        let pb = project(&b, &mask);
        let full = vec![true; pa.len()];
        let (a, b) = (Array1::from(a), Array1::from(b));
        for (masked, projected) in [
            (KernelSpec::linear(mask.clone()), KernelSpec::linear(full.clone())),
            (KernelSpec::radial(gamma, mask.clone()).unwrap(), KernelSpec::radial(gamma, full.clone()).unwrap()),
        ] {
            let lhs = eval_kernel(&masked, a.view(), b.view()).unwrap();
            let rhs = eval_kernel(&projected, pa.view(), pb.view()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn radial_values_in_unit_interval((a, b, mask) in pair_and_mask(), gamma in 0.01f64..4.0) {
        let spec = KernelSpec::radial(gamma, mask.clone()).unwrap();
        let v = eval_kernel(&spec, Array1::from(a.clone()).view(), Array1::from(b.clone()).view()).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        let same = a.iter().zip(&b).zip(&mask).all(|((x, y), &m)| !m || x == y);
        prop_assert_eq!(v == 1.0, same);
    }

    #[test]
    fn radial_value_shrinks_as_mask_grows((a, b, mask) in pair_and_mask(), extra in any::<u8>(), gamma in 0.01f64..4.0) {
        let mut wider = mask.clone();
        for (k, w) in wider.iter_mut().enumerate() {
            *w |= (extra >> (k % 8)) & 1 == 1;
        }
        let (a, b) = (Array1::from(a), Array1::from(b));
        let small = eval_kernel(&KernelSpec::radial(gamma, mask).unwrap(), a.view(), b.view()).unwrap();
        let large = eval_kernel(&KernelSpec::radial(gamma, wider).unwrap(), a.view(), b.view()).unwrap();
        prop_assert!(large <= small);
    }

    #[test]
    fn gram_is_symmetric_psd(
        rows in (2usize..9, 1usize..5).prop_flat_map(|(n, d)| prop::collection::vec(point(d), n)),
        probe in prop::collection::vec(-1.0f64..1.0, 9),
        gamma in 0.05f64..3.0,
    ) {
        let n = rows.len();
        let d = rows[0].len();
        let x = Array2::from_shape_fn((n, d), |(i, k)| rows[i][k]);
        for spec in [KernelSpec::linear(vec![true; d]), KernelSpec::radial(gamma, vec![true; d]).unwrap()] {
            let g = gram(&spec, x.view()).unwrap();
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((g.get(i, j) - g.get(j, i)).abs() <= 1e-12);
                    quad += probe[i] * probe[j] * g.get(i, j);
                }
            }
            let norm: f64 = probe[..n].iter().map(|v| v * v).sum();
            prop_assert!(quad >= -1e-8 * norm.max(1.0));
            if spec.kind != csfs::kernels::KernelKind::Linear {
                for i in 0..n {
                    prop_assert_eq!(g.get(i, i), 1.0);
                }
            }
        }
    }

    #[test]
    fn dummy_indicators_identify_levels(cells in prop::collection::vec(0u8..4, 1..30), y in labels(30)) {
        let n = cells.len();
        let col: Vec<Option<String>> = cells.iter().map(|c| Some(format!("L{c}"))).collect();
        let lab: Vec<Option<String>> = y[..n].iter().map(|&b| Some(if b { "p" } else { "n" }.to_string())).collect();
        let raw = RawTable::new(vec!["c".into(), "y".into()], vec![Column::Categorical(col), Column::Categorical(lab)], 1).unwrap();
        let enc = encode_categoricals(&raw).unwrap();
        let group = &enc.groups[0];
        for i in 0..n {
            let on: Vec<usize> = group
                .columns
                .iter()
                .enumerate()
                .filter(|(_, &c)| matches!(&enc.columns[c], Column::Numeric(v) if v[i] == Some(1.0)))
                .map(|(p, _)| p)
                .collect();
            prop_assert!(on.len() <= 1);
            let level = on.first().map_or(0, |p| p + 1);
            prop_assert_eq!(&group.levels[level], &format!("L{}", cells[i]));
        }
    }

    #[test]
    fn imputation_keeps_observed_cells(cells in prop::collection::vec(prop::option::weighted(0.7, -1e6f64..1e6), 2..40)) {
        prop_assume!(cells.iter().any(Option::is_some));
        let n = cells.len();
        let lab: Vec<Option<String>> = (0..n).map(|i| Some((i % 2).to_string())).collect();
        let raw = RawTable::new(vec!["a".into(), "y".into()], vec![Column::Numeric(cells.clone()), Column::Categorical(lab)], 1).unwrap();
        let out = impute_median(&raw).unwrap();
        let Column::Numeric(v) = &out.columns[0] else { panic!("numeric column") };
        for (before, after) in cells.iter().zip(v) {
            prop_assert!(after.is_some());
            if let Some(b) = before {
                prop_assert_eq!(b.to_bits(), after.unwrap().to_bits());
            }
        }
    }

    #[test]
    fn positive_class_is_the_larger_one(y in labels(40), n in 2usize..40) {
        prop_assume!(y[..n].iter().any(|&b| b) && y[..n].iter().any(|&b| !b));
        let lab: Vec<Option<String>> = y[..n].iter().map(|&b| Some(if b { "a" } else { "b" }.to_string())).collect();
        let feat = Column::Numeric((0..n).map(|i| Some(i as f64)).collect());
        let raw = RawTable::new(vec!["f".into(), "y".into()], vec![feat, Column::Categorical(lab)], 1).unwrap();
        let d = binarize_labels(&raw, None).unwrap();
        prop_assert!(d.n_pos() >= d.n_neg());
    }

    #[test]
    fn minmax_output_in_unit_interval(rows in (2usize..20, 1usize..6).prop_flat_map(|(n, d)| prop::collection::vec(point(d), n))) {
        let n = rows.len();
        let d = rows[0].len();
        let x = Array2::from_shape_fn((n, d), |(i, k)| rows[i][k] * 100.0);
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let data = Dataset::new(x, y, (0..d).map(|k| format!("f{k}")).collect()).unwrap();
        let (scaled, _) = scale_features(&data, ScaleMode::Minmax01);
        prop_assert!(scaled.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rates_ignore_row_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..50), seed in any::<u64>()) {
        let t: Vec<f64> = pairs.iter().map(|p| if p.0 { 1.0 } else { -1.0 }).collect();
        let p: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { -1.0 }).collect();
        let mut order: Vec<usize> = (0..t.len()).collect();
        let mut r = rng(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        let tp: Vec<f64> = order.iter().map(|&i| t[i]).collect();
        let pp: Vec<f64> = order.iter().map(|&i| p[i]).collect();
        prop_assert_eq!(rates(&t, &p).unwrap(), rates(&tp, &pp).unwrap());
    }

    #[test]
    fn gmean_zero_iff_a_rate_is_zero(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 2..50)) {
        let t: Vec<f64> = pairs.iter().map(|p| if p.0 { 1.0 } else { -1.0 }).collect();
        let p: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { -1.0 }).collect();
        let r = rates(&t, &p).unwrap();
        if let (Some(a), Some(b), Some(g)) = (r.tpr, r.tnr, r.gmean) {
            prop_assert_eq!(g == 0.0, a * b == 0.0);
        }
    }

    #[test]
    fn hoeffding_threshold_monotone(lambda in 0.0f64..0.5, alpha in 0.01f64..0.5, n in 20usize..2000) {
        let at = |alpha: f64, n: usize| empirical_thresholds(lambda, lambda, ThresholdMode::Hoeffding, alpha, n, n).unwrap().pos;
        prop_assert!(at(alpha, n) >= lambda);
        prop_assert!(at(alpha, n + 1) < at(alpha, n));
        prop_assert!(at(alpha / 2.0, n) > at(alpha, n));
        let plain = empirical_thresholds(lambda, lambda, ThresholdMode::Plain, alpha, n, n).unwrap();
        prop_assert_eq!((plain.pos, plain.neg), (lambda, lambda));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masked_out_features_never_move_scores(seed in 0u64..1000, mask_bits in 1u8..31, noise in prop::collection::vec(-50.0f64..50.0, 5), radial in any::<bool>()) {
        let mut r = rng(seed);
        let d = random_dataset(&mut r, 14, 5, 0.1);
        let mask: Vec<bool> = (0..5).map(|k| (mask_bits >> k) & 1 == 1).collect();
        let kernel = if radial { KernelSpec::radial(0.5, mask.clone()).unwrap() } else { KernelSpec::linear(mask.clone()) };
        let spec = CsSvmSpec::new(kernel, 1.0, Thresholds::plain(0.0, 0.0)).with_budget(TimeBudget::seconds(30.0));
        let m = if radial { train_p3(&d, &mask, &spec) } else { train_p2(&d, &mask, &spec) }.unwrap();
        let mut moved = d.x.clone();
        for i in 0..moved.nrows() {
            for k in 0..5 {
                if !mask[k] {
                    moved[[i, k]] += noise[k] * (i as f64 + 1.0);
                }
            }
        }
        prop_assert_eq!(m.decision_values(d.x.view()).unwrap(), m.decision_values(moved.view()).unwrap());
    }
}
