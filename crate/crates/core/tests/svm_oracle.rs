mod common;

use common::{enumerate_svm, svm_case, train_svm, SvmCase};
use csfs::cssvm::ModelParams;
use csfs::fs_milp::FsStatus;
use csfs::metrics::{rates, zeta_rates};

#[test]
fn branch_and_bound_matches_enumeration() {
    for seed in 0..16 {
        let case = svm_case(seed);
        let m = train_svm(&case);
        match enumerate_svm(&case) {
            Some(best) => {
                assert_eq!(m.diagnostics.status, FsStatus::Optimal, "seed {seed}");
                let tol = 1e-6 * best.abs().max(1.0);
                assert!((m.diagnostics.objective - best).abs() <= tol, "seed {seed}: {} vs {best}", m.diagnostics.objective);
            }
            None => assert_eq!(m.diagnostics.status, FsStatus::Infeasible, "seed {seed}"),
        }
    }
}

#[test]
fn trained_models_keep_their_guarantees() {
    for seed in 100..130 {
        let case = svm_case(seed);
        let m = train_svm(&case);
        if !m.diagnostics.status.has_solution() {
            continue;
        }
        let d = &case.data;
        let (tpr_lb, tnr_lb) = zeta_rates(&m.diagnostics.zeta, &d.y).unwrap();
        assert!(tpr_lb.unwrap() >= case.lambda_pos - 1e-9, "seed {seed}");
        assert!(tnr_lb.unwrap() >= case.lambda_neg - 1e-9, "seed {seed}");
        let measured = rates(&d.y, &m.predict(d.x.view()).unwrap()).unwrap();
        assert!(measured.tpr.unwrap() >= tpr_lb.unwrap(), "seed {seed}");
        assert!(measured.tnr.unwrap() >= tnr_lb.unwrap(), "seed {seed}");
        let scores = m.decision_values(d.x.view()).unwrap();
        for i in 0..d.n_samples() {
            if m.diagnostics.zeta[i] {
                assert!(d.y[i] * scores[i] >= 1.0 - 1e-6, "seed {seed} row {i}");
            }
        }
        match &m.params {
            ModelParams::Linear { w } => {
                for k in 0..w.len() {
                    if !case.mask[k] {
                        assert_eq!(w[k], 0.0);
                    }
                }
            }
            ModelParams::Kernel { alpha, labels, .. } => {
                let eq: f64 = alpha.iter().zip(labels).map(|(a, y)| a * y).sum();
                assert!(eq.abs() <= 1e-8, "seed {seed}");
                assert!(alpha.iter().all(|&a| a >= 0.0));
            }
        }
    }
}

#[test]
fn constraints_never_lower_the_objective() {
    for seed in 200..215 {
        let case = svm_case(seed);
        let free = SvmCase {
            lambda_pos: 0.0,
            lambda_neg: 0.0,
            data: case.data.clone(),
            mask: case.mask.clone(),
            c: case.c,
            gamma: case.gamma,
        };
        let a = train_svm(&free);
        let b = train_svm(&case);
        if b.diagnostics.status.has_solution() {
            assert!(b.diagnostics.objective >= a.diagnostics.objective - 1e-9, "seed {seed}");
        }
    }
}
