use nestseg::grid::LabelMask;
use nestseg::metrics::{
    ap_from_counts, ap_indifference_delta, default_taus, jtpr_one_to_one, match_instances,
};
use nestseg_oracle::{brute_best_matching, brute_iou_matrix};
use proptest::prelude::*;

const SIDE: usize = 16;

/// Up to `n` random rectangles painted in order; later ones overwrite earlier.
fn rects(n: usize) -> impl Strategy<Value = LabelMask> {
    prop::collection::vec((0..SIDE, 0..SIDE, 2..8usize, 2..8usize), 0..=n).prop_map(|rs| {
        let mut m = LabelMask::zeros(SIDE, SIDE);
        for (i, (r, c, h, w)) in rs.into_iter().enumerate() {
            for rr in r..(r + h).min(SIDE) {
                for cc in c..(c + w).min(SIDE) {
                    m.set(rr, cc, i as u32 + 1);
                }
            }
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn optimal_matching_equals_brute_force(gt in rects(6), pred in rects(6)) {
        let (_, _, iou) = brute_iou_matrix(gt.data(), pred.data());
        for tau in default_taus() {
            let t = match_instances(&gt, &pred, tau).unwrap();
            let (count, sum, _) = brute_best_matching(&iou, tau);
            prop_assert_eq!(t.tp, count, "tau {}", tau);
            prop_assert!((t.iou_sum() - sum).abs() < 1e-9, "tau {}: {} vs {}", tau, t.iou_sum(), sum);
            prop_assert_eq!(t.fn_, t.n_gt - t.tp);
            prop_assert_eq!(t.fp, t.n_pred - t.tp);
            for p in &t.pairs {
                prop_assert!(p.iou > tau);
            }
        }
    }

    #[test]
    fn ap_non_increasing_in_tau(gt in rects(6), pred in rects(6)) {
        prop_assume!(gt.instance_count() > 0);
        let mut last = f64::INFINITY;
        for tau in default_taus() {
            let t = match_instances(&gt, &pred, tau).unwrap();
            let ap = t.average_precision().unwrap();
            prop_assert!(ap <= last + 1e-12, "tau {}: {} after {}", tau, ap, last);
            prop_assert!(t.iou_recall().unwrap() <= t.tp as f64 / t.n_gt as f64 + 1e-12);
            last = ap;
        }
    }

    // Known failure: pair count is maximised before IoU, so at a low tau two weak
    // pairs can beat one strong pair that is the only survivor at a higher tau.
    // The saved regression case has IoU_R 0.1201 at tau 0.1 and 0.1364 at 0.2.
    #[test]
    fn iou_recall_non_increasing_in_tau(gt in rects(6), pred in rects(6)) {
        prop_assume!(gt.instance_count() > 0);
        let mut last = f64::INFINITY;
        for tau in default_taus() {
            let v = match_instances(&gt, &pred, tau).unwrap().iou_recall().unwrap();
            prop_assert!(v <= last + 1e-12, "tau {}: {} after {}", tau, v, last);
            last = v;
        }
    }

    #[test]
    fn relabelling_changes_nothing(gt in rects(6), pred in rects(6), shift in 1u32..50) {
        prop_assume!(gt.instance_count() > 0);
        let relabelled = pred.map_ids(|id| if id == 0 { 0 } else { 100 - id + shift });
        for tau in [0.1, 0.5, 0.9] {
            let a = match_instances(&gt, &pred, tau).unwrap();
            let b = match_instances(&gt, &relabelled, tau).unwrap();
            prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fp, b.fn_));
            prop_assert!((a.iou_sum() - b.iou_sum()).abs() < 1e-12);
        }
    }

    #[test]
    fn indifference_boundary_keeps_ap(tp in 1usize..50, fn_ in 0usize..50, fp in 0usize..50, frac in 0.0f64..=1.0) {
        let dtp = ((tp + fn_) as f64 * frac).round() as i64 - tp as i64;
        let Ok(dfp) = ap_indifference_delta(tp, fn_, fp, dtp) else {
            // only TP drops too large for the available FP may be refused
            prop_assert!(dtp < 0 && fp as f64 + dtp as f64 * (tp + fn_ + fp) as f64 / (tp as f64) < 0.0);
            return Ok(());
        };
        let before = ap_from_counts(tp, fn_, fp).unwrap();
        let new_tp = (tp as i64 + dtp) as f64;
        let new_fn = (fn_ as i64 - dtp) as f64;
        let after = new_tp / (new_tp + new_fn + fp as f64 + dfp);
        prop_assert!((before - after).abs() <= 1e-12);
        if dtp > 0 {
            // any smaller FP increase makes AP strictly larger
            let smaller = new_tp / (new_tp + new_fn + fp as f64 + dfp - 0.5);
            prop_assert!(smaller > before);
        }
    }

    #[test]
    fn jtpr_numerators_agree(inner in rects(6), outer in rects(6), pi in rects(6), po in rects(6)) {
        prop_assume!(inner.instance_count() > 0 && outer.instance_count() > 0);
        let j = jtpr_one_to_one(&inner, &pi, &outer, &po, 0.3).unwrap();
        prop_assert_eq!(j.inner_joint, j.outer_joint);
        prop_assert_eq!(j.inner * j.n_inner as f64, j.outer * j.n_outer as f64);
    }
}
