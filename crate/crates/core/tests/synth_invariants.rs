use std::collections::{BTreeMap, BTreeSet};

use nestseg::grid::{to_semantic, LabelMask};
use nestseg::metrics::{default_taus, jtpr_one_to_one, match_instances};
use nestseg::star::is_star_convex;
use nestseg::synth::{degrade, gen_scene, DegradeOp, SceneSpec};
use proptest::prelude::*;

fn specs() -> impl Strategy<Value = SceneSpec> {
    (any::<u64>(), 1usize..4, 0usize..3, 0usize..2, 0.0f64..0.25).prop_map(|(seed, n, lo, extra, jitter)| {
        SceneSpec {
            height: 96,
            width: 96,
            n_outer: n,
            inner_per_outer: [lo, lo + extra],
            outer_radius: [11.0, 16.0],
            inner_radius: [2.5, 4.5],
            boundary_jitter: jitter,
            seed,
            ..Default::default()
        }
    })
}

/// Outer id covering each inner instance, or `None` if it spans several or leaks.
fn covering(inner: &LabelMask, outer: &LabelMask) -> BTreeMap<u32, Option<u32>> {
    let mut seen: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&i, &o) in inner.data().iter().zip(outer.data()) {
        if i != 0 {
            let v = seen.entry(i).or_default();
            if !v.contains(&o) {
                v.push(o);
            }
        }
    }
    seen.into_iter()
        .map(|(i, v)| (i, (v.len() == 1 && v[0] != 0).then(|| v[0])))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scenes_are_nested_and_star_convex(spec in specs()) {
        let s = gen_scene(&spec).unwrap();
        prop_assert_eq!(s.gt_outer.instance_count(), spec.n_outer);
        let n_inner = s.gt_inner.instance_count();
        prop_assert!(n_inner >= spec.n_outer * spec.inner_per_outer[0]);
        prop_assert!(n_inner <= spec.n_outer * spec.inner_per_outer[1]);
        for (id, parent) in covering(&s.gt_inner, &s.gt_outer) {
            let parent = parent.expect("inner inside exactly one outer");
            prop_assert_eq!(s.containment.get(id), Some(parent));
        }
        for (mask, centres) in [(&s.gt_outer, &s.outer_centres), (&s.gt_inner, &s.inner_centres)] {
            prop_assert_eq!(centres.len(), mask.instance_count());
            for (&id, &c) in centres {
                prop_assert_eq!(mask.get(c.row, c.col), id);
                prop_assert!(is_star_convex(&mask.instance(id), c).unwrap());
            }
        }
    }

    #[test]
    fn dropping_m_inners_gives_jtpr_fraction(seed in any::<u64>(), p in 0.1f64..0.9) {
        let spec = SceneSpec { seed, height: 96, width: 96, n_outer: 3, inner_per_outer: [1, 2],
            outer_radius: [11.0, 16.0], inner_radius: [2.5, 4.5], ..Default::default() };
        let s = gen_scene(&spec).unwrap();
        let pred = degrade(&s.gt_inner, &[DegradeOp::Drop { p }], seed ^ 1).unwrap();
        let n = s.gt_inner.instance_count();
        let m = n - pred.instance_count();
        let j = jtpr_one_to_one(&s.gt_inner, &pred, &s.gt_outer, &s.gt_outer, 0.5).unwrap();
        prop_assert_eq!(j.inner_joint, n - m);
        prop_assert_eq!(j.inner, (n - m) as f64 / n as f64);
    }

    #[test]
    fn light_erosion_keeps_tp_and_lowers_iou(seed in any::<u64>()) {
        let s = gen_scene(&SceneSpec { seed, ..Default::default() }).unwrap();
        let eroded = degrade(&s.gt_outer, &[DegradeOp::Erode { n: 1 }], 0).unwrap();
        let a = match_instances(&s.gt_outer, &s.gt_outer, 0.1).unwrap();
        let b = match_instances(&s.gt_outer, &eroded, 0.1).unwrap();
        prop_assert_eq!(a.tp, b.tp);
        prop_assert!(b.iou_recall().unwrap() < a.iou_recall().unwrap());
    }

    #[test]
    fn degrade_is_deterministic(seed in any::<u64>()) {
        let s = gen_scene(&SceneSpec::default()).unwrap();
        let ops = [
            DegradeOp::Drop { p: 0.3 },
            DegradeOp::Shift { dr: 2, dc: -1 },
            DegradeOp::SpawnOutside { k: 2, forbidden: to_semantic(&s.gt_outer), radius: [3.0, 5.0] },
        ];
        prop_assert_eq!(degrade(&s.gt_inner, &ops, seed).unwrap(), degrade(&s.gt_inner, &ops, seed).unwrap());
    }

    #[test]
    fn dropping_matched_predictions_never_helps(
        seed in any::<u64>(),
        shift in (-2i64..=2, -2i64..=2),
        erode in 0usize..2,
        p in 0.1f64..0.7,
    ) {
        let spec = SceneSpec { seed, height: 96, width: 96, n_outer: 3, inner_per_outer: [1, 1],
            outer_radius: [11.0, 16.0], inner_radius: [3.0, 5.0], ..Default::default() };
        let s = gen_scene(&spec).unwrap();
        let blur = [DegradeOp::Shift { dr: shift.0, dc: shift.1 }, DegradeOp::Erode { n: erode }];
        let pi = degrade(&s.gt_inner, &blur, seed ^ 2).unwrap();
        let po = degrade(&s.gt_outer, &blur, seed ^ 3).unwrap();
        let pi_drop = degrade(&pi, &[DegradeOp::Drop { p }], seed ^ 4).unwrap();
        let po_drop = degrade(&po, &[DegradeOp::Drop { p }], seed ^ 5).unwrap();
        let gone = |before: &LabelMask, after: &LabelMask| -> BTreeSet<u32> {
            let kept: BTreeSet<u32> = after.ids().into_iter().collect();
            before.ids().into_iter().filter(|id| !kept.contains(id)).collect()
        };
        let (gone_i, gone_o) = (gone(&pi, &pi_drop), gone(&po, &po_drop));
        for tau in default_taus() {
            let (mi, mo) = (match_instances(&s.gt_inner, &pi, tau).unwrap(), match_instances(&s.gt_outer, &po, tau).unwrap());
            let matched = |t: &nestseg::metrics::MatchTable| t.pairs.iter().map(|q| q.pred).collect::<BTreeSet<u32>>();
            if !gone_i.is_subset(&matched(&mi)) || !gone_o.is_subset(&matched(&mo)) {
                continue;
            }
            let (di, d_o) = (match_instances(&s.gt_inner, &pi_drop, tau).unwrap(), match_instances(&s.gt_outer, &po_drop, tau).unwrap());
            for (a, b) in [(&mi, &di), (&mo, &d_o)] {
                prop_assert!(b.iou_recall().unwrap() <= a.iou_recall().unwrap() + 1e-12, "tau {}", tau);
                prop_assert!(b.average_precision().unwrap() <= a.average_precision().unwrap() + 1e-12, "tau {}", tau);
            }
            let j = jtpr_one_to_one(&s.gt_inner, &pi, &s.gt_outer, &po, tau).unwrap();
            let jd = jtpr_one_to_one(&s.gt_inner, &pi_drop, &s.gt_outer, &po_drop, tau).unwrap();
            prop_assert!(jd.inner <= j.inner && jd.outer <= j.outer, "tau {}", tau);
        }
    }
}
