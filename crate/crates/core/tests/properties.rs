use std::collections::BTreeSet;

use granule_core::ball_algebra::{self, AmbientBall, CautiousBall, Law, PartialValue, DEFAULT_GRID};
use granule_core::ball_kmeans::{self, Auditor};
use granule_core::existential::{
    self, build_set_hgos, check_mash, iterate_to_fixpoint, AxiomSuite, BallRefinement, FnOperator,
};
use granule_core::granular_ball::{self, GbConfig};
use granule_core::rough_random::{self, XiConstraint};
use granule_core::subset::powerset;
use granule_core::{BkmConfig, Dataset, Euclidean, Init, LabeledDataset, Subset};
use proptest::collection::vec;
use proptest::prelude::*;

fn dataset(max_n: usize, dim: usize) -> impl Strategy<Value = Dataset> {
    vec(vec(-20.0f64..20.0, dim), 2..max_n).prop_map(|p| Dataset::new(p).unwrap())
}

fn labeled(max_n: usize) -> impl Strategy<Value = LabeledDataset> {
    vec((vec(-10.0f64..10.0, 2), prop::option::weighted(0.9, 0i64..3)), 2..max_n).prop_map(|rows| {
        let (pts, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        LabeledDataset::new(Dataset::new(pts).unwrap(), labels).unwrap()
    })
}

/// Random partition of `0..n` from one block id per element.
fn partition(max_n: usize) -> impl Strategy<Value = (usize, Vec<Subset>)> {
    (1..=max_n).prop_flat_map(|n| {
        vec(0..n, n).prop_map(move |ids| (n, rough_random::partition_of(&ids)))
    })
}

fn subset(n: usize) -> impl Strategy<Value = Subset> {
    vec(any::<bool>(), n).prop_map(move |bits| {
        Subset::from_indices(n, bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bkm_matches_lloyd_and_audits_clean(ds in dataset(120, 3), k in 1usize..6, seed in any::<u64>(), pp in any::<bool>()) {
        let k = k.min(ds.len());
        let init = if pp { Init::PlusPlus } else { Init::RandomPartition };
        let cfg = BkmConfig::new(k).with_seed(seed).with_init(init);
        let mut audit = Auditor::new(&ds, &Euclidean);
        let (b, bs) = ball_kmeans::run_observed(&ds, &cfg, &mut audit).unwrap();
        let (l, ls) = ball_kmeans::lloyd_run(&ds, &cfg).unwrap();
        prop_assert_eq!(b.partition(), l.partition());
        prop_assert!(audit.is_clean(), "{:?}", audit.violations.first());
        prop_assert_eq!(bs.iterations, ls.iterations);
        // centre-distance bookkeeping is the only cost Lloyd does not pay
        let overhead = (bs.iterations * (k * (k - 1) / 2 + k)) as u64;
        prop_assert!(bs.distance_computations <= ls.distance_computations + overhead);
    }

    #[test]
    fn bkm_radii_bound_members(ds in dataset(80, 2), k in 1usize..5, seed in any::<u64>()) {
        let k = k.min(ds.len());
        let (c, _) = ball_kmeans::run(&ds, &BkmConfig::new(k).with_seed(seed)).unwrap();
        for (x, &a) in c.assignments.iter().enumerate() {
            let d = granule_core::Distance::eval(&Euclidean, ds.point(x), &c.centers[a]);
            prop_assert!(d <= c.radii[a] + 1e-12);
        }
    }

    #[test]
    fn granular_balls_partition_the_data(ds in labeled(60), seed in any::<u64>(), purity in 0.5f64..1.0) {
        prop_assume!(ds.has_labels());
        let cfg = GbConfig { purity_threshold: purity, seed, ..GbConfig::default() };
        let report = granular_ball::generate(&ds, &cfg).unwrap();
        let mut seen = vec![false; ds.len()];
        for b in &report.balls {
            let max = b.ball.members.iter()
                .map(|&i| granule_core::Distance::eval(&Euclidean, ds.points.point(i), &b.ball.center))
                .fold(0.0, f64::max);
            prop_assert!(b.ball.radius <= max + 1e-9);
            for &m in &b.ball.members {
                prop_assert!(!seen[m]);
                seen[m] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert!(report.splits.iter().all(|s| s.major_minor));
        let labels: BTreeSet<i64> = report.balls.iter().filter_map(|b| b.ball.majority_label).collect();
        if let Ok(l) = granular_ball::classify(&report.balls, ds.points.point(0), &Euclidean) {
            prop_assert!(labels.contains(&l));
        }
    }

    #[test]
    fn weak_star_implies_weak(a in prop::option::of(vec(-2.0f64..2.0, 2)), b in prop::option::of(vec(-2.0f64..2.0, 2))) {
        let pv = |x: Option<Vec<f64>>| x.map_or(PartialValue::Undefined, PartialValue::Defined);
        let (a, b) = (pv(a), pv(b));
        if ball_algebra::weak_star_equal(&a, &b, 1e-9) {
            prop_assert!(ball_algebra::weak_equal(&a, &b, 1e-9));
        }
    }

    #[test]
    fn ball_operations_stay_inside(c in -3.0f64..3.0, r in 0.5f64..3.0, xs in vec(-4i32..=4, 1..8)) {
        let ambient = AmbientBall::new(vec![c], r).unwrap();
        let v: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x as f64 * 0.5]).collect();
        let cautious = CautiousBall::new(ambient.clone(), v).unwrap();
        let members: Vec<Vec<f64>> = cautious.member_points().map(<[f64]>::to_vec).collect();
        for a in &members {
            for b in &members {
                for &al in &DEFAULT_GRID {
                    for &be in &DEFAULT_GRID {
                        let o = ball_algebra::oplus(&ambient, al, a, be, b).unwrap();
                        let w = ball_algebra::ovee(&cautious, al, a, be, b).unwrap();
                        if let Some(p) = o.as_defined() { prop_assert!(ambient.contains(p)); }
                        if let Some(p) = w.as_defined() {
                            prop_assert!(cautious.contains(p));
                            prop_assert!(o.is_defined());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ambient_laws_hold(c in -3.0f64..3.0, r in 0.5f64..3.0, xs in vec(-4i32..=4, 1..6)) {
        let ambient = AmbientBall::new(vec![c], r).unwrap();
        let v: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x as f64 * 0.5]).collect();
        let cautious = CautiousBall::new(ambient.clone(), v).unwrap();
        let report = ball_algebra::verify_laws(&ambient, &cautious, &DEFAULT_GRID);
        prop_assert!(report.ambient.all_hold(), "{:?}", report.ambient.laws.iter().find(|l| !l.holds));
        prop_assert!(report.domain.contained);
        for law in [Law::WeakStarComm, Law::WeakAssoc, Law::WeakScal1, Law::WeakStarZero, Law::Inverse] {
            prop_assert!(report.cautious.get(law).holds, "{:?}", law);
        }
    }

    #[test]
    fn partition_systems_satisfy_every_suite((n, blocks) in partition(4)) {
        let (sys, _) = build_set_hgos(n, &blocks).unwrap();
        for suite in [AxiomSuite::ggs(), AxiomSuite::pre_ggs(), AxiomSuite::pre_star_ggs(), AxiomSuite::mash()] {
            prop_assert!(check_mash(&sys, &suite).unwrap().all_hold(), "{}", suite.name);
        }
        let text = existential::write_system(&sys);
        prop_assert_eq!(existential::parse_system(&text).unwrap(), sys);
    }

    #[test]
    fn smaller_suites_fail_less((n, blocks) in partition(3), flips in vec((0usize..8, 0usize..8), 1..4)) {
        let (mut sys, _) = build_set_hgos(n, &blocks).unwrap();
        let m = sys.len();
        for (a, b) in flips {
            sys.parthood[a % m][b % m] ^= true;
        }
        let big: BTreeSet<_> = check_mash(&sys, &AxiomSuite::ggs()).unwrap().failures().into_iter().collect();
        for suite in [AxiomSuite::pre_ggs(), AxiomSuite::pre_star_ggs(), AxiomSuite::mash()] {
            let small: BTreeSet<_> = check_mash(&sys, &suite).unwrap().failures().into_iter().collect();
            prop_assert!(small.is_subset(&big), "{}", suite.name);
        }
    }

    #[test]
    fn fixpoints_are_fixed(ds in dataset(12, 2), mask in any::<u64>()) {
        let n = ds.len();
        let gamma = BallRefinement::new(&ds, &Euclidean);
        let e = Subset::from_mask(n, mask & ((1u64 << n) - 1));
        let (steps, g) = iterate_to_fixpoint(&gamma, &e, n + 1).unwrap();
        prop_assert!(steps <= n.max(1));
        prop_assert!(e.is_subset(&g));
        prop_assert_eq!(granule_core::existential::GranuleOperator::apply(&gamma, &g), g.clone());
        let opts = existential::ExistentialOptions { seeds: Some(vec![e.clone()]), ..Default::default() };
        prop_assert!(existential::is_existential_granule(&g, &gamma, &opts).unwrap());
    }

    #[test]
    fn closure_toward_a_target_stabilises(n in 1usize..10, target in any::<u64>(), start in any::<u64>()) {
        let t = Subset::from_mask(n, target & ((1u64 << n) - 1));
        let gamma = FnOperator(move |e: &Subset| {
            // add the smallest missing element of the target
            let mut out = e.clone();
            if let Some(x) = t.difference(e).iter().next() { out.insert(x); }
            out
        });
        let e = Subset::from_mask(n, start & ((1u64 << n) - 1));
        let (steps, g) = iterate_to_fixpoint(&gamma, &e, n + 1).unwrap();
        prop_assert!(steps <= n + 1);
        prop_assert!(g.is_subset(&e.union(&Subset::from_mask(n, target & ((1u64 << n) - 1)))));
    }

    #[test]
    fn pawlak_spaces_behave((n, blocks) in partition(8), x in subset(8)) {
        let x = Subset::from_indices(n, x.iter().filter(|&i| i < n));
        let space = rough_random::pawlak(n, &blocks).unwrap();
        prop_assert!(space.lower(&x).is_subset(&x));
        prop_assert!(x.is_subset(&space.upper(&x)));
        prop_assert_eq!(space.lower(&space.lower(&x)), space.lower(&x));
        prop_assert!(rough_random::check_approx_axioms(&space).all_hold());
        prop_assert_eq!(rough_random::check_pawlak_properties(&space).unwrap(), None);
    }

    #[test]
    fn xi_wrappers_are_type_one((n, blocks) in partition(6)) {
        let space = rough_random::pawlak(n, &blocks).unwrap();
        for variant in 1..=3 {
            for c in [XiConstraint::None, XiConstraint::MinimalCover] {
                let w = rough_random::xi_functions(&space, variant, c).unwrap();
                prop_assert!(w.validate().is_ok());
            }
        }
        prop_assert!(rough_random::xi5_wrapper(&space, &blocks).unwrap().validate().is_ok());
    }

    #[test]
    fn xi5_is_a_fraction(a in subset(10), b in subset(10)) {
        match rough_random::xi5(&a, &b) {
            Ok(v) => {
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v == 0.0, b.is_subset(&a));
            }
            Err(_) => prop_assert!(b.is_empty()),
        }
    }

    #[test]
    fn subset_algebra_matches_btreeset(a in subset(12), b in subset(12)) {
        let sa: BTreeSet<usize> = a.iter().collect();
        let sb: BTreeSet<usize> = b.iter().collect();
        prop_assert_eq!(a.union(&b).to_vec(), sa.union(&sb).copied().collect::<Vec<_>>());
        prop_assert_eq!(a.intersection(&b).to_vec(), sa.intersection(&sb).copied().collect::<Vec<_>>());
        prop_assert_eq!(a.difference(&b).to_vec(), sa.difference(&sb).copied().collect::<Vec<_>>());
        prop_assert_eq!(a.is_subset(&b), sa.is_subset(&sb));
        prop_assert_eq!(a.is_disjoint(&b), sa.is_disjoint(&sb));
    }
}

#[test]
fn powerset_of_small_universes() {
    for n in 0..6 {
        let all: BTreeSet<Subset> = powerset(n).collect();
        assert_eq!(all.len(), 1 << n);
    }
}
