use dataperim::ingestion::generate::{random_grants, random_tree};
use dataperim::ingestion::{
    generate_synthetic_tenant, parse_snapshot, Archetype, GeneratorConfig, GrantResolver,
};
use dataperim::*;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, max_nodes: usize, n: usize) -> (TenantTree, Vec<Grant>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(n.div_ceil(16).max(1)..=max_nodes);
    let tree = random_tree(&mut rng, nodes);
    let grants = random_grants(&mut rng, &tree, n);
    (tree, grants)
}

fn exact(m: &DistanceMatrix<DyadicDistance>) -> DistanceMatrix<Exact> {
    m.map(Exact::from_dyadic)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lca_levels_are_tree_ultrametric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = rng.random_range(1..=50);
        let tree = random_tree(&mut rng, size);
        let ids: Vec<&str> = tree.nodes().map(|n| n.id.as_str()).collect();
        for a in &ids {
            for b in &ids {
                let ab = tree.lca_level(a, b).unwrap();
                prop_assert_eq!(tree.lca(a, b).unwrap(), tree.lca(b, a).unwrap());
                for c in &ids {
                    let ac = tree.lca_level(a, c).unwrap();
                    let bc = tree.lca_level(b, c).unwrap();
                    prop_assert!(ac >= ab.min(bc));
                }
            }
            if let Some(p) = tree.parent(a).unwrap() {
                prop_assert_eq!(tree.lca(a, p).unwrap(), p);
            }
        }
    }

    #[test]
    fn kind_levels_are_fixed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 40);
        for node in tree.nodes() {
            let level = tree.canonical_level(&node.id).unwrap();
            match node.kind.fixed_level() {
                Some(l) => prop_assert_eq!(level, l),
                None => prop_assert!((1..=6).contains(&level)),
            }
        }
    }

    #[test]
    fn single_hierarchy_distances_are_ultrametric(seed in any::<u64>(), n in 2usize..40) {
        let (tree, grants) = instance(seed, 40, n);
        let m = grant_distances(&grants, &tree, &ImpactModel::default()).unwrap();
        prop_assert!(check_ultrametricity(&m, 1).is_empty());
        let bands = enumerate_bands(&ImpactModel::default()).unwrap();
        for i in 0..n {
            prop_assert_eq!(m.get(i, i), DyadicDistance::ZERO);
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                if i != j {
                    prop_assert!(!m.get(i, j).is_zero());
                    prop_assert!(band_of(m.get(i, j), &bands).unwrap().is_some());
                }
            }
        }
    }

    #[test]
    fn infimum_is_below_every_member(seed in any::<u64>(), n in 2usize..12) {
        let (tree, grants) = instance(seed, 30, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        // Re-parent a random subscription under another legal container.
        let containers: Vec<String> = tree.nodes()
            .filter(|x| matches!(x.kind, NodeKind::TenantRoot | NodeKind::ManagementGroup))
            .map(|x| x.id.clone()).collect();
        let subs: Vec<String> = tree.nodes()
            .filter(|x| x.kind == NodeKind::Subscription).map(|x| x.id.clone()).collect();
        let mut alternates = Vec::new();
        if !subs.is_empty() {
            let s = &subs[rng.random_range(0..subs.len())];
            let c = &containers[rng.random_range(0..containers.len())];
            let ov = [(s.clone(), c.clone())].into_iter().collect();
            alternates.push(("alt".to_string(), tree.reparented(&ov).unwrap()));
        }
        let model = ImpactModel::default();
        let family = HierarchyFamily::new(tree.clone(), alternates).unwrap();
        let inf = infimum_distances(&grants, &family, &model).unwrap();
        for (_, member) in family.members() {
            let m = grant_distances(&grants, member, &model).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(inf.get(i, j) <= m.get(i, j));
                }
            }
        }
        let solo = HierarchyFamily::new(tree.clone(), vec![]).unwrap();
        prop_assert_eq!(
            infimum_distances(&grants, &solo, &model).unwrap(),
            grant_distances(&grants, &tree, &model).unwrap()
        );
    }

    #[test]
    fn nn_tour_is_optimal_from_every_start(seed in any::<u64>(), n in 1usize..=8) {
        let (tree, grants) = instance(seed, 40, n);
        let m = exact(&grant_distances(&grants, &tree, &ImpactModel::default()).unwrap());
        let oracle = brute_force_tour(&m).unwrap();
        for start in 0..n {
            let tour = nn_tour(&m, start).unwrap();
            prop_assert_eq!(tour.length, oracle);
            prop_assert_eq!(tour.order.len(), n + 1);
            prop_assert_eq!(tour.order[0], tour.order[n]);
            let mut seen = tour.order[..n].to_vec();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn spread_ratio_bound_and_minimality(seed in any::<u64>(), n in 2usize..=8) {
        let (tree, grants) = instance(seed, 40, n);
        let dm = grant_distances(&grants, &tree, &ImpactModel::default()).unwrap();
        let risk: ExactRisk = PrincipalRisk::assess("x", &dm);
        prop_assert!(risk.spread_ratio > Exact::zero());
        prop_assert!(risk.spread_ratio <= Exact::one());
        risk.check_invariants().unwrap();

        let m = exact(&dm);
        let oracle = brute_force_tour(&m).unwrap();
        let d_min = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j)).min().unwrap();
        match is_ultracycle(&m) {
            Some(xi) => {
                prop_assert_eq!(oracle, xi * Exact::from_integer(n as i128));
                prop_assert_eq!(risk.spread_ratio, Exact::one());
            }
            None => prop_assert!(oracle > d_min * Exact::from_integer(n as i128)),
        }
    }

    #[test]
    fn adding_a_grant_never_shrinks_radius(seed in any::<u64>(), n in 1usize..15) {
        let (tree, grants) = instance(seed, 40, n + 1);
        let model = ImpactModel::default();
        let small = blast_radius(&grant_distances(&grants[..n], &tree, &model).unwrap());
        let big = blast_radius(&grant_distances(&grants, &tree, &model).unwrap());
        prop_assert!(big >= small);
    }

    #[test]
    fn ranking_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 30);
        let risks: Vec<ExactRisk> = (0..12).map(|i| {
            let n = rng.random_range(0..6);
            let g = random_grants(&mut rng, &tree, n);
            let dm = grant_distances(&g, &tree, &ImpactModel::default()).unwrap();
            PrincipalRisk::assess(format!("s{i:02}"), &dm)
        }).collect();
        let sorted = rank_spns(risks.clone());
        let mut shuffled = risks;
        shuffled.reverse();
        shuffled.rotate_left(seed as usize % 12);
        prop_assert_eq!(rank_spns(shuffled), sorted.clone());
        for w in sorted.windows(2) {
            prop_assert!(w[0].blast_radius >= w[1].blast_radius);
            if w[0].blast_radius == w[1].blast_radius {
                prop_assert!(w[0].perimeter >= w[1].perimeter);
            }
        }
        let report = band_report(&sorted, &ImpactModel::default(), false, 0).unwrap();
        let banded: usize = report.rows.iter().map(|r| r.spn_count).sum();
        prop_assert_eq!(banded + report.no_permissions, sorted.len());
    }

    #[test]
    fn generated_tenants_are_valid_and_round_trip(seed in any::<u64>()) {
        let config = GeneratorConfig { seed, tight: 6, dispersed: 6, mixed: 6, ..GeneratorConfig::default() };
        let snap = generate_synthetic_tenant(&config).unwrap();
        let text = snap.to_document();
        let parsed = parse_snapshot(text.as_bytes()).unwrap();
        prop_assert_eq!(parsed.to_document(), text);

        let tree = snap.native_tree().unwrap();
        let resolver = GrantResolver::new(&snap).unwrap();
        let model = ImpactModel::default();
        let sub_band = DyadicDistance::from_parts(1, 7);
        for spn in &snap.spns {
            let risk: ExactRisk = assess_spn(spn, &resolver, &tree, &model).unwrap();
            match Archetype::of_spn(spn).unwrap() {
                Archetype::Tight => {
                    prop_assert!(risk.ultracycle.is_some());
                    prop_assert_eq!(risk.spread_ratio, Exact::one());
                }
                Archetype::Dispersed => {
                    prop_assert!(risk.blast_radius >= sub_band);
                    prop_assert_eq!(risk.blast_radius.cmp(&DyadicDistance::from_parts(2, 7)), std::cmp::Ordering::Greater);
                    prop_assert!(risk.spread_ratio < Exact::new(95, 100));
                }
                Archetype::Mixed => {}
            }
        }
    }
}

#[test]
fn float_and_exact_scalars_rank_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tree = random_tree(&mut rng, 40);
    let model = ImpactModel::default();
    let mut exact_risks = Vec::new();
    let mut float_risks = Vec::new();
    for i in 0..30 {
        let n = rng.random_range(0..8);
        let g = random_grants(&mut rng, &tree, n);
        let dm = grant_distances(&g, &tree, &model).unwrap();
        exact_risks.push(ExactRisk::assess(format!("s{i:02}"), &dm));
        float_risks.push(FloatRisk::assess(format!("s{i:02}"), &dm));
    }
    let a: Vec<String> = rank_spns(exact_risks).into_iter().map(|r| r.spn).collect();
    let b: Vec<String> = rank_spns(float_risks).into_iter().map(|r| r.spn).collect();
    assert_eq!(a, b);
}
