mod common;

use std::collections::BTreeMap;

use nalgebra::DVector;
use proptest::prelude::*;

use sparse_csg::csg::{solve_csg_bruteforce, solve_csg_dp, ValueFunction};
use sparse_csg::{validate_structure, welfare, welfare_lipschitz_check, Coalition, CoalitionUniverse};

/// Independent check that `blocks` (bitmasks) partition `0..n`.
fn is_partition(blocks: &[u64], n: usize) -> bool {
    let mut seen = vec![0usize; n];
    for &b in blocks {
        if b == 0 || b >> n != 0 {
            return false;
        }
        for (i, s) in seen.iter_mut().enumerate() {
            if b & (1 << i) != 0 {
                *s += 1;
            }
        }
    }
    seen.iter().all(|&c| c == 1)
}

fn value_function(n: usize, keep: &[bool], vals: &[f64], default_value: f64) -> ValueFunction {
    let all = CoalitionUniverse::all_up_to_size(n, n).unwrap();
    let cs: Vec<Coalition> = all
        .coalitions()
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| *c)
        .collect();
    let u = CoalitionUniverse::new(n, cs).unwrap();
    let values: BTreeMap<usize, f64> = (0..u.len()).map(|j| (j, vals[j])).collect();
    ValueFunction::new(u, values, default_value).unwrap()
}

fn assignment_to_blocks(assign: &[usize]) -> Vec<Coalition> {
    let mut by: BTreeMap<usize, u64> = BTreeMap::new();
    for (agent, &b) in assign.iter().enumerate() {
        *by.entry(b).or_default() |= 1 << agent;
    }
    by.into_values().map(Coalition).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lipschitz_holds_exactly(
        n in 1usize..=6,
        assign in prop::collection::vec(0usize..6, 6),
        a in prop::collection::vec(-5.0f64..5.0, 63),
        b in prop::collection::vec(-5.0f64..5.0, 63),
    ) {
        let u = CoalitionUniverse::all_up_to_size(n, n).unwrap();
        let m = u.len();
        let s = validate_structure(&assignment_to_blocks(&assign[..n]), &u).unwrap();
        let ta = DVector::from_column_slice(&a[..m]);
        let tb = DVector::from_column_slice(&b[..m]);
        let (gap, bound) = welfare_lipschitz_check(&s, &ta, &tb).unwrap();
        prop_assert!(gap <= bound);
        let direct = (welfare(&s, &ta).unwrap() - welfare(&s, &tb).unwrap()).abs();
        prop_assert!(direct <= bound * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn validate_structure_agrees_with_partition_check(
        n in 1usize..=6,
        blocks in prop::collection::vec(0u64..128, 0..7),
    ) {
        let u = CoalitionUniverse::all_up_to_size(n, 2.min(n)).unwrap();
        let cs: Vec<Coalition> = blocks.iter().map(|&b| Coalition(b)).collect();
        let got = validate_structure(&cs, &u);
        prop_assert_eq!(got.is_ok(), is_partition(&blocks, n));
        if let Ok(s) = got {
            prop_assert!(s.indicator.iter().filter(|&&z| z).count() <= n);
            for (j, &z) in s.indicator.iter().enumerate() {
                prop_assert_eq!(z, blocks.contains(&u.coalition(j).bits()));
            }
            prop_assert_eq!(s.unlisted_blocks.len(), blocks.iter().filter(|&&b| b.count_ones() > 2).count());
        }
    }

    #[test]
    fn dp_matches_bruteforce(
        n in 1usize..=7,
        keep in prop::collection::vec(prop::bool::weighted(0.6), 127),
        vals in prop::collection::vec(prop_oneof![(-4i32..5).prop_map(f64::from), -4.0f64..4.0], 127),
        default_value in prop_oneof![Just(0.0), -1.0f64..1.0],
    ) {
        let m = (1usize << n) - 1;
        let vf = value_function(n, &keep[..m], &vals, default_value);
        let dp = solve_csg_dp(&vf, None).unwrap();
        let bf = solve_csg_bruteforce(&vf).unwrap();
        prop_assert_eq!(dp.value, bf.value);
        prop_assert_eq!(&dp.structure, &bf.structure);
    }

    #[test]
    fn dp_dominates_every_partition(
        n in 1usize..=5,
        vals in prop::collection::vec(-3.0f64..3.0, 31),
    ) {
        let m = (1usize << n) - 1;
        let vf = value_function(n, &vec![true; m], &vals, 0.0);
        let best = solve_csg_dp(&vf, None).unwrap().value;
        let u = vf.universe();
        for p in common::all_partitions(n) {
            let total: f64 = p
                .iter()
                .map(|b| vals[u.index_of(Coalition::from_agents(b.iter().copied()).unwrap()).unwrap()])
                .sum();
            prop_assert!(best >= total - 1e-12);
        }
    }
}
