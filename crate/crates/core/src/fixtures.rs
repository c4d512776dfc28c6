//! Reference instances and schemes, plus a seeded random instance generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Instance, Topology, UserSet};
use crate::scheme::LinearScheme;

/// Zero-sum key design over `F_5` for [`example_one`], `L = 1`, `Lz = 4`.
pub const EXAMPLE_ONE_SCHEME: &str = r#"{
  "q": 5,
  "L": 1,
  "Lz": 4,
  "keys": [
    {"user": [1, 1], "rows": [[1, 0, 0, 0]]},
    {"user": [1, 2], "rows": [[0, 1, 0, 0]]},
    {"user": [2, 1], "rows": [[0, 0, 1, 0]]},
    {"user": [2, 2], "rows": [[0, 0, 0, 1]]},
    {"user": [3, 1], "rows": [[0, 0, 0, 0]]},
    {"user": [3, 2], "rows": [[-1, -1, -1, -1]]}
  ]
}
"#;

/// Three clusters of two users with six security and eight collusion sets.
pub fn example_one() -> Instance {
    Instance::from_pairs(
        vec![2, 2, 2],
        &[
            vec![],
            vec![(1, 1)],
            vec![(1, 2)],
            vec![(2, 1)],
            vec![(2, 2)],
            vec![(1, 1), (2, 1)],
        ],
        &[
            vec![],
            vec![(1, 2)],
            vec![(2, 2)],
            vec![(3, 1)],
            vec![(1, 2), (2, 2)],
            vec![(1, 2), (3, 1)],
            vec![(2, 2), (3, 1)],
            vec![(1, 2), (2, 2), (3, 1)],
        ],
        false,
    )
    .expect("valid instance")
}

/// Clusters of sizes 2 and 3; the first cluster is protected against any
/// single user of the second.
pub fn example_two() -> Instance {
    Instance::from_pairs(
        vec![2, 3],
        &[vec![], vec![(1, 1)], vec![(1, 2)], vec![(1, 1), (1, 2)]],
        &[vec![], vec![(2, 1)], vec![(2, 2)], vec![(2, 3)]],
        false,
    )
    .expect("valid instance")
}

/// Every input protected against any three colluders, on the topology of
/// [`example_one`].
pub fn strong_security() -> Instance {
    let topo = Topology::new(vec![2, 2, 2]).expect("valid topology");
    let all = topo.all_users();
    let small: Vec<UserSet> = all.subsets().filter(|s| s.len() <= 3).collect();
    Instance::new(topo, vec![all], small, true).expect("valid instance")
}

/// Two singleton clusters where each user must be hidden from the other.
pub fn infeasible_pair() -> Instance {
    Instance::from_pairs(vec![1, 1], &[vec![(1, 1)]], &[vec![(2, 1)]], true)
        .expect("valid instance")
}

/// Two singleton clusters with nothing to protect.
pub fn empty_case() -> Instance {
    Instance::from_pairs(vec![1, 1], &[vec![]], &[vec![]], false).expect("valid instance")
}

pub fn example_one_scheme() -> LinearScheme {
    LinearScheme::import(EXAMPLE_ONE_SCHEME).expect("valid scheme")
}

/// The MDS-style key design for [`example_two`], `L = 2`, `Lz = 5`, over `F_q`.
pub fn example_two_scheme(q: u64) -> LinearScheme {
    LinearScheme::import(&example_two_scheme_json(q)).expect("valid scheme")
}

pub fn example_two_scheme_json(q: u64) -> String {
    format!(
        r#"{{
  "q": {q},
  "L": 2,
  "Lz": 5,
  "keys": [
    {{"user": [1, 1], "rows": [[-1, 0, -1, -1, -1], [0, -1, -1, -2, -3]]}},
    {{"user": [1, 2], "rows": [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0]]}},
    {{"user": [2, 1], "rows": [[0, 0, 1, 0, 0], [0, 0, 1, 0, 0]]}},
    {{"user": [2, 2], "rows": [[0, 0, 0, 1, 0], [0, 0, 0, 2, 0]]}},
    {{"user": [2, 3], "rows": [[0, 0, 0, 0, 1], [0, 0, 0, 0, 3]]}}
  ]
}}
"#
    )
}

/// A random instance with `2..=max_clusters` clusters and at most `max_users`
/// users, each family generated by up to three random sets and closed.
pub fn random_instance(seed: u64, max_clusters: usize, max_users: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = rng.gen_range(2..=max_clusters.max(2));
    let budget = max_users.max(clusters);
    let mut sizes = vec![1; clusters];
    let extra = rng.gen_range(0..=budget - clusters);
    for _ in 0..extra {
        let c = rng.gen_range(0..clusters);
        sizes[c] += 1;
    }
    let topo = Topology::new(sizes).expect("valid topology");
    let k = topo.num_users();
    let family = |rng: &mut ChaCha8Rng| -> Vec<UserSet> {
        let count = rng.gen_range(0..=3);
        (0..count)
            .map(|_| UserSet::from_bits(rng.gen_range(0..(1u64 << k))))
            .collect()
    };
    let security = family(&mut rng);
    let collusion = family(&mut rng);
    Instance::new(topo, security, collusion, true).expect("valid instance")
}

/// Proptest strategy over [`random_instance`].
#[cfg(test)]
pub fn instance_strategy(
    max_clusters: usize,
    max_users: usize,
) -> impl proptest::strategy::Strategy<Value = Instance> {
    use proptest::prelude::*;
    any::<u64>().prop_map(move |seed| random_instance(seed, max_clusters, max_users))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_monotone;

    #[test]
    fn fixtures_are_well_formed() {
        let one = example_one();
        assert_eq!(
            (one.security_sets().len(), one.collusion_sets().len()),
            (6, 8)
        );
        assert_eq!(example_two().collusion_sets().len(), 4);
        let strong = strong_security();
        assert_eq!(strong.security_sets().len(), 64);
        assert_eq!(strong.collusion_sets().len(), 1 + 6 + 15 + 20);
    }

    #[test]
    fn random_instances_respect_limits() {
        for seed in 0..200 {
            let inst = random_instance(seed, 3, 6);
            assert!((2..=3).contains(&inst.num_clusters()));
            assert!(inst.num_users() <= 6);
            assert!(is_monotone(inst.security_sets()));
            assert!(is_monotone(inst.collusion_sets()));
            assert_eq!(inst, random_instance(seed, 3, 6));
        }
    }
}
