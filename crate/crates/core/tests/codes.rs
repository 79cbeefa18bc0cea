use std::collections::BTreeSet;

use maxperim::codes::{
    canonicalize, code_to_composition, composition_to_code, count_codes, enumerate_codes,
    enumerate_codes_partition, minus_runs, Code, Composition, Sign,
};
use proptest::prelude::*;

fn dihedral_min<T: Ord + Clone>(seq: &[T]) -> Vec<T> {
    let len = seq.len();
    let mut best: Option<Vec<T>> = None;
    let mut rev = seq.to_vec();
    rev.reverse();
    for s in [seq.to_vec(), rev] {
        for k in 0..len {
            let mut r = s.clone();
            r.rotate_left(k);
            if best.as_ref().is_none_or(|b| r < *b) {
                best = Some(r);
            }
        }
    }
    best.unwrap()
}

/// Self-dual two-colored bracelets with `2n` beads, minus the one with a
/// run of `n`: classes of antisymmetric `+-` strings under the dihedral group.
fn self_dual_bracelets_minus_one(n: usize) -> usize {
    let mut classes = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        let half: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let full: Vec<bool> = half.iter().copied().chain(half.iter().map(|b| !b)).collect();
        classes.insert(dihedral_min(&full));
    }
    classes.len() - 1
}

/// Bracelets with `n` beads colored white or red with an odd number, at
/// least three, of white beads.
fn odd_white_bracelets(n: usize) -> usize {
    let mut classes = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        let white = mask.count_ones() as usize;
        if white >= 3 && white % 2 == 1 {
            let beads: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            classes.insert(dihedral_min(&beads));
        }
    }
    classes.len()
}

#[test]
fn counts_match_both_bracelet_oracles() {
    for n in 3..=14 {
        let expected = self_dual_bracelets_minus_one(n);
        assert_eq!(odd_white_bracelets(n), expected, "oracles disagree at n = {n}");
        assert_eq!(count_codes(n).unwrap(), expected as u64, "n = {n}");
        assert_eq!(enumerate_codes(n).unwrap().count(), expected, "n = {n}");
    }
}

#[test]
fn published_counts() {
    assert_eq!(count_codes(4).unwrap(), 1);
    assert_eq!(count_codes(8).unwrap(), 11);
    assert_eq!(count_codes(16).unwrap(), 1087);
}

#[test]
#[ignore = "enumerates 3.4e7 classes; run with --ignored"]
fn published_count_n32() {
    assert_eq!(count_codes(32).unwrap(), 33_570_815);
}

#[test]
fn enumeration_is_canonical_sorted_and_partitioned() {
    let all: Vec<Code> = enumerate_codes(12).unwrap().collect();
    assert!(all.windows(2).all(|w| w[0].full() < w[1].full()));
    for c in &all {
        assert_eq!(&canonicalize(c), c);
    }
    let mut parts: Vec<Code> = (0..8)
        .flat_map(|i| enumerate_codes_partition(12, 3, i).unwrap())
        .collect();
    parts.sort_by_key(|c| c.full());
    assert_eq!(parts, all);
}

#[test]
fn octagon_compositions_give_all_codes() {
    let mut from_compositions = BTreeSet::new();
    // odd-length compositions of 8 with at least three parts
    fn rec(rest: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            if cur.len() >= 3 && cur.len() % 2 == 1 {
                out.push(cur.clone());
            }
            return;
        }
        for p in 1..=rest {
            cur.push(p);
            rec(rest - p, cur, out);
            cur.pop();
        }
    }
    let mut comps = Vec::new();
    rec(8, &mut Vec::new(), &mut comps);
    for parts in comps {
        let comp = Composition::new(parts).unwrap();
        from_compositions.insert(composition_to_code(&comp, 8).unwrap().canonical());
    }
    let enumerated: BTreeSet<Code> = enumerate_codes(8).unwrap().collect();
    assert_eq!(from_compositions, enumerated);
    assert_eq!(enumerated.len(), 11);
}

#[test]
fn optimal_octagon_composition() {
    let code = Code::parse_full("+--+-++--++-+--+").unwrap();
    assert_eq!(minus_runs(&code), vec![2, 1, 2, 1, 2]);
    let back = composition_to_code(&"2,1,2,2,1".parse().unwrap(), 8).unwrap();
    assert_eq!(back.full_string(), "++--++-+--++--+-");
    assert!(back.is_equivalent(&code));
}

#[test]
fn composition_round_trip_n16() {
    for code in enumerate_codes(16).unwrap() {
        let comp = code_to_composition(&code);
        assert_eq!(comp.total(), 16);
        let back = composition_to_code(&comp, 16).unwrap();
        assert_eq!(back.canonical(), code, "{comp}");
    }
}

fn arb_code(n: usize) -> impl Strategy<Value = Code> {
    proptest::collection::vec(any::<bool>(), n).prop_filter_map("run too long", |bits| {
        let half = bits
            .into_iter()
            .map(|b| if b { Sign::Minus } else { Sign::Plus })
            .collect();
        Code::new(half).ok()
    })
}

proptest! {
    #[test]
    fn canonical_form_is_orbit_invariant(
        code in (5usize..=20).prop_flat_map(arb_code),
        shift in 0usize..40,
        reflect in any::<bool>(),
    ) {
        let image = code.transform(shift, reflect);
        prop_assert_eq!(image.canonical(), code.canonical());
        prop_assert!(image.is_equivalent(&code));
        let canon = code.canonical();
        prop_assert_eq!(canon.canonical(), canon.clone());
        prop_assert!(canon.full() <= code.full());
    }
}
