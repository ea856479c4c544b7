use std::collections::BTreeSet;

use proptest::prelude::*;
use sha2::{Digest as _, Sha256};

use smsn::crypto::{GroupId, IndexValue, KeyMaterial, NodeId, NodeKind, Nonce, SecretNumber};
use smsn::keychain::{build_hash_tree, build_index_vector, interval_at, search_tree, select_hash_vector, GroupContext, KeyChain, KeyMsg};
use smsn::metrics::Meter;
use smsn::ticket::{
    issue_ticket, parse_ticket, serialize_ticket, verify_ticket, IssueOptions, Permissions, Profile, ProfileStore, TicketMode,
    VerifyOptions,
};

const LENGTHS: [u32; 3] = [4, 8, 64];

fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Length-prefixed concatenation, written out by hand.
fn fields(parts: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in parts {
        out.extend_from_slice(&(p.len() as u16).to_be_bytes());
        out.extend_from_slice(p);
    }
    out
}

fn chain(l: u32, n0: u32) -> KeyChain {
    KeyChain::new(GroupId(1), 1, 16 * l as u64, l, Nonce(n0), 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn iterated_hash_walks_the_chain(li in 0usize..3, n0 in any::<u32>(), k in 0u32..=64, i in 0u32..=64) {
        let l = LENGTHS[li];
        let (k, i) = (k % (l + 1), i % (l + 1));
        prop_assume!(k + i <= l);
        let c = chain(l, n0);
        let z0 = sha(&fields(&[&(16 * l as u64).to_be_bytes(), &n0.to_be_bytes()]));
        prop_assert_eq!(c.zeta[0].as_bytes(), &z0);
        let mut z = *c.zeta[k as usize].as_bytes();
        for _ in 0..i {
            z = sha(&z);
        }
        prop_assert_eq!(&z, c.zeta[(k + i) as usize].as_bytes());
    }

    #[test]
    fn tree_search_finds_every_leaf_and_nothing_else(
        exp in 2u32..=6, n0 in any::<u32>(), k in 0usize..64, forged in any::<[u8; 4]>(), junk in any::<[u8; 32]>(),
    ) {
        let l = 1u32 << exp;
        let k = k % l as usize;
        let c = chain(l, n0);
        let v = build_index_vector(&c);
        let tree = c.tree().unwrap();
        let hv = select_hash_vector(tree, k).unwrap();
        prop_assert_eq!(hv.len(), exp as usize - 2);
        prop_assert_eq!(search_tree(tree, &hv, v.values[k]), Ok(k));
        let forged = IndexValue(forged);
        if !v.values.contains(&forged) {
            prop_assert!(search_tree(tree, &hv, forged).is_err());
        }
        // Index values of the other three leaves under the same path resolve
        // to those leaves, never to k.
        for j in (k & !3)..(k & !3) + 4 {
            prop_assert_eq!(search_tree(tree, &hv, v.values[j]), Ok(j));
        }
        if !hv.is_empty() {
            let mut bad = hv.clone();
            bad[0] = KeyMaterial::from_bytes(junk);
            if bad != hv {
                prop_assert!(search_tree(tree, &bad, v.values[k]).is_err());
            }
        }
    }
}

#[test]
fn tree_search_exhaustive_up_to_64() {
    for exp in 2..=6 {
        let l = 1u32 << exp;
        let c = chain(l, 99);
        let v = build_index_vector(&c);
        let tree = c.tree().unwrap();
        let values: BTreeSet<_> = v.values.iter().copied().collect();
        assert_eq!(values.len(), l as usize, "index values collide at L = {l}");
        for k in 0..l as usize {
            let hv = select_hash_vector(tree, k).unwrap();
            assert_eq!(search_tree(tree, &hv, v.values[k]), Ok(k));
            // Every other index value either belongs to a sibling leaf or is rejected.
            for (j, other) in v.values.iter().enumerate() {
                match search_tree(tree, &hv, *other) {
                    Ok(found) => assert!(found == j && j >> 2 == k >> 2, "L={l} k={k} j={j}"),
                    Err(_) => assert_ne!(j >> 2, k >> 2),
                }
            }
        }
    }
}

#[test]
fn four_leaf_tree_matches_an_independent_build() {
    let c = chain(4, 5);
    let tag = sha(&fields(&[b"index-tree", c.zeta[0].as_bytes()]));
    let leaves: Vec<[u8; 32]> = (0u32..4)
        .map(|k| {
            let v = &sha(&fields(&[&k.to_be_bytes()]))[..4];
            sha(&[&tag[..], v].concat())
        })
        .collect();
    let left = sha(&[leaves[0], leaves[1]].concat());
    let right = sha(&[leaves[2], leaves[3]].concat());
    let tree = build_hash_tree(&build_index_vector(&c)).unwrap();
    assert_eq!(tree.depth(), 2);
    assert_eq!((tree.leaf_count(), tree.internal_count()), (4, 3));
    assert_eq!(tree.root().as_bytes(), &sha(&[left, right].concat()));
    assert_eq!(tree.level(1)[0].as_bytes(), &left);
}

fn context(l: u32) -> GroupContext {
    let bs = NodeId::base_station(1);
    let members: BTreeSet<_> = [bs, NodeId::sink(1)].into_iter().collect();
    let msg = KeyMsg { sender: bs, td: 16 * l as u64, n0_group: Nonce(3), epoch: 1 };
    GroupContext::provision(GroupId(1), bs, members, KeyMaterial::from_bytes([8; 32]), &msg, l, 0).unwrap()
}

fn profiles() -> ProfileStore {
    let mut s = ProfileStore::new();
    s.register(Profile {
        node: NodeId::new(NodeKind::Sensor, 1),
        n_s: SecretNumber(Nonce(12345)),
        permissions: Permissions::REPORT,
        registered_at: 0,
        password_hash: None,
    })
    .unwrap();
    s
}

#[test]
fn every_mode_round_trips_in_every_interval() {
    let store = profiles();
    for l in LENGTHS {
        let ctx = context(l);
        for mode in [TicketMode::Indexed, TicketMode::Interval, TicketMode::Tree] {
            for k in 0..l {
                let (t, ks) =
                    issue_ticket(&ctx, &store, NodeId::sensor(1), Nonce(k), mode, k, IssueOptions::default(), &mut Meter::default())
                        .unwrap();
                let t = parse_ticket(&serialize_ticket(&t)).unwrap();
                let v = verify_ticket(&ctx, &t, VerifyOptions::default(), &mut Meter::default()).unwrap();
                assert_eq!((v.interval, v.inner.session_key, v.inner.n0), (k, ks, Nonce(k)), "L={l} {mode:?} k={k}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tickets_round_trip(li in 0usize..3, mode in 1u8..=3, k in 0u32..64, n0 in any::<u32>()) {
        let l = LENGTHS[li];
        let k = k % l;
        let ctx = context(l);
        let mode = TicketMode::try_from(mode).unwrap();
        let (t, ks) = issue_ticket(&ctx, &profiles(), NodeId::sensor(1), Nonce(n0), mode, k, IssueOptions::default(), &mut Meter::default()).unwrap();
        let v = verify_ticket(&ctx, &parse_ticket(&serialize_ticket(&t)).unwrap(), VerifyOptions::default(), &mut Meter::default()).unwrap();
        prop_assert_eq!(v.interval, k);
        prop_assert_eq!(v.inner.session_key, ks);
    }

    #[test]
    fn interval_lookup_is_floor_division(li in 0usize..3, t in 0u64..2000) {
        let l = LENGTHS[li];
        let c = chain(l, 1);
        let expected = (t / c.interval_len).min(l as u64 - 1) as u32;
        prop_assert_eq!(interval_at(&c, t).unwrap(), expected);
    }
}
