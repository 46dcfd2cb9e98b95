use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn spec(m: usize) -> PromptSpec {
    PromptSpec {
        prompt_len: 4,
        dim: 6,
        components: m,
        layers: 2,
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn odd_prompt_length_rejected() {
    let mut store = ParamStore::<f64>::new();
    let s = PromptSpec {
        prompt_len: 3,
        ..spec(2)
    };
    assert!(PromptPool::new(&mut store, s, 0).is_err());
}

#[test]
fn aligned_query_scores_one() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(3), 1).unwrap();
    let k = store.get(pool.comps[1].ids[0][1]).data().to_vec();
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q: Vec<f64> = k.iter().map(|v| v / norm).collect();
    let a = pool.attention_weights(&store, 0, &q).unwrap();
    assert!((a[1] - 1.0).abs() < 1e-12);
}

#[test]
fn orthogonal_query_scores_zero() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(1), 1).unwrap();
    let kid = pool.comps[0].ids[0][1];
    store.get_mut(kid).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let a = pool
        .attention_weights(&store, 0, &[0.0, 2.0, -1.0, 0.0, 0.0, 3.0])
        .unwrap();
    assert_eq!(a[0], 0.0);
}

#[test]
fn weights_are_scale_invariant_and_bounded() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(5), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let q = random_vec(&mut rng, 6);
        let c = rng.gen_range(0.01..100.0);
        let qs: Vec<f64> = q.iter().map(|v| v * c).collect();
        let a = pool.attention_weights(&store, 1, &q).unwrap();
        let b = pool.attention_weights(&store, 1, &qs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(x));
        }
    }
}

#[test]
fn zero_query_gives_zero_weights() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(3), 2).unwrap();
    let a = pool.attention_weights(&store, 0, &[0.0; 6]).unwrap();
    assert!(a.iter().all(|&x| x == 0.0));
}

#[test]
fn compose_one_hot_and_zero() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(3), 4).unwrap();
    let p = pool.compose_prompt(&store, 1, &[0.0, 1.0, 0.0]).unwrap();
    assert_eq!(p.data(), store.get(pool.comps[1].ids[1][0]).data());
    let z = pool.compose_prompt(&store, 1, &[0.0; 3]).unwrap();
    assert!(z.data().iter().all(|&x| x == 0.0));
    assert!(pool.compose_prompt(&store, 1, &[1.0; 2]).is_err());
}

#[test]
fn compose_matches_loop_oracle_and_is_linear() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(7), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a1 = random_vec(&mut rng, 7);
    let a2 = random_vec(&mut rng, 7);
    let p = pool.compose_prompt(&store, 0, &a1).unwrap();
    for r in 0..4 {
        for c in 0..6 {
            let mut acc = 0.0;
            for m in 0..7 {
                acc += a1[m] * store.get(pool.comps[m].ids[0][0]).data()[r * 6 + c];
            }
            assert!((p.data()[r * 6 + c] - acc).abs() < 1e-12);
        }
    }
    let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
    let ps = pool.compose_prompt(&store, 0, &sum).unwrap();
    let p2 = pool.compose_prompt(&store, 0, &a2).unwrap();
    for i in 0..24 {
        assert!((ps.data()[i] - p.data()[i] - p2.data()[i]).abs() < 1e-12);
    }
}

#[test]
fn graph_versions_match_eager() {
    let mut store = ParamStore::<f64>::new();
    let pool = PromptPool::new(&mut store, spec(4), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_vec(&mut rng, 6);
    let eager_a = pool.attention_weights(&store, 1, &q).unwrap();
    let eager_p = pool.compose_prompt(&store, 1, &eager_a).unwrap();
    let mut g = Graph::new(&store);
    let qv = g.constant([1, 6], q).unwrap();
    let a = pool.weights_var(&mut g, 1, qv).unwrap();
    assert_eq!(g.value(a), eager_a.as_slice());
    let a = g.reshape(a, [1, 4]).unwrap();
    let p = pool.compose_var(&mut g, 1, a).unwrap();
    for (x, y) in g.value(p).iter().zip(eager_p.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn split_halves_partition_prompt() {
    let p = Tensor::<f64>::from_fn([8, 3], |i| i as f64);
    let (k, v) = split_prompt(&p).unwrap();
    assert_eq!(k.shape(), &[4, 3]);
    assert_eq!(v.shape(), &[4, 3]);
    let joined: Vec<f64> = k.data().iter().chain(v.data()).copied().collect();
    assert_eq!(joined, p.data());
    let (k0, v0) = split_prompt(&Tensor::<f64>::zeros([8, 3])).unwrap();
    assert!(k0.data().iter().chain(v0.data()).all(|&x| x == 0.0));
    assert!(split_prompt(&Tensor::<f64>::zeros([3, 3])).is_err());
}

#[test]
fn expansion_grows_freezes_and_preserves_old_weights() {
    let mut store = ParamStore::<f64>::new();
    let mut pool = PromptPool::new(&mut store, spec(16), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let queries: Vec<Vec<f64>> = (0..10).map(|_| random_vec(&mut rng, 6)).collect();
    let before: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| pool.attention_weights(&store, 0, q).unwrap())
        .collect();
    let snapshot: Vec<Vec<f64>> = pool.all_ids().map(|id| store.get(id).data().to_vec()).collect();

    assert!(pool.expand(&mut store, 0, "grasp-disc", 1).is_err());
    pool.expand(&mut store, 4, "grasp-disc", 11).unwrap();
    assert_eq!(pool.size(), 20);
    for (q, b) in queries.iter().zip(&before) {
        let after = pool.attention_weights(&store, 0, q).unwrap();
        assert_eq!(after.len(), 20);
        for (x, y) in b.iter().zip(&after[..16]) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    for (id, snap) in pool.all_ids().zip(&snapshot) {
        assert!(store.get(id).frozen);
        assert_eq!(store.get(id).data(), snap.as_slice());
    }
    assert!(matches!(
        pool.expand(&mut store, 4, "grasp-disc", 12),
        Err(Error::SkillAlreadyOwned(_))
    ));
}

#[test]
fn trainable_sets_follow_ownership() {
    let mut store = ParamStore::<f64>::new();
    let mut pool = PromptPool::new(&mut store, spec(3), 1).unwrap();
    let mut seen = pool.trainable_params();
    assert_eq!(seen.len(), 3 * 2 * 3);
    for (i, owner) in ["a", "b", "c"].iter().enumerate() {
        pool.expand(&mut store, 2, owner, i as u64).unwrap();
        let now = pool.trainable_params();
        assert_eq!(now.len(), 2 * 2 * 3);
        assert!(now.iter().all(|id| store.get(*id).is_trainable()));
        let count: usize = now.iter().map(|id| store.get(*id).numel()).sum();
        assert_eq!(count, 2 * 2 * (4 * 6 + 2 * 6));
        seen.extend(now);
    }
    let mut all: Vec<_> = pool.all_ids().collect();
    let n = seen.len();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), n, "task sets overlap");
    all.sort();
    assert_eq!(seen, all);
}

#[test]
fn stacked_round_trip() {
    let mut store = ParamStore::<f64>::new();
    let mut pool = PromptPool::new(&mut store, spec(3), 1).unwrap();
    pool.expand(&mut store, 2, "x", 2).unwrap();
    let stacked = pool.stacked_tensors(&store);
    assert_eq!(stacked[0].0, "pool.layer0.P");
    assert_eq!(stacked[0].1.shape(), &[5, 4, 6]);
    let mut fresh = ParamStore::<f64>::new();
    let mut map: std::collections::HashMap<_, _> = stacked.into_iter().collect();
    let back = PromptPool::from_stacked(&mut fresh, pool.spec(), &pool.table(), |n| {
        map.remove(n).ok_or_else(|| Error::UnknownParam(n.into()))
    })
    .unwrap();
    assert_eq!(back.table(), pool.table());
    for (a, b) in pool.all_ids().zip(back.all_ids()) {
        assert_eq!(store.get(a).data(), fresh.get(b).data());
        assert_eq!(store.get(a).frozen, fresh.get(b).frozen);
    }
}
