mod common;

use std::collections::BTreeMap;

use common::{skill_data, tiny_policy, tiny_train};
use ppl_core::policy::PolicyNet;
use ppl_core::simworld::SkillId;
use ppl_core::trainer::{
    draw_mixed, draw_replay, lifelong_step, pretrain, replay_baseline, sequential_baseline,
    QueryMode,
};
use ppl_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Net = PolicyNet<f64>;

fn snapshot(net: &Net) -> BTreeMap<String, Vec<u64>> {
    net.store
        .iter()
        .map(|(_, n, t)| (n.to_string(), t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn pretrained() -> (Net, BTreeMap<SkillId, ppl_core::trainer::SkillData<f64>>) {
    let net = Net::new(tiny_policy(), 5).unwrap();
    let mut data = BTreeMap::new();
    for s in [SkillId::ReachTarget, SkillId::GraspBlock] {
        data.insert(s, skill_data(&net, s, 3, 1, QueryMode::TextFlow));
    }
    let (net, _) = pretrain(net, &tiny_train(2), &data, QueryMode::TextFlow, None).unwrap();
    (net, data)
}

#[test]
fn single_skill_loss_halves_over_fifty_epochs() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let mut data = BTreeMap::new();
    data.insert(SkillId::ReachTarget, skill_data(&net, SkillId::ReachTarget, 4, 3, QueryMode::TextFlow));
    let (_, report) = pretrain(net, &tiny_train(50), &data, QueryMode::TextFlow, None).unwrap();
    let first = report.epoch_losses[0];
    let last = *report.epoch_losses.last().unwrap();
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
    assert_eq!(report.selected_epoch, 50);
}

#[test]
fn training_is_bit_reproducible() {
    let run = || {
        let net = Net::new(tiny_policy(), 2).unwrap();
        let mut data = BTreeMap::new();
        data.insert(SkillId::GraspBlock, skill_data(&net, SkillId::GraspBlock, 2, 3, QueryMode::TextFlow));
        let (net, report) = pretrain(net, &tiny_train(3), &data, QueryMode::TextFlow, None).unwrap();
        (snapshot(&net), report.epoch_losses)
    };
    assert_eq!(run(), run());
}

#[test]
fn evaluator_selects_best_epoch() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let mut data = BTreeMap::new();
    data.insert(SkillId::ReachTarget, skill_data(&net, SkillId::ReachTarget, 2, 3, QueryMode::TextFlow));
    let scores = [0.2, 0.7, 0.5];
    let mut kept = None;
    let mut ev = |epoch: usize, n: &Net| {
        if epoch == 2 {
            kept = Some(snapshot(n));
        }
        Ok(scores[epoch - 1])
    };
    let (net, report) = pretrain(net, &tiny_train(3), &data, QueryMode::TextFlow, Some(&mut ev)).unwrap();
    assert_eq!(report.selected_epoch, 2);
    assert_eq!(report.evals.len(), 3);
    assert_eq!(Some(snapshot(&net)), kept);
}

#[test]
fn skill_order_does_not_change_sampled_pairs() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let a = skill_data(&net, SkillId::PushBlockRight, 2, 1, QueryMode::TextOnly);
    let b = skill_data(&net, SkillId::ReachTarget, 2, 1, QueryMode::TextOnly);
    let mut m1 = BTreeMap::new();
    m1.insert(a.skill, a.clone());
    m1.insert(b.skill, b.clone());
    let mut m2 = BTreeMap::new();
    m2.insert(b.skill, b);
    m2.insert(a.skill, a);
    let d1 = draw_mixed(&m1, 200, &mut ChaCha8Rng::seed_from_u64(4));
    let d2 = draw_mixed(&m2, 200, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(d1, d2);
}

#[test]
fn lifelong_trains_only_new_components() {
    let (net, _) = pretrained();
    let before = snapshot(&net);
    let cached: Vec<Vec<Vec<f64>>> = (0..100)
        .map(|i| {
            let q: Vec<f64> = (0..net.cfg.d_model).map(|k| ((i * 7 + k * 3) as f64).sin()).collect();
            net.alphas(&q).unwrap()
        })
        .collect();

    let cfg = tiny_train(2);
    let new = skill_data(&net, SkillId::GraspDisc, 2, 9, QueryMode::TextFlow);
    let mut counted = None;
    let mut ev = |_: usize, n: &Net| {
        counted.get_or_insert(n.store.trainable_count());
        Ok(0.0)
    };
    let (after, _) = lifelong_step(net, &cfg, &new, QueryMode::TextFlow, Some(&mut ev)).unwrap();

    let c = &after.cfg;
    let m_new = cfg.lifelong_components;
    assert_eq!(counted, Some(c.layers * m_new * (c.prompt_len * c.d_model + 2 * c.d_model)));
    let now = snapshot(&after);
    for (name, bits) in &before {
        assert_eq!(&now[name], bits, "{name} changed");
    }
    assert_eq!(after.pool.size(), c.components + m_new);
    for (i, old) in cached.iter().enumerate() {
        let q: Vec<f64> = (0..c.d_model).map(|k| ((i * 7 + k * 3) as f64).sin()).collect();
        let fresh = after.alphas(&q).unwrap();
        for (l, layer) in old.iter().enumerate() {
            for (m, a) in layer.iter().enumerate() {
                assert!((fresh[l][m] - a).abs() < 1e-12);
            }
        }
    }

    let again = skill_data(&after, SkillId::GraspDisc, 1, 2, QueryMode::TextFlow);
    assert!(matches!(
        lifelong_step(after, &cfg, &again, QueryMode::TextFlow, None),
        Err(Error::SkillAlreadyOwned(_))
    ));
}

#[test]
fn sequential_updates_every_parameter() {
    let (net, _) = pretrained();
    let total: usize = net.store.iter().map(|(_, _, t)| t.numel()).sum();
    let new = skill_data(&net, SkillId::PushBlockLeft, 2, 9, QueryMode::TextFlow);
    let mut counted = None;
    let mut ev = |_: usize, n: &Net| {
        counted.get_or_insert(n.store.trainable_count());
        Ok(0.0)
    };
    let before = snapshot(&net);
    let (after, _) = sequential_baseline(net, &tiny_train(1), &new, QueryMode::TextFlow, Some(&mut ev)).unwrap();
    assert_eq!(counted, Some(total));
    let now = snapshot(&after);
    let changed = before.iter().filter(|(n, b)| &now[*n] != *b).count();
    assert_eq!(changed, before.len());
    assert_eq!(after.pool.size(), after.cfg.components);
}

#[test]
fn sequential_is_deterministic() {
    let (net, _) = pretrained();
    let new = skill_data(&net, SkillId::PushBlockLeft, 2, 9, QueryMode::TextFlow);
    let a = sequential_baseline(net.clone(), &tiny_train(1), &new, QueryMode::TextFlow, None).unwrap();
    let b = sequential_baseline(net, &tiny_train(1), &new, QueryMode::TextFlow, None).unwrap();
    assert_eq!(snapshot(&a.0), snapshot(&b.0));
    assert_eq!(a.1, b.1);
}

#[test]
fn replay_mixture_matches_fraction() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let new = skill_data(&net, SkillId::GraspDisc, 2, 1, QueryMode::TextOnly);
    let old1 = skill_data(&net, SkillId::ReachTarget, 2, 1, QueryMode::TextOnly);
    let old2 = skill_data(&net, SkillId::GraspBlock, 2, 1, QueryMode::TextOnly);
    let n = 10_000;
    let f = 0.3;
    let draw = draw_replay(&new, &[&old1, &old2], f, n, &mut ChaCha8Rng::seed_from_u64(8));
    let old = draw.iter().filter(|(s, _)| *s != SkillId::GraspDisc).count() as f64;
    // Binomial standard deviation of the old-sample share.
    let sd = (f * (1.0 - f) / n as f64).sqrt();
    assert!((old / n as f64 - f).abs() < 4.0 * sd, "share {}", old / n as f64);
}

#[test]
fn full_replay_of_identical_data_is_joint_training() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let d = skill_data(&net, SkillId::ReachTarget, 3, 1, QueryMode::TextOnly);
    let draw = draw_replay(&d, &[&d], 1.0, 5_000, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(draw.iter().all(|&(s, i)| s == SkillId::ReachTarget && i < d.len()));
    let mut counts = vec![0usize; d.len()];
    for &(_, i) in &draw {
        counts[i] += 1;
    }
    let expect = 5_000.0 / d.len() as f64;
    let sd = (expect * (1.0 - 1.0 / d.len() as f64)).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - expect).abs() < 5.0 * sd));
}

#[test]
fn replay_needs_old_data_and_is_deterministic() {
    let (net, data) = pretrained();
    let new = skill_data(&net, SkillId::PushBlockLeft, 2, 9, QueryMode::TextFlow);
    assert!(replay_baseline(net.clone(), &tiny_train(1), &new, &[], QueryMode::TextFlow, None).is_err());
    let old: Vec<_> = data.values().collect();
    let a = replay_baseline(net.clone(), &tiny_train(1), &new, &old, QueryMode::TextFlow, None).unwrap();
    let b = replay_baseline(net, &tiny_train(1), &new, &old, QueryMode::TextFlow, None).unwrap();
    assert_eq!(snapshot(&a.0), snapshot(&b.0));
}

#[test]
fn text_only_training_leaves_flow_branch_untouched() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let before = snapshot(&net);
    let mut data = BTreeMap::new();
    data.insert(SkillId::ReachTarget, skill_data(&net, SkillId::ReachTarget, 2, 3, QueryMode::TextOnly));
    let (net, _) = pretrain(net, &tiny_train(2), &data, QueryMode::TextOnly, None).unwrap();
    let now = snapshot(&net);
    assert_eq!(now["query.flow.weight"], before["query.flow.weight"]);
    assert_ne!(now["query.fuse.weight"], before["query.fuse.weight"]);
}

#[test]
fn zero_epochs_rejected() {
    let net = Net::new(tiny_policy(), 2).unwrap();
    let mut data = BTreeMap::new();
    data.insert(SkillId::ReachTarget, skill_data(&net, SkillId::ReachTarget, 1, 3, QueryMode::TextFlow));
    assert!(pretrain(net.clone(), &tiny_train(0), &data, QueryMode::TextFlow, None).is_err());
    assert!(pretrain(net, &tiny_train(1), &BTreeMap::new(), QueryMode::TextFlow, None).is_err());
}
