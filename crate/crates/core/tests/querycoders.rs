use ppl_core::querycoders::{estimate_flow, FlowField, TextEncoder, SEARCH};
use ppl_core::simworld::{entity_map, render, true_flow, Object, Shape, WorldState, OBJECT_HALF, SCALE, SIDE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One object at a whole-pixel position moved by an integer translation.
fn translated_pair(rng: &mut ChaCha8Rng) -> (WorldState, WorldState) {
    let shape = if rng.gen_bool(0.5) { Shape::Square } else { Shape::Disc };
    let px = |rng: &mut ChaCha8Rng| rng.gen_range(8..=24) as f64 / SCALE;
    let mut a = WorldState::empty();
    a.objects.push(Object {
        pos: [px(rng), px(rng)],
        shape,
        half: OBJECT_HALF,
        intensity: 150,
    });
    let (dx, dy) = loop {
        let d = (rng.gen_range(-SEARCH..=SEARCH), rng.gen_range(-SEARCH..=SEARCH));
        if d != (0, 0) {
            break d;
        }
    };
    let mut b = a.clone();
    b.objects[0].pos[0] += dx as f64 / SCALE;
    b.objects[0].pos[1] += dy as f64 / SCALE;
    (a, b)
}

#[test]
fn estimated_flow_matches_ground_truth_translations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total = 0.0;
    for _ in 0..200 {
        let (a, b) = translated_pair(&mut rng);
        let est = estimate_flow(&render(&a), &render(&b)).unwrap();
        let truth = true_flow(&a, &b);
        let footprint = entity_map(&a);
        total += est
            .mean_endpoint_error(&truth, |r, c| footprint[r * SIDE + c].is_some())
            .unwrap();
    }
    let epe = total / 200.0;
    assert!(epe < 0.5, "mean endpoint error {epe}");
}

#[test]
fn static_scene_has_zero_estimated_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, _) = translated_pair(&mut rng);
    let f = render(&a);
    assert!(estimate_flow(&f, &f).unwrap().is_zero());
}

#[test]
fn pooled_flow_has_expected_length() {
    assert_eq!(FlowField::zeros().pooled().len(), ppl_core::querycoders::POOLED_LEN);
}

#[test]
fn instruction_embeddings_separate_skills() {
    let enc = TextEncoder::new(32, 7);
    let a = enc.embed("push the block left").unwrap();
    let b = enc.embed("push the block right").unwrap();
    let c = enc.embed("reach the target").unwrap();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    assert!(dot(&a, &b) > dot(&a, &c));
    assert!(dot(&a, &b) < 1.0 - 1e-9);
}
