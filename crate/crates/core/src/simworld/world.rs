use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::skills::{SkillId, SkillTask};
use crate::seeds;

pub type Vec2 = [f64; 2];

/// Largest per-step gripper displacement along each axis.
pub const MAX_MOVE: f64 = 0.05;
/// Gripper center must be within this distance of an object to grasp it.
pub const GRASP_RADIUS: f64 = 0.06;
/// Half extent of the closed gripper's contact box used for pushing.
pub const GRIPPER_HALF: f64 = 0.03;
/// Object half extent (square half side, disc radius).
pub const OBJECT_HALF: f64 = 0.06;
/// Closed gripper pushes; open gripper passes over objects.
pub const CLOSED_BELOW: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Square,
    Disc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub pos: Vec2,
    pub shape: Shape,
    pub half: f64,
    pub intensity: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: Vec2,
    pub radius: f64,
}

/// Complete simulator state. Object 0 is always the task's target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub gripper: Vec2,
    pub aperture: f64,
    pub held: Option<usize>,
    pub objects: Vec<Object>,
    pub goal: Option<Goal>,
    pub step: u32,
    pub gripper_visible: bool,
}

/// Clipped control input: motion in world units, aperture command in [-1, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub grip: f64,
}

impl Action {
    pub fn new(dx: f64, dy: f64, grip: f64) -> Self {
        Self { dx, dy, grip }.clipped()
    }

    pub fn clipped(self) -> Self {
        let c = |v: f64, r: f64| if v.is_finite() { v.clamp(-r, r) } else { 0.0 };
        Self {
            dx: c(self.dx, MAX_MOVE),
            dy: c(self.dy, MAX_MOVE),
            grip: c(self.grip, 1.0),
        }
    }

    pub fn to_array(self) -> [f32; 3] {
        [self.dx as f32, self.dy as f32, self.grip as f32]
    }

    pub fn from_array(a: [f32; 3]) -> Self {
        Self::new(a[0] as f64, a[1] as f64, a[2] as f64)
    }
}

fn clamp_unit(p: Vec2) -> Vec2 {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl WorldState {
    /// No objects, no goal, gripper hidden.
    pub fn empty() -> Self {
        Self {
            gripper: [0.5, 0.5],
            aperture: 1.0,
            held: None,
            objects: Vec::new(),
            goal: None,
            step: 0,
            gripper_visible: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.aperture < CLOSED_BELOW
    }

    /// Proprioception vector: gripper x, y, aperture, holding flag.
    pub fn proprio(&self) -> [f32; 4] {
        [
            self.gripper[0] as f32,
            self.gripper[1] as f32,
            self.aperture as f32,
            if self.held.is_some() { 1.0 } else { 0.0 },
        ]
    }
}

/// Samples an initial layout for `task`. Same `(task, seed)` ⇒ same state.
pub fn reset(task: &SkillTask, seed: u64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, task.skill.code() as u64));
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.gen_range(lo..=hi);
    let in_bounds = |rng: &mut ChaCha8Rng| [uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)];

    loop {
        let gripper = in_bounds(&mut rng);
        let mut objects = Vec::new();
        let mut goal = None;
        let target = match task.skill {
            SkillId::ReachTarget => None,
            SkillId::GraspBlock | SkillId::PlaceBlockOnPad => Some((in_bounds(&mut rng), Shape::Square)),
            SkillId::GraspDisc | SkillId::PlaceDiscOnPad => Some((in_bounds(&mut rng), Shape::Disc)),
            SkillId::PushBlockRight => Some((
                [uniform(&mut rng, 0.15, 0.45), uniform(&mut rng, 0.2, 0.8)],
                Shape::Square,
            )),
            SkillId::PushBlockLeft => Some((
                [uniform(&mut rng, 0.55, 0.85), uniform(&mut rng, 0.2, 0.8)],
                Shape::Square,
            )),
        };
        if let Some((pos, shape)) = target {
            objects.push(make_object(pos, shape));
        }
        match task.skill {
            SkillId::ReachTarget => {
                goal = Some(Goal {
                    center: in_bounds(&mut rng),
                    radius: 0.06,
                })
            }
            SkillId::PlaceBlockOnPad | SkillId::PlaceDiscOnPad => {
                goal = Some(Goal {
                    center: in_bounds(&mut rng),
                    radius: 0.08,
                })
            }
            _ => {}
        }
        for _ in 0..task.distractors {
            let shape = if rng.gen_bool(0.5) { Shape::Square } else { Shape::Disc };
            let mut o = make_object(in_bounds(&mut rng), shape);
            o.intensity = 90;
            objects.push(o);
        }

        let far = |a: Vec2, b: Vec2, d: f64| dist(a, b) >= d;
        let mut ok = objects.iter().all(|o| far(o.pos, gripper, 0.2));
        for (i, a) in objects.iter().enumerate() {
            for b in &objects[i + 1..] {
                ok &= far(a.pos, b.pos, 0.2);
            }
        }
        if let Some(g) = &goal {
            ok &= far(g.center, gripper, 0.2);
            ok &= objects.iter().all(|o| far(o.pos, g.center, 0.3));
        }
        if ok {
            return WorldState {
                gripper,
                aperture: 1.0,
                held: None,
                objects,
                goal,
                step: 0,
                gripper_visible: true,
            };
        }
    }
}

fn make_object(pos: Vec2, shape: Shape) -> Object {
    Object {
        pos,
        shape,
        half: OBJECT_HALF,
        intensity: match shape {
            Shape::Square => 150,
            Shape::Disc => 200,
        },
    }
}

/// Advances the world by one control step.
///
/// Order: aperture update, grasp/release, gripper motion, then either the
/// held object follows or a closed gripper pushes free objects it overlaps.
pub fn step(state: &WorldState, action: Action) -> WorldState {
    let a = action.clipped();
    let mut s = state.clone();
    s.step += 1;
    s.aperture = (s.aperture + 0.5 * a.grip).clamp(0.0, 1.0);

    match s.held {
        None if a.grip < 0.0 => {
            s.held = s
                .objects
                .iter()
                .enumerate()
                .map(|(i, o)| (i, dist(o.pos, s.gripper)))
                .filter(|&(_, d)| d <= GRASP_RADIUS)
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(i, _)| i);
        }
        Some(_) if a.grip > 0.0 => s.held = None,
        _ => {}
    }

    s.gripper = clamp_unit([s.gripper[0] + a.dx, s.gripper[1] + a.dy]);

    if let Some(i) = s.held {
        s.objects[i].pos = s.gripper;
    } else if s.is_closed() && (a.dx != 0.0 || a.dy != 0.0) {
        let g = s.gripper;
        for o in &mut s.objects {
            if let Some(t) = push_distance(g, o.pos, GRIPPER_HALF + o.half, [a.dx, a.dy]) {
                let n = (a.dx * a.dx + a.dy * a.dy).sqrt();
                o.pos = clamp_unit([o.pos[0] + t * a.dx / n, o.pos[1] + t * a.dy / n]);
            }
        }
    }
    s
}

/// Distance an object centered at `obj` must slide along `dir` to stop
/// overlapping the gripper box at `grip`; boxes overlap when both center
/// offsets are strictly below `reach`. `None` if they do not overlap.
pub fn push_distance(grip: Vec2, obj: Vec2, reach: f64, dir: Vec2) -> Option<f64> {
    let overlap = (0..2).all(|k| (obj[k] - grip[k]).abs() < reach);
    if !overlap {
        return None;
    }
    let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    if n == 0.0 {
        return None;
    }
    let mut best = f64::INFINITY;
    for k in 0..2 {
        let d = dir[k] / n;
        let t = if d > 0.0 {
            (grip[k] + reach - obj[k]) / d
        } else if d < 0.0 {
            (grip[k] - reach - obj[k]) / d
        } else {
            continue;
        };
        best = best.min(t.max(0.0));
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(skill: SkillId) -> SkillTask {
        SkillTask::new(skill)
    }

    #[test]
    fn reset_is_deterministic() {
        let t = task(SkillId::GraspBlock);
        assert_eq!(reset(&t, 7), reset(&t, 7));
    }

    #[test]
    fn reset_places_objects_in_bounds() {
        for skill in SkillId::ALL {
            let t = task(skill);
            for seed in 0..1000 {
                let s = reset(&t, seed);
                for o in &s.objects {
                    assert!(o.pos.iter().all(|&c| (0.1..=0.9).contains(&c)), "{skill:?} {seed}");
                }
            }
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_layouts() {
        let t = task(SkillId::PushBlockRight);
        let layouts: Vec<_> = (0..1000).map(|s| reset(&t, s)).collect();
        let mut same = 0;
        for w in layouts.windows(2) {
            if w[0].objects == w[1].objects && w[0].gripper == w[1].gripper {
                same += 1;
            }
        }
        assert!((same as f64) / 999.0 < 0.01);
    }

    #[test]
    fn zero_action_only_advances_counter() {
        let s = reset(&task(SkillId::PlaceBlockOnPad), 3);
        let n = step(&s, Action::default());
        let mut expect = s.clone();
        expect.step += 1;
        assert_eq!(n, expect);
    }

    #[test]
    fn moves_gripper_by_delta() {
        let mut s = WorldState::empty();
        s.gripper = [0.5, 0.5];
        let n = step(&s, Action::new(0.05, 0.0, 0.0));
        assert!((n.gripper[0] - 0.55).abs() < 1e-15 && n.gripper[1] == 0.5);
    }

    #[test]
    fn actions_are_clipped() {
        let a = Action::new(1.0, -3.0, 7.0);
        assert_eq!(a, Action { dx: 0.05, dy: -0.05, grip: 1.0 });
    }

    #[test]
    fn grasp_engages_and_object_follows() {
        let mut s = WorldState::empty();
        s.objects.push(make_object([0.52, 0.5], Shape::Square));
        let s = step(&s, Action::new(0.0, 0.0, -1.0));
        assert_eq!(s.held, Some(0));
        let s = step(&s, Action::new(0.03, -0.02, 0.0));
        assert_eq!(s.objects[0].pos, s.gripper);
        let s = step(&s, Action::new(0.0, 0.0, 1.0));
        assert_eq!(s.held, None);
    }

    /// Brute-force oracle: slide the object in tiny steps until separated.
    fn brute_push(grip: Vec2, obj: Vec2, reach: f64, dir: Vec2) -> f64 {
        let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let (ux, uy) = (dir[0] / n, dir[1] / n);
        let mut t = 0.0;
        let h = 1e-6;
        loop {
            let p = [obj[0] + t * ux, obj[1] + t * uy];
            if (p[0] - grip[0]).abs() >= reach || (p[1] - grip[1]).abs() >= reach {
                return t;
            }
            t += h;
        }
    }

    #[test]
    fn push_matches_collision_oracle() {
        let cases = [
            ([0.40, 0.50], [0.46, 0.51], [0.05, 0.0]),
            ([0.40, 0.50], [0.45, 0.45], [0.03, 0.04]),
            ([0.60, 0.30], [0.55, 0.33], [-0.05, 0.01]),
            ([0.20, 0.20], [0.22, 0.27], [0.0, 0.05]),
        ];
        for (g, o, d) in cases {
            let reach = GRIPPER_HALF + OBJECT_HALF;
            let t = push_distance(g, o, reach, d).unwrap();
            let oracle = brute_push(g, o, reach, d);
            assert!((t - oracle).abs() < 2e-6, "{t} vs {oracle}");
        }
    }

    #[test]
    fn closed_gripper_pushes_square() {
        let mut s = WorldState::empty();
        s.gripper = [0.30, 0.5];
        s.aperture = 0.0;
        s.objects.push(make_object([0.41, 0.5], Shape::Square));
        let n = step(&s, Action::new(0.05, 0.0, 0.0));
        let reach = GRIPPER_HALF + OBJECT_HALF;
        let expect = n.gripper[0] + reach;
        assert!((n.objects[0].pos[0] - expect).abs() < 1e-12);
        assert_eq!(n.objects[0].pos[1], 0.5);
    }

    #[test]
    fn open_gripper_passes_over() {
        let mut s = WorldState::empty();
        s.gripper = [0.30, 0.5];
        s.objects.push(make_object([0.36, 0.5], Shape::Square));
        let n = step(&s, Action::new(0.05, 0.0, 0.0));
        assert_eq!(n.objects[0].pos, [0.36, 0.5]);
    }

    #[test]
    fn positions_stay_in_unit_square() {
        let mut s = reset(&task(SkillId::PushBlockLeft), 1);
        s.aperture = 0.0;
        for k in 0..200 {
            let a = if k % 3 == 0 { Action::new(-0.05, 0.05, 0.0) } else { Action::new(-0.05, -0.02, -0.2) };
            s = step(&s, a);
            assert!(s.gripper.iter().all(|c| (0.0..=1.0).contains(c)));
            for o in &s.objects {
                assert!(o.pos.iter().all(|c| (0.0..=1.0).contains(c)));
            }
        }
    }
}
