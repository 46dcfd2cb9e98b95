use super::skills::{SkillId, SkillTask};
use super::world::{dist, Action, Vec2, WorldState, GRIPPER_HALF, MAX_MOVE};

/// Object x beyond which a push to the right succeeds.
pub const PUSH_RIGHT_LINE: f64 = 0.7;
/// Object x below which a push to the left succeeds.
pub const PUSH_LEFT_LINE: f64 = 0.3;

const ARRIVED: f64 = 0.005;
const PUSH_GAP: f64 = 0.01;

/// Skill predicate. Region tests are closed (`<=`).
pub fn success(task: &SkillTask, s: &WorldState) -> bool {
    let target = s.objects.first();
    match task.skill {
        SkillId::ReachTarget => s
            .goal
            .as_ref()
            .is_some_and(|g| dist(s.gripper, g.center) <= g.radius),
        SkillId::GraspBlock | SkillId::GraspDisc => s.held == Some(0),
        SkillId::PushBlockRight => target.is_some_and(|o| o.pos[0] >= PUSH_RIGHT_LINE),
        SkillId::PushBlockLeft => target.is_some_and(|o| o.pos[0] <= PUSH_LEFT_LINE),
        SkillId::PlaceBlockOnPad | SkillId::PlaceDiscOnPad => match (target, &s.goal) {
            (Some(o), Some(g)) => s.held.is_none() && dist(o.pos, g.center) <= g.radius,
            _ => false,
        },
    }
}

fn toward(from: Vec2, to: Vec2, grip: f64) -> Action {
    Action::new(to[0] - from[0], to[1] - from[1], grip)
}

fn grasp_target(s: &WorldState) -> Action {
    let obj = s.objects[0].pos;
    if dist(s.gripper, obj) > ARRIVED {
        toward(s.gripper, obj, 1.0)
    } else {
        Action::new(0.0, 0.0, -1.0)
    }
}

fn push(s: &WorldState, dir: f64) -> Action {
    let o = &s.objects[0];
    let reach = GRIPPER_HALF + o.half;
    let staging = [o.pos[0] - dir * (reach + PUSH_GAP), o.pos[1]];
    if !s.is_closed() {
        return if dist(s.gripper, staging) > ARRIVED {
            toward(s.gripper, staging, 1.0)
        } else {
            Action::new(0.0, 0.0, -1.0)
        };
    }
    let behind = dir * (o.pos[0] - s.gripper[0]) > 0.0 && (o.pos[1] - s.gripper[1]).abs() < GRIPPER_HALF;
    if behind {
        Action::new(dir * MAX_MOVE, o.pos[1] - s.gripper[1], 0.0)
    } else {
        Action::new(0.0, 0.0, 1.0)
    }
}

/// Waypoint proportional controller: approach, then grasp, push or place.
pub fn scripted_expert(task: &SkillTask, s: &WorldState) -> Action {
    match task.skill {
        SkillId::ReachTarget => match &s.goal {
            Some(g) => toward(s.gripper, g.center, 0.0),
            None => Action::default(),
        },
        SkillId::GraspBlock | SkillId::GraspDisc => grasp_target(s),
        SkillId::PushBlockRight => push(s, 1.0),
        SkillId::PushBlockLeft => push(s, -1.0),
        SkillId::PlaceBlockOnPad | SkillId::PlaceDiscOnPad => {
            let Some(goal) = &s.goal else {
                return Action::default();
            };
            if s.held != Some(0) {
                grasp_target(s)
            } else if dist(s.gripper, goal.center) > ARRIVED {
                toward(s.gripper, goal.center, 0.0)
            } else {
                Action::new(0.0, 0.0, 1.0)
            }
        }
    }
}
