//! Rasterizer and ground-truth flow.
//!
//! World coordinates map to pixels by `px = x * 32`; pixel `(row, col)` is
//! covered by an entity when its center `(col + 0.5, row + 0.5)` falls inside
//! the entity's footprint. Rows grow with world `y`.

use super::world::{Shape, WorldState};
use crate::querycoders::FlowField;

pub const SIDE: usize = 32;
pub const PIXELS: usize = SIDE * SIDE;
pub const SCALE: f64 = SIDE as f64;

pub const GOAL_INTENSITY: u8 = 60;
pub const GRIPPER_INTENSITY: u8 = 255;

/// 32×32 grayscale frame, row-major.
pub type Frame = Vec<u8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entity {
    Goal,
    Object(usize),
    Gripper,
}

const FINGER_HALF_WIDTH: f64 = 0.75;
const FINGER_HALF_LEN: f64 = 0.06 * SCALE;

fn gripper_covers(s: &WorldState, px: f64, py: f64) -> bool {
    let (gx, gy) = (s.gripper[0] * SCALE, s.gripper[1] * SCALE);
    let w = (0.02 + 0.04 * s.aperture) * SCALE;
    let finger = |fx: f64| (px - fx).abs() < FINGER_HALF_WIDTH && (py - gy).abs() < FINGER_HALF_LEN;
    let palm = (py - (gy - FINGER_HALF_LEN)).abs() < FINGER_HALF_WIDTH
        && (px - gx).abs() < w + FINGER_HALF_WIDTH;
    finger(gx - w) || finger(gx + w) || palm
}

/// Topmost entity at every pixel: goal pad, then objects in index order,
/// then the gripper.
pub fn entity_map(s: &WorldState) -> Vec<Option<Entity>> {
    let mut map = vec![None; PIXELS];
    for (idx, slot) in map.iter_mut().enumerate() {
        let px = (idx % SIDE) as f64 + 0.5;
        let py = (idx / SIDE) as f64 + 0.5;
        if let Some(g) = &s.goal {
            let (dx, dy) = (px - g.center[0] * SCALE, py - g.center[1] * SCALE);
            let r = g.radius * SCALE;
            if dx * dx + dy * dy < r * r {
                *slot = Some(Entity::Goal);
            }
        }
        for (i, o) in s.objects.iter().enumerate() {
            let (dx, dy) = (px - o.pos[0] * SCALE, py - o.pos[1] * SCALE);
            let h = o.half * SCALE;
            let inside = match o.shape {
                Shape::Square => dx.abs() < h && dy.abs() < h,
                Shape::Disc => dx * dx + dy * dy < h * h,
            };
            if inside {
                *slot = Some(Entity::Object(i));
            }
        }
        if s.gripper_visible && gripper_covers(s, px, py) {
            *slot = Some(Entity::Gripper);
        }
    }
    map
}

pub fn render(s: &WorldState) -> Frame {
    entity_map(s)
        .into_iter()
        .map(|e| match e {
            None => 0,
            Some(Entity::Goal) => GOAL_INTENSITY,
            Some(Entity::Object(i)) => s.objects[i].intensity,
            Some(Entity::Gripper) => GRIPPER_INTENSITY,
        })
        .collect()
}

fn displacement_px(prev: &WorldState, cur: &WorldState, e: Entity) -> (f64, f64) {
    let (a, b) = match e {
        Entity::Goal => return (0.0, 0.0),
        Entity::Object(i) => match (prev.objects.get(i), cur.objects.get(i)) {
            (Some(p), Some(c)) => (p.pos, c.pos),
            _ => return (0.0, 0.0),
        },
        Entity::Gripper => (prev.gripper, cur.gripper),
    };
    (
        ((b[0] - a[0]) * SCALE).round(),
        ((b[1] - a[1]) * SCALE).round(),
    )
}

/// Per-pixel displacement of whichever entity covers the pixel in `prev`,
/// rounded to whole pixels; background is zero.
pub fn true_flow(prev: &WorldState, cur: &WorldState) -> FlowField {
    let mut flow = FlowField::zeros();
    for (idx, e) in entity_map(prev).into_iter().enumerate() {
        if let Some(e) = e {
            let (u, v) = displacement_px(prev, cur, e);
            flow.set(idx / SIDE, idx % SIDE, u, v);
        }
    }
    flow
}
