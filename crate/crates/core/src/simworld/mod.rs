//! Deterministic 2D manipulation world: state, dynamics, rasterizer,
//! ground-truth flow, scripted experts and demonstration datasets.

mod dataset;
mod expert;
mod render;
mod skills;
mod world;

pub use dataset::{
    decode_ppld, encode_ppld, generate_demos, read_ppld, record_episode, write_ppld,
    Demonstration, PPLD_MAGIC, PPLD_VERSION,
};
pub(crate) use dataset::Reader;
pub use expert::{scripted_expert, success, PUSH_LEFT_LINE, PUSH_RIGHT_LINE};
pub use render::{entity_map, render, true_flow, Entity, Frame, PIXELS, SCALE, SIDE};
pub use skills::{SkillId, SkillTask};
pub use world::{
    dist, push_distance, reset, step, Action, Goal, Object, Shape, Vec2, WorldState,
    CLOSED_BELOW, GRASP_RADIUS, GRIPPER_HALF, MAX_MOVE, OBJECT_HALF,
};
