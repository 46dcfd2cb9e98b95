use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The seven skills of the desk suite. The first four are pre-training
/// skills; the last three are acquired in the lifelong stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SkillId {
    ReachTarget,
    GraspBlock,
    PushBlockRight,
    PlaceBlockOnPad,
    GraspDisc,
    PushBlockLeft,
    PlaceDiscOnPad,
}

impl SkillId {
    pub const ALL: [SkillId; 7] = [
        SkillId::ReachTarget,
        SkillId::GraspBlock,
        SkillId::PushBlockRight,
        SkillId::PlaceBlockOnPad,
        SkillId::GraspDisc,
        SkillId::PushBlockLeft,
        SkillId::PlaceDiscOnPad,
    ];
    pub const PRETRAIN: [SkillId; 4] = [
        SkillId::ReachTarget,
        SkillId::GraspBlock,
        SkillId::PushBlockRight,
        SkillId::PlaceBlockOnPad,
    ];
    pub const LIFELONG: [SkillId; 3] = [
        SkillId::GraspDisc,
        SkillId::PushBlockLeft,
        SkillId::PlaceDiscOnPad,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SkillId::ReachTarget => "reach-target",
            SkillId::GraspBlock => "grasp-block",
            SkillId::PushBlockRight => "push-block-right",
            SkillId::PlaceBlockOnPad => "place-block-on-pad",
            SkillId::GraspDisc => "grasp-disc",
            SkillId::PushBlockLeft => "push-block-left",
            SkillId::PlaceDiscOnPad => "place-disc-on-pad",
        }
    }

    pub fn instruction(self) -> &'static str {
        match self {
            SkillId::ReachTarget => "reach the target",
            SkillId::GraspBlock => "grasp the block",
            SkillId::PushBlockRight => "push the block right",
            SkillId::PlaceBlockOnPad => "place the block on the pad",
            SkillId::GraspDisc => "grasp the disc",
            SkillId::PushBlockLeft => "push the block left",
            SkillId::PlaceDiscOnPad => "place the disc on the pad",
        }
    }

    pub fn max_len(self) -> usize {
        match self {
            SkillId::ReachTarget | SkillId::GraspBlock | SkillId::GraspDisc => 40,
            SkillId::PushBlockRight | SkillId::PushBlockLeft => 60,
            SkillId::PlaceBlockOnPad | SkillId::PlaceDiscOnPad => 80,
        }
    }

    pub fn is_grasp(self) -> bool {
        matches!(self, SkillId::GraspBlock | SkillId::GraspDisc)
    }
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SkillId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownSkill(s.to_string()))
    }
}

impl From<SkillId> for String {
    fn from(s: SkillId) -> String {
        s.name().to_string()
    }
}

impl TryFrom<String> for SkillId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

/// A skill plus its episode settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillTask {
    pub skill: SkillId,
    pub instruction: String,
    pub max_len: usize,
    /// Extra non-target objects placed in the scene.
    pub distractors: usize,
    /// Standard deviation of Gaussian noise added to the executed expert
    /// motion during demo recording; recorded actions stay noise-free.
    pub expert_jitter: Option<f64>,
}

impl SkillTask {
    pub fn new(skill: SkillId) -> Self {
        Self {
            skill,
            instruction: skill.instruction().to_string(),
            max_len: skill.max_len(),
            distractors: 0,
            expert_jitter: None,
        }
    }
}
