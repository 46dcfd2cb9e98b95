//! Demonstration generation and the PPLD dataset file.
//!
//! Layout (little-endian): magic `PPLD`, u32 version, u32 episode count;
//! per episode: u32 skill id, u32 instruction length + UTF-8 bytes, u32 step
//! count `l`, then `l` × (4×f32 proprio, 1024×u8 frame, 3×f32 action), and a
//! u8 success flag.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::expert::{scripted_expert, success};
use super::render::{render, Frame, PIXELS};
use super::skills::{SkillId, SkillTask};
use super::world::{reset, step, Action, WorldState};
use crate::error::{Error, Result};
use crate::seeds;

pub const PPLD_MAGIC: [u8; 4] = *b"PPLD";
pub const PPLD_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub skill: SkillId,
    pub instruction: String,
    pub proprio: Vec<[f32; 4]>,
    pub frames: Vec<Frame>,
    pub actions: Vec<[f32; 3]>,
    pub success: bool,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Runs the scripted expert from `reset(task, seed)` until success or the
/// episode limit, recording the observation before each action.
pub fn record_episode(task: &SkillTask, seed: u64) -> (Demonstration, WorldState) {
    let mut state = reset(task, seed);
    let mut jitter = task.expert_jitter.map(|sd| {
        (
            Normal::new(0.0, sd).expect("jitter sd must be finite and >= 0"),
            ChaCha8Rng::seed_from_u64(seeds::mix(seed, 0x6a17)),
        )
    });
    let mut demo = Demonstration {
        skill: task.skill,
        instruction: task.instruction.clone(),
        proprio: Vec::new(),
        frames: Vec::new(),
        actions: Vec::new(),
        success: false,
    };
    for _ in 0..task.max_len {
        let action = scripted_expert(task, &state);
        // The recorded label stays the clean expert action; only the
        // executed motion is perturbed, so demos show recoveries.
        let executed = match jitter.as_mut() {
            Some((dist, rng)) => Action::new(action.dx + dist.sample(rng), action.dy + dist.sample(rng), action.grip),
            None => action,
        };
        demo.proprio.push(state.proprio());
        demo.frames.push(render(&state));
        demo.actions.push(action.to_array());
        state = step(&state, executed);
        if success(task, &state) {
            demo.success = true;
            break;
        }
    }
    (demo, state)
}

/// `n` successful expert episodes; failed attempts are replaced by fresh
/// seeds, up to `10 n` attempts.
pub fn generate_demos(task: &SkillTask, n: usize, seed: u64) -> Result<Vec<Demonstration>> {
    if n == 0 {
        return Err(Error::Invalid("demo count must be at least 1".into()));
    }
    let mut demos = Vec::with_capacity(n);
    let attempts = 10 * n;
    for attempt in 0..attempts {
        let (demo, _) = record_episode(task, seeds::mix(seed, attempt as u64));
        if demo.success {
            demos.push(demo);
            if demos.len() == n {
                return Ok(demos);
            }
        }
    }
    Err(Error::ExpertExhausted {
        got: demos.len(),
        wanted: n,
        attempts,
    })
}

pub fn encode_ppld(demos: &[Demonstration]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&PPLD_MAGIC);
    buf.extend_from_slice(&PPLD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(demos.len() as u32).to_le_bytes());
    for d in demos {
        buf.extend_from_slice(&d.skill.code().to_le_bytes());
        buf.extend_from_slice(&(d.instruction.len() as u32).to_le_bytes());
        buf.extend_from_slice(d.instruction.as_bytes());
        buf.extend_from_slice(&(d.len() as u32).to_le_bytes());
        for t in 0..d.len() {
            for v in d.proprio[t] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&d.frames[t]);
            for v in d.actions[t] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.push(d.success as u8);
    }
    buf
}

pub fn write_ppld(path: &Path, demos: &[Demonstration]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppld(demos))
        .map_err(|e| Error::io(path, e))
}

pub fn read_ppld(path: &Path) -> Result<Vec<Demonstration>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppld(&bytes, path)
}

/// Little-endian cursor that reports truncation with context.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                context: format!("need {n} bytes for {what} at offset {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn header(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().unwrap();
        if found != magic {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected: magic,
                found,
            });
        }
        let v = self.u32("version")?;
        if v != version {
            return Err(Error::Version {
                path: self.path.to_path_buf(),
                found: v,
                supported: version,
            });
        }
        Ok(())
    }

    pub(crate) fn corrupt(&self, context: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.to_path_buf(),
            context: context.into(),
        }
    }

    pub(crate) fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_ppld(bytes: &[u8], path: &Path) -> Result<Vec<Demonstration>> {
    let mut r = Reader::new(bytes, path);
    r.header(PPLD_MAGIC, PPLD_VERSION)?;
    let count = r.u32("episode count")? as usize;
    let mut demos = Vec::with_capacity(count.min(1 << 16));
    for e in 0..count {
        let code = r.u32("skill id")?;
        let skill = SkillId::from_code(code)
            .ok_or_else(|| r.corrupt(format!("episode {e}: unknown skill id {code}")))?;
        let len = r.u32("instruction length")? as usize;
        let instruction = std::str::from_utf8(r.take(len, "instruction")?)
            .map_err(|_| r.corrupt(format!("episode {e}: instruction is not UTF-8")))?
            .to_string();
        let steps = r.u32("step count")? as usize;
        let mut d = Demonstration {
            skill,
            instruction,
            proprio: Vec::with_capacity(steps),
            frames: Vec::with_capacity(steps),
            actions: Vec::with_capacity(steps),
            success: false,
        };
        for _ in 0..steps {
            let mut p = [0f32; 4];
            for v in &mut p {
                *v = r.f32("proprio")?;
            }
            d.proprio.push(p);
            d.frames.push(r.take(PIXELS, "frame")?.to_vec());
            let mut a = [0f32; 3];
            for v in &mut a {
                *v = r.f32("action")?;
            }
            d.actions.push(a);
        }
        d.success = match r.u8("success flag")? {
            0 => false,
            1 => true,
            x => return Err(r.corrupt(format!("episode {e}: success flag {x}"))),
        };
        demos.push(d);
    }
    if !r.finished() {
        return Err(r.corrupt("trailing bytes after last episode"));
    }
    Ok(demos)
}
