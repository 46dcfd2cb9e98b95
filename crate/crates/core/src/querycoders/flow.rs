//! Dense flow fields and a coarse-to-fine block-matching estimator.
//!
//! The estimator runs on a 2×-downsampled pyramid level first, then refines
//! at full resolution around twice the coarse vector. Each level matches
//! 4×4 blocks of the previous frame against the current frame within ±3 px
//! by sum of absolute differences; out-of-frame pixels read as 0. Ties go to
//! the smaller search offset, then smaller `u`, then smaller `v`.

use crate::error::{Error, Result};
use crate::simworld::{PIXELS, SIDE};

pub const BLOCK: usize = 4;
pub const SEARCH: i32 = 3;
/// Pooled grid is `POOL_GRID × POOL_GRID × 2`.
pub const POOL_GRID: usize = 8;
pub const POOLED_LEN: usize = POOL_GRID * POOL_GRID * 2;

/// Per-pixel `(u, v)` in pixels per step; `u` along columns, `v` along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    data: Vec<f64>,
}

impl FlowField {
    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; PIXELS * 2],
        }
    }

    pub fn constant(u: f64, v: f64) -> Self {
        let mut f = Self::zeros();
        for idx in 0..PIXELS {
            f.data[2 * idx] = u;
            f.data[2 * idx + 1] = v;
        }
        f
    }

    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = 2 * (row * SIDE + col);
        (self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, row: usize, col: usize, u: f64, v: f64) {
        let i = 2 * (row * SIDE + col);
        self.data[i] = u;
        self.data[i + 1] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Average-pools to an 8×8×2 grid, flattened cell-major as
    /// `[(r, c, u), (r, c, v), ...]`.
    pub fn pooled(&self) -> Vec<f64> {
        let cell = SIDE / POOL_GRID;
        let mut out = vec![0.0; POOLED_LEN];
        for row in 0..SIDE {
            for col in 0..SIDE {
                let (u, v) = self.at(row, col);
                let k = 2 * ((row / cell) * POOL_GRID + col / cell);
                out[k] += u;
                out[k + 1] += v;
            }
        }
        let n = (cell * cell) as f64;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }

    /// Mean endpoint error against `truth` over pixels where `mask` holds.
    pub fn mean_endpoint_error(&self, truth: &FlowField, mask: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for row in 0..SIDE {
            for col in 0..SIDE {
                if mask(row, col) {
                    let (a, b) = (self.at(row, col), truth.at(row, col));
                    total += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                    n += 1;
                }
            }
        }
        (n > 0).then(|| total / n as f64)
    }
}

struct Plane {
    side: usize,
    px: Vec<f64>,
}

impl Plane {
    fn from_frame(frame: &[u8]) -> Self {
        Self {
            side: SIDE,
            px: frame.iter().map(|&b| b as f64).collect(),
        }
    }

    fn downsample(&self) -> Self {
        let side = self.side / 2;
        let mut px = vec![0.0; side * side];
        for r in 0..side {
            for c in 0..side {
                let at = |rr: usize, cc: usize| self.px[rr * self.side + cc];
                px[r * side + c] = (at(2 * r, 2 * c)
                    + at(2 * r + 1, 2 * c)
                    + at(2 * r, 2 * c + 1)
                    + at(2 * r + 1, 2 * c + 1))
                    / 4.0;
            }
        }
        Self { side, px }
    }

    fn get(&self, r: i32, c: i32) -> f64 {
        let s = self.side as i32;
        if r < 0 || c < 0 || r >= s || c >= s {
            0.0
        } else {
            self.px[(r * s + c) as usize]
        }
    }
}

/// Best displacement per block at one level, searching around `guess`.
fn match_level(prev: &Plane, cur: &Plane, guess: impl Fn(usize, usize) -> (i32, i32)) -> Vec<(i32, i32)> {
    let blocks = prev.side / BLOCK;
    let mut out = Vec::with_capacity(blocks * blocks);
    for br in 0..blocks {
        for bc in 0..blocks {
            let (gu, gv) = guess(br, bc);
            let mut best: Option<(f64, i32, i32, i32)> = None;
            for dv in -SEARCH..=SEARCH {
                for du in -SEARCH..=SEARCH {
                    let (u, v) = (gu + du, gv + dv);
                    let mut sad = 0.0;
                    for r in 0..BLOCK {
                        for c in 0..BLOCK {
                            let (pr, pc) = ((br * BLOCK + r) as i32, (bc * BLOCK + c) as i32);
                            sad += (prev.get(pr, pc) - cur.get(pr + v, pc + u)).abs();
                        }
                    }
                    let mag = du * du + dv * dv;
                    let better = match best {
                        None => true,
                        Some((bs, bm, bu, bv)) => {
                            sad < bs || (sad == bs && (mag, du, dv) < (bm, bu - gu, bv - gv))
                        }
                    };
                    if better {
                        best = Some((sad, mag, u, v));
                    }
                }
            }
            let (_, _, u, v) = best.unwrap();
            out.push((u, v));
        }
    }
    out
}

/// Two-level block-matching flow from `prev` to `cur`.
pub fn estimate_flow(prev: &[u8], cur: &[u8]) -> Result<FlowField> {
    if prev.len() != PIXELS || cur.len() != PIXELS {
        return Err(Error::Invalid(format!(
            "flow frames must both be {PIXELS} pixels, got {} and {}",
            prev.len(),
            cur.len()
        )));
    }
    let (p0, c0) = (Plane::from_frame(prev), Plane::from_frame(cur));
    let (p1, c1) = (p0.downsample(), c0.downsample());
    let coarse_blocks = p1.side / BLOCK;
    let coarse = match_level(&p1, &c1, |_, _| (0, 0));
    let fine = match_level(&p0, &c0, |br, bc| {
        let (u, v) = coarse[(br / 2) * coarse_blocks + bc / 2];
        (2 * u, 2 * v)
    });
    let blocks = SIDE / BLOCK;
    let mut flow = FlowField::zeros();
    for row in 0..SIDE {
        for col in 0..SIDE {
            let (u, v) = fine[(row / BLOCK) * blocks + col / BLOCK];
            flow.set(row, col, u as f64, v as f64);
        }
    }
    Ok(flow)
}
