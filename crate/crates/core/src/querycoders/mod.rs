//! Prompt-query inputs: hashed text embedding, block-matching flow, flow
//! features and their learned fusion.

mod flow;
mod query;
mod text;

pub use flow::{estimate_flow, FlowField, BLOCK, POOLED_LEN, POOL_GRID, SEARCH};
pub use query::{QueryNet, QUERY_PARAM_NAMES};
pub use text::{TextEncoder, DEFAULT_TEXT_SEED, TEXT_BUCKETS};
