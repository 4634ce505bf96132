use std::collections::BTreeMap;

use serde::Serialize;

use super::{Result, RuntimeError};

/// Channel ids must fit in 7 bits, which allows up to 8 cores.
pub const MAX_CORES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ChannelKind {
    Frames = 0,
    Remainder = 1,
}

/// Channel id of (sender, receiver, kind) among `p` cores.
pub fn encode_channel(p: usize, s: usize, r: usize, kind: ChannelKind) -> u8 {
    debug_assert!(s != r && s < p && r < p);
    let rank = if r > s { r - 1 } else { r };
    (2 * (s * (p - 1) + rank) + kind as usize) as u8
}

pub fn decode_channel(p: usize, id: u8) -> Result<(usize, usize, ChannelKind)> {
    if p < 2 || id as usize >= 2 * p * (p - 1) {
        return Err(RuntimeError::InvalidChannel(id));
    }
    let kind = if id % 2 == 0 {
        ChannelKind::Frames
    } else {
        ChannelKind::Remainder
    };
    let pair = id as usize / 2;
    let s = pair / (p - 1);
    let rank = pair % (p - 1);
    let r = if rank >= s { rank + 1 } else { rank };
    Ok((s, r, kind))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelMap {
    pub cores: usize,
    /// (sender, receiver) → (frames channel, remainder channel).
    pub pairs: BTreeMap<(usize, usize), (u8, u8)>,
}

impl ChannelMap {
    pub fn len(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, s: usize, r: usize) -> Option<(u8, u8)> {
        self.pairs.get(&(s, r)).copied()
    }
}

pub fn channel_map(p: usize) -> Result<ChannelMap> {
    if p > MAX_CORES {
        return Err(RuntimeError::TooManyCores { got: p, max: MAX_CORES });
    }
    let mut pairs = BTreeMap::new();
    for s in 0..p {
        for r in (0..p).filter(|&r| r != s) {
            pairs.insert(
                (s, r),
                (
                    encode_channel(p, s, r, ChannelKind::Frames),
                    encode_channel(p, s, r, ChannelKind::Remainder),
                ),
            );
        }
    }
    Ok(ChannelMap { cores: p, pairs })
}
