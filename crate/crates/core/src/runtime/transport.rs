use std::future::Future;

use num_complex::Complex64;

use crate::error::Result;

/// Point-to-point messaging between ranks. Messages for one
/// `(source, destination, tag)` triple arrive in send order; sends never
/// block on the receiver.
pub trait Transport {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&self, dest: usize, tag: u64, payload: &[Complex64]) -> Result<()>;
    fn recv(&self, src: usize, tag: u64) -> impl Future<Output = Result<Vec<Complex64>>>;
}

/// Message phases, used to build unique tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    LastStep = 1,
    Forward = 2,
    Inverse = 3,
    StageReduce = 4,
    StageBroadcast = 5,
    Allreduce = 6,
    Gather = 7,
    Barrier = 8,
}

impl Phase {
    pub fn from_tag(tag: u64) -> Option<Phase> {
        Some(match (tag >> 24) & 0xff {
            1 => Phase::LastStep,
            2 => Phase::Forward,
            3 => Phase::Inverse,
            4 => Phase::StageReduce,
            5 => Phase::StageBroadcast,
            6 => Phase::Allreduce,
            7 => Phase::Gather,
            8 => Phase::Barrier,
            _ => return None,
        })
    }
}

/// `iteration << 32 | phase << 24 | a << 12 | b` with `a, b < 4096`.
pub fn tag(iteration: usize, phase: Phase, a: usize, b: usize) -> u64 {
    debug_assert!(a < 4096 && b < 4096);
    ((iteration as u64) << 32) | ((phase as u64) << 24) | ((a as u64) << 12) | b as u64
}
