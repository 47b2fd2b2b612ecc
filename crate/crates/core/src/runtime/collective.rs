//! Collective operations over a [`Transport`], built so that every
//! arithmetic result is bitwise identical to the single-rank code path.

use num_complex::Complex64;

use super::topology::RankTopology;
use super::transport::{tag, Phase, Transport};
use crate::error::Result;
use crate::linalg::{self, add_assign, CMatrix};
use crate::spectral::{
    dif_lower, dif_upper, dit_lower, dit_upper, forward_half, inverse_half, twiddle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One radix-2 stage across the row group. The lower partner of a pair
/// keeps the `a + ...` output, the upper one the `a - ...` output.
pub async fn butterfly_exchange<T: Transport>(
    topo: &RankTopology,
    transport: &T,
    local: &[Complex64],
    stage: usize,
    direction: Direction,
    iteration: usize,
) -> Result<Vec<Complex64>> {
    let len = topo.n_step;
    if len == 1 {
        return Ok(local.to_vec());
    }
    let p = topo.step_index();
    let (half, phase, sign) = match direction {
        Direction::Forward => (forward_half(len, stage), Phase::Forward, -1.0),
        Direction::Inverse => (inverse_half(stage), Phase::Inverse, 1.0),
    };
    let span = 2 * half;
    let partner = topo.rank_of(p ^ half, topo.node_index());
    let t = tag(iteration, phase, stage, 0);
    transport.send(partner, t, local)?;
    let other = transport.recv(partner, t).await?;
    let lower = p & half == 0;
    let a_index = if lower { p } else { p - half };
    let w = twiddle(a_index % span, span, sign);
    let mut out = vec![Complex64::new(0.0, 0.0); local.len()];
    match (direction, lower) {
        (Direction::Forward, true) => dif_lower(local, &other, &mut out),
        (Direction::Forward, false) => dif_upper(&other, local, w, &mut out),
        (Direction::Inverse, true) => dit_lower(local, &other, w, &mut out),
        (Direction::Inverse, false) => dit_upper(&other, local, w, &mut out),
    }
    Ok(out)
}

/// `out_m = sum_j a[(m, j)] x_j` across the column group, one reduction
/// per output stage. Each reduction is a binary tree toward node 0 with
/// the pairing of [`linalg::tree_sum`]; node 0 forwards the sum to node `m`.
///
/// `local` holds this rank's stages (all `M` when `n_coll = 1`, in which
/// case no message is sent); the returned stages are those of the same
/// indices.
pub async fn stage_reduce<T: Transport>(
    topo: &RankTopology,
    transport: &T,
    a: &CMatrix,
    local: &[Vec<Complex64>],
    iteration: usize,
    round: usize,
) -> Result<Vec<Vec<Complex64>>> {
    if topo.n_coll == 1 {
        let refs: Vec<&[Complex64]> = local.iter().map(Vec::as_slice).collect();
        return Ok(linalg::mix_stages(a, &refs));
    }
    let n = topo.n_coll;
    let j = topo.node_index();
    let x = &local[0];
    let mut mine = None;
    for m in 0..n {
        let t = tag(iteration, Phase::StageReduce, round, m);
        let mut acc = linalg::scaled(a[(m, j)], x);
        let mut stride = 1;
        let mut sent = false;
        while stride < n {
            if j % (2 * stride) == stride {
                transport.send(topo.rank_of(topo.step_index(), j - stride), t, &acc)?;
                sent = true;
                break;
            }
            if j + stride < n {
                let other = transport
                    .recv(topo.rank_of(topo.step_index(), j + stride), t)
                    .await?;
                add_assign(&mut acc, &other);
            }
            stride *= 2;
        }
        let t_out = tag(iteration, Phase::StageBroadcast, round, m);
        if !sent && j == 0 {
            if m == 0 {
                mine = Some(acc);
            } else {
                transport.send(topo.rank_of(topo.step_index(), m), t_out, &acc)?;
            }
        } else if j == m {
            mine = Some(transport.recv(topo.rank_of(topo.step_index(), 0), t_out).await?);
        }
    }
    Ok(vec![mine.expect("every node receives its output stage")])
}

/// Sends stage `src_node` of this step group to every other node rank of
/// the group; returns it on all of them.
pub async fn column_broadcast<T: Transport>(
    topo: &RankTopology,
    transport: &T,
    src_node: usize,
    value: Option<&[Complex64]>,
    iteration: usize,
    round: usize,
) -> Result<Vec<Complex64>> {
    let t = tag(iteration, Phase::StageBroadcast, round, 4095);
    let root = topo.rank_of(topo.step_index(), src_node);
    if topo.rank == root {
        let v = value.expect("root holds the broadcast value");
        for dest in topo.column_group() {
            if dest != root {
                transport.send(dest, t, v)?;
            }
        }
        Ok(v.to_vec())
    } else {
        transport.recv(root, t).await
    }
}

/// Delivers the final stage of the last step to every node rank of step 0.
/// Exactly one message per receiving node rank; none when sender and
/// receiver coincide.
pub async fn last_step_broadcast<T: Transport>(
    topo: &RankTopology,
    transport: &T,
    last_stage: Option<&[Complex64]>,
    iteration: usize,
) -> Result<Option<Vec<Complex64>>> {
    let sender = topo.rank_of(topo.n_step - 1, topo.n_coll - 1);
    let t = tag(iteration, Phase::LastStep, 0, 0);
    let mut own = None;
    if topo.rank == sender {
        let v = last_stage.expect("sender holds the last stage");
        for j in 0..topo.n_coll {
            let dest = topo.rank_of(0, j);
            if dest == sender {
                own = Some(v.to_vec());
            } else {
                transport.send(dest, t, v)?;
            }
        }
    }
    if topo.step_index() == 0 && own.is_none() {
        own = Some(transport.recv(sender, t).await?);
    }
    Ok(own)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Min,
}

impl ReduceOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Max => a.max(b),
            ReduceOp::Min => a.min(b),
        }
    }
}

/// Elementwise reduction over all ranks (tree toward rank 0 in
/// [`linalg::tree_sum`] order, then sent back to every rank).
pub async fn allreduce<T: Transport>(
    transport: &T,
    values: &[f64],
    ops: &[ReduceOp],
    iteration: usize,
    round: usize,
) -> Result<Vec<f64>> {
    let n = transport.size();
    let r = transport.rank();
    let t = tag(iteration, Phase::Allreduce, round, 0);
    let t_back = tag(iteration, Phase::Allreduce, round, 1);
    let pack = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let mut acc = values.to_vec();
    let mut stride = 1;
    while stride < n {
        if r % (2 * stride) == stride {
            transport.send(r - stride, t, &pack(&acc))?;
            break;
        }
        if r + stride < n {
            let other = transport.recv(r + stride, t).await?;
            for ((a, b), op) in acc.iter_mut().zip(&other).zip(ops) {
                *a = op.apply(*a, b.re);
            }
        }
        stride *= 2;
    }
    if r == 0 {
        for dest in 1..n {
            transport.send(dest, t_back, &pack(&acc))?;
        }
        Ok(acc)
    } else {
        Ok(transport.recv(0, t_back).await?.iter().map(|v| v.re).collect())
    }
}

/// Collects every rank's stages on rank 0 as full step blocks.
pub async fn gather_blocks<T: Transport>(
    topo: &RankTopology,
    transport: &T,
    local: &[Complex64],
    iteration: usize,
) -> Result<Option<Vec<Vec<Complex64>>>> {
    let t = tag(iteration, Phase::Gather, 0, 0);
    if topo.rank != 0 {
        transport.send(0, t, local)?;
        return Ok(None);
    }
    let mut blocks = Vec::with_capacity(topo.n_step);
    for step in 0..topo.n_step {
        let mut block = Vec::new();
        for node in 0..topo.n_coll {
            let src = topo.rank_of(step, node);
            if src == 0 {
                block.extend_from_slice(local);
            } else {
                block.extend(transport.recv(src, t).await?);
            }
        }
        blocks.push(block);
    }
    Ok(Some(blocks))
}

/// All ranks of `group` wait until every member has arrived.
pub async fn barrier<T: Transport>(transport: &T, group: &[usize], iteration: usize) -> Result<()> {
    let t = tag(iteration, Phase::Barrier, 0, 0);
    let root = group[0];
    if transport.rank() == root {
        for &r in &group[1..] {
            transport.recv(r, t).await?;
        }
        for &r in &group[1..] {
            transport.send(r, t, &[])?;
        }
    } else {
        transport.send(root, t, &[])?;
        transport.recv(root, t).await?;
    }
    Ok(())
}
