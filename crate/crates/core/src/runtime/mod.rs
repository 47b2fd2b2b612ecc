//! Distributed execution: rank layout, message transports and the
//! collectives used by the parallel iteration.

pub mod collective;
pub mod loopback;
pub mod parallel;
pub mod tcp;
pub mod topology;
pub mod transport;

use std::future::Future;
use std::pin::pin;
use std::task::{Context, Poll, Waker};

pub use loopback::{run_ranks, LoopbackRun, LoopbackTransport, SendRecord};
pub use parallel::run_parallel;
pub use tcp::{Bootstrap, TcpTransport};
pub use topology::RankTopology;
pub use transport::{tag, Phase, Transport};

use crate::driver::{DriverSettings, Prepared, RunOutcome};
use crate::error::{PintError, Result};

/// Drives a future to completion on the current thread. Futures in this
/// crate only suspend on transports whose `recv` blocks, so busy polling
/// is never needed for more than one round.
pub fn block_on<F: Future>(f: F) -> F::Output {
    let mut f = pin!(f);
    let mut cx = Context::from_waker(Waker::noop());
    loop {
        if let Poll::Ready(out) = f.as_mut().poll(&mut cx) {
            return out;
        }
        std::thread::yield_now();
    }
}

/// Outcome of an in-process run over `n_step * n_coll` loopback ranks.
pub struct LoopbackOutcome {
    pub outcome: RunOutcome,
    pub log: Vec<SendRecord>,
}

/// Runs the distributed iteration with every rank in this thread.
///
/// When ranks fail, the error of the lowest failing rank that is not a
/// mere [`PintError::PeerFailed`] is returned.
pub fn run_loopback(
    prepared: &Prepared,
    settings: &DriverSettings,
    n_step: usize,
    n_coll: usize,
) -> Result<LoopbackOutcome> {
    let stages = prepared.tableau.stages();
    let base = RankTopology::new(n_step, n_coll, stages, 0)?;
    let run = run_ranks(base.size(), |t| async move {
        let topo = base.with_rank(t.rank());
        run_parallel(prepared, settings, topo, &t).await
    })?;
    let mut first_err = None;
    let mut outcome = None;
    for r in run.results {
        match r {
            Ok(Some(o)) => outcome = Some(o),
            Ok(None) => {}
            Err(e) => {
                let replace = match &first_err {
                    None => true,
                    Some(PintError::PeerFailed { .. }) => !matches!(e, PintError::PeerFailed { .. }),
                    Some(_) => false,
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(LoopbackOutcome {
        outcome: outcome.expect("rank 0 returns the gathered outcome"),
        log: run.log,
    })
}
