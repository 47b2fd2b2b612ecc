//! All ranks in one thread: each rank is a future, polled round-robin until
//! every one has finished. A rank blocks only in `recv`; if a full pass over
//! the unfinished ranks neither delivers nor sends a message, the run is
//! deadlocked and the wait graph is reported.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, VecDeque};
use std::future::{poll_fn, Future};
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use num_complex::Complex64;
use serde::Serialize;

use super::transport::{Phase, Transport};
use crate::error::{PintError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SendRecord {
    pub src: usize,
    pub dest: usize,
    pub tag: u64,
    pub len: usize,
}

impl SendRecord {
    pub fn phase(&self) -> Option<Phase> {
        Phase::from_tag(self.tag)
    }

    pub fn iteration(&self) -> usize {
        (self.tag >> 32) as usize
    }
}

type Mailbox = HashMap<(usize, usize, u64), VecDeque<Vec<Complex64>>>;

#[derive(Debug, Default)]
struct Network {
    mail: RefCell<Mailbox>,
    waiting: RefCell<Vec<Option<(usize, u64)>>>,
    log: RefCell<Vec<SendRecord>>,
    events: Cell<u64>,
}

#[derive(Debug, Clone)]
pub struct LoopbackTransport {
    rank: usize,
    size: usize,
    net: Rc<Network>,
}

impl Transport for LoopbackTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&self, dest: usize, tag: u64, payload: &[Complex64]) -> Result<()> {
        if dest >= self.size {
            return Err(PintError::Transport {
                rank: self.rank,
                detail: format!("send to rank {dest} outside {} ranks", self.size),
            });
        }
        self.net
            .mail
            .borrow_mut()
            .entry((self.rank, dest, tag))
            .or_default()
            .push_back(payload.to_vec());
        self.net.log.borrow_mut().push(SendRecord {
            src: self.rank,
            dest,
            tag,
            len: payload.len(),
        });
        self.net.events.set(self.net.events.get() + 1);
        Ok(())
    }

    async fn recv(&self, src: usize, tag: u64) -> Result<Vec<Complex64>> {
        let key = (src, self.rank, tag);
        poll_fn(|_| {
            let msg = self.net.mail.borrow_mut().get_mut(&key).and_then(VecDeque::pop_front);
            match msg {
                Some(m) => {
                    self.net.waiting.borrow_mut()[self.rank] = None;
                    self.net.events.set(self.net.events.get() + 1);
                    Poll::Ready(Ok(m))
                }
                None => {
                    self.net.waiting.borrow_mut()[self.rank] = Some((src, tag));
                    Poll::Pending
                }
            }
        })
        .await
    }
}

/// Per-rank results in rank order and the log of every send.
pub struct LoopbackRun<T> {
    pub results: Vec<Result<T>>,
    pub log: Vec<SendRecord>,
}

/// Runs `size` ranks built by `spawn` to completion.
pub fn run_ranks<'a, T, F, Fut>(size: usize, mut spawn: F) -> Result<LoopbackRun<T>>
where
    F: FnMut(LoopbackTransport) -> Fut,
    Fut: Future<Output = Result<T>> + 'a,
{
    let net = Rc::new(Network::default());
    *net.waiting.borrow_mut() = vec![None; size];
    let mut tasks: Vec<Option<Pin<Box<dyn Future<Output = Result<T>> + 'a>>>> = (0..size)
        .map(|rank| {
            let t = LoopbackTransport {
                rank,
                size,
                net: Rc::clone(&net),
            };
            Some(Box::pin(spawn(t)) as Pin<Box<dyn Future<Output = Result<T>> + 'a>>)
        })
        .collect();
    let mut results: Vec<Option<Result<T>>> = (0..size).map(|_| None).collect();
    let mut cx = Context::from_waker(Waker::noop());
    let mut remaining = size;
    while remaining > 0 {
        let before = net.events.get();
        let mut finished = false;
        for (rank, slot) in tasks.iter_mut().enumerate() {
            let Some(task) = slot else { continue };
            if let Poll::Ready(out) = task.as_mut().poll(&mut cx) {
                results[rank] = Some(out);
                *slot = None;
                net.waiting.borrow_mut()[rank] = None;
                remaining -= 1;
                finished = true;
            }
        }
        if remaining > 0 && !finished && net.events.get() == before {
            let graph = net
                .waiting
                .borrow()
                .iter()
                .enumerate()
                .filter_map(|(rank, w)| {
                    w.map(|(src, tag)| format!("rank {rank} <- rank {src} (tag {tag:#x})"))
                })
                .collect::<Vec<_>>()
                .join("; ");
            return Err(PintError::Deadlock { wait_graph: graph });
        }
    }
    let log = net.log.borrow().clone();
    Ok(LoopbackRun {
        results: results.into_iter().map(Option::unwrap).collect(),
        log,
    })
}
