//! One process per rank over TCP.
//!
//! Bootstrap comes from `PINT_RANK`, `PINT_SIZE` and `PINT_ADDR`
//! (`host:base_port`); rank `r` listens on `base_port + r`. Every rank opens
//! one outgoing connection per peer and starts with an 8-byte little-endian
//! sender rank. Each message is a 16-byte header (tag, payload byte count;
//! both `u64` little-endian) followed by the payload as little-endian
//! `f64` pairs `(re, im)`.

use std::collections::{HashMap, VecDeque};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::debug;
use num_complex::Complex64;

use super::transport::Transport;
use crate::error::{PintError, Result};

pub const ENV_RANK: &str = "PINT_RANK";
pub const ENV_SIZE: &str = "PINT_SIZE";
pub const ENV_ADDR: &str = "PINT_ADDR";
pub const ENV_TIMEOUT: &str = "PINT_TIMEOUT_S";

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Default)]
struct Inbox {
    queues: HashMap<(usize, u64), VecDeque<Vec<Complex64>>>,
    failure: Option<String>,
}

type SharedInbox = Arc<(Mutex<Inbox>, Condvar)>;

pub struct TcpTransport {
    rank: usize,
    size: usize,
    writers: Vec<Option<Mutex<BufWriter<TcpStream>>>>,
    inbox: SharedInbox,
    timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bootstrap {
    pub rank: usize,
    pub size: usize,
    pub host: String,
    pub base_port: u16,
    pub timeout: Duration,
}

impl Bootstrap {
    pub fn from_env() -> Result<Self> {
        let var = |name: &str| {
            std::env::var(name).map_err(|_| PintError::Config(format!("{name} is not set")))
        };
        let parse = |name: &str, v: String| {
            v.parse::<usize>()
                .map_err(|_| PintError::Config(format!("{name} is not an integer: {v}")))
        };
        let rank = parse(ENV_RANK, var(ENV_RANK)?)?;
        let size = parse(ENV_SIZE, var(ENV_SIZE)?)?;
        let addr = var(ENV_ADDR)?;
        let (host, port) = addr
            .rsplit_once(':')
            .ok_or_else(|| PintError::Config(format!("{ENV_ADDR} must be host:port, got {addr}")))?;
        let base_port = port
            .parse()
            .map_err(|_| PintError::Config(format!("bad port in {ENV_ADDR}: {port}")))?;
        let timeout = match std::env::var(ENV_TIMEOUT) {
            Ok(v) => Duration::from_secs_f64(
                v.parse()
                    .map_err(|_| PintError::Config(format!("{ENV_TIMEOUT} is not a number: {v}")))?,
            ),
            Err(_) => DEFAULT_TIMEOUT,
        };
        if rank >= size {
            return Err(PintError::Config(format!("rank {rank} outside size {size}")));
        }
        Ok(Bootstrap {
            rank,
            size,
            host: host.to_string(),
            base_port,
            timeout,
        })
    }
}

fn io_err(rank: usize, what: &str, e: std::io::Error) -> PintError {
    PintError::Transport {
        rank,
        detail: format!("{what}: {e}"),
    }
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn reader_loop(stream: TcpStream, inbox: SharedInbox) {
    let mut r = BufReader::new(stream);
    let src = match read_u64(&mut r) {
        Ok(s) => s as usize,
        Err(_) => return,
    };
    let fail = |msg: String| {
        let (lock, cv) = &*inbox;
        lock.lock().unwrap().failure.get_or_insert(msg);
        cv.notify_all();
    };
    loop {
        let tag = match read_u64(&mut r) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return,
            Err(e) => return fail(format!("read from rank {src}: {e}")),
        };
        let payload = read_u64(&mut r).and_then(|bytes| {
            let mut raw = vec![0u8; bytes as usize];
            r.read_exact(&mut raw)?;
            Ok(raw)
        });
        let raw = match payload {
            Ok(raw) => raw,
            Err(e) => return fail(format!("read from rank {src}: {e}")),
        };
        let values = raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let (lock, cv) = &*inbox;
        lock.lock()
            .unwrap()
            .queues
            .entry((src, tag))
            .or_default()
            .push_back(values);
        cv.notify_all();
    }
}

impl TcpTransport {
    pub fn from_env() -> Result<Self> {
        Self::connect(&Bootstrap::from_env()?)
    }

    pub fn connect(boot: &Bootstrap) -> Result<Self> {
        let rank = boot.rank;
        let listener = TcpListener::bind((boot.host.as_str(), boot.base_port + rank as u16))
            .map_err(|e| io_err(rank, "bind", e))?;
        let inbox: SharedInbox = Arc::default();
        let peers = boot.size - 1;
        {
            let inbox = Arc::clone(&inbox);
            thread::spawn(move || {
                for stream in listener.incoming().take(peers) {
                    match stream {
                        Ok(s) => {
                            let inbox = Arc::clone(&inbox);
                            thread::spawn(move || reader_loop(s, inbox));
                        }
                        Err(e) => {
                            let (lock, cv) = &*inbox;
                            lock.lock().unwrap().failure.get_or_insert(format!("accept: {e}"));
                            cv.notify_all();
                        }
                    }
                }
            });
        }
        let deadline = Instant::now() + boot.timeout;
        let mut writers = Vec::with_capacity(boot.size);
        for dest in 0..boot.size {
            if dest == rank {
                writers.push(None);
                continue;
            }
            let addr = (boot.host.as_str(), boot.base_port + dest as u16);
            let stream = loop {
                match TcpStream::connect(addr) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() < deadline => {
                        debug!("rank {rank}: waiting for rank {dest}: {e}");
                        thread::sleep(Duration::from_millis(20));
                    }
                    Err(e) => return Err(io_err(rank, &format!("connect to rank {dest}"), e)),
                }
            };
            stream.set_nodelay(true).map_err(|e| io_err(rank, "nodelay", e))?;
            let mut w = BufWriter::new(stream);
            w.write_all(&(rank as u64).to_le_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| io_err(rank, "hello", e))?;
            writers.push(Some(Mutex::new(w)));
        }
        Ok(TcpTransport {
            rank,
            size: boot.size,
            writers,
            inbox,
            timeout: boot.timeout,
        })
    }

    fn recv_blocking(&self, src: usize, tag: u64) -> Result<Vec<Complex64>> {
        let (lock, cv) = &*self.inbox;
        let deadline = Instant::now() + self.timeout;
        let mut inbox = lock.lock().unwrap();
        loop {
            if let Some(m) = inbox.queues.get_mut(&(src, tag)).and_then(VecDeque::pop_front) {
                return Ok(m);
            }
            if let Some(f) = &inbox.failure {
                return Err(PintError::Transport {
                    rank: self.rank,
                    detail: f.clone(),
                });
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(PintError::Transport {
                    rank: self.rank,
                    detail: format!("timed out waiting for rank {src}, tag {tag:#x}"),
                });
            }
            inbox = cv.wait_timeout(inbox, deadline - now).unwrap().0;
        }
    }
}

impl Transport for TcpTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&self, dest: usize, tag: u64, payload: &[Complex64]) -> Result<()> {
        if dest == self.rank {
            let (lock, cv) = &*self.inbox;
            lock.lock()
                .unwrap()
                .queues
                .entry((dest, tag))
                .or_default()
                .push_back(payload.to_vec());
            cv.notify_all();
            return Ok(());
        }
        let writer = self
            .writers
            .get(dest)
            .and_then(Option::as_ref)
            .ok_or_else(|| PintError::Transport {
                rank: self.rank,
                detail: format!("no connection to rank {dest}"),
            })?;
        let mut buf = Vec::with_capacity(16 + 16 * payload.len());
        buf.extend_from_slice(&tag.to_le_bytes());
        buf.extend_from_slice(&(16 * payload.len() as u64).to_le_bytes());
        for v in payload {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        let mut w = writer.lock().unwrap();
        w.write_all(&buf)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(self.rank, &format!("send to rank {dest}"), e))
    }

    async fn recv(&self, src: usize, tag: u64) -> Result<Vec<Complex64>> {
        self.recv_blocking(src, tag)
    }
}
