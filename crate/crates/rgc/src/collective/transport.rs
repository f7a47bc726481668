//! Point-to-point transport beneath the collectives.
//!
//! Two backends satisfy the same contract — reliable, ordered, exactly-once
//! delivery per rank pair:
//!
//! * in-process queues between threads (default for tests and the threads
//!   topology; deterministic and fast);
//! * length-prefixed TCP streams between OS processes (validates the wire
//!   format end to end). Frames are `[len: u32 LE][payload]`.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out after {timeout:?} waiting for rank {peer}")]
    Timeout { peer: usize, timeout: Duration },
    #[error("rank {peer} disconnected")]
    Disconnected { peer: usize },
    #[error("invalid peer {peer} for rank {rank} (world size {world})")]
    InvalidPeer {
        rank: usize,
        peer: usize,
        world: usize,
    },
    #[error("socket rendezvous failed: {0}")]
    Rendezvous(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Blocking, rank-addressed message passing.
pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn world_size(&self) -> usize;
    fn send(&mut self, peer: usize, bytes: &[u8]) -> Result<(), TransportError>;
    fn recv(&mut self, peer: usize) -> Result<Vec<u8>, TransportError>;
}

// ---------------------------------------------------------------------------
// In-process backend
// ---------------------------------------------------------------------------

/// One endpoint of a fully-connected in-process mesh.
pub struct InProcTransport {
    rank: usize,
    world: usize,
    timeout: Duration,
    senders: Vec<Option<Sender<Vec<u8>>>>,
    receivers: Vec<Option<Receiver<Vec<u8>>>>,
}

impl InProcTransport {
    /// Builds a mesh of `world` endpoints connected by unbounded queues.
    pub fn mesh(world: usize, timeout: Duration) -> Vec<InProcTransport> {
        let mut endpoints: Vec<InProcTransport> = (0..world)
            .map(|rank| InProcTransport {
                rank,
                world,
                timeout,
                senders: (0..world).map(|_| None).collect(),
                receivers: (0..world).map(|_| None).collect(),
            })
            .collect();
        for from in 0..world {
            for to in 0..world {
                if from == to {
                    continue;
                }
                let (tx, rx) = std::sync::mpsc::channel();
                endpoints[from].senders[to] = Some(tx);
                endpoints[to].receivers[from] = Some(rx);
            }
        }
        endpoints
    }

    fn check_peer(&self, peer: usize) -> Result<(), TransportError> {
        if peer == self.rank || peer >= self.world {
            return Err(TransportError::InvalidPeer {
                rank: self.rank,
                peer,
                world: self.world,
            });
        }
        Ok(())
    }
}

impl Transport for InProcTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.world
    }

    fn send(&mut self, peer: usize, bytes: &[u8]) -> Result<(), TransportError> {
        self.check_peer(peer)?;
        self.senders[peer]
            .as_ref()
            .expect("mesh is fully connected")
            .send(bytes.to_vec())
            .map_err(|_| TransportError::Disconnected { peer })
    }

    fn recv(&mut self, peer: usize) -> Result<Vec<u8>, TransportError> {
        self.check_peer(peer)?;
        self.receivers[peer]
            .as_ref()
            .expect("mesh is fully connected")
            .recv_timeout(self.timeout)
            .map_err(|e| match e {
                RecvTimeoutError::Timeout => TransportError::Timeout {
                    peer,
                    timeout: self.timeout,
                },
                RecvTimeoutError::Disconnected => TransportError::Disconnected { peer },
            })
    }
}

// ---------------------------------------------------------------------------
// Socket backend
// ---------------------------------------------------------------------------

/// One endpoint of a fully-connected TCP mesh. Rank `i` listens on the
/// `i`-th address; each rank dials every lower rank and accepts from every
/// higher rank, identified by a 4-byte rank hello.
pub struct SocketTransport {
    rank: usize,
    world: usize,
    timeout: Duration,
    streams: Vec<Option<TcpStream>>,
}

impl SocketTransport {
    /// Binds the listener for `rank` and completes the mesh rendezvous.
    pub fn connect(
        rank: usize,
        addrs: &[SocketAddr],
        timeout: Duration,
    ) -> Result<SocketTransport, TransportError> {
        let listener = TcpListener::bind(addrs[rank])?;
        Self::connect_with_listener(rank, addrs, listener, timeout)
    }

    /// Rendezvous with a pre-bound listener (lets tests use OS-assigned
    /// ports without a rebind race).
    pub fn connect_with_listener(
        rank: usize,
        addrs: &[SocketAddr],
        listener: TcpListener,
        timeout: Duration,
    ) -> Result<SocketTransport, TransportError> {
        let world = addrs.len();
        if rank >= world {
            return Err(TransportError::Rendezvous(format!(
                "rank {rank} out of range for {world} addresses"
            )));
        }
        let mut streams: Vec<Option<TcpStream>> = (0..world).map(|_| None).collect();
        let deadline = Instant::now() + timeout;

        // Dial every lower rank; their listeners accept the backlog even
        // before they reach their own accept loops, so this cannot deadlock.
        for peer in 0..rank {
            let stream = dial_until(addrs[peer], deadline)?;
            configure(&stream, timeout)?;
            let mut s = stream;
            s.write_all(&(rank as u32).to_le_bytes())?;
            streams[peer] = Some(s);
        }

        // Accept one connection from every higher rank.
        for _ in rank + 1..world {
            let (mut stream, _) = listener.accept()?;
            configure(&stream, timeout)?;
            let mut hello = [0u8; 4];
            stream.read_exact(&mut hello)?;
            let peer = u32::from_le_bytes(hello) as usize;
            if peer <= rank || peer >= world || streams[peer].is_some() {
                return Err(TransportError::Rendezvous(format!(
                    "unexpected hello from rank {peer}"
                )));
            }
            streams[peer] = Some(stream);
        }

        Ok(SocketTransport {
            rank,
            world,
            timeout,
            streams,
        })
    }

    fn stream_mut(&mut self, peer: usize) -> Result<&mut TcpStream, TransportError> {
        if peer == self.rank || peer >= self.world {
            return Err(TransportError::InvalidPeer {
                rank: self.rank,
                peer,
                world: self.world,
            });
        }
        Ok(self.streams[peer]
            .as_mut()
            .expect("mesh is fully connected"))
    }
}

fn configure(stream: &TcpStream, timeout: Duration) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))
}

fn dial_until(addr: SocketAddr, deadline: Instant) -> Result<TcpStream, TransportError> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Rendezvous(format!(
                        "could not reach {addr}: {e}"
                    )));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

impl Transport for SocketTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.world
    }

    fn send(&mut self, peer: usize, bytes: &[u8]) -> Result<(), TransportError> {
        let stream = self.stream_mut(peer)?;
        stream.write_all(&(bytes.len() as u32).to_le_bytes())?;
        stream.write_all(bytes)?;
        stream.flush()?;
        Ok(())
    }

    fn recv(&mut self, peer: usize) -> Result<Vec<u8>, TransportError> {
        let timeout = self.timeout;
        let stream = self.stream_mut(peer)?;
        let mut len_buf = [0u8; 4];
        read_exact_mapped(stream, &mut len_buf, peer, timeout)?;
        let len = u32::from_le_bytes(len_buf) as usize;
        let mut payload = vec![0u8; len];
        read_exact_mapped(stream, &mut payload, peer, timeout)?;
        Ok(payload)
    }
}

fn read_exact_mapped(
    stream: &mut TcpStream,
    buf: &mut [u8],
    peer: usize,
    timeout: Duration,
) -> Result<(), TransportError> {
    stream.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            TransportError::Timeout { peer, timeout }
        }
        std::io::ErrorKind::UnexpectedEof => TransportError::Disconnected { peer },
        _ => TransportError::Io(e),
    })
}
