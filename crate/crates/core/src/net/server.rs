//! Replicated servers behind an in-process or loopback TCP transport. Both
//! transports carry the same encoded frames.

use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};

use super::wire::{Kind, WireMessage};
use crate::algebra::{Field, FieldElement};
use crate::error::{params, Error, Result};
use crate::plan::answer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Inproc,
    Tcp,
}

impl std::fmt::Display for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Transport::Inproc => "inproc",
            Transport::Tcp => "tcp",
        })
    }
}

/// One replica: all `K2` messages of length `L`, concatenated.
#[derive(Debug)]
pub struct Replica {
    id: usize,
    field: Field,
    k_count: usize,
    l: usize,
    store: Arc<Vec<FieldElement>>,
}

impl Replica {
    /// Answers one encoded QUERY frame with an encoded ANSWER frame.
    pub fn handle(&self, frame: &[u8]) -> Result<Vec<u8>> {
        let msg = WireMessage::decode(frame)?;
        if msg.kind != Kind::Query {
            return Err(Error::Protocol("server received a non-query frame".into()));
        }
        if msg.server != self.id as u64 {
            return Err(Error::Protocol(format!("query for server {} reached server {}", msg.server, self.id)));
        }
        if msg.k_count != self.k_count as u64 || msg.l != self.l as u64 || msg.q != self.field.q() {
            return Err(Error::Protocol(format!(
                "query expects K={}, L={}, q={}; server holds K={}, L={}, q={}",
                msg.k_count,
                msg.l,
                msg.q,
                self.k_count,
                self.l,
                self.field.q()
            )));
        }
        if msg.cols != (self.k_count * self.l) as u64 {
            return Err(Error::Protocol(format!("query has {} columns, expected {}", msg.cols, self.k_count * self.l)));
        }
        if msg.payload.iter().any(|&v| v >= self.field.q()) {
            return Err(Error::Protocol("query symbol outside the field".into()));
        }
        let a = answer(self.id, &msg.matrix()?, &self.field, &self.store)?;
        Ok(WireMessage::answer(self.id, self.k_count, self.l, self.field.q(), a.symbols).encode())
    }
}

type Job = (Vec<u8>, Sender<Result<Vec<u8>>>);

enum Endpoint {
    Inproc(Sender<Job>),
    Tcp(SocketAddr),
}

/// Running servers; stopped on drop.
pub struct Cluster {
    transport: Transport,
    endpoints: Vec<Endpoint>,
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
}

/// Starts `n` servers, each holding a full copy of `messages`. With TCP,
/// server `i` listens on `127.0.0.1:port_base + i`, or on an ephemeral port
/// when `port_base` is 0.
pub fn serve(
    n: usize,
    messages: &[Vec<FieldElement>],
    field: Field,
    transport: Transport,
    port_base: u16,
) -> Result<Cluster> {
    let l = messages.first().map_or(0, Vec::len);
    if messages.is_empty() || messages.iter().any(|m| m.len() != l) {
        return params("servers need at least one message and equal lengths");
    }
    if messages.iter().flatten().any(|&v| v >= field.q()) {
        return params("stored symbol outside the field");
    }
    let store = Arc::new(messages.concat());
    let stop = Arc::new(AtomicBool::new(false));
    let mut cluster = Cluster { transport, endpoints: Vec::new(), stop: stop.clone(), handles: Vec::new() };
    for id in 0..n {
        let replica = Replica { id, field, k_count: messages.len(), l, store: store.clone() };
        match transport {
            Transport::Inproc => {
                let (tx, rx) = mpsc::channel::<Job>();
                cluster.handles.push(thread::spawn(move || run_inproc(replica, rx)));
                cluster.endpoints.push(Endpoint::Inproc(tx));
            }
            Transport::Tcp => {
                let port = if port_base == 0 {
                    0
                } else {
                    port_base.checked_add(id as u16).ok_or_else(|| Error::Params("port range overflows".into()))?
                };
                let listener = TcpListener::bind(("127.0.0.1", port))?;
                cluster.endpoints.push(Endpoint::Tcp(listener.local_addr()?));
                let stop = stop.clone();
                cluster.handles.push(thread::spawn(move || run_tcp(replica, listener, stop)));
            }
        }
    }
    Ok(cluster)
}

fn run_inproc(replica: Replica, rx: Receiver<Job>) {
    for (frame, reply) in rx {
        let _ = reply.send(replica.handle(&frame));
    }
}

fn run_tcp(replica: Replica, listener: TcpListener, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = conn else { continue };
        // A rejected query closes the connection; the client reports it.
        let _ = serve_connection(&replica, stream);
    }
}

fn serve_connection(replica: &Replica, stream: TcpStream) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = WireMessage::read_from(&mut reader)? {
        let out = replica.handle(&frame)?;
        writer.write_all(&out)?;
        writer.flush()?;
    }
    Ok(())
}

impl Cluster {
    pub fn transport(&self) -> Transport {
        self.transport
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    /// TCP addresses, empty for in-process servers.
    pub fn addresses(&self) -> Vec<SocketAddr> {
        self.endpoints
            .iter()
            .filter_map(|e| match e {
                Endpoint::Tcp(a) => Some(*a),
                Endpoint::Inproc(_) => None,
            })
            .collect()
    }

    /// Sends one encoded frame to `server` and returns the encoded reply.
    pub fn exchange(&self, server: usize, frame: &[u8]) -> Result<Vec<u8>> {
        let ep = self.endpoints.get(server).ok_or_else(|| Error::Params(format!("no server {server}")))?;
        match ep {
            Endpoint::Inproc(tx) => {
                let (rtx, rrx) = mpsc::channel();
                tx.send((frame.to_vec(), rtx)).map_err(|_| Error::Protocol(format!("server {server} is down")))?;
                rrx.recv().map_err(|_| Error::Protocol(format!("server {server} dropped the query")))?
            }
            Endpoint::Tcp(addr) => {
                let mut stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true)?;
                        stream.write_all(frame)?;
                stream.flush()?;
                let reply = WireMessage::read_from(&mut stream)?;
                let _ = stream.shutdown(Shutdown::Both);
                reply.ok_or_else(|| Error::Protocol(format!("server {server} closed the connection without answering")))
            }
        }
    }

    /// Sends every frame concurrently, `frames[i]` to server `i`, and waits for all replies.
    pub fn exchange_all(&self, frames: &[Vec<u8>]) -> Vec<Result<Vec<u8>>> {
        thread::scope(|s| {
            let pending: Vec<_> = frames.iter().enumerate().map(|(i, f)| s.spawn(move || self.exchange(i, f))).collect();
            pending
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Internal("client thread panicked".into()))))
                .collect()
        })
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let addrs = self.addresses();
        // Closing the channels ends the in-process loops; a dummy connection
        // wakes each TCP accept loop so it sees the flag.
        self.endpoints.clear();
        for a in addrs {
            let _ = TcpStream::connect(a);
        }
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
