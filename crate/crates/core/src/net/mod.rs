//! Multi-server retrieval: replicated stores, framed queries and answers,
//! and the download accounting behind the rate.

pub mod server;
pub mod wire;

use std::time::Instant;

use num::BigRational;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{random_vector, Field, FieldElement, SeededRng};
use crate::capacity::{ratio_str, SystemParams};
use crate::error::{Error, Result};
use crate::ns_engine::BuildOptions;
use crate::plan::{build_plan, AnswerVector, QueryPlan, Scheme};

pub use server::{serve, Cluster, Replica, Transport};
pub use wire::{Kind, WireMessage};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "PIR_SEED";

/// `PIR_SEED` if set, else 42.
pub fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Params(format!("{SEED_ENV}={v:?} is not a u64"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// The replicated store for a retrieval: `K2` messages of length `L`, drawn
/// from the seed on a stream separate from the query randomness.
pub fn store_messages(field: &Field, k2: usize, l: usize, seed: u64) -> Vec<Vec<FieldElement>> {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..k2).map(|_| random_vector(field, l, &mut rng)).collect()
}

pub fn symbols_digest(symbols: &[FieldElement]) -> String {
    let mut h = Sha256::new();
    for s in symbols {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerTraffic {
    pub server: usize,
    pub upload_bytes: usize,
    pub upload_symbols: usize,
    pub download_bytes: usize,
    pub download_symbols: usize,
    pub query_sha256: String,
    pub answer_sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetrievalTranscript {
    pub params: SystemParams,
    pub scheme: Scheme,
    pub k_star: usize,
    pub seed: u64,
    pub transport: Transport,
    pub message_len: usize,
    pub modulus: u64,
    pub reduction: u64,
    pub servers: Vec<ServerTraffic>,
    /// Total downloaded symbols, the denominator of the rate.
    pub download_total: usize,
    pub upload_total: usize,
    #[serde(with = "ratio_str")]
    pub rate: BigRational,
    pub recovered_sha256: String,
    pub recovered_ok: bool,
    pub wall_time_ms: f64,
    /// Raw ANSWER frames in server order.
    #[serde(skip)]
    pub answer_frames: Vec<Vec<u8>>,
}

impl RetrievalTranscript {
    /// Downloaded symbols per message symbol.
    pub fn cost(&self) -> BigRational {
        BigRational::new(self.download_total.into(), self.message_len.into())
    }

    /// Equal in everything but transport and timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.params == other.params
            && self.scheme == other.scheme
            && self.k_star == other.k_star
            && self.seed == other.seed
            && self.message_len == other.message_len
            && self.modulus == other.modulus
            && self.servers == other.servers
            && self.download_total == other.download_total
            && self.recovered_sha256 == other.recovered_sha256
            && self.recovered_ok == other.recovered_ok
            && self.answer_frames == other.answer_frames
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {} k*={} seed={} via {}: downloaded {} symbols, rate {}, recovery {} (L={}, q={})",
            self.scheme,
            self.params,
            self.k_star,
            self.seed,
            self.transport,
            self.download_total,
            ratio_str::to_string(&self.rate),
            if self.recovered_ok { "OK" } else { "FAILED" },
            self.message_len,
            self.modulus
        )
    }
}

#[derive(Clone, Debug)]
pub struct RetrievalRequest {
    pub params: SystemParams,
    pub scheme: Scheme,
    pub k_star: usize,
    pub seed: u64,
    pub transport: Transport,
    pub port_base: u16,
    pub options: BuildOptions,
}

impl RetrievalRequest {
    pub fn new(params: SystemParams, scheme: Scheme, k_star: usize, seed: u64, transport: Transport) -> Self {
        RetrievalRequest { params, scheme, k_star, seed, transport, port_base: 0, options: BuildOptions::default() }
    }
}

/// Builds the plan, stands up servers over a seeded store, runs one
/// query/answer round and decodes. Fails unless the message comes back exactly.
pub fn retrieve(req: &RetrievalRequest) -> Result<RetrievalTranscript> {
    let plan = build_plan(&req.params, req.scheme, req.k_star, req.seed, &req.options)?;
    let messages = store_messages(plan.field(), req.params.k2, plan.message_len(), req.seed);
    let cluster = serve(req.params.n, &messages, *plan.field(), req.transport, req.port_base)?;
    let t = run(&plan, &cluster, &messages, req.seed)?;
    if !t.recovered_ok {
        return Err(Error::Retrieval(format!(
            "decoded message differs from the stored W_{} ({})",
            req.k_star,
            t.summary()
        )));
    }
    Ok(t)
}

/// One round of `plan` against running servers that hold `messages`.
/// Reports a wrong decode through `recovered_ok` rather than an error.
pub fn run(plan: &QueryPlan, cluster: &Cluster, messages: &[Vec<FieldElement>], seed: u64) -> Result<RetrievalTranscript> {
    let start = Instant::now();
    let p = *plan.params();
    let (l, q) = (plan.message_len(), plan.field().q());
    let queries: Vec<Vec<u8>> =
        (0..p.n).map(|s| WireMessage::query(s, p.k2, l, q, plan.query(s)).encode()).collect();
    let replies = cluster.exchange_all(&queries);
    let mut answers = Vec::with_capacity(p.n);
    let mut frames = Vec::with_capacity(p.n);
    let mut traffic = Vec::with_capacity(p.n);
    for (s, reply) in replies.into_iter().enumerate() {
        let frame = reply?;
        let msg = WireMessage::decode(&frame)?;
        if msg.kind != Kind::Answer || msg.server != s as u64 || msg.cols != 1 {
            return Err(Error::Protocol(format!("server {s} sent a malformed answer")));
        }
        if msg.k_count != p.k2 as u64 || msg.l != l as u64 || msg.q != q {
            return Err(Error::Protocol(format!("server {s} answered for a different store")));
        }
        if msg.rows as usize != plan.rows(s) {
            return Err(Error::Protocol(format!("server {s} sent {} symbols, expected {}", msg.rows, plan.rows(s))));
        }
        traffic.push(ServerTraffic {
            server: s,
            upload_bytes: queries[s].len(),
            upload_symbols: plan.query(s).data().len(),
            download_bytes: frame.len(),
            download_symbols: msg.payload.len(),
            query_sha256: hex::encode(Sha256::digest(&queries[s])),
            answer_sha256: hex::encode(Sha256::digest(&frame)),
        });
        answers.push(AnswerVector { server: s, symbols: msg.payload });
        frames.push(frame);
    }
    let recovered = plan.decode(&answers)?;
    let download_total: usize = traffic.iter().map(|t| t.download_symbols).sum();
    if download_total != plan.download_total() {
        return Err(Error::Internal("download accounting disagrees with the plan".into()));
    }
    let expected = messages
        .get(plan.k_star() - 1)
        .ok_or_else(|| Error::Params("store lacks the requested message".into()))?;
    Ok(RetrievalTranscript {
        params: p,
        scheme: plan.scheme(),
        k_star: plan.k_star(),
        seed,
        transport: cluster.transport(),
        message_len: l,
        modulus: q,
        reduction: plan.reduction(),
        upload_total: traffic.iter().map(|t| t.upload_symbols).sum(),
        servers: traffic,
        download_total,
        rate: BigRational::new(l.into(), download_total.into()),
        recovered_sha256: symbols_digest(&recovered),
        recovered_ok: &recovered == expected,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        answer_frames: frames,
    })
}
