//! Frame layout: nine little-endian u64 header fields, then `rows * cols`
//! little-endian u64 symbols, row-major.

use std::io::{Read, Write};

use crate::algebra::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"PIR2LVL\0";
pub const VERSION: u64 = 1;
pub const HEADER_LEN: usize = 72;
/// Upper bound on symbols per frame, so a bad header cannot force a huge allocation.
pub const MAX_SYMBOLS: u64 = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Query = 1,
    Answer = 2,
}

impl Kind {
    fn from_u64(v: u64) -> Result<Self> {
        match v {
            1 => Ok(Kind::Query),
            2 => Ok(Kind::Answer),
            _ => Err(Error::Protocol(format!("unknown frame kind {v}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: Kind,
    pub server: u64,
    pub k_count: u64,
    pub l: u64,
    pub q: u64,
    pub rows: u64,
    pub cols: u64,
    pub payload: Vec<u64>,
}

impl WireMessage {
    pub fn query(server: usize, k_count: usize, l: usize, q: u64, m: &Matrix) -> Self {
        WireMessage {
            kind: Kind::Query,
            server: server as u64,
            k_count: k_count as u64,
            l: l as u64,
            q,
            rows: m.rows() as u64,
            cols: m.cols() as u64,
            payload: m.data().to_vec(),
        }
    }

    pub fn answer(server: usize, k_count: usize, l: usize, q: u64, symbols: Vec<u64>) -> Self {
        WireMessage {
            kind: Kind::Answer,
            server: server as u64,
            k_count: k_count as u64,
            l: l as u64,
            q,
            rows: symbols.len() as u64,
            cols: 1,
            payload: symbols,
        }
    }

    pub fn matrix(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows as usize, self.cols as usize, self.payload.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.payload.len());
        out.extend_from_slice(&MAGIC);
        for v in [VERSION, self.kind as u64, self.server, self.k_count, self.l, self.q, self.rows, self.cols] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Protocol(format!("frame of {} bytes is shorter than the header", bytes.len())));
        }
        let (header, body) = bytes.split_at(HEADER_LEN);
        let msg = Self::parse_header(header.try_into().expect("header length"))?;
        let expected = msg.rows as usize * msg.cols as usize * 8;
        if body.len() != expected {
            return Err(Error::Protocol(format!("payload of {} bytes, header announces {expected}", body.len())));
        }
        Ok(WireMessage { payload: le_words(body), ..msg })
    }

    fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Self> {
        if h[..8] != MAGIC {
            return Err(Error::Protocol("bad magic".into()));
        }
        let f: Vec<u64> = le_words(&h[8..]);
        if f[0] != VERSION {
            return Err(Error::Protocol(format!("unsupported version {}", f[0])));
        }
        let size = f[6].checked_mul(f[7]).filter(|&s| s <= MAX_SYMBOLS);
        if size.is_none() {
            return Err(Error::Protocol(format!("frame of {}x{} symbols is too large", f[6], f[7])));
        }
        Ok(WireMessage {
            kind: Kind::from_u64(f[1])?,
            server: f[2],
            k_count: f[3],
            l: f[4],
            q: f[5],
            rows: f[6],
            cols: f[7],
            payload: Vec::new(),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream before any byte.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            let n = r.read(&mut header[got..])?;
            if n == 0 {
                if got == 0 {
                    return Ok(None);
                }
                return Err(Error::Protocol("stream ended inside a header".into()));
            }
            got += n;
        }
        let msg = Self::parse_header(&header)?;
        let mut frame = header.to_vec();
        frame.resize(HEADER_LEN + msg.rows as usize * msg.cols as usize * 8, 0);
        r.read_exact(&mut frame[HEADER_LEN..])?;
        Ok(Some(frame))
    }
}

fn le_words(bytes: &[u8]) -> Vec<u64> {
    bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
}
