//! Client/server synchronization, communication triggers and message codecs.
//!
//! Messages have a canonical little-endian encoding: integers as `u64`,
//! reals as `f64`, fields in declaration order, symmetric matrices packed as
//! their row-major upper triangle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bandit::ClientState;
use crate::error::{Error, Result};
use crate::linalg::{DeltaStats, RidgeStats};

/// Server-side aggregated statistics, one per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    layers: Vec<RidgeStats>,
}

impl ServerState {
    pub fn new(layers: usize, dim: usize, lambda: f64) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("at least one layer required".into()));
        }
        Ok(Self {
            layers: vec![RidgeStats::with_lambda(dim, lambda)?; layers],
        })
    }

    pub fn layer(&self, s: usize) -> &RidgeStats {
        &self.layers[s]
    }

    pub fn layers(&self) -> usize {
        self.layers.len()
    }

    /// Applies uploads in order, as the server would on receipt.
    pub fn replay<I>(layers: usize, dim: usize, lambda: f64, uploads: I) -> Result<Self>
    where
        I: IntoIterator<Item = UploadMessage>,
    {
        let mut server = Self::new(layers, dim, lambda)?;
        for msg in uploads {
            let layer = msg.layer as usize;
            if layer >= layers {
                return Err(Error::LayerOutOfRange {
                    layer,
                    max: layers - 1,
                });
            }
            server.layers[layer].merge(&msg.delta)?;
        }
        Ok(server)
    }
}

/// A client's unsent delta for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadMessage {
    pub client_id: u64,
    pub layer: u64,
    pub delta: DeltaStats,
}

/// Aggregated server statistics sent back to participants.
#[derive(Debug, Clone, PartialEq)]
pub struct DownloadMessage {
    pub layer: u64,
    pub stats: RidgeStats,
}

/// One communication round: the layers exchanged and who took part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEvent {
    pub round: u64,
    pub layers: Vec<usize>,
    pub clients: Vec<usize>,
    /// Reals moved in both directions (`d(d+1)/2 + d` per layer per direction).
    pub payload_reals: u64,
}

/// Every communication round of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLog {
    pub events: Vec<CommEvent>,
}

impl CommLog {
    /// Number of sync batches.
    pub fn batches(&self) -> usize {
        self.events.len()
    }

    /// Number of per-client upload/download exchanges.
    pub fn exchanges(&self) -> usize {
        self.events.iter().map(|e| e.clients.len()).sum()
    }
}

pub fn payload_reals(dim: usize, layers: usize, clients: usize) -> u64 {
    let per_direction = dim * (dim + 1) / 2 + dim;
    (2 * per_direction * layers * clients) as u64
}

/// Fires when `det(A + ΔA)/det(A) > 1 + C`.
pub fn async_trigger(synced: &RidgeStats, pending: &DeltaStats, c: f64) -> Result<bool> {
    let ratio = synced.log_det_ratio(pending)?;
    Ok(ratio > c.ln_1p())
}

/// Fires when `(t − t_last)·ln(det(A + ΔA)/det(A)) > D`.
pub fn sync_trigger(
    synced: &RidgeStats,
    pending: &DeltaStats,
    t: u64,
    t_last: u64,
    d: f64,
) -> Result<bool> {
    if t < t_last {
        return Err(Error::InvalidArgument(format!(
            "round {t} precedes last sync {t_last}"
        )));
    }
    let ratio = synced.log_det_ratio(pending)?;
    Ok((t - t_last) as f64 * ratio > d)
}

/// Synchronizes layer `s` between the server and `participants`.
///
/// Deltas are added to the server one participant at a time, in order, then
/// the server statistics are refactorized once and installed on every
/// participant.
pub fn sync_layer(
    server: &mut ServerState,
    participants: &mut [&mut ClientState],
    s: usize,
) -> Result<(Vec<UploadMessage>, DownloadMessage)> {
    if s >= server.layers() {
        return Err(Error::LayerOutOfRange {
            layer: s,
            max: server.layers() - 1,
        });
    }
    let mut uploads = Vec::with_capacity(participants.len());
    for client in participants.iter() {
        if client.layers() != server.layers() {
            return Err(Error::InvalidArgument(format!(
                "client {} has {} layers, server has {}",
                client.id,
                client.layers(),
                server.layers()
            )));
        }
        server.layers[s].add_delta(client.pending(s))?;
        uploads.push(UploadMessage {
            client_id: client.id as u64,
            layer: s as u64,
            delta: client.pending(s).clone(),
        });
    }
    server.layers[s].refactor()?;
    for client in participants.iter_mut() {
        client.install(s, server.layers[s].clone());
    }
    let download = DownloadMessage {
        layer: s as u64,
        stats: server.layers[s].clone(),
    };
    Ok((uploads, download))
}

/// Syncs several layers with the same participants as one communication round.
pub fn sync_round(
    server: &mut ServerState,
    participants: &mut [&mut ClientState],
    layers: &[usize],
    round: u64,
    mut capture: Option<&mut Vec<UploadMessage>>,
) -> Result<CommEvent> {
    for &s in layers {
        let (uploads, _) = sync_layer(server, participants, s)?;
        if let Some(buf) = capture.as_deref_mut() {
            buf.extend(uploads);
        }
    }
    let dim = server.layer(0).dim();
    Ok(CommEvent {
        round,
        layers: layers.to_vec(),
        clients: participants.iter().map(|c| c.id).collect(),
        payload_reals: payload_reals(dim, layers.len(), participants.len()),
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn upper(&mut self, m: &DMatrix<f64>) {
        let d = m.nrows();
        for i in 0..d {
            for j in i..d {
                self.f64(m[(i, j)]);
            }
        }
    }

    fn vector(&mut self, v: &DVector<f64>) {
        v.iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("8-byte slice"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take8()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }

    fn dim(&mut self) -> Result<usize> {
        let d = self.u64()? as usize;
        // a dimension larger than the remaining payload cannot be valid
        if d == 0 || d > self.buf.len() / 8 {
            return Err(Error::Decode(format!("implausible dimension {d}")));
        }
        Ok(d)
    }

    fn upper(&mut self, d: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.f64()?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    fn vector(&mut self, d: usize) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(d);
        for i in 0..d {
            v[i] = self.f64()?;
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

impl UploadMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.u64(self.client_id);
        w.u64(self.layer);
        w.u64(self.delta.dim() as u64);
        w.upper(self.delta.dgram());
        w.vector(self.delta.dmoment());
        w.u64(self.delta.num_updates());
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let client_id = r.u64()?;
        let layer = r.u64()?;
        let d = r.dim()?;
        let dgram = r.upper(d)?;
        let dmoment = r.vector(d)?;
        let num_updates = r.u64()?;
        r.finish()?;
        Ok(Self {
            client_id,
            layer,
            delta: DeltaStats::from_parts(dgram, dmoment, num_updates)?,
        })
    }
}

impl DownloadMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.u64(self.layer);
        w.u64(self.stats.dim() as u64);
        w.upper(self.stats.gram());
        w.vector(self.stats.moment());
        w.upper(self.stats.gram_inv());
        w.f64(self.stats.log_det());
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let layer = r.u64()?;
        let d = r.dim()?;
        let gram = r.upper(d)?;
        let moment = r.vector(d)?;
        let gram_inv = r.upper(d)?;
        let log_det = r.f64()?;
        r.finish()?;
        Ok(Self {
            layer,
            stats: RidgeStats::from_raw_parts(gram, moment, gram_inv, log_det),
        })
    }
}

/// Length-prefixed concatenation of encoded uploads.
pub fn encode_upload_log(msgs: &[UploadMessage]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in msgs {
        let bytes = m.encode();
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn decode_upload_log(mut buf: &[u8]) -> Result<Vec<UploadMessage>> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        if buf.len() < 8 {
            return Err(Error::Decode("truncated length prefix".into()));
        }
        let len = u64::from_le_bytes(buf[..8].try_into().expect("8 bytes")) as usize;
        let body = buf
            .get(8..8 + len)
            .ok_or_else(|| Error::Decode("truncated message".into()))?;
        out.push(UploadMessage::decode(body)?);
        buf = &buf[8 + len..];
    }
    Ok(out)
}
