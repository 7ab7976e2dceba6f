//! Protocol data model: transaction records, their per-cycle bus-word
//! decomposition (packets and cells), packet length rules, and the size /
//! type conversion semantics shared by the engines and the verification
//! components.

mod cells;
mod convert;

pub use cells::{
    build_request_cells, build_response_cells, cells_per_packet, lane_for_byte, rebuild_payload,
    rebuild_payload_lenient,
};
pub use convert::{convert_type, size_convert, ConversionFlags, TxnEvent};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Supported bus widths in bits.
pub const WIDTHS: [u32; 6] = [8, 16, 32, 64, 128, 256];
/// Supported transfer sizes in bytes.
pub const SIZES: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];
/// Largest transfer size in bytes.
pub const MAX_SIZE_BYTES: u32 = 64;
/// Widest supported bus in bytes; sizes fixed-size lane buffers.
pub const MAX_LANES: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unsupported bus width {0} bits")]
    UnsupportedWidth(u32),
    #[error("size {size} bytes exceeds the {width}-bit bus under the handshake protocol")]
    T1SizeExceedsBus { size: u32, width: u32 },
    #[error("swap of {size} bytes exceeds the {width}-bit bus (single-cell atomic)")]
    SwapExceedsBus { size: u32, width: u32 },
    #[error("address {addr:#010x} is not aligned to {size} bytes")]
    MisalignedAddress { addr: u32, size: u32 },
    #[error("cell sequence does not form a complete packet (missing eop)")]
    IncompletePacket,
    #[error("cells of one packet carry differing meta")]
    MixedMeta,
}

/// The three protocol types.
///
/// T1 is a plain synchronous handshake: one outstanding transaction per
/// initiator, single-cell packets only. T2 adds split transactions,
/// pipelining and chunks but keeps responses in request order. T3 adds
/// out-of-order responses (matched by src/tid) and asymmetric request /
/// response packet lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolType {
    T1,
    T2,
    T3,
}

impl ProtocolType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolType::T1 => "T1",
            ProtocolType::T2 => "T2",
            ProtocolType::T3 => "T3",
        }
    }
}

/// Packet direction on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Req,
    Rsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Load,
    Store,
    Swap,
}

impl OpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpKind::Load => "LOAD",
            OpKind::Store => "STORE",
            OpKind::Swap => "SWAP",
        }
    }
}

/// An operation: kind plus its power-of-two transfer size (1..=64 bytes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Opcode {
    pub kind: OpKind,
    pub size_bytes: u32,
}

impl Opcode {
    pub fn new(kind: OpKind, size_bytes: u32) -> Self {
        debug_assert!(SIZES.contains(&size_bytes));
        Self { kind, size_bytes }
    }

    /// 8-bit wire encoding: kind in the high nibble, log2(size) in the low.
    pub fn encode(&self) -> u8 {
        let kind = match self.kind {
            OpKind::Load => 0u8,
            OpKind::Store => 1,
            OpKind::Swap => 2,
        };
        (kind << 4) | (self.size_bytes.trailing_zeros() as u8)
    }

    /// Decodes an 8-bit opc field; `None` for patterns outside the table.
    pub fn decode(raw: u8) -> Option<Self> {
        let kind = match raw >> 4 {
            0 => OpKind::Load,
            1 => OpKind::Store,
            2 => OpKind::Swap,
            _ => return None,
        };
        let log2 = raw & 0x0F;
        if log2 > 6 {
            return None;
        }
        Some(Self { kind, size_bytes: 1 << log2 })
    }
}

/// Byte ordering on the bus lanes. LITTLE places the byte at the lowest
/// address in lane 0 of its bus word; BIG mirrors the lanes within the word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endianness {
    Little,
    Big,
}

/// One transaction request as issued by an initiator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Request {
    pub src: u8,
    pub tid: u8,
    pub opcode: Opcode,
    pub addr: u32,
    /// Payload for STORE/SWAP (length = size_bytes); empty for LOAD.
    pub data: Vec<u8>,
    pub chunk_id: Option<u32>,
    pub issue_cycle: u64,
}

impl Request {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !self.addr.is_multiple_of(self.opcode.size_bytes) {
            return Err(ProtocolError::MisalignedAddress {
                addr: self.addr,
                size: self.opcode.size_bytes,
            });
        }
        let want = match self.opcode.kind {
            OpKind::Load => 0,
            _ => self.opcode.size_bytes as usize,
        };
        if self.data.len() != want {
            return Err(ProtocolError::MixedMeta);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RspStatus {
    Ok,
    Err,
}

/// One transaction response as delivered to an initiator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Response {
    pub src: u8,
    pub tid: u8,
    pub status: RspStatus,
    /// LOAD/SWAP: size_bytes of data; STORE and ERR: empty.
    pub data: Vec<u8>,
}

/// A group of requests from one initiator transferred without interruption:
/// the node keeps the target allocated to the group until its final packet.
/// All request cells of non-final members carry lck.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub chunk_id: u32,
    pub requests: Vec<Request>,
}

impl Chunk {
    /// Groups consecutive same-id requests of one initiator's issue stream.
    pub fn group(requests: &[Request]) -> Vec<Chunk> {
        let mut out: Vec<Chunk> = Vec::new();
        for req in requests {
            let Some(id) = req.chunk_id else { continue };
            match out.last_mut() {
                Some(chunk) if chunk.chunk_id == id && chunk.requests[0].src == req.src => {
                    chunk.requests.push(req.clone());
                }
                _ => out.push(Chunk { chunk_id: id, requests: vec![req.clone()] }),
            }
        }
        out
    }

    /// Members must share their source and resolve to one target region.
    pub fn validate(&self, resolve: impl Fn(&Request) -> Option<usize>) -> Result<(), ProtocolError> {
        let src = self.requests[0].src;
        let dest = resolve(&self.requests[0]);
        for req in &self.requests {
            if req.src != src || resolve(req) != dest {
                return Err(ProtocolError::MixedMeta);
            }
        }
        Ok(())
    }
}

/// Per-cell meta carried on the request channel; stable across all cells of
/// one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellMeta {
    pub src: u8,
    pub tid: u8,
    pub opcode: Opcode,
    pub addr: u32,
}

/// One bus-word beat of a packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    /// Lane bytes; length = width_bits / 8.
    pub payload: Vec<u8>,
    /// Bit i set = lane i carries a valid byte.
    pub byte_enables: u32,
    pub eop: bool,
    pub lck: bool,
    pub meta: CellMeta,
}

impl Cell {
    pub fn lanes(&self) -> usize {
        self.payload.len()
    }
}

/// Lane count for a bus width; errors on unsupported widths.
pub fn lanes_for_width(width_bits: u32) -> Result<usize, ProtocolError> {
    if WIDTHS.contains(&width_bits) {
        Ok((width_bits / 8) as usize)
    } else {
        Err(ProtocolError::UnsupportedWidth(width_bits))
    }
}

/// Opcode kinds legal under a protocol type and width; the handshake type is
/// restricted to single-cell LOAD/STORE.
pub fn legal_kinds(ty: ProtocolType) -> &'static [OpKind] {
    match ty {
        ProtocolType::T1 => &[OpKind::Load, OpKind::Store],
        _ => &[OpKind::Load, OpKind::Store, OpKind::Swap],
    }
}

/// Sizes legal for `kind` under (type, width).
pub fn legal_sizes(ty: ProtocolType, width_bits: u32, kind: OpKind) -> Vec<u32> {
    let lane_bytes = width_bits / 8;
    SIZES
        .iter()
        .copied()
        .filter(|&s| match (ty, kind) {
            (ProtocolType::T1, _) => s <= lane_bytes,
            (_, OpKind::Swap) => s <= lane_bytes,
            _ => true,
        })
        .collect()
}
