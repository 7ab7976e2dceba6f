//! Packet length rules and cell (de)serialization.

use super::{
    lanes_for_width, CellMeta, Direction, Endianness, OpKind, Opcode, ProtocolError, ProtocolType,
    Request, RspStatus,
};
use super::Cell;

/// Number of cells of a packet for an opcode at a given width, protocol type
/// and direction.
///
/// T2 is symmetric: both directions take `max(1, size*8/width)` cells. T3 is
/// asymmetric: the direction that carries no data collapses to one cell
/// (LOAD requests, STORE responses). SWAP is single-cell both ways. T1 is
/// single-cell by construction and rejects sizes wider than the bus.
pub fn cells_per_packet(
    opcode: Opcode,
    width_bits: u32,
    ty: ProtocolType,
    dir: Direction,
) -> Result<u32, ProtocolError> {
    let lanes = lanes_for_width(width_bits)? as u32;
    let size = opcode.size_bytes;
    let span = size.div_ceil(lanes).max(1);
    if opcode.kind == OpKind::Swap && size > lanes {
        return Err(ProtocolError::SwapExceedsBus { size, width: width_bits });
    }
    match ty {
        ProtocolType::T1 => {
            if size > lanes {
                return Err(ProtocolError::T1SizeExceedsBus { size, width: width_bits });
            }
            Ok(1)
        }
        ProtocolType::T2 => Ok(span),
        ProtocolType::T3 => match (opcode.kind, dir) {
            (OpKind::Load, Direction::Req) => Ok(1),
            (OpKind::Load, Direction::Rsp) => Ok(span),
            (OpKind::Store, Direction::Req) => Ok(span),
            (OpKind::Store, Direction::Rsp) => Ok(1),
            (OpKind::Swap, _) => Ok(1),
        },
    }
}

/// Lane index for the byte at address `addr` on a bus with `lanes` lanes.
pub fn lane_for_byte(addr: u32, lanes: usize, endianness: Endianness) -> usize {
    let off = (addr as usize) % lanes;
    match endianness {
        Endianness::Little => off,
        Endianness::Big => lanes - 1 - off,
    }
}

/// The byte addresses covered by a packet, split into per-cell spans.
///
/// A sub-word packet (size < lane width) is a single cell covering only the
/// addressed lanes; otherwise the packet is `size / lanes` fully-enabled
/// cells over consecutive bus words.
fn cell_spans(addr: u32, size: u32, lanes: u32) -> Vec<(u32, u32)> {
    if size <= lanes {
        vec![(addr, size)]
    } else {
        (0..size / lanes).map(|k| (addr + k * lanes, lanes)).collect()
    }
}

fn pack_cell(
    span_addr: u32,
    span_len: u32,
    bytes: Option<&[u8]>,
    lanes: usize,
    endianness: Endianness,
    meta: CellMeta,
) -> Cell {
    let mut payload = vec![0u8; lanes];
    let mut be = 0u32;
    for j in 0..span_len {
        let lane = lane_for_byte(span_addr + j, lanes, endianness);
        be |= 1 << lane;
        if let Some(bytes) = bytes {
            payload[lane] = bytes[j as usize];
        }
    }
    Cell { payload, byte_enables: be, eop: false, lck: false, meta }
}

/// Serializes a request into its packet of cells at the given width.
pub fn build_request_cells(
    req: &Request,
    width_bits: u32,
    ty: ProtocolType,
    endianness: Endianness,
) -> Result<Vec<Cell>, ProtocolError> {
    let lanes = lanes_for_width(width_bits)?;
    let size = req.opcode.size_bytes;
    if !req.addr.is_multiple_of(size) {
        return Err(ProtocolError::MisalignedAddress { addr: req.addr, size });
    }
    let n = cells_per_packet(req.opcode, width_bits, ty, Direction::Req)? as usize;
    let meta = CellMeta { src: req.src, tid: req.tid, opcode: req.opcode, addr: req.addr };
    let carries_data = req.opcode.kind != OpKind::Load;

    let mut cells = Vec::with_capacity(n);
    if n == 1 && size > lanes as u32 {
        // T3 single-cell direction of a wide transfer: an address-only beat.
        let mut cell = pack_cell(req.addr, lanes as u32, None, lanes, endianness, meta);
        cell.byte_enables = if lanes == 32 { u32::MAX } else { (1u32 << lanes) - 1 };
        cells.push(cell);
    } else {
        for (k, (span_addr, span_len)) in cell_spans(req.addr, size, lanes as u32).iter().enumerate()
        {
            let bytes = carries_data
                .then(|| &req.data[k * lanes..k * lanes + *span_len as usize]);
            cells.push(pack_cell(*span_addr, *span_len, bytes, lanes, endianness, meta));
        }
    }
    cells.last_mut().expect("packet has >= 1 cell").eop = true;
    Ok(cells)
}

/// Serializes a response into its packet of cells.
///
/// `payload` is the LOAD/SWAP read data (empty for STORE and ERR). The cell
/// count follows `cells_per_packet` for OK responses; node-generated ERR
/// responses are always one empty cell.
pub fn build_response_cells(
    meta: CellMeta,
    status: RspStatus,
    payload: &[u8],
    width_bits: u32,
    ty: ProtocolType,
    endianness: Endianness,
) -> Result<Vec<Cell>, ProtocolError> {
    let lanes = lanes_for_width(width_bits)?;
    if status == RspStatus::Err {
        let cell = Cell {
            payload: vec![0u8; lanes],
            byte_enables: 0,
            eop: true,
            lck: false,
            meta,
        };
        return Ok(vec![cell]);
    }
    let n = cells_per_packet(meta.opcode, width_bits, ty, Direction::Rsp)? as usize;
    let size = meta.opcode.size_bytes;
    let mut cells = Vec::with_capacity(n);
    if payload.is_empty() {
        // STORE acknowledgements: n empty beats.
        for _ in 0..n {
            cells.push(Cell {
                payload: vec![0u8; lanes],
                byte_enables: 0,
                eop: false,
                lck: false,
                meta,
            });
        }
    } else {
        debug_assert_eq!(payload.len(), size as usize);
        for (k, (span_addr, span_len)) in cell_spans(meta.addr, size, lanes as u32).iter().enumerate()
        {
            let bytes = &payload[k * lanes..k * lanes + *span_len as usize];
            cells.push(pack_cell(*span_addr, *span_len, Some(bytes), lanes, endianness, meta));
        }
        debug_assert_eq!(cells.len(), n);
    }
    cells.last_mut().expect("packet has >= 1 cell").eop = true;
    Ok(cells)
}

/// Reassembles the enabled payload bytes of one complete packet, in byte
/// address order. Inverse of the build functions.
pub fn rebuild_payload(cells: &[Cell], endianness: Endianness) -> Result<Vec<u8>, ProtocolError> {
    let Some(last) = cells.last() else {
        return Err(ProtocolError::IncompletePacket);
    };
    if !last.eop || cells[..cells.len() - 1].iter().any(|c| c.eop) {
        return Err(ProtocolError::IncompletePacket);
    }
    let meta = cells[0].meta;
    if cells.iter().any(|c| c.meta != meta) {
        return Err(ProtocolError::MixedMeta);
    }
    let mut out = Vec::new();
    for cell in cells {
        let lanes = cell.lanes();
        // Walk lanes in byte-address order.
        let order: Vec<usize> = match endianness {
            Endianness::Little => (0..lanes).collect(),
            Endianness::Big => (0..lanes).rev().collect(),
        };
        for lane in order {
            if cell.byte_enables & (1 << lane) != 0 {
                out.push(cell.payload[lane]);
            }
        }
    }
    Ok(out)
}

/// Like [`rebuild_payload`] but tolerant of malformed packets: collects the
/// enabled lane bytes in address order without insisting on meta consistency
/// or eop placement. Monitors use it so garbage traces still yield
/// transactions for the checker to flag.
pub fn rebuild_payload_lenient(cells: &[Cell], endianness: Endianness) -> Vec<u8> {
    let mut out = Vec::new();
    for cell in cells {
        let lanes = cell.lanes();
        let order: Vec<usize> = match endianness {
            Endianness::Little => (0..lanes).collect(),
            Endianness::Big => (0..lanes).rev().collect(),
        };
        for lane in order {
            if cell.byte_enables & (1 << lane) != 0 {
                out.push(cell.payload[lane]);
            }
        }
    }
    out
}
