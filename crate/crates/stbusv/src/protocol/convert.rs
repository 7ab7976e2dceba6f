//! Size and type conversion between bus widths and protocol types.

use std::collections::VecDeque;

use super::{
    lane_for_byte, lanes_for_width, Cell, Endianness, ProtocolError, ProtocolType, Request,
    Response,
};

/// Re-serializes whole packets from one bus width to another.
///
/// The enabled byte map (byte address -> value) of every packet is preserved
/// exactly; the output uses the minimal covering span of bus words at the
/// target width, so full-width packets scale by the width ratio and sub-word
/// packets stay minimal. eop and lck are recomputed per output packet.
pub fn size_convert(
    cells: &[Cell],
    width_from: u32,
    width_to: u32,
    endianness: Endianness,
) -> Result<Vec<Cell>, ProtocolError> {
    let lanes_from = lanes_for_width(width_from)?;
    let lanes_to = lanes_for_width(width_to)?;
    let mut out = Vec::new();

    for packet in split_packets(cells)? {
        let meta = packet[0].meta;
        if packet.iter().any(|c| c.meta != meta) {
            return Err(ProtocolError::MixedMeta);
        }
        let lck = packet[0].lck;
        // Recover the (address, byte) map through the lane rule.
        let base = meta.addr as u64 - (meta.addr as u64 % lanes_from as u64);
        let mut enabled: Vec<(u64, u8)> = Vec::new();
        for (k, cell) in packet.iter().enumerate() {
            debug_assert_eq!(cell.lanes(), lanes_from);
            let word_base = base + (k * lanes_from) as u64;
            for off in 0..lanes_from {
                let lane = lane_for_byte(off as u32, lanes_from, endianness);
                if cell.byte_enables & (1 << lane) != 0 {
                    enabled.push((word_base + off as u64, cell.payload[lane]));
                }
            }
        }

        if enabled.is_empty() {
            out.push(Cell {
                payload: vec![0u8; lanes_to],
                byte_enables: 0,
                eop: true,
                lck,
                meta,
            });
            continue;
        }

        let first = enabled.first().expect("non-empty").0;
        let last = enabled.last().expect("non-empty").0;
        let span_base = first - first % lanes_to as u64;
        let n_cells = ((last - span_base) as usize / lanes_to) + 1;
        let mut cells_out: Vec<Cell> = (0..n_cells)
            .map(|_| Cell {
                payload: vec![0u8; lanes_to],
                byte_enables: 0,
                eop: false,
                lck,
                meta,
            })
            .collect();
        for (addr, byte) in enabled {
            let k = ((addr - span_base) as usize) / lanes_to;
            let lane = lane_for_byte((addr % lanes_to as u64) as u32, lanes_to, endianness);
            cells_out[k].payload[lane] = byte;
            cells_out[k].byte_enables |= 1 << lane;
        }
        cells_out.last_mut().expect("non-empty").eop = true;
        out.extend(cells_out);
    }
    Ok(out)
}

fn split_packets(cells: &[Cell]) -> Result<Vec<&[Cell]>, ProtocolError> {
    let mut packets = Vec::new();
    let mut start = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.eop {
            packets.push(&cells[start..=i]);
            start = i + 1;
        }
    }
    if start != cells.len() {
        return Err(ProtocolError::IncompletePacket);
    }
    Ok(packets)
}

/// One element of a transaction-level stream, in occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxnEvent {
    Req(Request),
    Rsp(Response),
}

/// Capabilities the converted stream is restricted to, reported on upward
/// conversions (a T1 stream passed into a T3 context stays single-outstanding
/// and ordered even though T3 would allow more).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConversionFlags {
    pub ordered_only: bool,
    pub single_outstanding: bool,
}

/// Converts a transaction stream between protocol types.
///
/// T3 -> T2 inserts an ordering buffer: responses are released in per-source
/// request order. T2 -> T1 (and T3 -> T1) serializes to one outstanding
/// transaction: request k+1 is emitted only after response k. Upward
/// conversions pass through unchanged and report the capability restriction
/// flags. Same-type input is returned unchanged.
pub fn convert_type(
    stream: &[TxnEvent],
    from: ProtocolType,
    to: ProtocolType,
) -> (Vec<TxnEvent>, ConversionFlags) {
    use ProtocolType::*;
    let rank = |t: ProtocolType| match t {
        T1 => 1,
        T2 => 2,
        T3 => 3,
    };
    if rank(to) >= rank(from) {
        let flags = ConversionFlags {
            ordered_only: from != T3 && to == T3,
            single_outstanding: from == T1 && to != T1,
        };
        return (stream.to_vec(), flags);
    }
    let mut events = stream.to_vec();
    if from == T3 {
        events = reorder_responses(&events);
    }
    if to == T1 {
        events = serialize_single_outstanding(&events);
    }
    (events, ConversionFlags::default())
}

/// Holds early responses until all earlier requests of the same source have
/// been answered.
fn reorder_responses(stream: &[TxnEvent]) -> Vec<TxnEvent> {
    let mut out = Vec::with_capacity(stream.len());
    // Per source: request tid order still awaiting a response, and parked
    // responses keyed by tid.
    let mut pending: Vec<VecDeque<u8>> = vec![VecDeque::new(); 256];
    let mut parked: Vec<Vec<Response>> = vec![Vec::new(); 256];
    for ev in stream {
        match ev {
            TxnEvent::Req(req) => {
                pending[req.src as usize].push_back(req.tid);
                out.push(ev.clone());
            }
            TxnEvent::Rsp(rsp) => {
                let src = rsp.src as usize;
                parked[src].push(rsp.clone());
                // Release in request order while the head response is present.
                while let Some(&head_tid) = pending[src].front() {
                    if let Some(pos) = parked[src].iter().position(|r| r.tid == head_tid) {
                        out.push(TxnEvent::Rsp(parked[src].remove(pos)));
                        pending[src].pop_front();
                    } else {
                        break;
                    }
                }
            }
        }
    }
    // Anything still parked has no matching request order; flush as-is.
    for src in 0..256 {
        for rsp in parked[src].drain(..) {
            out.push(TxnEvent::Rsp(rsp));
        }
    }
    out
}

/// Defers each request until the previous request of the same source has
/// been answered, yielding a strict req/rsp alternation per source.
fn serialize_single_outstanding(stream: &[TxnEvent]) -> Vec<TxnEvent> {
    let mut out = Vec::with_capacity(stream.len());
    let mut blocked: Vec<VecDeque<Request>> = vec![VecDeque::new(); 256];
    let mut outstanding = [false; 256];
    for ev in stream {
        match ev {
            TxnEvent::Req(req) => {
                let src = req.src as usize;
                if outstanding[src] {
                    blocked[src].push_back(req.clone());
                } else {
                    outstanding[src] = true;
                    out.push(ev.clone());
                }
            }
            TxnEvent::Rsp(rsp) => {
                let src = rsp.src as usize;
                out.push(ev.clone());
                outstanding[src] = false;
                if let Some(next) = blocked[src].pop_front() {
                    outstanding[src] = true;
                    out.push(TxnEvent::Req(next));
                }
            }
        }
    }
    out
}
