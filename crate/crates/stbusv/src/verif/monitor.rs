//! Passive port monitors: reconstruct transactions from granted cells of a
//! dense port trace.

use serde::Serialize;

use crate::interconnect::{PortKind, PortSignals, PortTrace, R_OPC_OK};
use crate::protocol::{
    lane_for_byte, Cell, CellMeta, Endianness, OpKind, Opcode, Request, Response, RspStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TxnDirection {
    Req,
    Rsp,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum TxnBody {
    Req(Request),
    Rsp(Response),
}

/// One reconstructed packet observed at a port.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MonitorTxn {
    pub port: String,
    pub kind: PortKind,
    pub direction: TxnDirection,
    pub body: TxnBody,
    pub start_cycle: u64,
    pub end_cycle: u64,
    /// lck was asserted on at least one cell (chunk membership).
    pub locked: bool,
    /// False for a trailing packet still open when the trace ended.
    pub complete: bool,
}

impl MonitorTxn {
    pub fn src_tid(&self) -> (u8, u8) {
        match &self.body {
            TxnBody::Req(r) => (r.src, r.tid),
            TxnBody::Rsp(r) => (r.src, r.tid),
        }
    }
}

fn cell_from_signals(sig: &PortSignals, lanes: usize) -> Cell {
    Cell {
        payload: sig.data[..lanes].to_vec(),
        byte_enables: sig.be,
        eop: sig.eop,
        lck: sig.lck,
        meta: CellMeta {
            src: sig.src,
            tid: sig.tid,
            opcode: Opcode::decode(sig.opc).unwrap_or(Opcode::new(OpKind::Load, 1)),
            addr: sig.addr,
        },
    }
}

/// Extracts the LOAD/SWAP payload lanes of a response packet, given the
/// matching request's opcode and address.
fn response_payload(
    cells: &[(u64, Vec<u8>)],
    opcode: Opcode,
    addr: u32,
    lanes: usize,
    endianness: Endianness,
) -> Vec<u8> {
    let size = opcode.size_bytes as usize;
    let mut out = Vec::with_capacity(size);
    if size <= lanes {
        let (_, payload) = &cells[0];
        for j in 0..size {
            let lane = lane_for_byte(addr.wrapping_add(j as u32), lanes, endianness);
            out.push(payload[lane]);
        }
    } else {
        for (_, payload) in cells {
            for j in 0..lanes {
                let lane = lane_for_byte(j as u32, lanes, endianness);
                out.push(payload[lane]);
            }
        }
        out.truncate(size);
    }
    out
}

/// Reconstructs one transaction per completed packet seen at the port.
/// Responses are paired with the port's own outstanding requests by
/// (src, tid) to recover payload geometry; unmatched responses keep their
/// raw lane bytes and are left for the checker to flag.
pub fn monitor_extract(trace: &PortTrace, endianness: Endianness) -> Vec<MonitorTxn> {
    let lanes = (trace.width_bits / 8) as usize;
    let mut txns = Vec::new();

    // Request channel.
    let mut req_cells: Vec<Cell> = Vec::new();
    let mut req_start = 0u64;
    // (src, tid) -> (opcode, addr) of requests awaiting a response, FIFO.
    let mut outstanding: Vec<((u8, u8), (Opcode, u32))> = Vec::new();
    // Response channel.
    let mut rsp_cells: Vec<(u64, Vec<u8>)> = Vec::new();
    let mut rsp_head: Option<(u8, u8, u8)> = None;
    let mut rsp_start = 0u64;

    for (c, sig) in trace.cycles.iter().enumerate() {
        let cycle = c as u64;
        if sig.req && sig.gnt {
            if req_cells.is_empty() {
                req_start = cycle;
            }
            req_cells.push(cell_from_signals(sig, lanes));
            if sig.eop {
                let cells = std::mem::take(&mut req_cells);
                let txn = request_txn(trace, &cells, req_start, cycle, endianness, true);
                if let TxnBody::Req(r) = &txn.body {
                    outstanding.push(((r.src, r.tid), (r.opcode, r.addr)));
                }
                txns.push(txn);
            }
        }
        if sig.r_req && sig.r_gnt {
            if rsp_cells.is_empty() {
                rsp_start = cycle;
                rsp_head = Some((sig.r_src, sig.r_tid, sig.r_opc));
            }
            rsp_cells.push((cycle, sig.r_data[..lanes].to_vec()));
            if sig.r_eop {
                let cells = std::mem::take(&mut rsp_cells);
                let (src, tid, opc) = rsp_head.take().expect("head recorded at packet start");
                let status = if opc == R_OPC_OK { RspStatus::Ok } else { RspStatus::Err };
                let matched = outstanding
                    .iter()
                    .position(|((s, t), _)| *s == src && *t == tid)
                    .map(|pos| outstanding.remove(pos).1);
                let data = match (status, matched) {
                    (RspStatus::Err, _) => Vec::new(),
                    (RspStatus::Ok, Some((opcode, addr))) => match opcode.kind {
                        OpKind::Store => Vec::new(),
                        _ => response_payload(&cells, opcode, addr, lanes, endianness),
                    },
                    (RspStatus::Ok, None) => {
                        cells.iter().flat_map(|(_, p)| p.iter().copied()).collect()
                    }
                };
                txns.push(MonitorTxn {
                    port: trace.name.clone(),
                    kind: trace.kind,
                    direction: TxnDirection::Rsp,
                    body: TxnBody::Rsp(Response { src, tid, status, data }),
                    start_cycle: rsp_start,
                    end_cycle: cycle,
                    locked: false,
                    complete: true,
                });
            }
        }
    }

    // Trailing open packets.
    if !req_cells.is_empty() {
        let end = trace.cycles.len().saturating_sub(1) as u64;
        txns.push(request_txn(trace, &req_cells, req_start, end, endianness, false));
    }
    if let Some((src, tid, opc)) = rsp_head {
        let end = trace.cycles.len().saturating_sub(1) as u64;
        let status = if opc == R_OPC_OK { RspStatus::Ok } else { RspStatus::Err };
        txns.push(MonitorTxn {
            port: trace.name.clone(),
            kind: trace.kind,
            direction: TxnDirection::Rsp,
            body: TxnBody::Rsp(Response { src, tid, status, data: Vec::new() }),
            start_cycle: rsp_start,
            end_cycle: end,
            locked: false,
            complete: false,
        });
    }
    txns.sort_by_key(|t| (t.start_cycle, t.direction));
    txns
}

fn request_txn(
    trace: &PortTrace,
    cells: &[Cell],
    start: u64,
    end: u64,
    endianness: Endianness,
    complete: bool,
) -> MonitorTxn {
    let meta = cells[0].meta;
    let data = match meta.opcode.kind {
        OpKind::Load => Vec::new(),
        _ => crate::protocol::rebuild_payload_lenient(cells, endianness),
    };
    MonitorTxn {
        port: trace.name.clone(),
        kind: trace.kind,
        direction: TxnDirection::Req,
        body: TxnBody::Req(Request {
            src: meta.src,
            tid: meta.tid,
            opcode: meta.opcode,
            addr: meta.addr,
            data,
            chunk_id: None,
            issue_cycle: start,
        }),
        start_cycle: start,
        end_cycle: end,
        locked: cells.iter().any(|c| c.lck),
        complete,
    }
}
