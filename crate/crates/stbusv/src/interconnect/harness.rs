//! Harness pieces shared by both engines: stimulus compilation into per-port
//! packet programs, the port presentation cursors driven by each engine's
//! scheduler, and trace finalization.
//!
//! Presentation contract (the BFM behavior both engines assume): a packet's
//! face appears at its visible cycle and holds until granted; cells of one
//! packet present back-to-back; after an eop transfer the next packet face
//! appears no earlier than the following cycle.

use std::collections::VecDeque;

use crate::protocol::{build_request_cells, Cell, ProtocolError, Request, RspStatus};

use super::{route, NodeConfig, PortSignals, PortTrace, RouteResult};

/// A request scheduled for issue at a cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedRequest {
    pub issue_cycle: u64,
    pub req: Request,
}

/// Stimulus for one run: issue-ordered requests per initiator.
#[derive(Debug, Clone, Default)]
pub struct Stimulus {
    pub per_init: Vec<Vec<TimedRequest>>,
}

impl Stimulus {
    pub fn from_events(n_init: usize, events: &[TimedRequest]) -> Self {
        let mut per_init = vec![Vec::new(); n_init];
        for ev in events {
            per_init[ev.req.src as usize].push(ev.clone());
        }
        Self { per_init }
    }

    pub fn total(&self) -> usize {
        self.per_init.iter().map(Vec::len).sum()
    }
}

/// One pre-serialized request packet: its cells (lck flags resolved from
/// chunk membership) and routing decision.
#[derive(Debug, Clone)]
pub struct PacketProgram {
    pub cells: Vec<Cell>,
    pub issue_cycle: u64,
    /// Request-path resource this packet contends for: `Some(t)` for a
    /// mapped reachable target, `None` for the node's bit bucket (unmapped
    /// or unreachable addresses, answered with an ERR response).
    pub dest: Option<usize>,
}

/// Serializes the per-initiator stimulus into packet programs. Cells of
/// every non-final packet of a chunk carry lck.
pub fn compile_programs(
    config: &NodeConfig,
    stimulus: &Stimulus,
) -> Result<Vec<VecDeque<PacketProgram>>, ProtocolError> {
    let mut out = Vec::with_capacity(stimulus.per_init.len());
    for (init, list) in stimulus.per_init.iter().enumerate() {
        let mut programs = VecDeque::with_capacity(list.len());
        for (k, ev) in list.iter().enumerate() {
            let mut cells = build_request_cells(
                &ev.req,
                config.width_bits,
                config.protocol,
                config.endianness,
            )?;
            let in_chunk_body = match ev.req.chunk_id {
                Some(id) => list.get(k + 1).map(|n| n.req.chunk_id == Some(id)).unwrap_or(false),
                None => false,
            };
            if in_chunk_body {
                for cell in &mut cells {
                    cell.lck = true;
                }
            }
            let dest = match route(ev.req.addr, &config.address_map) {
                RouteResult::Target(t) if config.reachable(init, t as usize) => Some(t as usize),
                _ => None,
            };
            programs.push_back(PacketProgram {
                cells,
                issue_cycle: ev.issue_cycle,
                dest,
            });
        }
        out.push(programs);
    }
    Ok(out)
}

/// Presentation cursor over one port's packet stream (request side of an
/// initiator port, or response side of a target port).
#[derive(Debug, Clone)]
pub struct PacketCursor {
    pub cells: Vec<Cell>,
    pub idx: usize,
    pub visible_cycle: u64,
    pub status: RspStatus,
    /// Request-path resource (request packets only).
    pub dest: Option<usize>,
}

impl PacketCursor {
    pub fn face(&self) -> &Cell {
        &self.cells[self.idx]
    }

    pub fn is_last_cell(&self) -> bool {
        self.idx + 1 == self.cells.len()
    }
}

/// A response packet queued at a target port or the node's per-initiator
/// error source.
#[derive(Debug, Clone)]
pub struct RspPacket {
    pub cells: Vec<Cell>,
    pub status: RspStatus,
    pub ready_cycle: u64,
}

/// Fills the request-channel half of a port record from a face cell.
pub fn write_req_half(sig: &mut PortSignals, cell: &Cell, gnt: bool) {
    sig.req = true;
    sig.gnt = gnt;
    sig.opc = cell.meta.opcode.encode();
    sig.addr = cell.meta.addr;
    sig.data = [0; 32];
    sig.data[..cell.payload.len()].copy_from_slice(&cell.payload);
    sig.be = cell.byte_enables;
    sig.eop = cell.eop;
    sig.lck = cell.lck;
    sig.src = cell.meta.src;
    sig.tid = cell.meta.tid;
}

pub fn clear_req_half(sig: &mut PortSignals) {
    sig.req = false;
    sig.gnt = false;
    sig.opc = 0;
    sig.addr = 0;
    sig.data = [0; 32];
    sig.be = 0;
    sig.eop = false;
    sig.lck = false;
    sig.src = 0;
    sig.tid = 0;
}

/// Fills the response-channel half of a port record from a face cell.
pub fn write_rsp_half(sig: &mut PortSignals, cell: &Cell, status: RspStatus, r_gnt: bool) {
    sig.r_req = true;
    sig.r_gnt = r_gnt;
    sig.r_opc = match status {
        RspStatus::Ok => super::R_OPC_OK,
        RspStatus::Err => super::R_OPC_ERR,
    };
    sig.r_data = [0; 32];
    sig.r_data[..cell.payload.len()].copy_from_slice(&cell.payload);
    sig.r_eop = cell.eop;
    sig.r_src = cell.meta.src;
    sig.r_tid = cell.meta.tid;
}

pub fn clear_rsp_half(sig: &mut PortSignals) {
    sig.r_req = false;
    sig.r_gnt = false;
    sig.r_opc = 0;
    sig.r_data = [0; 32];
    sig.r_eop = false;
    sig.r_src = 0;
    sig.r_tid = 0;
}

/// Request-side presentation state of one initiator port.
#[derive(Debug, Clone)]
pub struct ReqPortCursor {
    pub programs: VecDeque<PacketProgram>,
    pub current: Option<PacketCursor>,
    pub done_cycle: Option<u64>,
}

impl ReqPortCursor {
    pub fn new(programs: VecDeque<PacketProgram>) -> Self {
        let mut c = Self { programs, current: None, done_cycle: None };
        c.refresh();
        c
    }

    fn refresh(&mut self) {
        if self.current.is_none() {
            if let Some(p) = self.programs.pop_front() {
                let after = self.done_cycle.map_or(0, |d| d + 1);
                self.current = Some(PacketCursor {
                    visible_cycle: p.issue_cycle.max(after),
                    cells: p.cells,
                    idx: 0,
                    status: RspStatus::Ok,
                    dest: p.dest,
                });
            }
        }
    }

    pub fn visible(&self) -> Option<u64> {
        self.current.as_ref().map(|c| c.visible_cycle)
    }

    pub fn face(&self, cycle: u64) -> Option<&Cell> {
        self.current
            .as_ref()
            .filter(|c| c.visible_cycle <= cycle)
            .map(|c| c.face())
    }

    pub fn dest(&self) -> Option<usize> {
        self.current.as_ref().and_then(|c| c.dest)
    }

    pub fn advance(&mut self, cycle: u64) {
        let cur = self.current.as_mut().expect("transfer without a current packet");
        if cur.is_last_cell() {
            self.current = None;
            self.done_cycle = Some(cycle);
            self.refresh();
        } else {
            cur.idx += 1;
        }
    }

    pub fn exhausted(&self) -> bool {
        self.current.is_none() && self.programs.is_empty()
    }
}

/// Response-side presentation state of one target port.
#[derive(Debug, Clone, Default)]
pub struct RspPortCursor {
    pub queue: VecDeque<RspPacket>,
    pub current: Option<PacketCursor>,
    pub done_cycle: Option<u64>,
}

impl RspPortCursor {
    /// Enqueues a response packet; returns the visible cycle if the head
    /// packet just became current.
    pub fn push(&mut self, packet: RspPacket) -> Option<u64> {
        self.queue.push_back(packet);
        let was_empty = self.current.is_none();
        self.refresh();
        was_empty.then(|| self.current.as_ref().expect("just refreshed").visible_cycle)
    }

    fn refresh(&mut self) {
        if self.current.is_none() {
            if let Some(p) = self.queue.pop_front() {
                let after = self.done_cycle.map_or(0, |d| d + 1);
                self.current = Some(PacketCursor {
                    visible_cycle: p.ready_cycle.max(after),
                    cells: p.cells,
                    idx: 0,
                    status: p.status,
                    dest: None,
                });
            }
        }
    }

    pub fn visible(&self) -> Option<u64> {
        self.current.as_ref().map(|c| c.visible_cycle)
    }

    pub fn face(&self, cycle: u64) -> Option<(&Cell, RspStatus)> {
        self.current
            .as_ref()
            .filter(|c| c.visible_cycle <= cycle)
            .map(|c| (c.face(), c.status))
    }

    /// Advances past a transferred cell; returns the next packet's visible
    /// cycle when this transfer completed a packet and another is queued.
    pub fn advance(&mut self, cycle: u64) -> Option<u64> {
        let cur = self.current.as_mut().expect("transfer without a current packet");
        if cur.is_last_cell() {
            self.current = None;
            self.done_cycle = Some(cycle);
            self.refresh();
            self.visible()
        } else {
            cur.idx += 1;
            None
        }
    }

    pub fn exhausted(&self) -> bool {
        self.current.is_none() && self.queue.is_empty()
    }
}

/// Result of one engine run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub traces: Vec<PortTrace>,
    pub total_cycles: u64,
}

/// Shared end-of-run rule: trailing all-idle cycles are trimmed; a run with
/// no activity at all spans the full cycle budget of idle cycles.
pub fn finalize_traces(mut traces: Vec<PortTrace>, cycle_budget: u64) -> RunOutcome {
    let idle = PortSignals::default();
    let last_active = traces
        .iter()
        .flat_map(|t| {
            t.cycles
                .iter()
                .enumerate()
                .rev()
                .find(|(_, sig)| **sig != idle)
                .map(|(c, _)| c as u64)
        })
        .max();
    let len = match last_active {
        Some(c) => (c + 1).min(cycle_budget),
        None => cycle_budget,
    };
    for trace in &mut traces {
        trace.cycles.resize(len as usize, idle);
    }
    RunOutcome { traces, total_cycles: len }
}
