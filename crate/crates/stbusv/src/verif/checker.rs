//! Protocol checkers: the fixed rule table applied to one port's trace.
//!
//! | rule | meaning                                           |
//! |------|---------------------------------------------------|
//! | R1   | gnt asserted without req (either channel)         |
//! | R2   | missing eop: packet runs past its expected length |
//! | R3   | eop-terminated packet with the wrong cell count   |
//! | R4   | ordered-protocol response out of request order    |
//! | R5   | tid reused while outstanding (out-of-order type)  |
//! | R6   | outstanding transactions exceed the pipe bound    |
//! | R7   | foreign cell inside a chunk at a target port      |
//! | R8   | response without a matching outstanding request   |
//! | R9   | error response carrying data                      |
//! | R10  | meta changed between granted cells of one packet  |

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::interconnect::{PortKind, PortTrace, R_OPC_ERR};
use crate::protocol::{cells_per_packet, Direction, Opcode, ProtocolType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: RuleId,
    pub port: String,
    pub cycle: u64,
    pub message: String,
}

struct PacketState {
    head_meta: (u8, u8, u8, u32, bool),
    expected: Option<u32>,
    count: u32,
    head_cycle: u64,
}

/// Applies the rule table to one port trace. Engine-produced traces from
/// valid stimulus must come back empty.
pub fn check_protocol(
    trace: &PortTrace,
    protocol: ProtocolType,
    pipe_size: u32,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let effective_pipe = match protocol {
        ProtocolType::T1 => 1,
        _ => pipe_size,
    };
    let violate = |out: &mut Vec<Violation>, rule, cycle, message: String| {
        out.push(Violation { rule, port: trace.name.clone(), cycle, message });
    };

    let mut req_packet: Option<PacketState> = None;
    let mut rsp_packet: Option<(u8, u8, u8, u64, u32)> = None;
    // Per src: outstanding tids in issue order, and issue-order queue for R4.
    let mut outstanding: Vec<Vec<u8>> = vec![Vec::new(); 32];
    let mut order: Vec<VecDeque<u8>> = vec![VecDeque::new(); 32];
    let mut chunk_owner: Option<u8> = None;

    for (c, sig) in trace.cycles.iter().enumerate() {
        let cycle = c as u64;
        if sig.gnt && !sig.req {
            violate(&mut out, RuleId::R1, cycle, "gnt asserted on idle request channel".into());
        }
        if sig.r_gnt && !sig.r_req {
            violate(&mut out, RuleId::R1, cycle, "r_gnt asserted on idle response channel".into());
        }

        // Request channel transfers.
        if sig.req && sig.gnt {
            let src = sig.src as usize & 31;
            match req_packet.as_mut() {
                None => {
                    // Packet head: pipe bound and tid bookkeeping.
                    if outstanding[src].len() >= effective_pipe as usize {
                        violate(
                            &mut out,
                            RuleId::R6,
                            cycle,
                            format!(
                                "src {} issues a packet with {} already outstanding (pipe {})",
                                sig.src,
                                outstanding[src].len(),
                                effective_pipe
                            ),
                        );
                    }
                    if protocol == ProtocolType::T3 && outstanding[src].contains(&sig.tid) {
                        violate(
                            &mut out,
                            RuleId::R5,
                            cycle,
                            format!("src {} reuses tid {} while outstanding", sig.src, sig.tid),
                        );
                    }
                    outstanding[src].push(sig.tid);
                    order[src].push_back(sig.tid);
                    let expected = Opcode::decode(sig.opc).and_then(|op| {
                        cells_per_packet(op, trace.width_bits, protocol, Direction::Req).ok()
                    });
                    req_packet = Some(PacketState {
                        head_meta: (sig.src, sig.tid, sig.opc, sig.addr, sig.lck),
                        expected,
                        count: 0,
                        head_cycle: cycle,
                    });
                }
                Some(p) => {
                    let now = (sig.src, sig.tid, sig.opc, sig.addr, sig.lck);
                    if now != p.head_meta {
                        violate(
                            &mut out,
                            RuleId::R10,
                            cycle,
                            format!(
                                "request meta changed mid-packet (head at cycle {})",
                                p.head_cycle
                            ),
                        );
                    }
                }
            }
            let p = req_packet.as_mut().expect("packet state present after head handling");
            p.count += 1;

            // Chunk tracking at target ports.
            if trace.kind == PortKind::Target {
                match chunk_owner {
                    Some(owner) if owner != sig.src => {
                        violate(
                            &mut out,
                            RuleId::R7,
                            cycle,
                            format!(
                                "src {} granted at a target chunk-locked by src {}",
                                sig.src, owner
                            ),
                        );
                    }
                    _ => {}
                }
                if sig.lck {
                    if chunk_owner.is_none() {
                        chunk_owner = Some(sig.src);
                    }
                } else if sig.eop && chunk_owner == Some(sig.src) {
                    chunk_owner = None;
                }
            }

            if sig.eop {
                let p = req_packet.take().expect("in packet");
                if let Some(expected) = p.expected {
                    if p.count != expected {
                        violate(
                            &mut out,
                            RuleId::R3,
                            cycle,
                            format!("packet closed with {} cells, expected {}", p.count, expected),
                        );
                    }
                }
            } else if let Some(expected) = p.expected {
                if p.count >= expected {
                    violate(
                        &mut out,
                        RuleId::R2,
                        cycle,
                        format!("no eop after the expected {expected} cells"),
                    );
                    req_packet = None;
                }
            }
        }

        // Response channel transfers.
        if sig.r_req && sig.r_gnt {
            let src = sig.r_src as usize & 31;
            let head = match rsp_packet.as_mut() {
                None => {
                    if !outstanding[src].contains(&sig.r_tid) {
                        violate(
                            &mut out,
                            RuleId::R8,
                            cycle,
                            format!(
                                "response (src {}, tid {}) without a matching request",
                                sig.r_src, sig.r_tid
                            ),
                        );
                    }
                    rsp_packet = Some((sig.r_src, sig.r_tid, sig.r_opc, cycle, 0));
                    rsp_packet.as_mut().expect("just set")
                }
                Some(p) => {
                    if (sig.r_src, sig.r_tid, sig.r_opc) != (p.0, p.1, p.2) {
                        violate(
                            &mut out,
                            RuleId::R10,
                            cycle,
                            format!("response meta changed mid-packet (head at cycle {})", p.3),
                        );
                    }
                    p
                }
            };
            head.4 += 1;
            if sig.r_opc == R_OPC_ERR && sig.r_data.iter().any(|&b| b != 0) {
                violate(&mut out, RuleId::R9, cycle, "error response carries data".into());
            }
            if sig.r_eop {
                let (r_src, r_tid, _opc, _head_cycle, _count) =
                    rsp_packet.take().expect("in packet");
                let src = r_src as usize & 31;
                if protocol == ProtocolType::T2 {
                    match order[src].front() {
                        Some(&front) if front != r_tid => {
                            violate(
                                &mut out,
                                RuleId::R4,
                                cycle,
                                format!(
                                    "src {} response tid {} arrives before tid {}",
                                    r_src, r_tid, front
                                ),
                            );
                        }
                        _ => {}
                    }
                }
                if let Some(pos) = order[src].iter().position(|&t| t == r_tid) {
                    order[src].remove(pos);
                }
                if let Some(pos) = outstanding[src].iter().position(|&t| t == r_tid) {
                    outstanding[src].remove(pos);
                }
            }
        }
    }

    if req_packet.is_some() {
        let cycle = trace.cycles.len().saturating_sub(1) as u64;
        violate(&mut out, RuleId::R2, cycle, "trace ends inside a request packet".into());
    }
    if rsp_packet.is_some() {
        let cycle = trace.cycles.len().saturating_sub(1) as u64;
        violate(&mut out, RuleId::R2, cycle, "trace ends inside a response packet".into());
    }
    out
}
