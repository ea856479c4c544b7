//! Ticket framing: `mode(1) || len(2) || inner_ct || len(2) || outer_ct`, big-endian lengths.

use crate::crypto::encoding::DecodeError;

use super::{Ticket, TicketError, TicketMode};

pub fn serialize_ticket(t: &Ticket) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + t.inner_ct.len() + t.outer_ct.len());
    out.push(t.mode as u8);
    for part in [&t.inner_ct, &t.outer_ct] {
        let len = u16::try_from(part.len()).expect("ticket half longer than 65535 bytes");
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(part);
    }
    out
}

pub fn parse_ticket(bytes: &[u8]) -> Result<Ticket, TicketError> {
    let (&mode, mut rest) = bytes.split_first().ok_or(DecodeError::Truncated)?;
    let mode = TicketMode::try_from(mode).map_err(|_| DecodeError::BadValue)?;
    let mut take = || -> Result<Vec<u8>, DecodeError> {
        if rest.len() < 2 {
            return Err(DecodeError::Truncated);
        }
        let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
        if rest.len() < 2 + len {
            return Err(DecodeError::Truncated);
        }
        let part = rest[2..2 + len].to_vec();
        rest = &rest[2 + len..];
        Ok(part)
    };
    let inner_ct = take()?;
    let outer_ct = take()?;
    if !rest.is_empty() {
        return Err(DecodeError::Trailing(rest.len()).into());
    }
    Ok(Ticket { mode, inner_ct, outer_ct })
}
