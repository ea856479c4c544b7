use crate::simnet::{Cast, Origin, TraceLog, TraceRecord};

use super::{MetricsError, PhaseLedger};

/// Tallies honest traffic and recorded primitive invocations per phase.
/// Intruder injections are not part of any protocol run and are skipped.
pub fn measure_run(trace: &TraceLog) -> Result<PhaseLedger, MetricsError> {
    let instrumented = trace.records.iter().any(|r| matches!(r, TraceRecord::Meta { instrumented: true, .. }));
    if !instrumented {
        return Err(MetricsError::IncompleteTrace);
    }
    let mut out = PhaseLedger::new();
    for r in &trace.records {
        match r {
            TraceRecord::Msg(m) if m.origin == Origin::Honest => {
                let l = out.entry(m.phase).or_default();
                match m.cast {
                    Cast::Unicast => l.unicast += 1,
                    Cast::Broadcast => l.broadcast += 1,
                }
                l.bytes += m.accounted_bytes;
            }
            TraceRecord::Ops { phase, counts, .. } => out.entry(*phase).or_default().add_ops(counts),
            _ => {}
        }
    }
    Ok(out)
}
