use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use dereco::transportsim::{read_trace, FailureKind, Trace};

use crate::error::{CliError, Result};

/// Print a per-step digest of a trace and its failure class.
pub fn cmd_replay(path: &Path, every: usize, out: &mut impl Write) -> Result<(Trace, FailureKind)> {
    let f = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let trace = read_trace(BufReader::new(f)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let h = &trace.header;
    writeln!(
        out,
        "object {}  mass {:.3} kg  friction {:.3}  goal [{:.3}, {:.3}, {:.3}]",
        h.object, h.mass, h.friction, h.initial.goal[0], h.initial.goal[1], h.initial.goal[2]
    )?;
    writeln!(
        out,
        "{:>5}  {:>22}  {:>7}  {:>5}  {:>8}  {:>8}  drop",
        "step", "object xyz", "dist", "held", "r0", "r1"
    )?;
    for s in trace
        .steps
        .iter()
        .filter(|s| every <= 1 || s.step % every == 0 || s.step == trace.steps.len())
    {
        let o = &s.state.object;
        writeln!(
            out,
            "{:>5}  {:>6.3} {:>6.3} {:>6.3}  {:>7.4}  {:>5}  {:>8.4}  {:>8.4}  {}",
            s.step,
            o.x,
            o.y,
            o.z,
            s.state.goal_distance(),
            o.holders(),
            s.rewards[0],
            s.rewards[1],
            if s.drop_event { "yes" } else { "" }
        )?;
    }
    let class = trace.classify();
    writeln!(
        out,
        "final distance {:.4} m, {} (failure class: {})",
        trace.final_state().goal_distance(),
        if trace.success() { "success" } else { "failure" },
        class.as_str()
    )?;
    Ok((trace, class))
}
