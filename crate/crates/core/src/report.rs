//! Trace CSV output.
//!
//! Columns, in order: `t,strategy,j,batch_size,d_rou,d_com,E_com,Q,Z,f`, one
//! row per slot per server. `Q` and `Z` are end-of-slot backlogs. Reals are
//! written in plain decimal notation with 9 significant digits.

use std::io::{self, Write};

use crate::sim::RunResult;

pub const TRACE_HEADER: &str = "t,strategy,j,batch_size,d_rou,d_com,E_com,Q,Z,f";

/// `x` in positional notation with 9 significant digits.
pub fn format_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".to_owned() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.999999999 -> 10.00000000).
    let digits = s.chars().filter(char::is_ascii_digit).collect::<String>();
    let significant = digits.trim_start_matches('0').len();
    if significant > 9 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

/// Writes the header and every row of the given runs.
pub fn write_trace_csv<W: Write + ?Sized>(out: &mut W, runs: &[&RunResult]) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for run in runs {
        let name = run.strategy.name();
        for rec in &run.trace.records {
            let o = &rec.outcome;
            for j in 0..o.routed.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    rec.slot,
                    name,
                    j,
                    rec.batch_size,
                    o.routed[j],
                    o.completed[j],
                    format_real(o.energy[j]),
                    o.post_state[j].token_backlog(),
                    format_real(o.post_state[j].energy_backlog()),
                    format_real(rec.frequencies[j]),
                )?;
            }
        }
    }
    Ok(())
}
