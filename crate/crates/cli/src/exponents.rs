use std::process::ExitCode;

use anyhow::Result;
use serde_json::{json, Value};

use chemostokes::exponents::{gamma_of, run_linear_ladder, run_psi_ladder, threshold_certificate, LadderKind};

pub fn cmd_exponents(m: f64, ladder: Option<LadderKind>, cap: f64, p0: f64) -> Result<ExitCode> {
    match ladder {
        None => println!("{}", serde_json::to_string_pretty(&certificate(m))?),
        Some(kind) => {
            let l = match kind {
                LadderKind::Linear => run_linear_ladder(m, p0, cap)?,
                LadderKind::Psi => run_psi_ladder(m, cap)?,
            };
            print!("{}", l.to_csv());
            eprintln!("terminated: {:?} after {} steps", l.terminated, l.entries.len() - 1);
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Threshold certificate plus the outcome of both ladders, as attached to m sweeps.
pub fn certificate(m: f64) -> Value {
    let t = threshold_certificate(m);
    let ladder = |res: chemostokes::Result<chemostokes::BootstrapLadder>| match res {
        Ok(l) => json!({
            "steps": l.entries.len() - 1,
            "last": l.last(),
            "terminated": format!("{:?}", l.terminated),
            "all_admissible": l.entries.iter().all(|e| e.certificate.admissible),
        }),
        Err(e) => json!({ "refused": e.to_string() }),
    };
    json!({
        "m": m,
        "above_9_8": t.above_9_8,
        "fixed_point_gap": t.fixed_point_gap,
        "above_215_192": t.above_215_192,
        "gamma": gamma_of(m).ok(),
        "psi_ladder": ladder(run_psi_ladder(m, 1e6)),
        "linear_ladder": ladder(run_linear_ladder(m, 1.0, 1e6)),
    })
}
