//! Loss tables for stamped prefix-sum mechanisms and for optimal factorizations
//! of small workloads.

use mfdp::mechlab::LossRow;
use mfdp::optfact::{solve, ConstraintMode, SolveOptions};
use mfdp::participation::make_schema;
use mfdp::treestamp::{sweep_stamps, Family, StampRow};
use mfdp::workloads::{momentum_workload, prefix_workload};
use mfdp::{Error, Execution, Result};
use serde::Serialize;

fn mechanism_name(row: &StampRow) -> String {
    let base = match row.family {
        Family::OnlineHonaker => format!("online_honaker(n={})", row.base_n),
        Family::OptimalHonaker => format!("optimal_decoder_honaker(n={})", row.base_n),
        Family::Fft => format!("fft(n={})", row.base_n),
        Family::FftOptimal => format!("fft_optimal_decoder(n={})", row.base_n),
        Family::MfSingle => format!("mf(k=1,n={})", row.base_n),
    };
    if row.s > 1 {
        format!("{base}x{}", row.s)
    } else {
        base
    }
}

/// One row per `(family, s)`; an empty stamp list means a single stamp.
pub fn report_table1(n: usize, k: usize, b: usize, families: &[Family], stamps: &[usize]) -> Result<Vec<LossRow>> {
    if families.is_empty() {
        return Err(Error::InvalidArgument("no mechanism families requested".into()));
    }
    let schema = make_schema(n, k, b)?;
    let stamps = if stamps.is_empty() { vec![1] } else { stamps.to_vec() };
    let mut rows = Vec::new();
    for &family in families {
        let sweep = sweep_stamps(family, &schema, &stamps, Execution::default())?;
        rows.extend(sweep.rows.iter().map(|r| LossRow {
            mechanism: mechanism_name(r),
            n,
            k,
            b,
            stamps: r.s,
            decoder: r.decoder_kind.to_string(),
            sens: r.sens,
            sens_method: r.sens_method,
            loss: r.loss,
            root_loss: r.loss.sqrt(),
        }));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3Row {
    pub workload: String,
    pub mode: ConstraintMode,
    pub root_loss: f64,
    pub dual_root: f64,
    pub rel_gap: f64,
    pub min_x_entry: f64,
    pub min_pair_entry: f64,
    pub iterations: usize,
    pub reconstruction_error: f64,
}

/// Prefix and momentum workloads under every constraint mode.
pub fn report_table3(n: usize, k: usize, b: usize, beta: f64, gap_tol: f64) -> Result<Vec<Table3Row>> {
    let schema = make_schema(n, k, b)?;
    let opts = SolveOptions { gap_tol, ..Default::default() };
    let workloads = [("prefix".to_string(), prefix_workload(n)), (format!("momentum_{beta}"), momentum_workload(n, beta)?)];
    let mut rows = Vec::new();
    for (name, a) in &workloads {
        for mode in ConstraintMode::ALL {
            let (f, st) = solve(a, &schema, mode, &opts)?;
            rows.push(Table3Row {
                workload: name.clone(),
                mode,
                root_loss: f.loss().sqrt(),
                dual_root: st.dual_value.max(0.0).sqrt(),
                rel_gap: st.rel_gap,
                min_x_entry: st.min_x_entry,
                min_pair_entry: st.min_pair_entry,
                iterations: st.iterations,
                reconstruction_error: f.reconstruction_error(a),
            });
        }
    }
    Ok(rows)
}
