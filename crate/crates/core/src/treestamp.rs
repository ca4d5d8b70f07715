//! Binary-tree encoders, online and least-norm tree decoders, and stamping
//! (block-diagonal repetition of an encoder).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fftmech::{fft_decoder, real_fft_encoder};
use crate::matcore::{min_norm_decoder, pinv, Matrix};
use crate::optfact::{solve_with_gram, ConstraintMode, Method, SolveOptions};
use crate::participation::{sensitivity, ParticipationSchema, SensMethod};
use crate::workloads::prefix_workload;

/// Complete binary tree over `leaves = 2^ceil(log2 n)` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEncoderSpec {
    pub n: usize,
    pub leaves: usize,
    pub node_count: usize,
    /// `node_count x leaves`, 1 where the node covers the leaf.
    pub encoder: Matrix,
    /// `(level, first leaf)` per encoder row; leaves first, then levels bottom-up.
    pub nodes: Vec<(u32, usize)>,
}

impl TreeEncoderSpec {
    pub fn height(&self) -> u32 {
        self.leaves.trailing_zeros()
    }

    /// Row of node `(level, start)`.
    pub fn node_index(&self, level: u32, start: usize) -> usize {
        let mut idx = 0;
        for l in 0..level {
            idx += self.leaves >> l;
        }
        idx + (start >> level)
    }

    /// `C_tree E`: the encoder restricted to the first `n` leaves.
    pub fn embedded(&self) -> Matrix {
        self.encoder.leading_columns(self.n)
    }
}

/// Tree encoder and the `leaves x n` embedding that pads a stream with zeros.
pub fn tree_encoder(n: usize) -> Result<(TreeEncoderSpec, Matrix)> {
    if n == 0 {
        return Err(Error::InvalidArgument("tree needs n >= 1".into()));
    }
    let leaves = n.next_power_of_two();
    let h = leaves.trailing_zeros();
    let mut nodes = Vec::with_capacity(2 * leaves - 1);
    for level in 0..=h {
        let size = 1usize << level;
        nodes.extend((0..leaves).step_by(size).map(|start| (level, start)));
    }
    let encoder = Matrix::from_fn(nodes.len(), leaves, |r, j| {
        let (level, start) = nodes[r];
        if j >= start && j < start + (1 << level) {
            1.0
        } else {
            0.0
        }
    });
    let embedding = Matrix::from_fn(leaves, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let spec = TreeEncoderSpec { n, leaves, node_count: nodes.len(), encoder, nodes };
    Ok((spec, embedding))
}

/// Adds the variance-weighted estimate of the block `[start, start + 2^level)` to
/// `row`: every level `d` below the block contributes the sum of its nodes with weight
/// `2^-d / sum_{d'=0..level} 2^-d'`.
fn add_block(spec: &TreeEncoderSpec, row: &mut [f64], level: u32, start: usize) {
    let total: f64 = (0..=level).map(|d| 0.5f64.powi(d as i32)).sum();
    for d in 0..=level {
        let sub = level - d;
        let w = 0.5f64.powi(d as i32) / total;
        for s in (start..start + (1 << level)).step_by(1 << sub) {
            row[spec.node_index(sub, s)] += w;
        }
    }
}

/// Online decoder releasing step `i` from the dyadic blocks of `i`'s binary
/// expansion. With `completed`, the last step of a run whose length is not a power
/// of two may instead use the whole-tree estimate with nodes lying entirely in the
/// zero padding dropped, whichever row has the smaller norm.
pub fn online_honaker_decoder(n: usize, completed: bool) -> Result<Matrix> {
    let (spec, _) = tree_encoder(n)?;
    let m = spec.node_count;
    let mut d = Matrix::zeros(n, m);
    for i in 1..=n {
        let row = d.row_mut(i - 1);
        let mut pos = 0;
        for level in (0..usize::BITS).rev() {
            if i & (1 << level) != 0 {
                add_block(&spec, row, level, pos);
                pos += 1 << level;
            }
        }
    }
    if completed && n != spec.leaves {
        let mut alt = vec![0.0; m];
        add_block(&spec, &mut alt, spec.height(), 0);
        for (t, &(_, start)) in spec.nodes.iter().enumerate() {
            if start >= n {
                alt[t] = 0.0;
            }
        }
        let last = d.row_mut(n - 1);
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        if norm(&alt) < norm(last) {
            last.copy_from_slice(&alt);
        }
    }
    Ok(d)
}

/// Least-norm decoder `S (C_tree E)^+`.
pub fn optimal_tree_decoder(n: usize) -> Result<Matrix> {
    let (spec, _) = tree_encoder(n)?;
    min_norm_decoder(&prefix_workload(n), &spec.embedded())
}

/// Block-diagonal matrix with `s` copies of `c`.
pub fn stamp_encoder(c: &Matrix, s: usize) -> Result<Matrix> {
    if s == 0 {
        return Err(Error::InvalidArgument("need at least one stamp".into()));
    }
    Ok(Matrix::block_diag(c, s))
}

/// Prefix-sum decoder for `s` stamps of `base_c`: `base_b` on the diagonal blocks and
/// the last row of `base_b` repeated in every block below the diagonal.
pub fn restart_decoder(base_b: &Matrix, base_c: &Matrix, s: usize) -> Result<Matrix> {
    if s == 0 {
        return Err(Error::InvalidArgument("need at least one stamp".into()));
    }
    let n = base_b.rows();
    if base_b.cols() != base_c.rows() || base_c.cols() != n {
        return Err(Error::Contract("base decoder and encoder shapes disagree".into()));
    }
    if base_b.matmul(base_c).rel_error(&prefix_workload(n)) > 1e-8 {
        return Err(Error::UnsupportedWorkload(
            "restarted decoding needs a prefix-sum base factorization".into(),
        ));
    }
    let m = base_b.cols();
    let last = base_b.row(n - 1);
    let mut out = Matrix::zeros(s * n, s * m);
    for r in 0..s {
        for i in 0..n {
            let row = out.row_mut(r * n + i);
            for q in 0..r {
                row[q * m..(q + 1) * m].copy_from_slice(last);
            }
            row[r * m..(r + 1) * m].copy_from_slice(base_b.row(i));
        }
    }
    Ok(out)
}

/// `A C_stamped^+` for any workload `A`.
pub fn optimal_stamp_decoder(a: &Matrix, stamped_c: &Matrix) -> Result<Matrix> {
    min_norm_decoder(a, stamped_c)
}

/// `A blockdiag(base_c^+, ..., base_c^+)`, computed one block at a time.
pub fn optimal_stamp_decoder_blocks(a: &Matrix, base_c: &Matrix, s: usize) -> Result<Matrix> {
    let (m, n) = base_c.shape();
    if s == 0 || a.cols() != n * s {
        return Err(Error::Contract(format!(
            "workload has {} columns, expected {} stamps of {n}",
            a.cols(),
            s
        )));
    }
    let cp = if m >= n {
        min_norm_decoder(&Matrix::identity(n), base_c)?
    } else {
        pinv(base_c)
    };
    let check = cp.matmul(base_c).max_abs_diff(&Matrix::identity(n));
    if check > 1e-8 {
        return Err(Error::RankDeficient(format!("stamped encoder has no left inverse ({check:e})")));
    }
    let mut out = Matrix::zeros(a.rows(), s * m);
    for q in 0..s {
        let idx: Vec<usize> = (q * n..(q + 1) * n).collect();
        let block = a.select_columns(&idx).matmul(&cp);
        for i in 0..a.rows() {
            out.row_mut(i)[q * m..(q + 1) * m].copy_from_slice(block.row(i));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Restart,
    Optimal,
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Restart => "restart",
            Self::Optimal => "optimal",
        })
    }
}

/// Mechanism families for stamp sweeps on the prefix-sum workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Completed online tree decoder, restarted across stamps.
    OnlineHonaker,
    /// Tree encoder with the least-norm decoder.
    OptimalHonaker,
    /// Real FFT factorization, restarted across stamps.
    Fft,
    /// FFT encoder with the least-norm decoder.
    FftOptimal,
    /// Optimal single-participation factorization of each block, least-norm decoder.
    MfSingle,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::OnlineHonaker, Family::OptimalHonaker, Family::Fft, Family::FftOptimal, Family::MfSingle];

    pub fn decoder_kind(self) -> DecoderKind {
        match self {
            Family::OnlineHonaker | Family::Fft => DecoderKind::Restart,
            _ => DecoderKind::Optimal,
        }
    }

    /// Sensitivity method used for the stamped encoder.
    pub fn sens_method(self) -> SensMethod {
        match self {
            Family::Fft | Family::FftOptimal => SensMethod::Upper,
            _ => SensMethod::Nonneg,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::OnlineHonaker => "online_honaker",
            Family::OptimalHonaker => "optimal_honaker",
            Family::Fft => "fft",
            Family::FftOptimal => "fft_optimal",
            Family::MfSingle => "mf_k1",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.label() == s || f.label().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mechanism family `{s}`")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Stamped mechanism for the prefix-sum workload on `s * base_n` steps.
#[derive(Debug, Clone)]
pub struct StampedMechanism {
    pub family: Family,
    pub base_n: usize,
    pub s: usize,
    pub b: Matrix,
    pub c: Matrix,
}

/// Builds the family's base encoder on `base_n` steps and stamps it `s` times.
pub fn build_stamped(family: Family, base_n: usize, s: usize) -> Result<StampedMechanism> {
    let total = base_n * s;
    let (base_b, base_c) = match family {
        Family::OnlineHonaker | Family::OptimalHonaker => {
            let (spec, _) = tree_encoder(base_n)?;
            let c = spec.embedded();
            let b = if family == Family::OnlineHonaker {
                online_honaker_decoder(base_n, true)?
            } else {
                Matrix::zeros(0, 0)
            };
            (b, c)
        }
        Family::Fft | Family::FftOptimal => {
            let c = real_fft_encoder(base_n)?;
            let b = if family == Family::Fft { fft_decoder(base_n)? } else { Matrix::zeros(0, 0) };
            (b, c)
        }
        Family::MfSingle => {
            let schema = ParticipationSchema::single(base_n);
            let opts = SolveOptions { method: Method::FixedPoint, gap_tol: 1e-4, ..Default::default() };
            let st = solve_with_gram(&prefix_workload(base_n).gram(), &schema, ConstraintMode::FullCorners, &opts)?;
            let c = crate::optfact::extract_factorization(&st.x_primal, &prefix_workload(base_n), &schema)?.c;
            (Matrix::zeros(0, 0), c)
        }
    };
    let b = match family.decoder_kind() {
        DecoderKind::Restart => restart_decoder(&base_b, &base_c, s)?,
        DecoderKind::Optimal => optimal_stamp_decoder_blocks(&prefix_workload(total), &base_c, s)?,
    };
    let c = stamp_encoder(&base_c, s)?;
    Ok(StampedMechanism { family, base_n, s, b, c })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StampRow {
    pub family: Family,
    pub s: usize,
    pub base_n: usize,
    pub loss: f64,
    pub sens: f64,
    pub sens_method: SensMethod,
    pub decoder_kind: DecoderKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StampSweep {
    pub rows: Vec<StampRow>,
    /// Candidates that do not divide the number of steps.
    pub skipped: Vec<usize>,
}

impl StampSweep {
    /// Row with the smallest loss.
    pub fn argmin(&self) -> Option<&StampRow> {
        self.rows.iter().min_by(|a, b| a.loss.total_cmp(&b.loss))
    }
}

/// Loss of `family` stamped `s` times under `schema`.
pub fn stamp_row(family: Family, schema: &ParticipationSchema, s: usize) -> Result<StampRow> {
    let n_total = schema.n;
    if s == 0 || !n_total.is_multiple_of(s) {
        return Err(Error::InvalidArgument(format!("{s} stamps do not divide {n_total} steps")));
    }
    let mech = build_stamped(family, n_total / s, s)?;
    let sens = match sensitivity(&mech.c, schema, family.sens_method()) {
        Err(Error::NonnegViolated { .. }) => sensitivity(&mech.c, schema, SensMethod::Brute)?,
        other => other?,
    };
    Ok(StampRow {
        family,
        s,
        base_n: n_total / s,
        loss: sens.value * sens.value * mech.b.frobenius_norm_sq(),
        sens: sens.value,
        sens_method: sens.method,
        decoder_kind: family.decoder_kind(),
    })
}

/// Losses of `family` for every candidate stamp count dividing `schema.n`.
pub fn sweep_stamps(
    family: Family,
    schema: &ParticipationSchema,
    candidates: &[usize],
    exec: Execution,
) -> Result<StampSweep> {
    let (valid, skipped): (Vec<usize>, Vec<usize>) =
        candidates.iter().partition(|&&s| s > 0 && schema.n.is_multiple_of(s));
    for s in &skipped {
        log::warn!("skipping {s} stamps: does not divide {} steps", schema.n);
    }
    let rows = exec.map(&valid, |&s| stamp_row(family, schema, s));
    Ok(StampSweep { rows: rows.into_iter().collect::<Result<_>>()?, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::participation::{make_schema, sens_brute, sens_nonneg_fastpath};

    #[test]
    fn tree_examples() {
        let (t, e) = tree_encoder(1).unwrap();
        assert_eq!((t.leaves, t.node_count), (1, 1));
        assert_eq!(t.encoder.as_slice(), &[1.0]);
        assert_eq!(e, Matrix::identity(1));
        let (t, _) = tree_encoder(2).unwrap();
        assert_eq!(t.encoder.as_slice(), &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let (t, e) = tree_encoder(3).unwrap();
        assert_eq!((t.leaves, t.node_count), (4, 7));
        assert_eq!(e.shape(), (4, 3));
        let touched: Vec<usize> = (0..7).filter(|&r| t.encoder[(r, 3)] == 1.0).collect();
        assert_eq!(touched, vec![3, 5, 6]);
    }

    #[test]
    fn honaker_two_steps() {
        let d = online_honaker_decoder(2, true).unwrap();
        // Step 2: root with 2/3, each leaf with 1/3.
        assert_eq!(d.row(0), &[1.0, 0.0, 0.0]);
        let want = [1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        assert!(d.row(1).iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn honaker_reconstructs_and_completion_helps() {
        for n in [1, 2, 3, 5, 8, 11, 16, 27] {
            let (t, _) = tree_encoder(n).unwrap();
            let s = prefix_workload(n);
            for completed in [false, true] {
                let d = online_honaker_decoder(n, completed).unwrap();
                assert!(d.matmul(&t.embedded()).rel_error(&s) < 1e-12, "n={n}");
            }
            let a = online_honaker_decoder(n, false).unwrap();
            let b = online_honaker_decoder(n, true).unwrap();
            let last = |m: &Matrix| m.row(n - 1).iter().map(|v| v * v).sum::<f64>();
            assert!(last(&b) <= last(&a));
            if n.is_power_of_two() {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn stamping_examples() {
        assert_eq!(stamp_encoder(&Matrix::identity(1), 3).unwrap(), Matrix::identity(3));
        let b = restart_decoder(&Matrix::identity(1), &Matrix::identity(1), 2).unwrap();
        assert_eq!(b.as_slice(), &[1.0, 0.0, 1.0, 1.0]);
        let err = restart_decoder(&Matrix::identity(2), &Matrix::identity(2), 2).unwrap_err();
        assert!(matches!(err, Error::UnsupportedWorkload(_)));
    }

    #[test]
    fn stamped_families_reconstruct() {
        for family in Family::ALL {
            for (base, s) in [(3, 1), (3, 2), (4, 3)] {
                let m = build_stamped(family, base, s).unwrap();
                let a = prefix_workload(base * s);
                assert!(m.b.matmul(&m.c).rel_error(&a) < 1e-9, "{family} {base}x{s}");
            }
        }
    }

    #[test]
    fn tree_sensitivity_paths_agree() {
        let (t, _) = tree_encoder(12).unwrap();
        let c = t.embedded();
        let schema = make_schema(12, 3, 4).unwrap();
        let a = sens_nonneg_fastpath(&c, &schema).unwrap();
        assert!((a - sens_brute(&c, &schema).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sweep_skips_non_divisors() {
        let schema = make_schema(12, 3, 4).unwrap();
        let sw = sweep_stamps(Family::OnlineHonaker, &schema, &[1, 5, 3], Execution::Sequential).unwrap();
        assert_eq!(sw.skipped, vec![5]);
        assert_eq!(sw.rows.len(), 2);
        let opt = sweep_stamps(Family::OptimalHonaker, &schema, &[1, 3], Execution::Sequential).unwrap();
        for (o, r) in opt.rows.iter().zip(&sw.rows) {
            assert!(o.loss <= r.loss * (1.0 + 1e-12));
        }
    }
}
