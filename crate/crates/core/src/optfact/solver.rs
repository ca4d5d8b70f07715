use std::collections::VecDeque;

use super::dual::{evaluate, Evaluation};
use super::extract::{extract_with_method, Factorization};
use super::{ConstraintMode, ConstraintSet, DualState};
use crate::error::{Error, Result};
use crate::matcore::{cholesky, spd_solve, Matrix};
use crate::participation::ParticipationSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Fixed-point iteration for single participation, projected gradient otherwise.
    Auto,
    /// Projected gradient ascent (Barzilai-Borwein steps, nonmonotone Armijo
    /// backtracking) with a projected Newton phase near the optimum.
    ProjectedGradient,
    /// Multiplicative update `v_u <- v_u u^T X(v) u`. Full-corner mode only.
    FixedPoint,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target for `(primal - dual) / primal`.
    pub gap_tol: f64,
    pub max_iter: usize,
    pub method: Method,
    /// Largest number of multipliers for which the Newton phase is attempted.
    pub newton_max_vars: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-6, max_iter: 50_000, method: Method::Auto, newton_max_vars: 800 }
    }
}

struct Primal {
    value: f64,
    x: Matrix,
}

/// Feasible point built from `x`: negative entries on constrained pairs are lifted by
/// a nonnegative symmetric `N` plus `diag(N 1)`, which keeps the point above `x` in
/// the PSD order, and the result is scaled onto the constraint boundary.
fn primal(m: &Matrix, cs: &ConstraintSet, x: &Matrix) -> Result<Primal> {
    let mut xr = x.clone();
    for &(i, j) in &cs.pairs {
        let v = x[(i, j)];
        if v < 0.0 {
            xr[(i, j)] = 0.0;
            xr[(j, i)] = 0.0;
            xr[(i, i)] -= v;
            xr[(j, j)] -= v;
        }
    }
    let s = cs.max_corner_value(&xr);
    if !(s > 0.0) {
        return Err(Error::Internal("corner values vanish".into()));
    }
    let y = spd_solve(&xr, m)?;
    let value = y.trace() * s;
    xr.scale_in_place(1.0 / s);
    Ok(Primal { value, x: xr })
}

struct Tracker {
    vars: Vec<f64>,
    eval: Evaluation,
    primal: Option<Primal>,
    iterations: usize,
    rescues: usize,
}

impl Tracker {
    fn dual(&self) -> f64 {
        self.eval.dual
    }

    fn primal_value(&self) -> f64 {
        self.primal.as_ref().map_or(f64::INFINITY, |p| p.value)
    }

    fn rel_gap(&self) -> f64 {
        let p = self.primal_value();
        (p - self.dual()) / p.abs().max(f64::MIN_POSITIVE)
    }

    fn offer_dual(&mut self, vars: &[f64], eval: &Evaluation) {
        if eval.rescued {
            self.rescues += 1;
        }
        if eval.dual > self.eval.dual {
            self.vars.clear();
            self.vars.extend_from_slice(vars);
            self.eval = eval.clone();
        }
    }

    fn offer_primal(&mut self, m: &Matrix, cs: &ConstraintSet, x: &Matrix) {
        if let Ok(p) = primal(m, cs, x) {
            if p.value < self.primal_value() {
                self.primal = Some(p);
            }
        }
        debug_assert!(
            self.dual() <= self.primal_value() * (1.0 + 1e-9) + 1e-12,
            "weak duality violated: dual {} > primal {}",
            self.dual(),
            self.primal_value()
        );
    }
}

fn initial_vars(cs: &ConstraintSet) -> Vec<f64> {
    let mut vars = vec![1.0; cs.corners.len()];
    if !cs.pairs.is_empty() {
        // Pair multipliers inside each nonnegative corner make U = v (I + J) / 2 per pattern.
        let mut same = vec![usize::MAX; cs.n];
        for (c, corner) in cs.corners.iter().enumerate() {
            for &(i, _) in corner {
                same[i] = c;
            }
        }
        vars.extend(cs.pairs.iter().map(|&(i, j)| if same[i] == same[j] { 1.0 } else { 0.0 }));
    }
    vars
}

/// Scales the multipliers by the maximizer of `t -> 2 sqrt(t) T - t S`.
fn rescale(m: &Matrix, cs: &ConstraintSet, vars: &mut [f64], eval: &mut Evaluation) -> Result<()> {
    let s: f64 = vars[..cs.corners.len()].iter().sum();
    if s <= 0.0 {
        return Ok(());
    }
    let t = (eval.sqrt_trace / s).powi(2);
    if t.is_finite() && t > 0.0 {
        vars.iter_mut().for_each(|x| *x *= t);
        *eval = evaluate(m, cs, vars)?;
    }
    Ok(())
}

/// Solves for the optimal factorization of `a` under `schema` and `mode`.
pub fn solve(
    a: &Matrix,
    schema: &ParticipationSchema,
    mode: ConstraintMode,
    opts: &SolveOptions,
) -> Result<(Factorization, DualState)> {
    if !a.is_square() || a.rows() != schema.n {
        return Err(Error::Contract(format!(
            "workload is {}x{} but the schema has {} steps",
            a.rows(),
            a.cols(),
            schema.n
        )));
    }
    if (0..a.rows()).any(|i| a[(i, i)] == 0.0) || !a.is_lower_triangular(0.0) {
        return Err(Error::Contract("workload must be lower triangular with nonzero diagonal".into()));
    }
    let state = solve_with_gram(&a.gram(), schema, mode, opts)?;
    let f = extract_with_method(&state.x_primal, a, schema, mode.sens_method())?;
    Ok((f, state))
}

/// Dual solve given `m = A^T A`; returns the state even when it only reports progress.
pub fn solve_with_gram(
    m: &Matrix,
    schema: &ParticipationSchema,
    mode: ConstraintMode,
    opts: &SolveOptions,
) -> Result<DualState> {
    if !m.is_square() || m.rows() != schema.n {
        return Err(Error::Contract("A^T A does not match the schema".into()));
    }
    let cs = ConstraintSet::new(schema, mode)?;
    let method = match opts.method {
        Method::Auto if mode == ConstraintMode::FullCorners && schema.k == 1 => Method::FixedPoint,
        Method::Auto => Method::ProjectedGradient,
        Method::FixedPoint if mode != ConstraintMode::FullCorners => {
            return Err(Error::InvalidArgument("the fixed-point method needs full-corner mode".into()))
        }
        other => other,
    };
    let mut vars = initial_vars(&cs);
    let mut eval = evaluate(m, &cs, &vars)?;
    rescale(m, &cs, &mut vars, &mut eval)?;
    let mut tr = Tracker { vars: vars.clone(), eval: eval.clone(), primal: None, iterations: 0, rescues: 0 };
    tr.offer_primal(m, &cs, &eval.x);

    match method {
        Method::FixedPoint => fixed_point(m, &cs, opts, &mut tr, vars, eval)?,
        _ => projected_gradient(m, &cs, opts, &mut tr, vars, eval)?,
    }
    let state = finish(m, &cs, schema, tr, opts.gap_tol)?;
    if !state.converged {
        return Err(Error::NotConverged(Box::new(state)));
    }
    Ok(state)
}

fn primal_check_every(n: usize) -> usize {
    if n <= 200 {
        1
    } else {
        5
    }
}

fn fixed_point(
    m: &Matrix,
    cs: &ConstraintSet,
    opts: &SolveOptions,
    tr: &mut Tracker,
    mut vars: Vec<f64>,
    mut eval: Evaluation,
) -> Result<()> {
    let every = primal_check_every(cs.n);
    // Over-relaxed update v_u <- v_u (u^T X u)^omega; omega shrinks back toward the
    // plain iteration whenever the dual fails to increase.
    let mut omega: f64 = 2.0;
    for it in 1..=opts.max_iter {
        tr.iterations = it;
        loop {
            let trial: Vec<f64> =
                vars.iter().zip(&eval.grad).map(|(v, g)| v * (1.0 + g).max(0.0).powf(omega)).collect();
            let next = evaluate(m, cs, &trial);
            match next {
                Ok(e) if e.dual >= eval.dual || omega == 1.0 => {
                    vars = trial;
                    eval = e;
                    omega = (omega * 1.2).min(6.0);
                    break;
                }
                Err(err) if omega == 1.0 => return Err(err),
                _ => omega = (omega / 2.0).max(1.0),
            }
        }
        tr.offer_dual(&vars, &eval);
        if it % every == 0 {
            tr.offer_primal(m, cs, &eval.x);
            if tr.rel_gap() <= opts.gap_tol {
                return Ok(());
            }
        }
    }
    Ok(())
}

fn projected_gradient(
    m: &Matrix,
    cs: &ConstraintSet,
    opts: &SolveOptions,
    tr: &mut Tracker,
    mut vars: Vec<f64>,
    mut eval: Evaluation,
) -> Result<()> {
    let nv = vars.len();
    let every = primal_check_every(cs.n);
    let mut history: VecDeque<f64> = VecDeque::from([eval.dual]);
    let gmax = eval.grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-12);
    let xmax = vars.iter().fold(0.0f64, |a, v| a.max(*v)).max(1e-12);
    let mut alpha = 0.1 * xmax / gmax;
    let mut newton_ok = nv <= opts.newton_max_vars;
    let mut stalls = 0;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        tr.iterations = it;
        if it % every == 0 {
            tr.offer_primal(m, cs, &eval.x);
            if tr.rel_gap() <= opts.gap_tol {
                return Ok(());
            }
        }
        if newton_ok && (tr.rel_gap() < 1e-3 || stalls > 0) {
            let (v2, e2, steps, done) = newton_phase(m, cs, opts, tr, vars.clone(), eval.clone())?;
            it += steps;
            tr.iterations = it;
            if done {
                return Ok(());
            }
            newton_ok = false;
            vars = v2;
            eval = e2;
            history.clear();
            history.push_back(eval.dual);
        }

        let dir: Vec<f64> =
            (0..nv).map(|i| (vars[i] + alpha * eval.grad[i]).max(0.0) - vars[i]).collect();
        let slope: f64 = dir.iter().zip(&eval.grad).map(|(d, g)| d * g).sum();
        if !(slope > 0.0) {
            break;
        }
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = (0..nv).map(|i| (vars[i] + lambda * dir[i]).max(0.0)).collect();
            if let Ok(e) = evaluate(m, cs, &trial) {
                if e.dual >= reference + 1e-4 * lambda * slope {
                    break Some((trial, e));
                }
            }
            lambda *= 0.5;
            if lambda < 1e-16 {
                break None;
            }
        };
        let Some((trial, e)) = accepted else {
            stalls += 1;
            if stalls > 3 {
                break;
            }
            alpha *= 1e-3;
            history.clear();
            history.push_back(eval.dual);
            continue;
        };
        let s: Vec<f64> = trial.iter().zip(&vars).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = e.grad.iter().zip(&eval.grad).map(|(a, b)| a - b).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        alpha = if sy < 0.0 { ss / -sy } else { alpha * 1e3 };
        alpha = alpha.clamp(1e-12 * xmax / gmax, 1e12 * xmax / gmax);
        vars = trial;
        eval = e;
        tr.offer_dual(&vars, &eval);
        history.push_back(eval.dual);
        if history.len() > 10 {
            history.pop_front();
        }
    }
    tr.offer_primal(m, cs, &eval.x);
    Ok(())
}

/// Projected Newton steps with a finite-difference Hessian of the dual.
/// Returns the final point, the number of steps, and whether the gap target was met.
fn newton_phase(
    m: &Matrix,
    cs: &ConstraintSet,
    opts: &SolveOptions,
    tr: &mut Tracker,
    mut vars: Vec<f64>,
    mut eval: Evaluation,
) -> Result<(Vec<f64>, Evaluation, usize, bool)> {
    let nv = vars.len();
    let mut steps = 0;
    for _ in 0..60 {
        steps += 1;
        let vmax = vars.iter().fold(0.0f64, |a, v| a.max(*v));
        let floor = 1e-12 * vmax;
        let free: Vec<usize> =
            (0..nv).filter(|&i| vars[i] > floor || eval.grad[i] > 0.0).collect();
        if free.is_empty() {
            break;
        }
        let nf = free.len();
        let mut h = Matrix::zeros(nf, nf);
        for (col, &j) in free.iter().enumerate() {
            let step = 1e-5 * vars[j].max(1e-4 * vmax).max(1e-12);
            let mut plus = vars.clone();
            plus[j] += step;
            let ep = evaluate(m, cs, &plus)?;
            let mut minus = vars.clone();
            minus[j] -= step;
            let central = minus[j] >= 0.0;
            let em = if central { evaluate(m, cs, &minus).ok() } else { None };
            for (row, &i) in free.iter().enumerate() {
                h[(row, col)] = match &em {
                    Some(em) => (ep.grad[i] - em.grad[i]) / (2.0 * step),
                    None => (ep.grad[i] - eval.grad[i]) / step,
                };
            }
        }
        h.symmetrize();
        // Solve (-H + mu I) d = g on the free set.
        let neg_h = h.scale(-1.0);
        let scale = (0..nf).map(|i| neg_h[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
        let g_free = Matrix::from_fn(nf, 1, |i, _| eval.grad[free[i]]);
        let mut mu = 0.0;
        let dir = loop {
            let mut shifted = neg_h.clone();
            for i in 0..nf {
                shifted[(i, i)] += mu;
            }
            if cholesky(&shifted).is_ok() {
                if let Ok(d) = spd_solve(&shifted, &g_free) {
                    break Some(d.into_vec());
                }
            }
            mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
            if mu > 1e6 * scale {
                break None;
            }
        };
        let Some(dir) = dir else { break };
        let slope: f64 = dir.iter().zip(&free).map(|(d, &i)| d * eval.grad[i]).sum();
        let mut lambda = 1.0;
        let mut next = None;
        while lambda > 1e-8 {
            let mut trial = vars.clone();
            for (d, &i) in dir.iter().zip(&free) {
                trial[i] = (trial[i] + lambda * d).max(0.0);
            }
            if let Ok(e) = evaluate(m, cs, &trial) {
                let tol = 1e-13 * eval.dual.abs();
                if e.dual >= eval.dual + 1e-4 * lambda * slope - tol {
                    next = Some((trial, e));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, e)) = next else { break };
        let improved = e.dual > eval.dual;
        vars = trial;
        eval = e;
        tr.offer_dual(&vars, &eval);
        tr.offer_primal(m, cs, &eval.x);
        if tr.rel_gap() <= opts.gap_tol {
            return Ok((vars, eval, steps, true));
        }
        if !improved && lambda < 1.0 {
            break;
        }
    }
    Ok((vars, eval, steps, false))
}

fn finish(
    m: &Matrix,
    cs: &ConstraintSet,
    schema: &ParticipationSchema,
    mut tr: Tracker,
    gap_tol: f64,
) -> Result<DualState> {
    let x_eval = tr.eval.x.clone();
    tr.offer_primal(m, cs, &x_eval);
    let Some(p) = tr.primal.take() else {
        return Err(Error::Internal("no feasible primal point was produced".into()));
    };
    let nc = cs.corners.len();
    let (v, w) = tr.vars.split_at(nc);
    let vmax = v.iter().fold(0.0f64, |a, b| a.max(*b));
    let kkt_residual = (0..nc)
        .filter(|&c| v[c] > 1e-8 * vmax)
        .map(|c| tr.eval.grad[c].abs())
        .fold(0.0, f64::max);
    let pairs = schema.pairs();
    let min_pair_entry = pairs.iter().map(|&(i, j)| p.x[(i, j)]).fold(f64::INFINITY, f64::min);
    let dual_value = tr.eval.dual;
    let gap = p.value - dual_value;
    let rel_gap = gap / p.value.abs().max(f64::MIN_POSITIVE);
    Ok(DualState {
        mode: cs.mode,
        v: v.to_vec(),
        w: w.to_vec(),
        u: tr.eval.u,
        x: tr.eval.x,
        min_x_entry: p.x.min_entry(),
        min_pair_entry,
        x_primal: p.x,
        dual_value,
        primal_value: p.value,
        gap,
        rel_gap,
        iterations: tr.iterations,
        converged: rel_gap <= gap_tol,
        kkt_residual,
        rescues: tr.rescues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::participation::make_schema;
    use crate::workloads::{momentum_workload, prefix_workload};

    #[test]
    fn identity_workload_has_loss_n() {
        let schema = make_schema(4, 1, 4).unwrap();
        let (f, st) = solve(&Matrix::identity(4), &schema, ConstraintMode::FullCorners, &SolveOptions::default())
            .unwrap();
        assert!((st.primal_value - 4.0).abs() < 1e-6);
        assert!((f.loss() - 4.0).abs() < 1e-5);
        assert!(f.c.gram().max_abs_diff(&Matrix::identity(4)) < 1e-6);
    }

    #[test]
    fn small_table_values() {
        let schema = make_schema(6, 3, 2).unwrap();
        let opts = SolveOptions::default();
        let prefix = prefix_workload(6);
        let mom = momentum_workload(6, 0.95).unwrap();
        let want = [16.114, 16.131, 16.134];
        for (mode, w) in ConstraintMode::ALL.into_iter().zip(want) {
            let (f, st) = solve(&prefix, &schema, mode, &opts).unwrap();
            assert!((f.loss().sqrt() - 6.461).abs() < 0.005, "{mode} {}", f.loss().sqrt());
            assert!(st.rel_gap <= 1e-6);
            let (f, st) = solve(&mom, &schema, mode, &opts).unwrap();
            assert!((f.loss().sqrt() - w).abs() < 0.02, "{mode} {}", f.loss().sqrt());
            assert!(f.reconstruction_error(&mom) < 1e-8);
            assert!((f.sens - 1.0).abs() < 1e-6);
            assert!(st.dual_value <= st.primal_value);
        }
    }

    #[test]
    fn fixed_point_single_participation() {
        let schema = ParticipationSchema::single(12);
        let opts = SolveOptions { method: Method::FixedPoint, ..Default::default() };
        let st = solve_with_gram(&prefix_workload(12).gram(), &schema, ConstraintMode::FullCorners, &opts).unwrap();
        let pg = SolveOptions { method: Method::ProjectedGradient, ..Default::default() };
        let st2 = solve_with_gram(&prefix_workload(12).gram(), &schema, ConstraintMode::FullCorners, &pg).unwrap();
        assert!((st.primal_value - st2.primal_value).abs() < 1e-5 * st.primal_value);
        let bad = SolveOptions { method: Method::FixedPoint, ..Default::default() };
        let s2 = make_schema(4, 2, 2).unwrap();
        assert!(solve_with_gram(&prefix_workload(4).gram(), &s2, ConstraintMode::PairwiseNonneg, &bad).is_err());
    }
}
