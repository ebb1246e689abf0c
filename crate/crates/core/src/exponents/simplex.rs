//! Dense two-phase primal simplex for the small linear programs that show up
//! as linear-minimization oracles and feasibility probes.
//!
//! Problem sizes here are tiny (tens of variables, a handful of rows), so a
//! plain dense tableau with Bland's anti-cycling rule is both simple and exact
//! enough. Not intended as a general-purpose LP solver.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) struct Lp {
    /// Objective coefficients; the solver minimizes `c . x` over `x >= 0`.
    pub c: Vec<f64>,
    /// Constraint rows `(coeffs, relation, rhs)`.
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

/// Solves the LP by the two-phase tableau method with Bland's rule.
pub(crate) fn solve_lp(lp: &Lp) -> LpOutcome {
    let n = lp.c.len();
    let m = lp.rows.len();

    // Normalize to nonnegative right-hand sides.
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = lp.rows.clone();
    for (coeffs, rel, rhs) in rows.iter_mut() {
        debug_assert_eq!(coeffs.len(), n);
        if *rhs < 0.0 {
            for c in coeffs.iter_mut() {
                *c = -*c;
            }
            *rhs = -*rhs;
            *rel = match *rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
    }

    let n_slack = rows
        .iter()
        .filter(|(_, rel, _)| matches!(rel, Rel::Le | Rel::Ge))
        .count();
    let n_art = rows
        .iter()
        .filter(|(_, rel, _)| matches!(rel, Rel::Ge | Rel::Eq))
        .count();
    let total = n + n_slack + n_art;

    // Tableau: m constraint rows, then the phase-2 objective row, then the
    // phase-1 objective row. Column `total` is the RHS.
    let width = total + 1;
    let mut t = vec![vec![0.0f64; width]; m + 2];
    let obj = m;
    let art_obj = m + 1;
    let mut basis = vec![0usize; m];

    let mut slack_idx = n;
    let mut art_idx = n + n_slack;
    let mut artificial_cols: Vec<usize> = Vec::new();
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(coeffs);
        t[i][total] = *rhs;
        match rel {
            Rel::Le => {
                t[i][slack_idx] = 1.0;
                basis[i] = slack_idx;
                slack_idx += 1;
            }
            Rel::Ge => {
                t[i][slack_idx] = -1.0;
                slack_idx += 1;
                t[i][art_idx] = 1.0;
                basis[i] = art_idx;
                artificial_cols.push(art_idx);
                art_idx += 1;
            }
            Rel::Eq => {
                t[i][art_idx] = 1.0;
                basis[i] = art_idx;
                artificial_cols.push(art_idx);
                art_idx += 1;
            }
        }
    }

    // Phase-2 objective row (reduced costs maintained by pivoting).
    t[obj][..n].copy_from_slice(&lp.c);

    // Phase-1 objective: minimize the sum of artificials. Express it in terms
    // of non-basic variables by subtracting the artificial rows.
    if n_art > 0 {
        for &col in &artificial_cols {
            t[art_obj][col] = 1.0;
        }
        for i in 0..m {
            if artificial_cols.contains(&basis[i]) {
                for j in 0..width {
                    t[art_obj][j] -= t[i][j];
                }
            }
        }
        if !run_simplex(&mut t, &mut basis, art_obj, total, &[]) {
            // Phase 1 of a bounded-below objective cannot be unbounded.
            return LpOutcome::Infeasible;
        }
        if -t[art_obj][total] > FEAS_TOL {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            if artificial_cols.contains(&basis[i]) {
                let mut entering = None;
                for j in 0..n + n_slack {
                    if t[i][j].abs() > PIVOT_TOL {
                        entering = Some(j);
                        break;
                    }
                }
                if let Some(j) = entering {
                    pivot(&mut t, &mut basis, i, j);
                }
                // Otherwise the row is redundant; the artificial stays basic
                // at value zero and its column is blocked in phase 2.
            }
        }
    }

    if !run_simplex(&mut t, &mut basis, obj, total, &artificial_cols) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][total];
        }
    }
    let value = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, value }
}

/// Runs simplex iterations minimizing the objective stored in row
/// `obj_row`. Returns `false` when the objective is unbounded below.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    obj_row: usize,
    total: usize,
    blocked: &[usize],
) -> bool {
    let m = basis.len();
    loop {
        // Bland: entering column is the lowest index with negative reduced cost.
        let mut entering = None;
        for j in 0..total {
            if blocked.contains(&j) {
                continue;
            }
            if t[obj_row][j] < -PIVOT_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else {
            return true;
        };

        // Ratio test, lowest basis index breaking ties.
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i][col];
            if a > PIVOT_TOL {
                let ratio = t[i][total] / a;
                let better = match leaving {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12 || (ratio < lr + 1e-12 && basis[i] < basis[li])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leaving else {
            return false;
        };
        pivot(t, basis, row, col);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let width = t[row].len();
    let scale = t[row][col];
    for v in t[row].iter_mut() {
        *v /= scale;
    }
    t[row][col] = 1.0;
    for i in 0..t.len() {
        if i == row {
            continue;
        }
        let factor = t[i][col];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            let delta = factor * t[row][j];
            t[i][j] -= delta;
        }
        t[i][col] = 0.0;
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &Lp) -> (Vec<f64>, f64) {
        match solve_lp(lp) {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn simple_min_on_simplex() {
        // min 3a + b + 2c  s.t.  a + b + c = 1
        let lp = Lp {
            c: vec![3.0, 1.0, 2.0],
            rows: vec![(vec![1.0, 1.0, 1.0], Rel::Eq, 1.0)],
        };
        let (x, value) = optimal(&lp);
        assert!((value - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_with_coupling_inequality() {
        // Two simplex rows plus a budget: min -(a1 + b1)
        //   a0 + a1 = 1, b0 + b1 = 1, 2 a1 + b1 <= 1
        let lp = Lp {
            c: vec![0.0, -1.0, 0.0, -1.0],
            rows: vec![
                (vec![1.0, 1.0, 0.0, 0.0], Rel::Eq, 1.0),
                (vec![0.0, 0.0, 1.0, 1.0], Rel::Eq, 1.0),
                (vec![0.0, 2.0, 0.0, 1.0], Rel::Le, 1.0),
            ],
        };
        let (x, value) = optimal(&lp);
        // Best: b1 = 1 (uses the whole budget), a1 = 0.
        assert!((value + 1.0).abs() < 1e-12);
        assert!((x[3] - 1.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible() {
        let lp = Lp {
            c: vec![1.0],
            rows: vec![
                (vec![1.0], Rel::Ge, 2.0),
                (vec![1.0], Rel::Le, 1.0),
            ],
        };
        assert_eq!(solve_lp(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let lp = Lp {
            c: vec![-1.0, 0.0],
            rows: vec![(vec![0.0, 1.0], Rel::Le, 1.0)],
        };
        assert_eq!(solve_lp(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // x >= 2 written as -x <= -2.
        let lp = Lp {
            c: vec![1.0],
            rows: vec![(vec![-1.0], Rel::Le, -2.0)],
        };
        let (x, value) = optimal(&lp);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_equalities() {
        // Redundant constraint pair should still solve.
        let lp = Lp {
            c: vec![1.0, 2.0],
            rows: vec![
                (vec![1.0, 1.0], Rel::Eq, 1.0),
                (vec![2.0, 2.0], Rel::Eq, 2.0),
            ],
        };
        let (x, value) = optimal(&lp);
        assert!((value - 1.0).abs() < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12);
    }
}
