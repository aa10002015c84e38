//! Dense two-phase simplex method for small standard-form programs
//! `min c^T x  s.t.  A x = b, x >= 0`.
//!
//! Bland's rule is used for both the entering and the leaving variable, so
//! the method terminates on degenerate problems (which are the norm here:
//! coordinate polytopes have many zero entries at their vertices).

const PIVOT_EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) x (cols + 1); last row is the reduced cost row, last column the rhs
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                self.t[r * w + c] -= f * self.t[pr * w + c];
            }
        }
        self.basis[pr] = pc;
    }

    /// Simplex iterations over entering columns `< allowed`; `false` if unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        let obj = self.rows;
        loop {
            let Some(pc) = (0..allowed).find(|&j| self.at(obj, j) < -1e-10) else { return true };
            let mut best: Option<(f64, usize)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.at(r, self.cols) / a;
                    let better = match best {
                        None => true,
                        Some((br, brow)) => ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[r] < self.basis[brow]),
                    };
                    if better {
                        best = Some((ratio, r));
                    }
                }
            }
            match best {
                None => return false,
                Some((_, pr)) => self.pivot(pr, pc),
            }
        }
    }
}

/// Solves `min c^T x` subject to `A x = b`, `x >= 0`; `a` is given row-wise.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m, "rhs length");
    assert!(a.iter().all(|r| r.len() == n), "constraint width");
    let cols = n + m;
    let w = cols + 1;
    let mut tab = Tableau { rows: m, cols, t: vec![0.0; (m + 1) * w], basis: (n..n + m).collect() };
    for (r, row) in a.iter().enumerate() {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            tab.t[r * w + j] = sign * row[j];
        }
        tab.t[r * w + n + r] = 1.0;
        tab.t[r * w + cols] = sign * b[r];
    }
    // phase 1: minimize the sum of artificials
    for r in 0..m {
        for c in (0..n).chain([cols]) {
            tab.t[m * w + c] -= tab.t[r * w + c];
        }
    }
    tab.run(n);
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if -tab.at(m, cols) > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // drive zero-valued artificials out of the basis where a pivot exists;
    // rows where none exists are redundant and stay inert
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(pc) = (0..n).find(|&j| tab.at(r, j).abs() > 1e-9) {
                tab.pivot(r, pc);
            }
        }
    }
    // phase 2: reduced costs of the original objective
    for j in 0..w {
        tab.t[m * w + j] = if j < n { c[j] } else { 0.0 };
    }
    for r in 0..m {
        let bj = tab.basis[r];
        let cb = if bj < n { c[bj] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..w {
                tab.t[m * w + j] -= cb * tab.t[r * w + j];
            }
        }
    }
    if !tab.run(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.at(r, cols).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}

/// Any `x >= 0` with `A x = b`, or `None` if the system is infeasible.
pub fn feasible_point(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.first().map_or(0, |r| r.len());
    match minimize(&vec![0.0; n], a, b) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_program() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 (with slacks)
        let a = vec![vec![1.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 1.0, 0.0], vec![3.0, 2.0, 0.0, 0.0, 1.0]];
        let b = [4.0, 12.0, 18.0];
        let c = [-3.0, -5.0, 0.0, 0.0, 0.0];
        match minimize(&c, &a, &b) {
            LpOutcome::Optimal { x, objective } => {
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
                assert!((objective + 36.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x + y = -1 with x, y >= 0
        assert_eq!(minimize(&[0.0, 0.0], &[vec![1.0, 1.0]], &[-1.0]), LpOutcome::Infeasible);
        assert!(feasible_point(&[vec![1.0, 1.0]], &[-1.0]).is_none());
        // min -x with x - y = 0
        assert_eq!(minimize(&[-1.0, 0.0], &[vec![1.0, -1.0]], &[0.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        let a = vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0], vec![-1.0, 0.0, 1.0]];
        let b = [1.0, 2.0, -0.5];
        let x = feasible_point(&a, &b).unwrap();
        for (row, bi) in a.iter().zip(&b) {
            let v: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
            assert!((v - bi).abs() < 1e-9);
        }
        assert!(x.iter().all(|&v| v >= 0.0));
    }
}
