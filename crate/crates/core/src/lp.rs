//! Dense two-phase simplex for small linear programs with nonnegative,
//! optionally upper-bounded variables.

use crate::error::{Error, Result};
use std::fmt::Write as _;

const TOL: f64 = 1e-9;
const MAX_ITER: usize = 200_000;
const DEGENERATE_SWITCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn new(names: Vec<String>) -> Self {
        let n = names.len();
        LinearProgram {
            names,
            upper: vec![f64::INFINITY; n],
            objective: vec![0.0; n],
            maximize: false,
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { coeffs, sense, rhs });
    }

    /// Set a single-variable objective.
    pub fn set_objective(&mut self, var: usize, maximize: bool) {
        self.objective.iter_mut().for_each(|c| *c = 0.0);
        self.objective[var] = 1.0;
        self.maximize = maximize;
    }

    /// Line-oriented text form for cross-checks with external solvers.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let term = |s: &mut String, c: f64, v: &str, first: bool| {
            if first {
                let _ = write!(s, "{c:e} {v}");
            } else if c < 0.0 {
                let _ = write!(s, " - {:e} {v}", -c);
            } else {
                let _ = write!(s, " + {c:e} {v}");
            }
        };
        s.push_str(if self.maximize { "maximize\n  obj: " } else { "minimize\n  obj: " });
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, c, &self.names[j], first);
                first = false;
            }
        }
        s.push_str("\nsubject to\n");
        for (i, con) in self.constraints.iter().enumerate() {
            let _ = write!(s, "  c{i}: ");
            for (k, &(j, c)) in con.coeffs.iter().enumerate() {
                term(&mut s, c, &self.names[j], k == 0);
            }
            let op = match con.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {:e}", con.rhs);
        }
        s.push_str("bounds\n");
        for (j, name) in self.names.iter().enumerate() {
            if self.upper[j].is_finite() {
                let _ = writeln!(s, "  0 <= {name} <= {:e}", self.upper[j]);
            } else {
                let _ = writeln!(s, "  {name} >= 0");
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn solve(&self) -> Result<Solution> {
        let n = self.n_vars();
        let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        for con in &self.constraints {
            let mut a = vec![0.0; n];
            for &(j, c) in &con.coeffs {
                a[j] += c;
            }
            rows.push((a, con.sense, con.rhs));
        }
        // Column equilibration: x_j = y_j / col[j].
        let mut col = vec![0.0f64; n];
        for (a, _, _) in &rows {
            for (c, x) in col.iter_mut().zip(a) {
                *c = c.max(x.abs());
            }
        }
        col.iter_mut().filter(|c| **c == 0.0).for_each(|c| *c = 1.0);
        for (a, _, _) in rows.iter_mut() {
            a.iter_mut().zip(&col).for_each(|(x, c)| *x /= c);
        }
        for (j, &u) in self.upper.iter().enumerate() {
            if u.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                rows.push((a, Sense::Le, u * col[j]));
            }
        }
        for (a, sense, b) in rows.iter_mut() {
            let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if scale > 0.0 {
                a.iter_mut().for_each(|x| *x /= scale);
                *b /= scale;
            }
            if *b < 0.0 {
                a.iter_mut().for_each(|x| *x = -*x);
                *b = -*b;
                *sense = match *sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
        }
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let cost: Vec<f64> = self.objective.iter().zip(&col).map(|(c, s)| sign * c / s).collect();
        let (y, obj) = Tableau::build(&rows, n).run(&cost)?;
        let x = y.iter().zip(&col).map(|(v, s)| v / s).collect();
        Ok(Solution { x, objective: sign * obj })
    }
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_cols: usize,
    first_art: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn build(rows: &[(Vec<f64>, Sense, f64)], n: usize) -> Tableau {
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
        let first_art = n + n_slack;
        let n_cols = first_art + n_art;
        let w = n_cols + 1;
        let mut a = vec![0.0; m * w];
        let mut basis = vec![0; m];
        let (mut s, mut t) = (n, first_art);
        for (i, (coef, sense, b)) in rows.iter().enumerate() {
            a[i * w..i * w + n].copy_from_slice(coef);
            a[i * w + n_cols] = *b;
            match sense {
                Sense::Le => {
                    a[i * w + s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Sense::Ge => {
                    a[i * w + s] = -1.0;
                    s += 1;
                    a[i * w + t] = 1.0;
                    basis[i] = t;
                    t += 1;
                }
                Sense::Eq => {
                    a[i * w + t] = 1.0;
                    basis[i] = t;
                    t += 1;
                }
            }
        }
        Tableau { m, n_struct: n, n_cols, first_art, a, basis }
    }

    fn w(&self) -> usize {
        self.n_cols + 1
    }

    fn pivot(&mut self, r: usize, c: usize, z: &mut [f64]) {
        let w = self.w();
        let p = self.a[r * w + c];
        for k in 0..w {
            self.a[r * w + k] /= p;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for k in 0..w {
                    row[k] -= f * prow[k];
                }
                row[c] = 0.0;
            }
        }
        let f = z[c];
        if f != 0.0 {
            for k in 0..w {
                z[k] -= f * prow[k];
            }
            z[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimize with reduced-cost row `z` (last entry is minus the objective).
    fn optimize(&mut self, z: &mut [f64], allowed: usize) -> Result<()> {
        let w = self.w();
        let mut degenerate = 0;
        let mut bland = false;
        for _ in 0..MAX_ITER {
            bland |= degenerate > DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = -TOL;
            for j in 0..allowed {
                if z[j] < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = z[j];
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                let aij = self.a[i * w + c];
                if aij > TOL {
                    let rt = self.a[i * w + self.n_cols] / aij;
                    let better = match leave {
                        None => true,
                        Some(l) => rt < ratio - TOL || (rt <= ratio + TOL && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        ratio = rt;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { return Err(Error::Unbounded) };
            degenerate = if ratio.abs() <= TOL { degenerate + 1 } else { 0 };
            self.pivot(r, c, z);
        }
        Err(Error::IterationLimit)
    }

    fn run(mut self, cost: &[f64]) -> Result<(Vec<f64>, f64)> {
        let w = self.w();
        let mut z = vec![0.0; w];
        if self.first_art < self.n_cols {
            for j in self.first_art..self.n_cols {
                z[j] = 1.0;
            }
            for i in 0..self.m {
                if self.basis[i] >= self.first_art {
                    for k in 0..w {
                        z[k] -= self.a[i * w + k];
                    }
                }
            }
            self.optimize(&mut z, self.n_cols)?;
            let infeas = -z[self.n_cols];
            let scale = 1.0 + (0..self.m).map(|i| self.a[i * w + self.n_cols].abs()).fold(0.0, f64::max);
            if infeas > 1e-7 * scale {
                return Err(Error::Infeasible);
            }
            for i in 0..self.m {
                if self.basis[i] >= self.first_art {
                    if let Some(c) = (0..self.first_art).find(|&j| self.a[i * w + j].abs() > TOL) {
                        self.pivot(i, c, &mut z);
                    }
                }
            }
        }
        let mut z = vec![0.0; w];
        z[..self.n_struct].copy_from_slice(cost);
        for i in 0..self.m {
            let b = self.basis[i];
            if b < self.n_struct && cost[b] != 0.0 {
                let f = cost[b];
                for k in 0..w {
                    z[k] -= f * self.a[i * w + k];
                }
            }
        }
        self.optimize(&mut z, self.first_art)?;
        let mut x = vec![0.0; self.n_struct];
        for i in 0..self.m {
            if self.basis[i] < self.n_struct {
                x[self.basis[i]] = self.a[i * w + self.n_cols].max(0.0);
            }
        }
        let obj = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok((x, obj))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(names(2));
        lp.objective = vec![3.0, 5.0];
        lp.maximize = true;
        lp.add(vec![(0, 1.0)], Sense::Le, 4.0);
        lp.add(vec![(1, 2.0)], Sense::Le, 12.0);
        lp.add(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn phase_one_with_ge_and_eq() {
        // min x + y s.t. x + 2y >= 4, x - y = 1, x <= 10 -> x = 2, y = 1
        let mut lp = LinearProgram::new(names(2));
        lp.objective = vec![1.0, 1.0];
        lp.upper[0] = 10.0;
        lp.add(vec![(0, 1.0), (1, 2.0)], Sense::Ge, 4.0);
        lp.add(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(names(1));
        lp.upper[0] = 1.0;
        lp.add(vec![(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(lp.solve(), Err(Error::Infeasible));
        let mut lp = LinearProgram::new(names(1));
        lp.set_objective(0, true);
        assert_eq!(lp.solve(), Err(Error::Unbounded));
    }

    #[test]
    fn text_dump_lists_every_part() {
        let mut lp = LinearProgram::new(names(2));
        lp.set_objective(1, false);
        lp.upper[1] = 1.0;
        lp.add(vec![(0, 1.0), (1, -2.0)], Sense::Ge, 0.5);
        let t = lp.to_text();
        assert!(t.starts_with("minimize\n  obj: 1e0 x1"));
        assert!(t.contains("c0: 1e0 x0 - 2e0 x1 >= 5e-1"));
        assert!(t.contains("0 <= x1 <= 1e0") && t.contains("x0 >= 0") && t.ends_with("end\n"));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Many redundant constraints through the optimum.
        let mut lp = LinearProgram::new(names(3));
        lp.objective = vec![-1.0, -1.0, -1.0];
        for k in 1..30 {
            let f = k as f64;
            lp.add(vec![(0, f), (1, f), (2, f)], Sense::Le, f);
            lp.add(vec![(0, 1.0), (1, f)], Sense::Le, 1.0);
        }
        let s = lp.solve().unwrap();
        assert!((s.objective + 1.0).abs() < 1e-9);
    }
}
