//! Real-valued SOCP model: linear objective (maximize convention), linear
//! equalities, and second-order cone constraints of the form
//! `‖F y + g‖₂ ≤ fᵀ y + d`. One-dimensional cones (empty norm part) encode
//! plain nonnegativity of an affine form.
//!
//! Two modeling helpers cover the constructions the product-of-rates
//! reformulation needs:
//!
//! * [`ConeProgram::add_hyperbolic`] — `u v ≥ z²` with `u, v ≥ 0` as
//!   `‖[2z, u−v]ᵀ‖₂ ≤ u + v`,
//! * [`ConeProgram::add_geometric_mean_tree`] — a binary tree of hyperbolic
//!   constraints whose root is bounded by the geometric mean of the leaves
//!   (leaves padded with constant-1 variables up to the next power of two).

use std::fmt::Write as _;

use super::dense::Mat;

/// Sparse affine form `Σ coeff·y[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        Self { terms: vec![(i, 1.0)], constant: 0.0 }
    }

    pub fn term(i: usize, coeff: f64) -> Self {
        Self { terms: vec![(i, coeff)], constant: 0.0 }
    }

    pub fn plus_term(mut self, i: usize, coeff: f64) -> Self {
        self.terms.push((i, coeff));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Evaluates the form at a point.
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * y[i]).sum::<f64>() + self.constant
    }
}

/// `‖norm_rows‖₂ ≤ rhs`.
#[derive(Debug, Clone)]
pub struct SocConstraint {
    pub norm_rows: Vec<LinExpr>,
    pub rhs: LinExpr,
}

impl SocConstraint {
    /// Cone dimension in standard form (norm rows plus the rhs row).
    pub fn dim(&self) -> usize {
        self.norm_rows.len() + 1
    }

    /// Slack `rhs − ‖rows‖` at a point; nonnegative means satisfied.
    pub fn slack(&self, y: &[f64]) -> f64 {
        let norm = self.norm_rows.iter().map(|r| r.eval(y).powi(2)).sum::<f64>().sqrt();
        self.rhs.eval(y) - norm
    }
}

/// A real-valued second-order cone program. The objective is **maximized**;
/// the interior-point kernel flips the sign internally.
#[derive(Debug, Clone, Default)]
pub struct ConeProgram {
    num_vars: usize,
    /// Objective coefficients, maximize `objective · y`.
    objective: Vec<(usize, f64)>,
    /// Each entry is an affine form constrained to equal zero.
    equalities: Vec<LinExpr>,
    socs: Vec<SocConstraint>,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn num_socs(&self) -> usize {
        self.socs.len()
    }

    pub fn soc(&self, id: usize) -> &SocConstraint {
        &self.socs[id]
    }

    pub fn equality(&self, id: usize) -> &LinExpr {
        &self.equalities[id]
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        self.num_vars += count;
        start..self.num_vars
    }

    /// Adds `coeff` to the (maximized) objective coefficient of `var`.
    pub fn add_objective_term(&mut self, var: usize, coeff: f64) {
        assert!(var < self.num_vars);
        self.objective.push((var, coeff));
    }

    pub fn objective_coeffs(&self) -> &[(usize, f64)] {
        &self.objective
    }

    /// Objective value at a point.
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * y[i]).sum()
    }

    /// Constrains `expr == 0`. Returns the equality row index.
    pub fn add_equality(&mut self, expr: LinExpr) -> usize {
        self.check_expr(&expr);
        self.equalities.push(expr);
        self.equalities.len() - 1
    }

    /// Constrains `‖norm_rows‖₂ ≤ rhs`. Returns the cone constraint id.
    pub fn add_soc(&mut self, norm_rows: Vec<LinExpr>, rhs: LinExpr) -> usize {
        for r in &norm_rows {
            self.check_expr(r);
        }
        self.check_expr(&rhs);
        self.socs.push(SocConstraint { norm_rows, rhs });
        self.socs.len() - 1
    }

    /// Constrains `expr ≥ 0` as a one-dimensional cone.
    pub fn add_nonneg(&mut self, expr: LinExpr) -> usize {
        self.add_soc(Vec::new(), expr)
    }

    /// Hyperbolic constraint `u·v ≥ z²` (with `u, v ≥ 0` implied) as
    /// `‖[2z, u−v]ᵀ‖₂ ≤ u + v`.
    pub fn add_hyperbolic(&mut self, u: usize, v: usize, z: usize) -> usize {
        self.add_soc(
            vec![LinExpr::term(z, 2.0), LinExpr::term(u, 1.0).plus_term(v, -1.0)],
            LinExpr::term(u, 1.0).plus_term(v, 1.0),
        )
    }

    /// Binary tree of hyperbolic constraints over `leaves`, padded with
    /// constant-1 variables up to the next power of two. Returns the root
    /// variable, which satisfies `root ≤ (Π leaves · Π pads)^(1/2^q)` at any
    /// feasible point, with equality achievable; maximizing the root
    /// maximizes the product of the leaves.
    ///
    /// `K = 1` returns the single leaf and adds nothing.
    pub fn add_geometric_mean_tree(&mut self, leaves: &[usize]) -> usize {
        assert!(!leaves.is_empty());
        if leaves.len() == 1 {
            return leaves[0];
        }
        let padded = leaves.len().next_power_of_two();
        let mut level: Vec<usize> = leaves.to_vec();
        for _ in leaves.len()..padded {
            let one = self.add_var();
            self.add_equality(LinExpr::term(one, 1.0).plus_const(-1.0));
            level.push(one);
        }
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len() / 2);
            for pair in level.chunks(2) {
                let z = self.add_var();
                self.add_hyperbolic(pair[0], pair[1], z);
                next.push(z);
            }
            level = next;
        }
        level[0]
    }

    /// Worst violation of each constraint class at `y`: returns
    /// `(max |equality residual|, max cone violation)` where cone violation
    /// is `max(0, ‖rows‖ − rhs)`.
    pub fn point_violation(&self, y: &[f64]) -> (f64, f64) {
        let eq = self.equalities.iter().fold(0.0_f64, |m, e| m.max(e.eval(y).abs()));
        let cone = self.socs.iter().fold(0.0_f64, |m, c| m.max(-c.slack(y).min(0.0)));
        (eq, cone)
    }

    fn check_expr(&self, e: &LinExpr) {
        for &(i, _) in &e.terms {
            assert!(i < self.num_vars, "expression references variable {i}, but program has {}", self.num_vars);
        }
    }

    // -----------------------------------------------------------------
    // Standard conic form for the interior-point kernel:
    //   minimize qᵀy  s.t.  G y + s = h,  s ∈ {0}^eq × Π SOC(dᵢ)
    // with each SOC block laid out rhs-row first.
    // -----------------------------------------------------------------
    pub(crate) fn to_standard_form(&self) -> StandardForm {
        let n = self.num_vars;
        let m_eq = self.equalities.len();
        let soc_dims: Vec<usize> = self.socs.iter().map(SocConstraint::dim).collect();
        let m = m_eq + soc_dims.iter().sum::<usize>();

        let mut g = Mat::zeros(m, n);
        let mut h = vec![0.0; m];
        let mut q = vec![0.0; n];
        for &(i, c) in &self.objective {
            q[i] -= c; // maximize c·y == minimize (−c)·y
        }

        // Equality rows: expr == 0 becomes (terms)·y + s = −constant, s = 0.
        for (r, e) in self.equalities.iter().enumerate() {
            for &(i, c) in &e.terms {
                *g.at_mut(r, i) += c;
            }
            h[r] = -e.constant;
        }
        // Cone rows: ‖F y + g₀‖ ≤ fᵀy + d becomes
        //   (−f)·y + s₀ = d          (s₀ the cone head)
        //   (−F)·y + s₁. = g₀        (tail)
        let mut r = m_eq;
        for soc in &self.socs {
            for &(i, c) in &soc.rhs.terms {
                *g.at_mut(r, i) -= c;
            }
            h[r] = soc.rhs.constant;
            r += 1;
            for row in &soc.norm_rows {
                for &(i, c) in &row.terms {
                    *g.at_mut(r, i) -= c;
                }
                h[r] = row.constant;
                r += 1;
            }
        }
        StandardForm { g, h, q, m_eq, soc_dims }
    }

    // -----------------------------------------------------------------
    // Sparse-triplet text format
    //
    //   socp 1
    //   vars <n>
    //   obj <var> <coeff>            (per nonzero, maximize convention)
    //   eq <row> <var> <coeff>       (per nonzero of equality row)
    //   eqc <row> <constant>         (constant of equality row, if nonzero)
    //   soc <id> <num_norm_rows>     (declares a cone constraint)
    //   socr <id> <row> <var> <coeff>  (row 0 is the rhs form, rows 1.. the norm part)
    //   socc <id> <row> <constant>
    //
    // Rows and ids are zero-based; floats are shortest round-trip decimal.
    // -----------------------------------------------------------------

    pub fn to_triplet_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "socp 1");
        let _ = writeln!(out, "vars {}", self.num_vars);
        for &(i, c) in &self.objective {
            let _ = writeln!(out, "obj {i} {c}");
        }
        for (r, e) in self.equalities.iter().enumerate() {
            for &(i, c) in &e.terms {
                let _ = writeln!(out, "eq {r} {i} {c}");
            }
            if e.constant != 0.0 {
                let _ = writeln!(out, "eqc {r} {}", e.constant);
            }
        }
        for (id, soc) in self.socs.iter().enumerate() {
            let _ = writeln!(out, "soc {id} {}", soc.norm_rows.len());
            let emit = |row: usize, e: &LinExpr, out: &mut String| {
                for &(i, c) in &e.terms {
                    let _ = writeln!(out, "socr {id} {row} {i} {c}");
                }
                if e.constant != 0.0 {
                    let _ = writeln!(out, "socc {id} {row} {}", e.constant);
                }
            };
            emit(0, &soc.rhs, &mut out);
            for (j, row) in soc.norm_rows.iter().enumerate() {
                emit(j + 1, row, &mut out);
            }
        }
        out
    }

    pub fn from_triplet_text(text: &str) -> Result<Self, String> {
        let mut prog = ConeProgram::new();
        let mut eq_rows: Vec<LinExpr> = Vec::new();
        let mut soc_rows: Vec<Vec<LinExpr>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let tag = it.next().unwrap();
            let mut next_usize = || -> Result<usize, String> {
                it.next()
                    .ok_or_else(|| format!("line {}: missing field", lineno + 1))?
                    .parse()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))
            };
            match tag {
                "socp" => {
                    let v = next_usize()?;
                    if v != 1 {
                        return Err(format!("unsupported format version {v}"));
                    }
                }
                "vars" => {
                    let n = next_usize()?;
                    prog.add_vars(n);
                }
                "obj" => {
                    let i = next_usize()?;
                    let c = parse_f64(it.next(), lineno)?;
                    prog.add_objective_term(i, c);
                }
                "eq" => {
                    let r = next_usize()?;
                    let i = next_usize()?;
                    let c = parse_f64(it.next(), lineno)?;
                    grow_to(&mut eq_rows, r + 1);
                    eq_rows[r].terms.push((i, c));
                }
                "eqc" => {
                    let r = next_usize()?;
                    let c = parse_f64(it.next(), lineno)?;
                    grow_to(&mut eq_rows, r + 1);
                    eq_rows[r].constant = c;
                }
                "soc" => {
                    let id = next_usize()?;
                    let nrows = next_usize()?;
                    if id != soc_rows.len() {
                        return Err(format!("line {}: cone ids must be sequential", lineno + 1));
                    }
                    soc_rows.push(vec![LinExpr::default(); nrows + 1]);
                }
                "socr" => {
                    let id = next_usize()?;
                    let row = next_usize()?;
                    let i = next_usize()?;
                    let c = parse_f64(it.next(), lineno)?;
                    soc_rows
                        .get_mut(id)
                        .and_then(|rows| rows.get_mut(row))
                        .ok_or_else(|| format!("line {}: cone row out of range", lineno + 1))?
                        .terms
                        .push((i, c));
                }
                "socc" => {
                    let id = next_usize()?;
                    let row = next_usize()?;
                    let c = parse_f64(it.next(), lineno)?;
                    soc_rows
                        .get_mut(id)
                        .and_then(|rows| rows.get_mut(row))
                        .ok_or_else(|| format!("line {}: cone row out of range", lineno + 1))?
                        .constant = c;
                }
                other => return Err(format!("line {}: unknown tag {other}", lineno + 1)),
            }
        }
        for e in eq_rows {
            prog.add_equality(e);
        }
        for mut rows in soc_rows {
            let rhs = rows.remove(0);
            prog.add_soc(rows, rhs);
        }
        Ok(prog)
    }
}

fn parse_f64(field: Option<&str>, lineno: usize) -> Result<f64, String> {
    field
        .ok_or_else(|| format!("line {}: missing float", lineno + 1))?
        .parse()
        .map_err(|e| format!("line {}: {e}", lineno + 1))
}

fn grow_to(rows: &mut Vec<LinExpr>, len: usize) {
    while rows.len() < len {
        rows.push(LinExpr::default());
    }
}

/// Internal conic standard form.
pub(crate) struct StandardForm {
    pub g: Mat,
    pub h: Vec<f64>,
    pub q: Vec<f64>,
    pub m_eq: usize,
    pub soc_dims: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperbolic_membership_matches_direct_arithmetic() {
        let mut prog = ConeProgram::new();
        let vars = prog.add_vars(3);
        let (u, v, z) = (vars.start, vars.start + 1, vars.start + 2);
        let id = prog.add_hyperbolic(u, v, z);

        let slack_at = |uu: f64, vv: f64, zz: f64| prog.soc(id).slack(&[uu, vv, zz]);
        // (1,1,1): boundary, ||[2,0]|| = 2 = u+v.
        assert!(slack_at(1.0, 1.0, 1.0).abs() < 1e-15);
        // (4,1,2): uv = z^2, boundary.
        assert!(slack_at(4.0, 1.0, 2.0).abs() < 1e-12);
        // (1,1,1.1): uv < z^2, infeasible.
        assert!(slack_at(1.0, 1.0, 1.1) < 0.0);
        // Negative u is infeasible even with z = 0.
        assert!(slack_at(-1.0, 3.0, 0.0) < 0.0);
    }

    #[test]
    fn hyperbolic_random_points_agree_with_uv_ge_z2() {
        use rand::Rng;
        let mut prog = ConeProgram::new();
        let vars = prog.add_vars(3);
        let id = prog.add_hyperbolic(vars.start, vars.start + 1, vars.start + 2);
        let mut rng = crate::rng::substream(77, 0, 0);
        for _ in 0..10_000 {
            let u = 4.0 * rng.gen::<f64>() - 1.0;
            let v = 4.0 * rng.gen::<f64>() - 1.0;
            let z = 4.0 * rng.gen::<f64>() - 2.0;
            let member = u >= 0.0 && v >= 0.0 && u * v >= z * z;
            let slack = prog.soc(id).slack(&[u, v, z]);
            if slack > 1e-12 {
                assert!(member, "cone accepts ({u},{v},{z})");
            } else if slack < -1e-12 {
                assert!(!member, "cone rejects ({u},{v},{z})");
            }
        }
    }

    #[test]
    fn tree_k1_is_degenerate() {
        let mut prog = ConeProgram::new();
        let t = prog.add_var();
        let root = prog.add_geometric_mean_tree(&[t]);
        assert_eq!(root, t);
        assert_eq!(prog.num_socs(), 0);
        assert_eq!(prog.num_vars(), 1);
    }

    #[test]
    fn tree_k4_has_three_hyperbolic_constraints() {
        let mut prog = ConeProgram::new();
        let leaves: Vec<usize> = (0..4).map(|_| prog.add_var()).collect();
        let root = prog.add_geometric_mean_tree(&leaves);
        assert_eq!(prog.num_socs(), 3);
        assert_eq!(prog.num_equalities(), 0); // no padding
        assert_eq!(prog.num_vars(), 4 + 3);
        assert_eq!(root, prog.num_vars() - 1);
    }

    #[test]
    fn tree_k3_pads_one_constant_leaf() {
        let mut prog = ConeProgram::new();
        let leaves: Vec<usize> = (0..3).map(|_| prog.add_var()).collect();
        let root = prog.add_geometric_mean_tree(&leaves);
        assert_eq!(prog.num_socs(), 3);
        assert_eq!(prog.num_equalities(), 1); // the constant-1 pad
        // Leaves (8,2,1), pad 1: feasible root values are <= (8*2*1*1)^(1/4) = 2.
        // Internal nodes at their exact partial products make root = 2 feasible.
        let pad = 1.0;
        let z1 = (8.0_f64 * 2.0).sqrt();
        let z2 = (1.0_f64 * pad).sqrt();
        let point = [8.0, 2.0, 1.0, pad, z1, z2, 2.0];
        assert_eq!(root, 6);
        let (eq, cone) = prog.point_violation(&point);
        assert!(eq < 1e-12 && cone < 1e-12, "eq {eq} cone {cone}");
        // Root above the geometric mean is infeasible.
        let bad = [8.0, 2.0, 1.0, pad, z1, z2, 2.0 + 1e-6];
        assert!(prog.point_violation(&bad).1 > 0.0);
    }

    #[test]
    fn tree_random_leaves_boundary_matches_direct_arithmetic() {
        use rand::Rng;
        let mut rng = crate::rng::substream(78, 0, 0);
        for trial in 0..200 {
            let k: usize = 2 + (trial % 6);
            let mut prog = ConeProgram::new();
            let leaves: Vec<usize> = (0..k).map(|_| prog.add_var()).collect();
            let root = prog.add_geometric_mean_tree(&leaves);
            let padded = k.next_power_of_two();
            let vals: Vec<f64> = (0..k).map(|_| 0.1 + 4.0 * rng.gen::<f64>()).collect();
            // Assemble the exact feasible point: pads at 1, internal nodes at
            // the geometric means of their subtrees.
            let mut point = vec![0.0; prog.num_vars()];
            let mut level: Vec<f64> = vals.clone();
            level.resize(padded, 1.0);
            for (i, v) in vals.iter().enumerate() {
                point[leaves[i]] = *v;
            }
            let mut var = leaves[k - 1] + 1;
            for _ in k..padded {
                point[var] = 1.0;
                var += 1;
            }
            while level.len() > 1 {
                let mut next = Vec::new();
                for pair in level.chunks(2) {
                    let z = (pair[0] * pair[1]).sqrt();
                    point[var] = z;
                    var += 1;
                    next.push(z);
                }
                level = next;
            }
            let product: f64 = vals.iter().product();
            let expect = product.powf(1.0 / padded as f64);
            assert!((point[root] - expect).abs() < 1e-12 * expect.max(1.0));
            let (eq, cone) = prog.point_violation(&point);
            assert!(eq < 1e-10 && cone < 1e-10, "k={k} eq {eq} cone {cone}");
            point[root] += 1e-6 * expect.max(1.0);
            assert!(prog.point_violation(&point).1 > 0.0, "k={k} root bound not tight");
        }
    }

    #[test]
    fn triplet_round_trip() {
        let mut prog = ConeProgram::new();
        let vars = prog.add_vars(4);
        prog.add_objective_term(vars.start, 1.5);
        prog.add_equality(LinExpr::term(0, 1.0).plus_term(1, -2.0).plus_const(0.5));
        prog.add_soc(
            vec![LinExpr::term(2, 3.0).plus_const(-1.0)],
            LinExpr::term(3, 1.0).plus_const(2.0),
        );
        prog.add_nonneg(LinExpr::term(1, 1.0));
        let text = prog.to_triplet_text();
        let back = ConeProgram::from_triplet_text(&text).unwrap();
        assert_eq!(back.num_vars(), prog.num_vars());
        assert_eq!(back.num_equalities(), 1);
        assert_eq!(back.num_socs(), 2);
        assert_eq!(back.to_triplet_text(), text);
    }
}
