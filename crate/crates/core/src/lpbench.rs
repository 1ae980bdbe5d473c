//! Fractional multi-commodity flow relaxation of the scheduling problem and
//! a dense primal simplex to solve it.
//!
//! The max-min lifetime objective is linearized with `y = t * x`: every flow
//! variable is a time-scaled indicator, and `t` (cycles) is maximized. The
//! access-delay bound is not part of the relaxation, so its optimum bounds
//! the lifetime of every feasible schedule from above.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::schedule::Role;
use crate::topology::{NetworkInstance, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub name: String,
    /// Sorted by column, no duplicates, no zeros.
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LpOptions {
    /// Require the consumer-role flow of every piece to leave a cache.
    pub cache_inclusion: bool,
}

/// Variables `y^{role,i}_{uv}` for every piece, role and directed edge,
/// followed by `t`. All variables are nonnegative; the objective is
/// `maximize t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    pieces: usize,
    edges: usize,
    names: Vec<String>,
    rows: Vec<LpRow>,
}

impl LpModel {
    pub fn variable_count(&self) -> usize {
        self.names.len()
    }

    pub fn t_index(&self) -> usize {
        self.names.len() - 1
    }

    pub fn piece_count(&self) -> usize {
        self.pieces
    }

    pub fn var_index(&self, piece: usize, role: Role, edge: usize) -> usize {
        let r = match role {
            Role::Source => 0,
            Role::Consumer => 1,
        };
        (piece * 2 + r) * self.edges + edge
    }

    pub fn var_name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    /// Common scale for all variables: the tightest `rhs / max |coef|` over
    /// `<=` rows with positive right-hand side. Brings `t` to order one.
    pub fn variable_scale(&self) -> f64 {
        let s = self
            .rows
            .iter()
            .filter(|r| r.kind == RowKind::Le && r.rhs > 0.0)
            .filter_map(|r| {
                let m = max_abs(&r.coeffs);
                (m > 0.0).then(|| r.rhs / m)
            })
            .fold(f64::INFINITY, f64::min);
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Largest constraint violation at `values`, measured on rows divided by
    /// their largest coefficient with variables in units of
    /// [`variable_scale`](Self::variable_scale). Negative values count too.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let s = self.variable_scale();
        let mut worst = values.iter().map(|&v| (-v / s).max(0.0)).fold(0.0, f64::max);
        for row in &self.rows {
            let m = max_abs(&row.coeffs);
            if m == 0.0 {
                continue;
            }
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * values[j]).sum();
            let gap = (lhs - row.rhs) / (m * s);
            let v = match row.kind {
                RowKind::Le => gap.max(0.0),
                RowKind::Ge => (-gap).max(0.0),
                RowKind::Eq => gap.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Plain-text LP format (objective, constraints, bounds).
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ lifetime relaxation\nMaximize\n obj: t\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.name);
            for &(j, a) in &row.coeffs {
                let sign = if a < 0.0 { '-' } else { '+' };
                let _ = write!(out, " {sign} {:?} {}", a.abs(), self.names[j]);
            }
            let op = match row.kind {
                RowKind::Le => "<=",
                RowKind::Eq => "=",
                RowKind::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {:?}", row.rhs);
        }
        out.push_str("Bounds\n");
        for name in &self.names {
            let _ = writeln!(out, " {name} >= 0");
        }
        out.push_str("End\n");
        out
    }
}

fn max_abs(coeffs: &[(usize, f64)]) -> f64 {
    coeffs.iter().map(|&(_, a)| a.abs()).fold(0.0, f64::max)
}

pub fn build_lp(instance: &NetworkInstance) -> LpModel {
    build_lp_with(instance, LpOptions::default())
}

/// Rows, per piece `i`:
/// - flow conservation at every node, both roles pooled, net zero; at `s_i`
///   the source role nets `t` out and the consumer role nets zero; at `c_i`
///   the consumer role nets `t` in and the source role nets zero;
/// - per node and role, total outgoing flow at most `t`.
///
/// Per node, the energy row `sum eps_uv (r^g y^s + r^c y^c) <= E_u`.
pub fn build_lp_with(instance: &NetworkInstance, options: LpOptions) -> LpModel {
    let m = instance.edges().len();
    let pieces = instance.data().len();
    let n = instance.node_count();
    let mut names = Vec::with_capacity(2 * pieces * m + 1);
    for i in 0..pieces {
        for tag in ["ys", "yc"] {
            for e in instance.edges() {
                names.push(format!("{tag}_{i}_{}_{}", e.from, e.to));
            }
        }
    }
    names.push("t".to_string());
    let mut model = LpModel {
        pieces,
        edges: m,
        names,
        rows: Vec::new(),
    };
    let t = model.t_index();
    let in_edges = incoming(instance);

    for (i, d) in instance.data().iter().enumerate() {
        let var = |role, e| model.var_index(i, role, e);
        let mut rows = Vec::new();
        for u in 0..n {
            let node = NodeId(u);
            let net = |roles: &[Role]| -> Vec<(usize, f64)> {
                let mut c = Vec::new();
                for &role in roles {
                    c.extend(instance.out_edges(node).map(|e| (var(role, e), 1.0)));
                    c.extend(in_edges[u].iter().map(|&e| (var(role, e), -1.0)));
                }
                c
            };
            if node == d.source || node == d.consumer {
                let (lead, other, sign) = if node == d.source {
                    (Role::Source, Role::Consumer, -1.0)
                } else {
                    (Role::Consumer, Role::Source, 1.0)
                };
                let mut c = net(&[lead]);
                c.push((t, sign));
                rows.push(row(format!("flow_{i}_{u}_{}", role_tag(lead)), c, RowKind::Eq, 0.0));
                rows.push(row(format!("flow_{i}_{u}_{}", role_tag(other)), net(&[other]), RowKind::Eq, 0.0));
            } else {
                rows.push(row(format!("flow_{i}_{u}"), net(&[Role::Source, Role::Consumer]), RowKind::Eq, 0.0));
            }
        }
        for u in 0..n {
            let out = instance.out_edges(NodeId(u));
            if out.is_empty() {
                continue;
            }
            for role in [Role::Source, Role::Consumer] {
                let mut c: Vec<(usize, f64)> = out.clone().map(|e| (var(role, e), 1.0)).collect();
                c.push((t, -1.0));
                rows.push(row(format!("deg_{i}_{u}_{}", role_tag(role)), c, RowKind::Le, 0.0));
            }
        }
        if options.cache_inclusion {
            let mut c: Vec<(usize, f64)> = instance
                .caches()
                .iter()
                .flat_map(|&p| instance.out_edges(p))
                .map(|e| (var(Role::Consumer, e), -1.0))
                .collect();
            c.push((t, 1.0));
            rows.push(row(format!("cache_{i}"), c, RowKind::Le, 0.0));
        }
        model.rows.extend(rows);
    }

    for u in 0..n {
        let mut c = Vec::new();
        for e in instance.out_edges(NodeId(u)) {
            let eps = instance.edge(e).eps_j;
            for (i, d) in instance.data().iter().enumerate() {
                c.push((model.var_index(i, Role::Source, e), eps * d.gen_rate));
                c.push((model.var_index(i, Role::Consumer, e), eps * d.cons_rate));
            }
        }
        if !c.is_empty() {
            let energy = instance.node(NodeId(u)).energy_j;
            model.rows.push(row(format!("energy_{u}"), c, RowKind::Le, energy));
        }
    }
    model
}

fn role_tag(role: Role) -> &'static str {
    match role {
        Role::Source => "s",
        Role::Consumer => "c",
    }
}

fn row(name: String, mut coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> LpRow {
    coeffs.sort_by_key(|&(j, _)| j);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match merged.last_mut() {
            Some((k, b)) if *k == j => *b += a,
            _ => merged.push((j, a)),
        }
    }
    merged.retain(|&(_, a)| a != 0.0);
    LpRow {
        name,
        coeffs: merged,
        kind,
        rhs,
    }
}

fn incoming(instance: &NetworkInstance) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); instance.node_count()];
    for (e, edge) in instance.edges().iter().enumerate() {
        inc[edge.to.0].push(e);
    }
    inc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// No data pieces: nothing drains, the lifetime is unbounded by
    /// construction and no solve is attempted.
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal lifetime in cycles.
    pub t: f64,
    /// Values of every model variable, `t` last.
    pub values: Vec<f64>,
    pub iterations: usize,
    /// [`LpModel::max_violation`] at `values`.
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            degenerate_streak: 50,
        }
    }
}

pub fn solve_lp(model: &LpModel) -> LpSolution {
    solve_lp_with(model, SolverOptions::default())
}

pub fn solve_lp_with(model: &LpModel, options: SolverOptions) -> LpSolution {
    let nv = model.variable_count();
    if model.pieces == 0 {
        return LpSolution {
            status: LpStatus::Infinite,
            t: f64::INFINITY,
            values: vec![0.0; nv],
            iterations: 0,
            max_residual: 0.0,
        };
    }
    let scale = model.variable_scale();
    let mut objective = vec![0.0; nv];
    objective[model.t_index()] = 1.0;
    let mut tab = Tableau::new(model, scale, &objective);
    let (status, iterations) = tab.solve(options);
    let mut values = vec![0.0; nv];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < nv {
            values[b] = tab.rhs[r] * scale;
        }
    }
    let t = values[model.t_index()];
    let max_residual = model.max_violation(&values);
    LpSolution {
        status,
        t,
        values,
        iterations,
        max_residual,
    }
}

const ARTIFICIAL: usize = usize::MAX;
const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;

/// Row-major dense tableau over structural and slack columns. Artificial
/// columns are never stored: a row whose basic variable is artificial is
/// marked, and once the artificial leaves it cannot come back.
struct Tableau {
    cols: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Phase-two reduced costs (maximization form `d_j = -c_j + ...`).
    cost: Vec<f64>,
    cost_rhs: f64,
    /// Phase-one reduced costs for `maximize -sum(artificials)`.
    aux: Vec<f64>,
    aux_rhs: f64,
}

impl Tableau {
    fn new(model: &LpModel, scale: f64, objective: &[f64]) -> Self {
        let nv = model.variable_count();
        let slack_rows: Vec<usize> = model
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind != RowKind::Eq)
            .map(|(i, _)| i)
            .collect();
        let cols = nv + slack_rows.len();
        let m = model.rows.len();
        let mut a = vec![0.0; m * cols];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![ARTIFICIAL; m];
        let mut slack_of = vec![usize::MAX; m];
        for (k, &r) in slack_rows.iter().enumerate() {
            slack_of[r] = nv + k;
        }
        for (r, row) in model.rows.iter().enumerate() {
            let norm = max_abs(&row.coeffs) * scale;
            let norm = if norm > 0.0 { norm } else { 1.0 };
            let mut sign = 1.0;
            let mut b = row.rhs / norm;
            let mut kind = row.kind;
            if b < 0.0 {
                sign = -1.0;
                b = -b;
                kind = match kind {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                };
            }
            let base = r * cols;
            for &(j, v) in &row.coeffs {
                a[base + j] = sign * v * scale / norm;
            }
            rhs[r] = b;
            match kind {
                RowKind::Le => {
                    a[base + slack_of[r]] = 1.0;
                    basis[r] = slack_of[r];
                }
                RowKind::Ge => {
                    a[base + slack_of[r]] = -1.0;
                }
                RowKind::Eq => {}
            }
        }
        let mut cost = vec![0.0; cols];
        for (j, &c) in objective.iter().enumerate() {
            cost[j] = -c;
        }
        let mut aux = vec![0.0; cols];
        let mut aux_rhs = 0.0;
        for r in 0..m {
            if basis[r] == ARTIFICIAL {
                for j in 0..cols {
                    aux[j] -= a[r * cols + j];
                }
                aux_rhs -= rhs[r];
            }
        }
        Self {
            cols,
            a,
            rhs,
            basis,
            cost,
            cost_rhs: 0.0,
            aux,
            aux_rhs,
        }
    }

    fn rows(&self) -> usize {
        self.rhs.len()
    }

    fn solve(&mut self, options: SolverOptions) -> (LpStatus, usize) {
        let mut iterations = 0;
        if self.aux_rhs < -PIVOT_TOL {
            let status = self.run(true, options, &mut iterations);
            if status != LpStatus::Optimal {
                return (status, iterations);
            }
            if self.aux_rhs < -1e-7 {
                return (LpStatus::Infeasible, iterations);
            }
        }
        let status = self.run(false, options, &mut iterations);
        (status, iterations)
    }

    fn run(&mut self, phase_one: bool, options: SolverOptions, iterations: &mut usize) -> LpStatus {
        let mut streak = 0usize;
        loop {
            let bland = streak >= options.degenerate_streak;
            let Some(q) = self.entering(phase_one, bland) else {
                return LpStatus::Optimal;
            };
            let Some(r) = self.leaving(q, phase_one, bland) else {
                return if phase_one { LpStatus::Infeasible } else { LpStatus::Unbounded };
            };
            if *iterations >= options.max_iterations {
                return LpStatus::IterationLimit;
            }
            *iterations += 1;
            let degenerate = self.rhs[r] <= PIVOT_TOL;
            self.pivot(r, q);
            streak = if degenerate { streak + 1 } else { 0 };
        }
    }

    fn entering(&self, phase_one: bool, bland: bool) -> Option<usize> {
        let d = if phase_one { &self.aux } else { &self.cost };
        if bland {
            return (0..self.cols).find(|&j| d[j] < -COST_TOL);
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, &v) in d.iter().enumerate() {
            if v < -COST_TOL && best.is_none_or(|(_, b)| v < b) {
                best = Some((j, v));
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, q: usize, phase_one: bool, bland: bool) -> Option<usize> {
        // (ratio, artificial first, tie key)
        let mut best: Option<(usize, f64, bool, f64)> = None;
        for r in 0..self.rows() {
            let v = self.a[r * self.cols + q];
            let artificial = self.basis[r] == ARTIFICIAL;
            let ratio = if artificial && !phase_one && self.rhs[r] <= PIVOT_TOL {
                if v.abs() <= PIVOT_TOL {
                    continue;
                }
                0.0
            } else if v > PIVOT_TOL {
                self.rhs[r] / v
            } else {
                continue;
            };
            let better = match best {
                None => true,
                Some((br, bratio, bart, bmag)) => {
                    if ratio < bratio - 1e-12 {
                        true
                    } else if ratio > bratio + 1e-12 {
                        false
                    } else if artificial != bart {
                        artificial
                    } else if bland {
                        self.basis[r] < self.basis[br]
                    } else {
                        v.abs() > bmag
                    }
                }
            };
            if better {
                best = Some((r, ratio, artificial, v.abs()));
            }
        }
        best.map(|(r, ..)| r)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let p = self.a[r * cols + q];
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for j in 0..cols {
            let v = self.a[r * cols + j];
            if v != 0.0 {
                let v = v / p;
                self.a[r * cols + j] = v;
                nz.push((j, v));
            }
        }
        self.a[r * cols + q] = 1.0;
        self.rhs[r] /= p;
        if self.rhs[r].abs() < DROP_TOL {
            self.rhs[r] = 0.0;
        }
        let br = self.rhs[r];
        for i in 0..self.rows() {
            if i == r {
                continue;
            }
            let base = i * cols;
            let f = self.a[base + q];
            if f == 0.0 {
                continue;
            }
            for &(j, v) in &nz {
                let x = self.a[base + j] - f * v;
                self.a[base + j] = if x.abs() < DROP_TOL { 0.0 } else { x };
            }
            self.a[base + q] = 0.0;
            let b = self.rhs[i] - f * br;
            self.rhs[i] = if b.abs() < DROP_TOL { 0.0 } else { b };
        }
        for (d, z) in [(&mut self.cost, &mut self.cost_rhs), (&mut self.aux, &mut self.aux_rhs)] {
            let f = d[q];
            if f != 0.0 {
                for &(j, v) in &nz {
                    let x = d[j] - f * v;
                    d[j] = if x.abs() < DROP_TOL { 0.0 } else { x };
                }
                d[q] = 0.0;
                *z -= f * br;
            }
        }
        self.basis[r] = q;
    }
}
