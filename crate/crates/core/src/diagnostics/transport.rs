//! Transport form of the local Wasserstein LP, solved by network simplex.
//!
//! For signed masses s on points p in B(x, r) with boundary distances
//! b(p) = r − |p − x|,
//!
//!   max Σ f(p)s(p)  s.t.  f(p) − f(q) ≤ |p − q|,  |f(p)| ≤ b(p)
//!
//! equals the min-cost balanced transportation problem with supplies
//! {p : s > 0} ∪ {B_s}, demands {q : s < 0} ∪ {B_t}, costs |p − q| between
//! points, b(p) to B_t and from B_s, and 0 from B_s to B_t. Arcs are implicit:
//! costs are computed from coordinates during pricing.

use crate::geometry::dist;

#[derive(Clone, Debug)]
pub struct TransportSolution {
    /// Optimal cost (equal to the LP maximum).
    pub value: f64,
    /// Feasible test function on the input points, repaired from the duals.
    pub test_function: Vec<f64>,
    /// Σ f(p)s(p) for `test_function`; ≤ value, equal at optimality.
    pub certificate: f64,
    pub pivots: usize,
    /// Iteration cap reached before optimality.
    pub approximate: bool,
}

struct Problem<'a> {
    points: &'a [Vec<f64>],
    /// original point index of each supply node (None for B_s)
    src: Vec<Option<usize>>,
    /// original point index of each demand node (None for B_t)
    dst: Vec<Option<usize>>,
    boundary: &'a [f64],
}

impl Problem<'_> {
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        match (self.src[i], self.dst[j]) {
            (Some(p), Some(q)) => dist(&self.points[p], &self.points[q]),
            (Some(p), None) => self.boundary[p],
            (None, Some(q)) => self.boundary[q],
            (None, None) => 0.0,
        }
    }
}

/// Spanning-tree state of the network simplex. Nodes 0..S are supplies,
/// S..S+T demands, S+T the artificial root.
struct Tree {
    parent: Vec<usize>,
    /// flow on the arc joining a node to its parent
    flow: Vec<f64>,
    /// the tree arc points from the node to its parent (else parent → node)
    up: Vec<bool>,
    /// real arc id (i·T + j) or usize::MAX for artificial arcs
    arc: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    children: Vec<Vec<usize>>,
}

pub fn solve_transport(points: &[Vec<f64>], signed: &[f64], boundary: &[f64], max_pivots: usize) -> TransportSolution {
    let total_abs: f64 = signed.iter().map(|s| s.abs()).sum();
    let tiny = 1e-15 * total_abs.max(f64::MIN_POSITIVE);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for (i, &s) in signed.iter().enumerate() {
        if s > tiny {
            src.push(Some(i));
            supply.push(s);
        } else if s < -tiny {
            dst.push(Some(i));
            demand.push(-s);
        }
    }
    let pos: f64 = supply.iter().sum();
    let neg: f64 = demand.iter().sum();
    // Both boundary nodes carry extra mass `pad`, which forces flow on the
    // zero-cost B_s → B_t arc; complementary slackness then gives them equal
    // potentials, so f vanishes on the boundary.
    let pad = pos + neg;
    if pad > 0.0 {
        src.push(None);
        supply.push(neg + pad);
        dst.push(None);
        demand.push(pos + pad);
    }
    let prob = Problem { points, src, dst, boundary };
    let s_count = supply.len();
    let t_count = demand.len();
    if s_count == 0 || t_count == 0 {
        return TransportSolution {
            value: 0.0,
            test_function: vec![0.0; points.len()],
            certificate: 0.0,
            pivots: 0,
            approximate: false,
        };
    }
    let nodes = s_count + t_count + 1;
    let root = nodes - 1;
    let max_cost = boundary.iter().copied().fold(0.0, f64::max) * 2.0 + 1.0;
    let big_m = max_cost * nodes as f64;
    // initial tree: supply → root and root → demand artificial arcs
    let mut tree = Tree {
        parent: vec![root; nodes],
        flow: supply.iter().chain(&demand).copied().chain([0.0]).collect(),
        up: (0..nodes).map(|v| v < s_count).collect(),
        arc: vec![usize::MAX; nodes],
        depth: (0..nodes).map(|v| usize::from(v != root)).collect(),
        pot: (0..nodes).map(|v| if v == root { 0.0 } else if v < s_count { -big_m } else { big_m }).collect(),
        children: vec![Vec::new(); nodes],
    };
    tree.children[root] = (0..root).collect();

    let arcs = s_count * t_count;
    let block = ((arcs as f64).sqrt().ceil() as usize).max(16).min(arcs);
    let eps = 1e-11 * max_cost;
    let mut next_arc = 0usize;
    let mut pivots = 0usize;
    let mut approximate = false;
    loop {
        // block pricing: most negative reduced cost within the first block
        // that contains any candidate
        let mut best = (0.0, usize::MAX);
        let mut scanned = 0;
        while scanned < arcs {
            let end = (scanned + block).min(arcs);
            for k in scanned..end {
                let a = (next_arc + k) % arcs;
                let (i, j) = (a / t_count, a % t_count);
                let rc = prob.cost(i, j) + tree.pot[i] - tree.pot[s_count + j];
                if rc < best.0 - eps {
                    best = (rc, a);
                }
            }
            scanned = end;
            if best.1 != usize::MAX {
                break;
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        if pivots >= max_pivots {
            approximate = true;
            break;
        }
        next_arc = (best.1 + 1) % arcs;
        let (i, j) = (best.1 / t_count, best.1 % t_count);
        pivot(&mut tree, i, s_count + j, best.1, best.0);
        pivots += 1;
    }

    // primal value from tree flows on real arcs
    let mut value = 0.0;
    for v in 0..root {
        let a = tree.arc[v];
        if a != usize::MAX && tree.flow[v] > 0.0 {
            value += tree.flow[v] * prob.cost(a / t_count, a % t_count);
        }
    }
    // duals: f = −π, shifted so the boundary sink sits at 0
    let shift = tree.pot[s_count + t_count - 1];
    let mut raw = vec![f64::NAN; points.len()];
    for (k, p) in prob.src.iter().enumerate() {
        if let Some(p) = p {
            raw[*p] = -(tree.pot[k] - shift);
        }
    }
    for (k, q) in prob.dst.iter().enumerate() {
        if let Some(q) = q {
            raw[*q] = -(tree.pot[s_count + k] - shift);
        }
    }
    let test_function = repair(points, &raw, boundary);
    let certificate = test_function.iter().zip(signed).map(|(f, s)| f * s).sum();
    TransportSolution { value, test_function, certificate, pivots, approximate }
}

/// Make f exactly feasible: f̂(p) = min(b(p), min_q f(q) + |p − q|) over the
/// points carrying a value, then clamp to [−b, b]. Points without a value
/// (zero mass) get the McShane extension.
fn repair(points: &[Vec<f64>], raw: &[f64], boundary: &[f64]) -> Vec<f64> {
    let known: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].is_finite()).collect();
    (0..points.len())
        .map(|p| {
            let mut v = boundary[p];
            for &q in &known {
                v = v.min(raw[q].min(boundary[q]) + dist(&points[p], &points[q]));
            }
            v.max(-boundary[p])
        })
        .collect()
}

fn pivot(tree: &mut Tree, u: usize, w: usize, arc: usize, rc: f64) {
    // paths from u and w up to their join
    let mut pu = Vec::new();
    let mut pw = Vec::new();
    let (mut a, mut b) = (u, w);
    while a != b {
        if tree.depth[a] >= tree.depth[b] {
            pu.push(a);
            a = tree.parent[a];
        } else {
            pw.push(b);
            b = tree.parent[b];
        }
    }
    // Orient the cycle u → w → … → join → … → u. A tree arc is traversed
    // backwards (loses flow) on the w side when it points parent → node, and
    // on the u side when it points node → parent.
    let backward_w = |v: usize, t: &Tree| !t.up[v];
    let backward_u = |v: usize, t: &Tree| t.up[v];
    let mut delta = f64::INFINITY;
    for &v in &pw {
        if backward_w(v, tree) {
            delta = delta.min(tree.flow[v]);
        }
    }
    for &v in &pu {
        if backward_u(v, tree) {
            delta = delta.min(tree.flow[v]);
        }
    }
    // leaving arc: last blocking arc when the cycle is traversed from the join
    // in its orientation (join → u, then w → join)
    let mut leave: Option<(usize, bool)> = None; // (node, on u side)
    for &v in &pw {
        if backward_w(v, tree) && tree.flow[v] == delta {
            leave = Some((v, false));
        }
    }
    if leave.is_none() {
        for &v in &pu {
            if backward_u(v, tree) && tree.flow[v] == delta {
                leave = Some((v, true));
                break;
            }
        }
    }
    let (q, on_u) = leave.expect("uncapacitated cycle without blocking arc");
    // push delta around the cycle
    for &v in &pw {
        tree.flow[v] += if backward_w(v, tree) { -delta } else { delta };
    }
    for &v in &pu {
        tree.flow[v] += if backward_u(v, tree) { -delta } else { delta };
    }
    // re-hang the subtree rooted at q from the entering arc
    let (inner, outer, inner_up) = if on_u { (u, w, true) } else { (w, u, false) };
    let mut path = vec![inner];
    while *path.last().unwrap() != q {
        let next = tree.parent[*path.last().unwrap()];
        path.push(next);
    }
    detach(tree, q);
    // walk the path top-down, reversing each arc
    for k in (1..path.len()).rev() {
        let (child, par) = (path[k - 1], path[k]);
        // arc child–par becomes par's arc to its new parent child
        tree.flow[par] = tree.flow[child];
        tree.up[par] = !tree.up[child];
        tree.arc[par] = tree.arc[child];
        detach(tree, child);
        tree.parent[par] = child;
        tree.children[child].push(par);
    }
    tree.parent[inner] = outer;
    tree.children[outer].push(inner);
    tree.flow[inner] = delta;
    tree.up[inner] = inner_up;
    tree.arc[inner] = arc;
    // potentials and depths of the moved subtree
    let shift = if on_u { -rc } else { rc };
    let mut stack = vec![inner];
    tree.depth[inner] = tree.depth[outer] + 1;
    while let Some(v) = stack.pop() {
        tree.pot[v] += shift;
        for k in 0..tree.children[v].len() {
            let c = tree.children[v][k];
            tree.depth[c] = tree.depth[v] + 1;
            stack.push(c);
        }
    }
}

fn detach(tree: &mut Tree, v: usize) {
    let p = tree.parent[v];
    if let Some(pos) = tree.children[p].iter().position(|&c| c == v) {
        tree.children[p].swap_remove(pos);
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent solvers used only to check the network simplex.

    use crate::geometry::dist;

    /// Exhaustive basis enumeration of the transportation problem: every
    /// spanning tree of the bipartite supply/demand graph is tried, flows are
    /// solved by leaf peeling, and the cheapest non-negative one wins.
    pub fn transport_by_enumeration(points: &[Vec<f64>], signed: &[f64], boundary: &[f64]) -> f64 {
        let mut sup: Vec<(Option<usize>, f64)> = Vec::new();
        let mut dem: Vec<(Option<usize>, f64)> = Vec::new();
        for (i, &s) in signed.iter().enumerate() {
            if s > 0.0 {
                sup.push((Some(i), s));
            } else if s < 0.0 {
                dem.push((Some(i), -s));
            }
        }
        let pos: f64 = sup.iter().map(|x| x.1).sum();
        let neg: f64 = dem.iter().map(|x| x.1).sum();
        if pos == 0.0 && neg == 0.0 {
            return 0.0;
        }
        if neg > 0.0 {
            sup.push((None, neg));
        }
        if pos > 0.0 {
            dem.push((None, pos));
        }
        let cost = |a: Option<usize>, b: Option<usize>| match (a, b) {
            (Some(p), Some(q)) => dist(&points[p], &points[q]),
            (Some(p), None) | (None, Some(p)) => boundary[p],
            (None, None) => 0.0,
        };
        let (s, t) = (sup.len(), dem.len());
        let arcs: Vec<(usize, usize)> = (0..s).flat_map(|i| (0..t).map(move |j| (i, j))).collect();
        let k = s + t - 1;
        let mut best = f64::INFINITY;
        let mut chosen = Vec::with_capacity(k);
        fn rec(
            start: usize,
            k: usize,
            arcs: &[(usize, usize)],
            chosen: &mut Vec<usize>,
            visit: &mut dyn FnMut(&[usize]),
        ) {
            if chosen.len() == k {
                visit(chosen);
                return;
            }
            for a in start..arcs.len() {
                if arcs.len() - a < k - chosen.len() {
                    break;
                }
                chosen.push(a);
                rec(a + 1, k, arcs, chosen, visit);
                chosen.pop();
            }
        }
        let mut visit = |sel: &[usize]| {
            // leaf peeling on the selected arcs
            let mut rem_s: Vec<f64> = sup.iter().map(|x| x.1).collect();
            let mut rem_t: Vec<f64> = dem.iter().map(|x| x.1).collect();
            let mut alive = vec![true; sel.len()];
            let mut total = 0.0;
            for _ in 0..sel.len() {
                let mut deg_s = vec![0; s];
                let mut deg_t = vec![0; t];
                for (idx, &a) in sel.iter().enumerate() {
                    if alive[idx] {
                        deg_s[arcs[a].0] += 1;
                        deg_t[arcs[a].1] += 1;
                    }
                }
                let leaf = sel.iter().enumerate().find(|(idx, &a)| {
                    alive[*idx] && (deg_s[arcs[a].0] == 1 || deg_t[arcs[a].1] == 1)
                });
                let Some((idx, &a)) = leaf else { return };
                let (i, j) = arcs[a];
                let f = if deg_s[i] == 1 { rem_s[i] } else { rem_t[j] };
                if f < -1e-12 {
                    return;
                }
                rem_s[i] -= f;
                rem_t[j] -= f;
                total += f * cost(sup[i].0, dem[j].0);
                alive[idx] = false;
            }
            if rem_s.iter().chain(&rem_t).all(|r| r.abs() < 1e-9) {
                best = best.min(total);
            }
        };
        rec(0, k, &arcs, &mut chosen, &mut visit);
        best
    }

    /// Dense-tableau simplex (Bland's rule) on the f-form LP with all pairwise
    /// Lipschitz constraints: max cᵀf, A f ≤ b, f free (split f = f⁺ − f⁻).
    pub fn f_form_lp(points: &[Vec<f64>], signed: &[f64], boundary: &[f64]) -> f64 {
        let n = points.len();
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for p in 0..n {
            rows.push((vec![(p, 1.0)], boundary[p]));
            rows.push((vec![(p, -1.0)], boundary[p]));
            for q in 0..n {
                if p != q {
                    rows.push((vec![(p, 1.0), (q, -1.0)], dist(&points[p], &points[q])));
                }
            }
        }
        let m = rows.len();
        let vars = 2 * n + m; // f⁺, f⁻, slacks
        let width = vars + 1;
        let mut tab = vec![0.0; (m + 1) * width];
        for (r, (coef, rhs)) in rows.iter().enumerate() {
            for &(p, c) in coef {
                tab[r * width + p] += c;
                tab[r * width + n + p] -= c;
            }
            tab[r * width + 2 * n + r] = 1.0;
            tab[r * width + vars] = *rhs;
        }
        // objective row holds −c (we minimise −cᵀf)
        for p in 0..n {
            tab[m * width + p] = -signed[p];
            tab[m * width + n + p] = signed[p];
        }
        let mut basis: Vec<usize> = (0..m).map(|r| 2 * n + r).collect();
        loop {
            let Some(col) = (0..vars).find(|&c| tab[m * width + c] < -1e-12) else { break };
            let mut pick: Option<(f64, usize)> = None;
            for r in 0..m {
                let a = tab[r * width + col];
                if a > 1e-12 {
                    let ratio = tab[r * width + vars] / a;
                    let better = match pick {
                        None => true,
                        Some((best, br)) => ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[r] < basis[br]),
                    };
                    if better {
                        pick = Some((ratio, r));
                    }
                }
            }
            let (_, r) = pick.expect("bounded LP");
            let pv = tab[r * width + col];
            for c in 0..width {
                tab[r * width + c] /= pv;
            }
            for rr in 0..=m {
                if rr != r {
                    let factor = tab[rr * width + col];
                    if factor != 0.0 {
                        for c in 0..width {
                            tab[rr * width + c] -= factor * tab[r * width + c];
                        }
                    }
                }
            }
            basis[r] = col;
        }
        tab[m * width + vars]
    }
}
