//! Bounded-Lipschitz distance between empirical measures,
//! `sup { |E_P f - E_Q f| : |f| <= 1, Lip(f) <= 1 }`.
//!
//! Two exact routes: the transport dual (the optimum equals the minimal
//! expected cost `min(d, 2)` over couplings) solved by successive shortest
//! paths, and the pairwise-constraint LP in the test-function values solved
//! by a dense primal simplex, practical for small supports only.

use crate::error::{Error, Result};

/// Default cap on the combined support size.
pub const SUPPORT_CAP: usize = 1000;
/// Cap for the dense simplex route (its tableau has `n^2` rows).
pub const SIMPLEX_CAP: usize = 40;

/// Weighted point cloud with points flattened row-major `(n, point_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCloud<'a> {
    pub points: &'a [f64],
    pub point_dim: usize,
    /// Integer multiplicities; `None` means all ones.
    pub counts: Option<&'a [u64]>,
    /// Dimension of one grid point; distances are sup over grid points of
    /// Euclidean norms within each point.
    pub dim: usize,
}

impl<'a> WeightedCloud<'a> {
    pub fn uniform(points: &'a [f64], point_dim: usize, dim: usize) -> Self {
        WeightedCloud {
            points,
            point_dim,
            counts: None,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.point_dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.point_dim..(i + 1) * self.point_dim]
    }

    fn count(&self, i: usize) -> u64 {
        self.counts.map_or(1, |c| c[i])
    }

    fn total(&self) -> u64 {
        (0..self.len()).map(|i| self.count(i)).sum()
    }
}

fn check_pair(p: &WeightedCloud, q: &WeightedCloud, cap: usize) -> Result<()> {
    let shaped = |c: &WeightedCloud| {
        c.point_dim > 0
            && c.dim > 0
            && c.point_dim.is_multiple_of(c.dim)
            && c.points.len().is_multiple_of(c.point_dim)
            && c.counts.is_none_or(|k| k.len() == c.points.len() / c.point_dim)
    };
    if !shaped(p) || !shaped(q) || p.point_dim != q.point_dim || p.dim != q.dim {
        return Err(Error::DimensionMismatch(format!(
            "laws of point dimension {} and {} cannot be compared",
            p.point_dim, q.point_dim
        )));
    }
    if p.is_empty() || q.is_empty() || p.total() == 0 || q.total() == 0 {
        return Err(Error::invalid("empirical laws must be nonempty"));
    }
    let size = p.len() + q.len();
    if size > cap {
        return Err(Error::SupportCap { size, cap });
    }
    Ok(())
}

/// `min(2, sup-norm distance)`.
fn cost(a: &[f64], b: &[f64], dim: usize) -> f64 {
    crate::segment::sup_distance(a, b, dim).min(2.0)
}

/// Exact bounded-Lipschitz distance via the transport dual.
pub fn bl_distance_weighted(p: &WeightedCloud, q: &WeightedCloud, cap: usize) -> Result<f64> {
    check_pair(p, q, cap)?;
    let np = p.len();
    let nq = q.len();
    let (tp, tq) = (p.total(), q.total());
    // common total mass tp * tq: each P unit carries tq, each Q unit tp
    let g = gcd(tp, tq);
    let supply: Vec<u64> = (0..np).map(|i| p.count(i) * (tq / g)).collect();
    let demand: Vec<u64> = (0..nq).map(|j| q.count(j) * (tp / g)).collect();
    let total = tp / g * tq;
    let c: Vec<f64> = (0..np)
        .flat_map(|i| (0..nq).map(move |j| (i, j)))
        .map(|(i, j)| cost(p.point(i), q.point(j), p.dim))
        .collect();
    let flow_cost = transport(&c, np, nq, supply, demand)?;
    Ok((flow_cost / total as f64).clamp(0.0, 2.0))
}

pub fn bl_distance_points(p: &[f64], q: &[f64], point_dim: usize, dim: usize) -> Result<f64> {
    bl_distance_weighted(
        &WeightedCloud::uniform(p, point_dim, dim),
        &WeightedCloud::uniform(q, point_dim, dim),
        SUPPORT_CAP,
    )
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Min-cost transport on the complete bipartite graph by successive
/// shortest paths with Johnson potentials and dense Dijkstra.
fn transport(c: &[f64], np: usize, nq: usize, mut supply: Vec<u64>, mut demand: Vec<u64>) -> Result<f64> {
    let n = np + nq;
    let mut flow = vec![0u64; np * nq];
    let mut pot = vec![0.0f64; n];
    let mut dist = vec![0.0f64; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut remaining: u64 = supply.iter().sum();
    // potentials start feasible: reduced costs c_ij - pot_q[j] >= 0 with pot_q = min_i c_ij
    for j in 0..nq {
        pot[np + j] = (0..np).map(|i| c[i * nq + j]).fold(f64::INFINITY, f64::min);
    }
    while remaining > 0 {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..np {
            if supply[i] > 0 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < np {
                let i = u;
                for j in 0..nq {
                    let v = np + j;
                    if done[v] {
                        continue;
                    }
                    let rc = c[i * nq + j] + pot[i] - pot[v];
                    let nd = best + rc.max(0.0);
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = i;
                    }
                }
            } else {
                let j = u - np;
                for i in 0..np {
                    if done[i] || flow[i * nq + j] == 0 {
                        continue;
                    }
                    let rc = -c[i * nq + j] + pot[u] - pot[i];
                    let nd = best + rc.max(0.0);
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = u;
                    }
                }
            }
        }
        // cheapest reachable sink with remaining demand
        let mut sink = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..nq {
            if demand[j] > 0 && dist[np + j] < best {
                best = dist[np + j];
                sink = np + j;
            }
        }
        if sink == usize::MAX {
            return Err(Error::Numerical("transport problem has no augmenting path".into()));
        }
        for v in 0..n {
            pot[v] += dist[v].min(best);
        }
        // bottleneck along the path
        let mut amount = demand[sink - np];
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if v < np {
                // backward edge Q(u) -> P(v) carries at most the current flow
                amount = amount.min(flow[v * nq + (u - np)]);
            }
            v = u;
        }
        let source = v;
        amount = amount.min(supply[source]);
        let mut v = sink;
        while v != source {
            let u = prev[v];
            if v >= np {
                flow[u * nq + (v - np)] += amount;
            } else {
                flow[v * nq + (u - np)] -= amount;
            }
            v = u;
        }
        supply[source] -= amount;
        demand[sink - np] -= amount;
        remaining -= amount;
    }
    Ok(flow.iter().zip(c).map(|(&f, &cij)| f as f64 * cij).sum())
}

/// The literal LP: maximize `sum_i f_i (p_i - q_i)` subject to
/// `f_i - f_j <= d_ij` and `-1 <= f_i <= 1`, over the merged support.
pub fn bl_distance_lp(p: &WeightedCloud, q: &WeightedCloud) -> Result<f64> {
    check_pair(p, q, SIMPLEX_CAP)?;
    let (tp, tq) = (p.total() as f64, q.total() as f64);
    let mut pts: Vec<&[f64]> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    for (cloud, sign, total) in [(p, 1.0, tp), (q, -1.0, tq)] {
        for i in 0..cloud.len() {
            let x = cloud.point(i);
            let mass = sign * cloud.count(i) as f64 / total;
            match pts.iter().position(|y| *y == x) {
                Some(k) => w[k] += mass,
                None => {
                    pts.push(x);
                    w.push(mass);
                }
            }
        }
    }
    let n = pts.len();
    let d: Vec<f64> = (0..n * n)
        .map(|k| crate::segment::sup_distance(pts[k / n], pts[k % n], p.dim))
        .collect();
    Ok(simplex_bl(&w, &d, n)?.clamp(0.0, 2.0))
}

/// Dense primal simplex (Bland's rule) on `g = f + 1 >= 0`:
/// `g_i - g_j <= d_ij`, `g_i <= 2`; the origin is feasible.
fn simplex_bl(w: &[f64], d: &[f64], n: usize) -> Result<f64> {
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rows.push((vec![(i, 1.0), (j, -1.0)], d[i * n + j]));
            }
        }
        rows.push((vec![(i, 1.0)], 2.0));
    }
    let m = rows.len();
    let cols = n + m + 1;
    let mut t = vec![0.0f64; (m + 1) * cols];
    for (r, (coefs, rhs)) in rows.iter().enumerate() {
        for &(k, a) in coefs {
            t[r * cols + k] = a;
        }
        t[r * cols + n + r] = 1.0;
        t[r * cols + cols - 1] = *rhs;
    }
    // objective row holds reduced costs -w (maximization)
    let obj = m * cols;
    for k in 0..n {
        t[obj + k] = -w[k];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = 1e-12;
    for _ in 0..50_000 {
        let Some(enter) = (0..cols - 1).find(|&k| t[obj + k] < -eps) else {
            return Ok(t[obj + cols - 1]);
        };
        let mut leave = usize::MAX;
        let mut best = f64::INFINITY;
        for r in 0..m {
            let a = t[r * cols + enter];
            if a > eps {
                let ratio = t[r * cols + cols - 1] / a;
                if ratio < best - eps || (ratio <= best + eps && leave != usize::MAX && basis[r] < basis[leave]) {
                    best = ratio;
                    leave = r;
                }
            }
        }
        if leave == usize::MAX {
            return Err(Error::Numerical("bounded-Lipschitz LP reported unbounded".into()));
        }
        let piv = t[leave * cols + enter];
        for k in 0..cols {
            t[leave * cols + k] /= piv;
        }
        for r in 0..=m {
            if r == leave {
                continue;
            }
            let factor = t[r * cols + enter];
            if factor != 0.0 {
                for k in 0..cols {
                    t[r * cols + k] -= factor * t[leave * cols + k];
                }
            }
        }
        basis[leave] = enter;
    }
    Err(Error::Numerical("simplex iteration limit reached".into()))
}
