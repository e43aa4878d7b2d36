//! Brute-force grid oracle for the bounded-Lipschitz distance on supports of
//! at most four lattice points.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GRID: i64 = 1000;
pub const POINT_DIM: usize = 2;

pub struct Instance {
    /// Lattice coordinates in units of 1/GRID.
    pub points: Vec<[i64; POINT_DIM]>,
    pub p_counts: Vec<u64>,
    pub q_counts: Vec<u64>,
}

fn dist(a: &[i64; POINT_DIM], b: &[i64; POINT_DIM]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap()
}

/// Exhaustive search over test functions with values on the 1/GRID lattice.
/// The objective only depends on `f` up to a constant shift, so `f_0 = 0` and
/// the range constraint `max f - min f <= 2` replaces `|f| <= 1`. The last
/// value enters linearly and is set to an end of its feasible interval.
pub fn grid_oracle(inst: &Instance) -> f64 {
    let n = inst.points.len();
    let tp: u64 = inst.p_counts.iter().sum();
    let tq: u64 = inst.q_counts.iter().sum();
    let w: Vec<i64> = (0..n)
        .map(|i| inst.p_counts[i] as i64 * tq as i64 - inst.q_counts[i] as i64 * tp as i64)
        .collect();
    let d: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|j| dist(&inst.points[i], &inst.points[j])).collect())
        .collect();
    let mut f = vec![0i64; n];
    let mut best = i64::MIN;
    search(1, &mut f, &d, &w, &mut best);
    best as f64 / (tp * tq) as f64 / GRID as f64
}

fn bounds(k: usize, f: &[i64], d: &[Vec<i64>]) -> (i64, i64) {
    let mut lo = i64::MIN;
    let mut hi = i64::MAX;
    let (mut fmin, mut fmax) = (0, 0);
    for j in 0..k {
        lo = lo.max(f[j] - d[j][k]);
        hi = hi.min(f[j] + d[j][k]);
        fmin = fmin.min(f[j]);
        fmax = fmax.max(f[j]);
    }
    (lo.max(fmax - 2 * GRID), hi.min(fmin + 2 * GRID))
}

fn search(k: usize, f: &mut [i64], d: &[Vec<i64>], w: &[i64], best: &mut i64) {
    let n = f.len();
    if k == n {
        let v: i64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
        *best = (*best).max(v);
        return;
    }
    let (lo, hi) = bounds(k, f, d);
    if lo > hi {
        return;
    }
    if k == n - 1 {
        for v in [lo, hi] {
            f[k] = v;
            search(k + 1, f, d, w, best);
        }
        return;
    }
    for v in lo..=hi {
        f[k] = v;
        search(k + 1, f, d, w, best);
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(2..=4);
    let points = (0..n)
        .map(|_| [rng.random_range(-1200..=1200), rng.random_range(-1200..=1200)])
        .collect();
    loop {
        // each point belongs to P, Q or both, with multiplicity 1..=3
        let mut p_counts = vec![0u64; n];
        let mut q_counts = vec![0u64; n];
        for i in 0..n {
            match rng.random_range(0..3) {
                0 => p_counts[i] = rng.random_range(1..=3),
                1 => q_counts[i] = rng.random_range(1..=3),
                _ => {
                    p_counts[i] = rng.random_range(1..=3);
                    q_counts[i] = rng.random_range(1..=3);
                }
            }
        }
        if p_counts.iter().sum::<u64>() > 0 && q_counts.iter().sum::<u64>() > 0 {
            return Instance {
                points,
                p_counts,
                q_counts,
            };
        }
    }
}

pub fn clouds(inst: &Instance) -> (Vec<f64>, Vec<u64>, Vec<f64>, Vec<u64>) {
    let mut pp = Vec::new();
    let mut pc = Vec::new();
    let mut qp = Vec::new();
    let mut qc = Vec::new();
    for (i, pt) in inst.points.iter().enumerate() {
        let coords = pt.iter().map(|&c| c as f64 / GRID as f64);
        if inst.p_counts[i] > 0 {
            pp.extend(coords.clone());
            pc.push(inst.p_counts[i]);
        }
        if inst.q_counts[i] > 0 {
            qp.extend(coords);
            qc.push(inst.q_counts[i]);
        }
    }
    (pp, pc, qp, qc)
}
