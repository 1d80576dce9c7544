//! Exact discrete optimal transport by successive shortest paths on the
//! bipartite support graph (dense Dijkstra with Johnson potentials).

use crate::error::{Error, Result};

const MASS_EPS: f64 = 1e-15;

/// Optimal transport between `supply` (rows) and `demand` (columns) for a
/// dense row-major `cost` matrix. Returns the flow matrix and the total cost.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = supply.len();
    let n = demand.len();
    if cost.len() != m * n {
        return Err(Error::domain("cost matrix has the wrong shape"));
    }
    let mut flow = vec![0.0; m * n];
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    // node ids: rows 0..m, columns m..m+n
    let nodes = m + n;
    let mut potential = vec![0.0; nodes];
    // initial column potentials = min incoming cost keeps reduced costs >= 0
    for j in 0..n {
        potential[m + j] = (0..m).map(|i| cost[i * n + j]).fold(f64::INFINITY, f64::min);
    }
    let mut dist = vec![0.0; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];

    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    let target = total_supply.min(total_demand);
    let mut shipped = 0.0;

    let mut guard = 0usize;
    while target - shipped > 1e-13 {
        guard += 1;
        if guard > 50 * (m + n) * (m + n) + 1000 {
            return Err(Error::domain("transport solver failed to converge"));
        }
        // multi-source Dijkstra from rows with remaining supply
        for v in 0..nodes {
            dist[v] = f64::INFINITY;
            prev[v] = usize::MAX;
            done[v] = false;
        }
        for i in 0..m {
            if rem_s[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut sink = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= m && rem_d[u - m] > MASS_EPS {
                sink = u;
                break;
            }
            if u < m {
                let i = u;
                for j in 0..n {
                    let v = m + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[i * n + j] + potential[i] - potential[v]).max(0.0);
                    let nd = dist[u] + rc;
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - m;
                for i in 0..m {
                    if done[i] || flow[i * n + j] <= MASS_EPS {
                        continue;
                    }
                    let rc = (-cost[i * n + j] + potential[u] - potential[i]).max(0.0);
                    let nd = dist[u] + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = u;
                    }
                }
            }
        }
        if sink == usize::MAX {
            break;
        }
        let d_sink = dist[sink];
        for v in 0..nodes {
            potential[v] += dist[v].min(d_sink);
        }
        // bottleneck along the path
        let mut amount = rem_d[sink - m];
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= m {
                // backward arc column u -> row v cancels flow (v, u)
                amount = amount.min(flow[v * n + (u - m)]);
            }
            v = u;
        }
        amount = amount.min(rem_s[v]);
        let source = v;
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < m {
                flow[u * n + (v - m)] += amount;
            } else {
                let f = &mut flow[v * n + (u - m)];
                *f -= amount;
                if *f < MASS_EPS {
                    *f = 0.0;
                }
            }
            v = u;
        }
        rem_s[source] -= amount;
        rem_d[sink - m] -= amount;
        shipped += amount;
    }
    let total = flow.iter().zip(cost).map(|(f, c)| f * c).sum();
    Ok((flow, total))
}
