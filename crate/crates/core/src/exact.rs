//! Exact reference solutions.
//!
//! The constrained problem is a set partition over the deliveries: every
//! drone route is a subset whose costs fit in the budget and whose windows
//! are pairwise compatible. Feasible subsets are enumerated once, then a
//! dynamic program over delivery bitmasks finds the fewest routes and the
//! smallest proxy objective `N^2 - sum |S|^2` using at most `m` routes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{Assignment, AssignmentSource};
use crate::instance::{within_budget, ConflictSet, OverlapConvention, ProblemInstance};
use crate::qubo::QuboModel;

/// Largest delivery count accepted by the subset DP.
pub const MAX_EXACT_DELIVERIES: usize = 24;

/// Largest model accepted by [`brute_force_qubo`].
pub const MAX_BRUTE_FORCE_VARS: usize = 26;

/// Every non-empty delivery subset that one drone can serve.
#[derive(Debug, Clone)]
pub struct FeasibleSubsetTable {
    num_deliveries: usize,
    feasible: Vec<bool>,
    masks: Vec<u32>,
    sizes: Vec<u8>,
}

impl FeasibleSubsetTable {
    pub fn num_deliveries(&self) -> usize {
        self.num_deliveries
    }

    /// Feasible masks in increasing order.
    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    /// `|S|` for each entry of [`masks`](Self::masks).
    pub fn sizes(&self) -> &[u8] {
        &self.sizes
    }

    pub fn contains(&self, mask: u32) -> bool {
        (mask as usize) < self.feasible.len() && self.feasible[mask as usize]
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

pub fn enumerate_feasible_subsets(
    instance: &ProblemInstance,
    conflicts: &ConflictSet,
) -> Result<FeasibleSubsetTable> {
    let n = instance.num_deliveries();
    if n > MAX_EXACT_DELIVERIES {
        return Err(Error::SizeCap {
            what: "delivery count for the exact subset DP (meant for desk-scale instances)",
            size: n,
            cap: MAX_EXACT_DELIVERIES,
        });
    }
    let adj = conflicts.adjacency_masks();
    let costs = instance.costs();
    let budget = instance.battery_budget();
    let full = 1usize << n;

    let mut load = vec![0.0f64; full];
    let mut compatible = vec![true; full];
    let mut feasible = vec![false; full];
    let mut masks = Vec::new();
    let mut sizes = Vec::new();
    for s in 1..full {
        let j = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        load[s] = load[rest] + costs[j];
        compatible[s] = compatible[rest] && (adj[j] as usize & rest) == 0;
        if compatible[s] && within_budget(load[s], budget) {
            feasible[s] = true;
            masks.push(s as u32);
            sizes.push(s.count_ones() as u8);
        }
    }
    Ok(FeasibleSubsetTable {
        num_deliveries: n,
        feasible,
        masks,
        sizes,
    })
}

/// Optimal partitions of the deliveries into drone routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSolution {
    pub min_drones: usize,
    /// A partition attaining `min_drones`.
    pub min_drones_partition: Vec<u32>,
    pub min_h0: f64,
    /// A partition with at most `m` parts attaining `min_h0`.
    pub min_h0_partition: Vec<u32>,
    pub min_h0_drones: usize,
    pub convention: OverlapConvention,
}

impl ExactSolution {
    /// The min-H0 partition as an `m x N` matrix, route `r` on drone `r`.
    pub fn min_h0_assignment(&self, m: usize, n: usize) -> Result<Assignment> {
        Assignment::from_partition(m, n, &self.min_h0_partition, AssignmentSource::Exact)
    }

    pub fn min_drones_assignment(&self, m: usize, n: usize) -> Result<Assignment> {
        Assignment::from_partition(m, n, &self.min_drones_partition, AssignmentSource::Exact)
    }
}

/// Delivery indices of each mask of a partition.
pub fn partition_lists(partition: &[u32]) -> Vec<Vec<usize>> {
    partition
        .iter()
        .map(|&s| (0..32).filter(|&j| s >> j & 1 == 1).collect())
        .collect()
}

/// Enumerates submasks `S` of `u` that contain its lowest set bit.
fn for_each_anchored_subset(u: usize, mut f: impl FnMut(usize)) {
    let low = u & u.wrapping_neg();
    let rest = u ^ low;
    let mut s = rest;
    loop {
        f(s | low);
        if s == 0 {
            break;
        }
        s = (s - 1) & rest;
    }
}

const NONE: u8 = u8::MAX;

fn min_route_partition(table: &FeasibleSubsetTable) -> Option<Vec<u32>> {
    let n = table.num_deliveries;
    let full = (1usize << n) - 1;
    let mut count = vec![NONE; full + 1];
    let mut choice = vec![0u32; full + 1];
    count[0] = 0;
    for u in 1..=full {
        let mut best = NONE;
        let mut pick = 0;
        for_each_anchored_subset(u, |s| {
            if table.feasible[s] {
                let c = count[u ^ s];
                if c != NONE && c + 1 < best {
                    best = c + 1;
                    pick = s;
                }
            }
        });
        count[u] = best;
        choice[u] = pick as u32;
    }
    if count[full] == NONE {
        return None;
    }
    Some(unwind(&choice, full))
}

fn unwind(choice: &[u32], mut u: usize) -> Vec<u32> {
    let mut parts = Vec::new();
    while u != 0 {
        let s = choice[u];
        parts.push(s);
        u ^= s as usize;
    }
    parts.sort_unstable();
    parts
}

/// Partition maximising `sum |S|^2` with at most `max_parts` routes.
fn max_square_partition(table: &FeasibleSubsetTable, max_parts: usize) -> Option<Vec<u32>> {
    let n = table.num_deliveries;
    let full = (1usize << n) - 1;
    let sq = |s: usize| {
        let c = s.count_ones() as i32;
        c * c
    };

    // Unconstrained optimum, ties broken towards fewer routes.
    let mut value = vec![(i32::MIN, 0u8); full + 1];
    let mut choice = vec![0u32; full + 1];
    value[0] = (0, 0);
    for u in 1..=full {
        let mut best = (i32::MIN, 0u8);
        let mut pick = 0;
        for_each_anchored_subset(u, |s| {
            if table.feasible[s] {
                let (v, parts) = value[u ^ s];
                if v != i32::MIN {
                    let cand = (v + sq(s), parts + 1);
                    if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                        best = cand;
                        pick = s;
                    }
                }
            }
        });
        value[u] = best;
        choice[u] = pick as u32;
    }
    if value[full].0 == i32::MIN {
        return None;
    }
    if value[full].1 as usize <= max_parts {
        return Some(unwind(&choice, full));
    }

    // Layered DP: layers[k][u] is the best value using at most k routes.
    let max_parts = max_parts.min(n);
    let mut layers: Vec<Vec<i32>> = Vec::with_capacity(max_parts + 1);
    let mut base = vec![i32::MIN; full + 1];
    base[0] = 0;
    layers.push(base);
    for k in 1..=max_parts {
        let prev = &layers[k - 1];
        let mut cur = vec![i32::MIN; full + 1];
        cur[0] = 0;
        for (u, slot) in cur.iter_mut().enumerate().skip(1) {
            let mut best = i32::MIN;
            for_each_anchored_subset(u, |s| {
                if table.feasible[s] && prev[u ^ s] != i32::MIN {
                    best = best.max(prev[u ^ s] + sq(s));
                }
            });
            *slot = best;
        }
        layers.push(cur);
    }
    if layers[max_parts][full] == i32::MIN {
        return None;
    }
    let mut parts = Vec::new();
    let mut u = full;
    let mut k = max_parts;
    while u != 0 {
        let target = layers[k][u];
        let mut pick = None;
        for_each_anchored_subset(u, |s| {
            if pick.is_none()
                && table.feasible[s]
                && layers[k - 1][u ^ s] != i32::MIN
                && layers[k - 1][u ^ s] + sq(s) == target
            {
                pick = Some(s);
            }
        });
        let s = pick.expect("layered DP value is attained by some route");
        parts.push(s as u32);
        u ^= s;
        k -= 1;
    }
    parts.sort_unstable();
    Some(parts)
}

/// Minimum drone count and minimum proxy objective with at most `m` drones.
pub fn solve_exact(
    instance: &ProblemInstance,
    conflicts: &ConflictSet,
    m: usize,
) -> Result<ExactSolution> {
    let table = enumerate_feasible_subsets(instance, conflicts)?;
    solve_with_table(instance, conflicts, &table, m)
}

pub fn solve_with_table(
    instance: &ProblemInstance,
    conflicts: &ConflictSet,
    table: &FeasibleSubsetTable,
    m: usize,
) -> Result<ExactSolution> {
    let n = instance.num_deliveries();
    let min_partition = min_route_partition(table).ok_or(Error::Infeasible { drones: m })?;
    if min_partition.len() > m {
        return Err(Error::Infeasible { drones: m });
    }
    let h0_partition = max_square_partition(table, m).ok_or(Error::Infeasible { drones: m })?;
    let squares: usize = h0_partition
        .iter()
        .map(|s| (s.count_ones() as usize).pow(2))
        .sum();
    Ok(ExactSolution {
        min_drones: min_partition.len(),
        min_drones_partition: min_partition,
        min_h0: (n * n - squares) as f64,
        min_h0_drones: h0_partition.len(),
        min_h0_partition: h0_partition,
        convention: conflicts.convention(),
    })
}

/// Size of the largest set of pairwise conflicting deliveries.
pub fn clique_lower_bound(conflicts: &ConflictSet) -> usize {
    fn grow(candidates: u64, size: usize, adj: &[u64], best: &mut usize) {
        if candidates == 0 {
            *best = (*best).max(size);
            return;
        }
        if size + candidates.count_ones() as usize <= *best {
            return;
        }
        let mut rest = candidates;
        while rest != 0 {
            if size + rest.count_ones() as usize <= *best {
                return;
            }
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            grow(rest & adj[v], size + 1, adj, best);
        }
    }
    let n = conflicts.num_deliveries();
    if n == 0 {
        return 0;
    }
    let adj = conflicts.adjacency_masks();
    let all = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut best = 1;
    grow(all, 0, &adj, &mut best);
    best
}

/// `ceil(sum c_j / B)`.
pub fn volume_lower_bound(instance: &ProblemInstance) -> usize {
    let ratio = instance.total_cost() / instance.battery_budget();
    let floor = ratio.floor();
    if ratio - floor <= 1e-9 {
        floor as usize
    } else {
        floor as usize + 1
    }
}

fn lexicographic_key(state: u32, n: usize) -> u32 {
    if n == 0 {
        0
    } else {
        state.reverse_bits() >> (32 - n)
    }
}

/// Exhaustive ground state of a small model. Among equal-energy states the
/// lexicographically smallest bit vector (variable 0 first) wins.
pub fn brute_force_qubo(model: &QuboModel) -> Result<(Vec<bool>, f64)> {
    let n = model.num_variables();
    if n > MAX_BRUTE_FORCE_VARS {
        return Err(Error::SizeCap {
            what: "model size for brute-force search",
            size: n,
            cap: MAX_BRUTE_FORCE_VARS,
        });
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(u, v), &c) in model.quadratic() {
        adj[u].push((v, c));
        adj[v].push((u, c));
    }
    let scale = model.offset().abs()
        + model.linear().iter().map(|c| c.abs()).sum::<f64>()
        + model.quadratic().values().map(|c| c.abs()).sum::<f64>();
    let tol = 1e-9 * scale.max(1.0);

    let to_bits = |state: u32| -> Vec<bool> { (0..n).map(|v| state >> v & 1 == 1).collect() };
    let exact = |state: u32| model.energy_unchecked(&to_bits(state));

    let mut state = 0u32;
    let mut field = model.linear().to_vec();
    let mut energy = model.offset();
    let mut best_state = 0u32;
    let mut best_exact = energy;

    const RESYNC: u64 = 1 << 12;
    for step in 1u64..(1u64 << n) {
        let v = step.trailing_zeros() as usize;
        let on = state >> v & 1 == 1;
        energy += if on { -field[v] } else { field[v] };
        state ^= 1 << v;
        let sign = if on { -1.0 } else { 1.0 };
        for &(u, c) in &adj[v] {
            field[u] += sign * c;
        }
        if step % RESYNC == 0 {
            let bits = to_bits(state);
            energy = model.energy_unchecked(&bits);
            for (u, f) in field.iter_mut().enumerate() {
                *f = model.linear()[u]
                    + adj[u].iter().filter(|&&(w, _)| bits[w]).map(|&(_, c)| c).sum::<f64>();
            }
        }

        if energy < best_exact - tol {
            best_state = state;
            best_exact = exact(state);
        } else if energy <= best_exact + tol {
            let e = exact(state);
            let better = e < best_exact - tol
                || ((e - best_exact).abs() <= tol
                    && lexicographic_key(state, n) < lexicographic_key(best_state, n));
            if better {
                best_state = state;
                best_exact = e;
            }
        }
    }
    Ok((to_bits(best_state), exact(best_state)))
}
