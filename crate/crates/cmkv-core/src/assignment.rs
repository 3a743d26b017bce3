//! Minimum-cost assignment on small dense instances (Hungarian method with
//! potentials, shortest augmenting paths, O(n^3)).

/// Solve the square assignment problem for `cost` (row-major n x n).
/// Returns (row assigned to each column, total cost).
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-indexed arrays; p[j] is the row matched to column j, p[0] the row
    // currently being inserted.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        rows[j - 1] = p[j] - 1;
        total += cost[(p[j] - 1) * n + (j - 1)];
    }
    (rows, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    /// Brute-force minimum over all permutations (Heap's algorithm).
    pub(crate) fn brute_force_min_cost(cost: &[f64], n: usize) -> f64 {
        fn rec(perm: &mut Vec<usize>, k: usize, cost: &[f64], n: usize, best: &mut f64) {
            if k == n {
                let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
                if total < *best {
                    *best = total;
                }
                return;
            }
            for i in k..n {
                perm.swap(k, i);
                rec(perm, k + 1, cost, n, best);
                perm.swap(k, i);
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        rec(&mut perm, 0, cost, n, &mut best);
        best
    }

    #[test]
    fn matches_permutation_enumeration() {
        let stream = RandomStream::from_seed(77);
        for inst in 0..60u64 {
            let n = 2 + (inst % 7) as usize; // up to 8
            let sub = stream.child(inst);
            let cost: Vec<f64> = (0..n * n).map(|k| sub.uniform_at(k as u64) * 10.0).collect();
            let (rows, total) = min_cost_assignment(&cost, n);
            let brute = brute_force_min_cost(&cost, n);
            assert!(
                (total - brute).abs() <= 1e-12 * (1.0 + brute.abs()),
                "instance {inst}: {total} vs {brute}"
            );
            // rows must be a permutation
            let mut seen = vec![false; n];
            for &r in &rows {
                assert!(!seen[r]);
                seen[r] = true;
            }
        }
    }

    #[test]
    fn trivial_cases() {
        let (rows, total) = min_cost_assignment(&[], 0);
        assert!(rows.is_empty());
        assert_eq!(total, 0.0);
        let (rows, total) = min_cost_assignment(&[3.5], 1);
        assert_eq!(rows, vec![0]);
        assert_eq!(total, 3.5);
        // 2x2 where the crossed pairing wins
        let cost = [10.0, 1.0, 1.0, 10.0];
        let (_, total) = min_cost_assignment(&cost, 2);
        assert_eq!(total, 2.0);
    }
}
