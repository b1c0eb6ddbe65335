//! Sparse symmetric quasidefinite factorization `P K P^T = L D L^T`.
//!
//! The pattern is fixed once (minimum-degree ordering plus elimination tree);
//! numeric values are refactored every Newton step.

/// Symbolic structure of a symmetric matrix; values live in caller-owned
/// arrays laid out as the permuted upper triangle in CSC order.
#[derive(Debug, Clone)]
pub(crate) struct Kkt {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    parent: Vec<usize>,
    lp: Vec<usize>,
    /// Expected pivot sign per permuted node (+1 or -1).
    sign: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) bumped: usize,
}

const NONE: usize = usize::MAX;

fn min_degree(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let words = n.div_ceil(64).max(1);
    let mut adj = vec![0u64; n * words];
    let set = |adj: &mut [u64], i: usize, j: usize| adj[i * words + j / 64] |= 1 << (j % 64);
    for &(i, j) in edges {
        if i != j {
            set(&mut adj, i, j);
            set(&mut adj, j, i);
        }
    }
    let mut alive = vec![!0u64; words];
    if !n.is_multiple_of(64) {
        alive[words - 1] = (1u64 << (n % 64)) - 1;
    }
    let count = |row: &[u64]| row.iter().map(|w| w.count_ones() as usize).sum::<usize>();
    let mut deg: Vec<usize> = (0..n).map(|i| count(&adj[i * words..(i + 1) * words])).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut row_v = vec![0u64; words];
    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| !done[i])
            .min_by_key(|&i| (deg[i], i))
            .expect("node left");
        done[v] = true;
        order.push(v);
        alive[v / 64] &= !(1 << (v % 64));
        for w in 0..words {
            row_v[w] = adj[v * words + w] & alive[w];
        }
        let neighbors: Vec<usize> = (0..n)
            .filter(|&u| row_v[u / 64] >> (u % 64) & 1 == 1)
            .collect();
        for &u in &neighbors {
            let r = &mut adj[u * words..(u + 1) * words];
            for w in 0..words {
                r[w] = (r[w] | row_v[w]) & alive[w];
            }
            r[u / 64] &= !(1 << (u % 64));
            deg[u] = count(r);
        }
    }
    order
}

impl Kkt {
    /// `edges` lists structurally nonzero off-diagonal pairs (either order,
    /// duplicates allowed); every diagonal is always present.
    pub(crate) fn new(n: usize, edges: &[(usize, usize)], signs: &[f64]) -> Self {
        let perm = min_degree(n, edges);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for &(i, j) in edges {
            if i == j {
                continue;
            }
            let (a, b) = (iperm[i], iperm[j]);
            let (r, c) = if a < b { (a, b) } else { (b, a) };
            cols[c].push(r);
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowidx = Vec::new();
        colptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            rowidx.extend_from_slice(c);
            colptr.push(rowidx.len());
        }
        // elimination tree and column counts
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in colptr[k]..colptr[k + 1] {
                let mut i = rowidx[p];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let sign = perm.iter().map(|&old| signs[old]).collect();
        Kkt {
            n,
            perm,
            iperm,
            colptr,
            rowidx,
            parent,
            lp,
            sign,
        }
    }

    pub(crate) fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    /// Index into the value array for original entry `(i, j)`.
    pub(crate) fn pos(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.iperm[i], self.iperm[j]);
        let (r, c) = if a <= b { (a, b) } else { (b, a) };
        let rows = &self.rowidx[self.colptr[c]..self.colptr[c + 1]];
        self.colptr[c] + rows.binary_search(&r).expect("entry not in pattern")
    }

    pub(crate) fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization with static shift `reg` on every pivot (sign
    /// following the expected inertia) and dynamic replacement of pivots
    /// whose sign or size is wrong.
    pub(crate) fn factor(&self, ax: &[f64], reg: f64, eps: f64, delta: f64) -> Factor {
        let n = self.n;
        let nnz_l = self.lp[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0; nnz_l];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut bumped = 0;
        for k in 0..n {
            y[k] = 0.0;
            let mut top = n;
            flag[k] = k;
            for p in self.colptr[k]..self.colptr[k + 1] {
                let mut i = self.rowidx[p];
                y[i] += ax[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k] + self.sign[k] * reg;
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p2 = self.lp[i] + lnz[i];
                for p in self.lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                dk -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                lnz[i] += 1;
            }
            if !(dk * self.sign[k] > eps) {
                dk = self.sign[k] * delta;
                bumped += 1;
            }
            d[k] = dk;
        }
        Factor { li, lx, d, bumped }
    }

    fn solve_permuted(&self, f: &Factor, x: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[f.li[p]] -= f.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= f.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= f.lx[p] * x[f.li[p]];
            }
            x[j] = s;
        }
    }

    /// Solves `K x = b` with the factor, in original ordering.
    pub(crate) fn solve(&self, f: &Factor, b: &[f64]) -> Vec<f64> {
        let mut xp: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted(f, &mut xp);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = xp[new];
        }
        x
    }

    /// Replaces `K` by `S K S` for the diagonal `S = diag(s)` (original ordering).
    pub(crate) fn scale(&self, ax: &mut [f64], s: &[f64]) {
        for c in 0..self.n {
            let sc = s[self.perm[c]];
            for p in self.colptr[c]..self.colptr[c + 1] {
                ax[p] *= sc * s[self.perm[self.rowidx[p]]];
            }
        }
    }

    /// `y = K x` for the symmetric matrix stored in `ax`, original ordering.
    pub(crate) fn mul(&self, ax: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            let oc = self.perm[c];
            for p in self.colptr[c]..self.colptr[c + 1] {
                let or = self.perm[self.rowidx[p]];
                y[or] += ax[p] * x[oc];
                if or != oc {
                    y[oc] += ax[p] * x[or];
                }
            }
        }
        y
    }

    /// Factor solve followed by iterative refinement against `ax`.
    pub(crate) fn solve_refined(&self, f: &Factor, ax: &[f64], b: &[f64], max_iter: usize) -> Vec<f64> {
        let mut x = self.solve(f, b);
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut last = f64::INFINITY;
        for _ in 0..max_iter {
            let kx = self.mul(ax, &x);
            let r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
            let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rn <= 1e-14 * bnorm.max(1e-300) || rn >= 0.5 * last {
                break;
            }
            last = rn;
            let dx = self.solve(f, &r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_quasidefinite_system() {
        // [4 1 0 1; 1 3 1 0; 0 1 -2 0; 1 0 0 -1]
        let edges = [(0, 1), (1, 2), (0, 3)];
        let k = Kkt::new(4, &edges, &[1.0, 1.0, -1.0, -1.0]);
        let mut ax = vec![0.0; k.nnz()];
        let entries = [
            (0, 0, 4.0),
            (1, 1, 3.0),
            (2, 2, -2.0),
            (3, 3, -1.0),
            (0, 1, 1.0),
            (1, 2, 1.0),
            (0, 3, 1.0),
        ];
        for &(i, j, v) in &entries {
            ax[k.pos(i, j)] += v;
        }
        let f = k.factor(&ax, 0.0, 1e-14, 1e-8);
        assert_eq!(f.bumped, 0);
        let xtrue = [1.0, -2.0, 0.5, 3.0];
        let b = k.mul(&ax, &xtrue);
        let x = k.solve_refined(&f, &ax, &b, 3);
        for i in 0..4 {
            assert!((x[i] - xtrue[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_is_a_permutation() {
        let edges: Vec<(usize, usize)> = (1..30).map(|i| (0, i)).chain((1..29).map(|i| (i, i + 1))).collect();
        let mut order = min_degree(30, &edges);
        order.sort_unstable();
        assert_eq!(order, (0..30).collect::<Vec<_>>());
    }
}
