//! Sparse LDLᵀ factorization for quasi-definite KKT matrices.
//!
//! The matrix is supplied as the upper triangle in compressed-column form.
//! A fill-reducing ordering is computed once (approximate minimum degree) and
//! reused for every numeric factorization that shares the pattern. No pivoting
//! is performed: the caller supplies the expected sign of every pivot and tiny
//! or wrong-signed pivots are replaced by a signed regularization value.

const UNKNOWN: usize = usize::MAX;

/// Upper-triangular CSC pattern with values.
#[derive(Debug, Clone)]
pub(crate) struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
}

impl UpperCsc {
    /// Builds the pattern from (row, col) pairs with row <= col.
    ///
    /// Returns the pattern and, for each input pair, the index of its slot.
    /// Duplicated pairs share a slot.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> (Self, Vec<usize>) {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(r, c) in pairs {
            debug_assert!(r <= c && c < n);
            cols[c].push(r);
        }
        for col in cols.iter_mut() {
            col.sort_unstable();
            col.dedup();
        }
        let mut colptr = Vec::with_capacity(n + 1);
        colptr.push(0);
        let mut rowind = Vec::new();
        for col in &cols {
            rowind.extend_from_slice(col);
            colptr.push(rowind.len());
        }
        let slots = pairs
            .iter()
            .map(|&(r, c)| {
                let range = colptr[c]..colptr[c + 1];
                let offset = rowind[range.clone()]
                    .binary_search(&r)
                    .expect("pair present in pattern");
                range.start + offset
            })
            .collect();
        (UpperCsc { n, colptr, rowind }, slots)
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// y = A x for the symmetric matrix whose upper triangle is stored.
    pub fn sym_mul(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.n {
            for p in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowind[p];
                let v = values[p];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
    }
}

/// Ordering and elimination tree, computed once per pattern.
#[derive(Debug, Clone)]
pub(crate) struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // permuted upper pattern
    pcolptr: Vec<usize>,
    prowind: Vec<usize>,
    // input slot -> permuted slot
    map: Vec<usize>,
    etree: Vec<usize>,
    lcolptr: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    li: Vec<usize>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
    /// Number of pivots that had to be regularized.
    pub regularized: usize,
}

impl Factor {
    pub fn summary(&self) -> String {
        let ml = self.lx.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        let md = self.dinv.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        format!("max |l| {ml:e} max |dinv| {md:e}")
    }
}

impl Symbolic {
    pub fn analyze(pattern: &UpperCsc) -> Self {
        let n = pattern.n;
        let perm = if n > 0 {
            let control = amd::Control::default();
            match amd::order::<usize>(n, &pattern.colptr, &pattern.rowind, &control) {
                Ok((p, _, _)) => p,
                Err(_) => (0..n).collect(),
            }
        } else {
            Vec::new()
        };
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // permute: entry (r, c) -> (min(pr, pc), max(pr, pc))
        let mut counts = vec![0usize; n];
        for c in 0..n {
            for p in pattern.colptr[c]..pattern.colptr[c + 1] {
                let (a, b) = (iperm[pattern.rowind[p]], iperm[c]);
                counts[a.max(b)] += 1;
            }
        }
        let mut pcolptr = vec![0usize; n + 1];
        for j in 0..n {
            pcolptr[j + 1] = pcolptr[j] + counts[j];
        }
        let mut next = pcolptr.clone();
        let mut prowind = vec![0usize; pattern.nnz()];
        let mut map = vec![0usize; pattern.nnz()];
        for c in 0..n {
            for p in pattern.colptr[c]..pattern.colptr[c + 1] {
                let (a, b) = (iperm[pattern.rowind[p]], iperm[c]);
                let (r, col) = (a.min(b), a.max(b));
                let slot = next[col];
                next[col] += 1;
                prowind[slot] = r;
                map[p] = slot;
            }
        }

        // elimination tree and column counts of L
        let mut work = vec![UNKNOWN; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![UNKNOWN; n];
        for j in 0..n {
            work[j] = j;
            for p in pcolptr[j]..pcolptr[j + 1] {
                let mut i = prowind[p];
                while i != j && work[i] != j {
                    if etree[i] == UNKNOWN {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                    if i == UNKNOWN {
                        break;
                    }
                }
            }
        }
        let mut lcolptr = vec![0usize; n + 1];
        for i in 0..n {
            lcolptr[i + 1] = lcolptr[i] + lnz[i];
        }
        Symbolic {
            n,
            perm,
            iperm,
            pcolptr,
            prowind,
            map,
            etree,
            lcolptr,
        }
    }

    /// Numeric factorization. `signs[i]` is the expected pivot sign of
    /// original index `i`; pivots with `sign * d < eps` are set to `sign * delta`.
    pub fn factor(&self, values: &[f64], signs: &[f64], eps: f64, delta: f64) -> Factor {
        let n = self.n;
        let mut pvals = vec![0.0; values.len()];
        for (p, &v) in values.iter().enumerate() {
            pvals[self.map[p]] += v;
        }
        let nnz_l = self.lcolptr[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0; nnz_l];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next_space: Vec<usize> = self.lcolptr[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut regularized = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            d[k] = 0.0;
            for p in self.pcolptr[k]..self.pcolptr[k + 1] {
                let b = self.prowind[p];
                if b == k {
                    d[k] += pvals[p];
                    continue;
                }
                y_vals[b] += pvals[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut nnz_e = 1;
                    let mut nxt = self.etree[b];
                    while nxt != UNKNOWN && nxt < k {
                        if y_used[nxt] {
                            break;
                        }
                        y_used[nxt] = true;
                        elim[nnz_e] = nxt;
                        nnz_e += 1;
                        nxt = self.etree[nxt];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lcolptr[c]..tmp {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[tmp] = k;
                lx[tmp] = yc * dinv[c];
                d[k] -= yc * lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            let sign = signs[self.perm[k]];
            if sign * d[k] < eps {
                d[k] = sign * delta;
                regularized += 1;
            }
            dinv[k] = 1.0 / d[k];
        }
        Factor {
            li,
            lx,
            dinv,
            regularized,
        }
    }

    /// Solves the factored system in place (original ordering).
    pub fn solve(&self, f: &Factor, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lcolptr[i]..self.lcolptr[i + 1] {
                    x[f.li[j]] -= f.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= f.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lcolptr[i]..self.lcolptr[i + 1] {
                acc -= f.lx[j] * x[f.li[j]];
            }
            x[i] = acc;
        }
        for i in 0..n {
            b[i] = x[self.iperm[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_from(pattern: &UpperCsc, values: &[f64]) -> Vec<Vec<f64>> {
        let n = pattern.n;
        let mut m = vec![vec![0.0; n]; n];
        for c in 0..n {
            for p in pattern.colptr[c]..pattern.colptr[c + 1] {
                let r = pattern.rowind[p];
                m[r][c] += values[p];
                if r != c {
                    m[c][r] += values[p];
                }
            }
        }
        m
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [ 4 1 | 1 ]
        // [ 1 3 | 2 ]
        // [ 1 2 |-1 ]
        let pairs = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];
        let vals = [4.0, 1.0, 3.0, 1.0, 2.0, -1.0];
        let (pat, slots) = UpperCsc::from_pairs(3, &pairs);
        let mut values = vec![0.0; pat.nnz()];
        for (s, v) in slots.iter().zip(vals) {
            values[*s] += v;
        }
        let sym = Symbolic::analyze(&pat);
        let f = sym.factor(&values, &[1.0, 1.0, -1.0], 1e-14, 1e-8);
        assert_eq!(f.regularized, 0);
        let rhs = [1.0, 2.0, 3.0];
        let mut x = rhs.to_vec();
        sym.solve(&f, &mut x);
        let m = dense_from(&pat, &values);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| m[i][j] * x[j]).sum();
            assert!((r - rhs[i]).abs() < 1e-12, "row {i}: {r}");
        }
    }

    #[test]
    fn tridiagonal_with_fill() {
        let n = 40;
        let mut pairs = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            pairs.push((i, i));
            vals.push(4.0 + i as f64 * 0.01);
            if i + 1 < n {
                pairs.push((i, i + 1));
                vals.push(-1.0);
            }
            if i + 7 < n {
                pairs.push((i, i + 7));
                vals.push(0.5);
            }
        }
        let (pat, slots) = UpperCsc::from_pairs(n, &pairs);
        let mut values = vec![0.0; pat.nnz()];
        for (s, v) in slots.iter().zip(vals) {
            values[*s] += v;
        }
        let sym = Symbolic::analyze(&pat);
        let f = sym.factor(&values, &vec![1.0; n], 1e-14, 1e-8);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        sym.solve(&f, &mut x);
        let mut y = vec![0.0; n];
        pat.sym_mul(&values, &x, &mut y);
        for i in 0..n {
            assert!((y[i] - rhs[i]).abs() < 1e-11);
        }
    }
}
