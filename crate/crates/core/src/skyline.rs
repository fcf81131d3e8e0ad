//! Symmetric variable-band (skyline) storage with an in-place Cholesky
//! factorization. Row `i` stores the lower-triangle entries from its first
//! nonzero column up to the diagonal.

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

/// Cholesky breakdown: pivot `row` was not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub row: usize,
}

impl SkylineMatrix {
    /// `first[i]` is the smallest column coupled to row `i` (`<= i`).
    pub fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile must be lower triangular");
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        Self {
            first,
            start,
            values: vec![0.0; acc],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i]);
        self.start[i] + (j - self.first[i])
    }

    /// Adds `v` at `(i, j)`; the symmetric twin is implied.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.values[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if j < self.first[i] {
            0.0
        } else {
            self.values[self.slot(i, j)]
        }
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.values[self.slot(i, i)]
    }

    /// `A <- S A S` for the diagonal matrix `S = diag(scale)`.
    pub fn scale_symmetric(&mut self, scale: &[f64]) {
        for i in 0..self.dim() {
            let f = self.first[i];
            for k in 0..=(i - f) {
                self.values[self.start[i] + k] *= scale[i] * scale[f + k];
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let f = self.first[i];
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `b - A x` accumulated in double-double arithmetic so the result is
    /// accurate even when `A x` cancels against `b`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; n];
        let mut acc = |i: usize, a: f64, xj: f64| {
            let p = -a * xj;
            let pe = (-a).mul_add(xj, -p);
            let (s, se) = two_sum(hi[i], p);
            hi[i] = s;
            lo[i] += se + pe;
        };
        for i in 0..n {
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let f = self.first[i];
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                acc(i, a, x[j]);
                if j != i {
                    acc(j, a, x[i]);
                }
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    /// Factorizes in place into `L` (same profile). A pivot is rejected when
    /// it drops below `rel_tol` times the original diagonal entry.
    pub fn cholesky(mut self, rel_tol: f64) -> Result<SkylineCholesky, NotPositiveDefinite> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let mut s = self.values[self.slot(i, j)];
                let ri = self.start[i] + (k0 - fi);
                let rj = self.start[j] + (k0 - fj);
                let len = j - k0;
                let (a, b) = (&self.values[ri..ri + len], &self.values[rj..rj + len]);
                s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let d = self.values[self.slot(j, j)];
                let s_ij = self.slot(i, j);
                self.values[s_ij] = s / d;
            }
            let s_ii = self.slot(i, i);
            let orig = self.values[s_ii];
            let row = &self.values[self.start[i]..s_ii];
            let pivot = orig - row.iter().map(|x| x * x).sum::<f64>();
            if !pivot.is_finite() || pivot <= rel_tol * orig.abs() {
                return Err(NotPositiveDefinite { row: i });
            }
            self.values[s_ii] = pivot.sqrt();
        }
        Ok(SkylineCholesky { factor: self })
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    factor: SkylineMatrix,
}

impl SkylineCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.dim();
        let mut y = rhs.to_vec();
        // L y = b
        for i in 0..n {
            let fi = l.first[i];
            let row = &l.values[l.start[i]..l.start[i + 1] - 1];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / l.diagonal(i);
        }
        // L^T x = y
        for i in (0..n).rev() {
            y[i] /= l.diagonal(i);
            let fi = l.first[i];
            let xi = y[i];
            let row = &l.values[l.start[i]..l.start[i + 1] - 1];
            for (k, &a) in row.iter().enumerate() {
                y[fi + k] -= a * xi;
            }
        }
        y
    }
}
