//! Compressed sparse row matrices.

/// A real matrix in compressed row storage with sorted, unique column
/// indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. The summation order for every `(i, j)` is
    /// the order of appearance in `triplets`, so assembly is reproducible.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // Bucket by row (stable), then sort each row by column (stable).
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            bucket[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..nrows {
            let row = &mut bucket[counts[i]..counts[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in row.iter() {
                if col_indices.len() > row_offsets[i] && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        CsrMatrix { nrows, ncols, row_offsets, col_indices, values }
    }

    /// Square matrix summed from dense `n × n` element blocks: block `e`
    /// occupies `blocks[e n² .. (e + 1) n²]` (row-major) and couples the
    /// indices `dofs(e)`. Entries are summed in element order, as with
    /// [`CsrMatrix::from_triplets`].
    pub fn from_element_blocks<'a>(
        size: usize,
        n_elements: usize,
        n: usize,
        dofs: impl Fn(usize) -> &'a [usize],
        blocks: &[f64],
    ) -> CsrMatrix {
        assert_eq!(blocks.len(), n_elements * n * n);
        let mut counts = vec![0usize; size + 1];
        for e in 0..n_elements {
            for &d in dofs(e) {
                counts[d + 1] += 1;
            }
        }
        for i in 0..size {
            counts[i + 1] += counts[i];
        }
        // Occurrences of each row as (element, local index), by element.
        let mut next = counts.clone();
        let mut occ = vec![0usize; counts[size]];
        for e in 0..n_elements {
            for (i, &d) in dofs(e).iter().enumerate() {
                occ[next[d]] = e * n + i;
                next[d] += 1;
            }
        }
        let mut row_offsets = Vec::with_capacity(size + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..size {
            scratch.clear();
            for &ei in &occ[counts[r]..counts[r + 1]] {
                let (e, i) = (ei / n, ei % n);
                let block = &blocks[e * n * n + i * n..e * n * n + (i + 1) * n];
                scratch.extend(dofs(e).iter().copied().zip(block.iter().copied()));
            }
            scratch.sort_by_key(|&(j, _)| j);
            let start = col_indices.len();
            for &(j, v) in &scratch {
                if col_indices.len() > start && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        CsrMatrix { nrows: size, ncols: size, row_offsets, col_indices, values }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> CsrMatrix {
        let ncols = rows.first().map_or(0, Vec::len);
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, v)| (i, j, *v)))
            .collect();
        CsrMatrix::from_triplets(rows.len(), ncols, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                s += self.values[k] * x[self.col_indices[k]];
            }
            *yi = s;
        }
    }

    /// `y = Aᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                y[self.col_indices[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                triplets.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    triplets.push((i, j, a * b));
                }
            }
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &triplets)
    }

    /// Extracts the block with the given rows and columns. `map[i]` is the
    /// new index of old index `i`, or `usize::MAX` to drop it.
    pub fn select(&self, row_map: &[usize], new_rows: usize, col_map: &[usize], new_cols: usize) -> CsrMatrix {
        let kept = |m: &[usize]| m.iter().copied().filter(|&v| v != usize::MAX).collect::<Vec<_>>();
        let (rows, cols) = (kept(row_map), kept(col_map));
        let monotone = |v: &[usize], n: usize| v.len() == n && v.iter().enumerate().all(|(k, &x)| x == k);
        if monotone(&rows, new_rows) && monotone(&cols, new_cols) {
            // Order-preserving maps keep every row sorted: copy directly.
            let mut row_offsets = Vec::with_capacity(new_rows + 1);
            let mut col_indices = Vec::new();
            let mut values = Vec::new();
            row_offsets.push(0);
            for i in 0..self.nrows {
                if row_map[i] == usize::MAX {
                    continue;
                }
                for (j, v) in self.row(i) {
                    let nj = col_map[j];
                    if nj != usize::MAX {
                        col_indices.push(nj);
                        values.push(v);
                    }
                }
                row_offsets.push(col_indices.len());
            }
            return CsrMatrix { nrows: new_rows, ncols: new_cols, row_offsets, col_indices, values };
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let ni = row_map[i];
            if ni == usize::MAX {
                continue;
            }
            for (j, v) in self.row(i) {
                let nj = col_map[j];
                if nj != usize::MAX {
                    triplets.push((ni, nj, v));
                }
            }
        }
        CsrMatrix::from_triplets(new_rows, new_cols, &triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (0, 1, 0.5)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 2.5);
        assert_eq!(m.to_dense(), vec![vec![0.0, 2.5, 0.0], vec![3.0, 0.0, 1.0]]);
        assert_eq!(m.col_indices(), &[1, 0, 2]);
    }

    #[test]
    fn products_match_dense() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 3.0], vec![4.0, 0.0]]);
        let x = [1.0, -1.0];
        assert_eq!(a.mul_vec(&x), vec![-1.0, -3.0, 4.0]);
        assert_eq!(a.mul_transpose_vec(&[1.0, 1.0, 1.0]), vec![5.0, 5.0]);
        let ata = a.transpose().matmul(&a);
        assert_eq!(ata.to_dense(), vec![vec![17.0, 2.0], vec![2.0, 13.0]]);
        assert_eq!(ata.asymmetry(), 0.0);
    }

    #[test]
    fn select_extracts_block() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]);
        let map = [0, usize::MAX, 1];
        let b = a.select(&map, 2, &map, 2);
        assert_eq!(b.to_dense(), vec![vec![1.0, 3.0], vec![7.0, 9.0]]);
    }

    #[test]
    fn element_blocks_match_triplets() {
        let dofs = [vec![0usize, 2, 1], vec![2, 3, 1], vec![3, 0, 2]];
        let blocks: Vec<f64> = (0..27).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut triplets = Vec::new();
        for (e, d) in dofs.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    triplets.push((d[i], d[j], blocks[e * 9 + i * 3 + j]));
                }
            }
        }
        let a = CsrMatrix::from_element_blocks(4, 3, 3, |e| &dofs[e], &blocks);
        assert_eq!(a, CsrMatrix::from_triplets(4, 4, &triplets));
        let keep = [0, usize::MAX, 1, 2];
        let b = a.select(&keep, 3, &keep, 3);
        let mut via_triplets = Vec::new();
        for i in 0..4 {
            for (j, v) in a.row(i) {
                if keep[i] != usize::MAX && keep[j] != usize::MAX {
                    via_triplets.push((keep[i], keep[j], v));
                }
            }
        }
        assert_eq!(b, CsrMatrix::from_triplets(3, 3, &via_triplets));
    }
}
