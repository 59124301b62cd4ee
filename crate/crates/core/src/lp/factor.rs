//! Sparse LU of the basis with product-form updates.
//!
//! `factorize` runs a right-looking Markowitz elimination with threshold
//! pivoting. Pivot `k` eliminates row `prow[k]` and basis position
//! `pcol[k]`; `L` holds the row multipliers of each step and `U` the pivot
//! row restricted to positions pivoted later. Basis changes append etas
//! over positions until the next rebuild.

use super::Scalar;

/// Relative threshold for float pivots within a column.
const THRESHOLD: f64 = 0.01;
/// Candidate columns examined per Markowitz search.
const SEARCH_COLUMNS: usize = 4;

/// Positions and rows left without a pivot.
#[derive(Debug)]
pub(super) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(super) struct Factor<T> {
    m: usize,
    prow: Vec<usize>,
    pcol: Vec<usize>,
    diag: Vec<T>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<T>,
    e_pos: Vec<usize>,
    e_piv: Vec<T>,
    e_start: Vec<usize>,
    e_idx: Vec<usize>,
    e_val: Vec<T>,
}

impl<T: Scalar> Factor<T> {
    pub fn new() -> Self {
        Factor {
            m: 0,
            prow: Vec::new(),
            pcol: Vec::new(),
            diag: Vec::new(),
            l_start: vec![0],
            l_idx: Vec::new(),
            l_val: Vec::new(),
            u_start: vec![0],
            u_idx: Vec::new(),
            u_val: Vec::new(),
            e_pos: Vec::new(),
            e_piv: Vec::new(),
            e_start: vec![0],
            e_idx: Vec::new(),
            e_val: Vec::new(),
        }
    }

    pub fn updates(&self) -> usize {
        self.e_pos.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.diag.len() + self.l_idx.len() + self.u_idx.len() + self.e_pos.len() + self.e_idx.len()
    }

    /// Factorizes the basis whose position `p` holds column `cols[p]` given
    /// as `(row, value)` pairs.
    pub fn factorize(&mut self, m: usize, cols: &[Vec<(usize, T)>]) -> Result<(), Singular> {
        assert_eq!(cols.len(), m);
        *self = Factor::new();
        self.m = m;
        let drop = T::drop_tol();
        // active submatrix: rows hold (position, value); columns hold row patterns
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for (i, v) in col {
                if v.abs() > drop {
                    rows[*i].push((p, v.clone()));
                    col_rows[p].push(*i);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut col_count: Vec<usize> = col_rows.iter().map(Vec::len).collect();
        let mut mark: Vec<usize> = vec![usize::MAX; m];
        let mut row_singles: Vec<usize> = (0..m).rev().filter(|&i| rows[i].len() == 1).collect();
        let mut col_singles: Vec<usize> = (0..m).rev().filter(|&p| col_count[p] == 1).collect();

        for _ in 0..m {
            let pick = self.pick_pivot(
                &rows,
                &col_rows,
                &row_done,
                &col_done,
                &col_count,
                &mut row_singles,
                &mut col_singles,
            );
            let Some((pr, pc)) = pick else { break };
            // pivot row pr, position pc
            let row_p = std::mem::take(&mut rows[pr]);
            let piv = row_p.iter().find(|(c, _)| *c == pc).expect("pivot entry").1.clone();
            row_done[pr] = true;
            col_done[pc] = true;
            for (c, _) in &row_p {
                if *c != pc {
                    col_count[*c] -= 1;
                    if col_count[*c] == 1 {
                        col_singles.push(*c);
                    }
                }
            }
            // eliminate column pc from the other active rows
            let others: Vec<usize> = col_rows[pc]
                .iter()
                .copied()
                .filter(|&i| !row_done[i])
                .collect();
            for (k, (c, _)) in row_p.iter().enumerate() {
                mark[*c] = k;
            }
            for i in others {
                let Some(at) = rows[i].iter().position(|(c, _)| *c == pc) else { continue };
                let (_, a) = rows[i].swap_remove(at);
                let l = a / piv.clone();
                self.l_idx.push(i);
                self.l_val.push(l.clone());
                // row_i -= l * row_p on positions other than pc
                let mut seen = vec![false; row_p.len()];
                let mut k = 0;
                while k < rows[i].len() {
                    let c = rows[i][k].0;
                    if mark[c] != usize::MAX {
                        let idx = mark[c];
                        seen[idx] = true;
                        let v = rows[i][k].1.clone() - l.clone() * row_p[idx].1.clone();
                        if v.abs() <= drop {
                            rows[i].swap_remove(k);
                            col_count[c] -= 1;
                            if col_count[c] == 1 {
                                col_singles.push(c);
                            }
                            continue;
                        }
                        rows[i][k].1 = v;
                    }
                    k += 1;
                }
                for (idx, (c, u)) in row_p.iter().enumerate() {
                    if *c == pc || seen[idx] {
                        continue;
                    }
                    let v = -(l.clone() * u.clone());
                    if v.abs() <= drop {
                        continue;
                    }
                    rows[i].push((*c, v));
                    col_rows[*c].push(i);
                    col_count[*c] += 1;
                }
                if rows[i].len() == 1 {
                    row_singles.push(i);
                }
            }
            for (c, _) in &row_p {
                mark[*c] = usize::MAX;
            }
            self.l_start.push(self.l_idx.len());
            for (c, u) in row_p {
                if c != pc {
                    self.u_idx.push(c);
                    self.u_val.push(u);
                }
            }
            self.u_start.push(self.u_idx.len());
            self.prow.push(pr);
            self.pcol.push(pc);
            self.diag.push(piv);
        }
        if self.prow.len() < m {
            return Err(Singular {
                positions: (0..m).filter(|&p| !col_done[p]).collect(),
                rows: (0..m).filter(|&i| !row_done[i]).collect(),
            });
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn pick_pivot(
        &self,
        rows: &[Vec<(usize, T)>],
        col_rows: &[Vec<usize>],
        row_done: &[bool],
        col_done: &[bool],
        col_count: &[usize],
        row_singles: &mut Vec<usize>,
        col_singles: &mut Vec<usize>,
    ) -> Option<(usize, usize)> {
        let tol = T::pivot_tol();
        while let Some(p) = col_singles.pop() {
            if col_done[p] || col_count[p] != 1 {
                continue;
            }
            let i = col_rows[p]
                .iter()
                .copied()
                .find(|&i| !row_done[i] && rows[i].iter().any(|(c, _)| *c == p));
            if let Some(i) = i {
                let v = &rows[i].iter().find(|(c, _)| *c == p).expect("entry").1;
                if v.abs() > tol {
                    return Some((i, p));
                }
            }
        }
        while let Some(i) = row_singles.pop() {
            if row_done[i] || rows[i].len() != 1 {
                continue;
            }
            let (p, v) = &rows[i][0];
            if v.abs() > tol {
                return Some((i, *p));
            }
        }
        // Markowitz search over the sparsest columns
        let mut order: Vec<usize> = (0..self.m).filter(|&p| !col_done[p] && col_count[p] > 0).collect();
        if order.is_empty() {
            return None;
        }
        order.sort_by_key(|&p| (col_count[p], p));
        let mut best: Option<(usize, usize, usize)> = None; // (cost, row, pos)
        for &p in order.iter().take(SEARCH_COLUMNS.max(1)) {
            let entries: Vec<(usize, T)> = col_rows[p]
                .iter()
                .copied()
                .filter(|&i| !row_done[i])
                .filter_map(|i| rows[i].iter().find(|(c, _)| *c == p).map(|(_, v)| (i, v.clone())))
                .collect();
            let max = entries.iter().map(|(_, v)| v.abs()).fold(T::zero(), |a, b| if b > a { b } else { a });
            let floor = T::from_f64(THRESHOLD).map(|t| t * max).unwrap_or_else(T::zero);
            for (i, v) in entries {
                let a = v.abs();
                if a <= tol || a < floor {
                    continue;
                }
                let cost = (rows[i].len() - 1) * (col_count[p].saturating_sub(1));
                if best.is_none_or(|(bc, bi, bp)| (cost, i, p) < (bc, bi, bp)) {
                    best = Some((cost, i, p));
                }
            }
        }
        if best.is_none() {
            // all remaining sparse columns are numerically empty; scan the rest
            for &p in order.iter().skip(SEARCH_COLUMNS) {
                for &i in &col_rows[p] {
                    if row_done[i] {
                        continue;
                    }
                    if let Some((_, v)) = rows[i].iter().find(|(c, _)| *c == p) {
                        if v.abs() > tol {
                            return Some((i, p));
                        }
                    }
                }
            }
        }
        best.map(|(_, i, p)| (i, p))
    }

    /// Appends the eta for replacing position `r` by a column whose
    /// transformed values are `col` (indexed by position).
    pub fn update(&mut self, r: usize, col: &[T]) {
        let drop = T::drop_tol();
        self.e_pos.push(r);
        self.e_piv.push(col[r].clone());
        for (i, v) in col.iter().enumerate() {
            if i != r && v.abs() > drop {
                self.e_idx.push(i);
                self.e_val.push(v.clone());
            }
        }
        self.e_start.push(self.e_idx.len());
    }

    /// `x <- B^-1 x`; input by row, output by position.
    pub fn ftran(&self, x: &mut [T]) {
        let m = self.m;
        for k in 0..m {
            let r = self.prow[k];
            if x[r].is_zero() {
                continue;
            }
            let xr = x[r].clone();
            for e in self.l_start[k]..self.l_start[k + 1] {
                let i = self.l_idx[e];
                x[i] = x[i].clone() - self.l_val[e].clone() * xr.clone();
            }
        }
        let mut z = vec![T::zero(); m];
        for k in (0..m).rev() {
            let mut s = x[self.prow[k]].clone();
            for e in self.u_start[k]..self.u_start[k + 1] {
                let zp = &z[self.u_idx[e]];
                if !zp.is_zero() {
                    s = s - self.u_val[e].clone() * zp.clone();
                }
            }
            z[self.pcol[k]] = if s.is_zero() { s } else { s / self.diag[k].clone() };
        }
        x.clone_from_slice(&z);
        for k in 0..self.e_pos.len() {
            let p = self.e_pos[k];
            if x[p].is_zero() {
                continue;
            }
            let xp = x[p].clone() / self.e_piv[k].clone();
            for e in self.e_start[k]..self.e_start[k + 1] {
                let i = self.e_idx[e];
                x[i] = x[i].clone() - self.e_val[e].clone() * xp.clone();
            }
            x[p] = xp;
        }
    }

    /// `y^T <- y^T B^-1`; input by position, output by row.
    pub fn btran(&self, y: &mut [T]) {
        let m = self.m;
        for k in (0..self.e_pos.len()).rev() {
            let p = self.e_pos[k];
            let mut s = y[p].clone();
            for e in self.e_start[k]..self.e_start[k + 1] {
                let yi = &y[self.e_idx[e]];
                if !yi.is_zero() {
                    s = s - self.e_val[e].clone() * yi.clone();
                }
            }
            y[p] = s / self.e_piv[k].clone();
        }
        // U^T: acc over positions, t over rows
        let mut t = vec![T::zero(); m];
        for k in 0..m {
            let acc = y[self.pcol[k]].clone();
            let tk = if acc.is_zero() { acc } else { acc / self.diag[k].clone() };
            if !tk.is_zero() {
                for e in self.u_start[k]..self.u_start[k + 1] {
                    let p = self.u_idx[e];
                    y[p] = y[p].clone() - self.u_val[e].clone() * tk.clone();
                }
            }
            t[self.prow[k]] = tk;
        }
        // L^T, last step first
        for k in (0..m).rev() {
            let r = self.prow[k];
            let mut s = t[r].clone();
            for e in self.l_start[k]..self.l_start[k + 1] {
                let ti = &t[self.l_idx[e]];
                if !ti.is_zero() {
                    s = s - self.l_val[e].clone() * ti.clone();
                }
            }
            t[r] = s;
        }
        y.clone_from_slice(&t);
    }
}
