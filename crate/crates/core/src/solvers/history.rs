use crate::densela::TallMatrix;
use std::collections::VecDeque;

/// One pair of difference columns plus the norms the controller tracks.
#[derive(Debug, Clone)]
struct Column {
    iteration: usize,
    dx: Vec<f64>,
    dr: Vec<f64>,
    r_norm: f64,
    dx_norm: f64,
    dr_norm: f64,
}

/// FIFO window of the difference columns of `X_k` and `R_k`.
#[derive(Debug, Clone)]
pub struct AndersonHistory {
    capacity: usize,
    columns: VecDeque<Column>,
}

impl AndersonHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            columns: VecDeque::with_capacity(capacity.clamp(1, 64)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn clear(&mut self) {
        self.columns.clear();
    }

    /// Appends `x^i − x^{i−1}` and `r^i − r^{i−1}`, evicting the oldest pair when full.
    pub fn push(&mut self, iteration: usize, dx: Vec<f64>, dr: Vec<f64>, r_norm: f64) {
        if self.columns.len() == self.capacity {
            self.columns.pop_front();
        }
        let dx_norm = crate::norm2(&dx);
        let dr_norm = crate::norm2(&dr);
        self.columns.push_back(Column {
            iteration,
            dx,
            dr,
            r_norm,
            dx_norm,
            dr_norm,
        });
    }

    /// `X_k`, oldest column first.
    pub fn x_matrix(&self) -> TallMatrix {
        let cols: Vec<Vec<f64>> = self.columns.iter().map(|c| c.dx.clone()).collect();
        TallMatrix::from_columns(&cols).expect("history columns share a length")
    }

    /// `R_k`, oldest column first.
    pub fn r_matrix(&self) -> TallMatrix {
        let cols: Vec<Vec<f64>> = self.columns.iter().map(|c| c.dr.clone()).collect();
        TallMatrix::from_columns(&cols).expect("history columns share a length")
    }

    /// `Sᵀ R_k` for sorted, distinct `rows`, gathered without forming `R_k`.
    pub(crate) fn r_rows(&self, rows: &[usize]) -> TallMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.len());
        for c in &self.columns {
            values.extend(rows.iter().map(|&i| c.dr[i]));
        }
        TallMatrix::from_column_major(rows.len(), self.len(), values).expect("shape is consistent")
    }

    pub(crate) fn iterations(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().map(|c| c.iteration)
    }

    /// `(‖r^i‖, ‖Δx^i‖, ‖Δr^i‖)` per column, oldest first.
    pub(crate) fn norms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.columns
            .iter()
            .map(|c| (c.r_norm, c.dx_norm, c.dr_norm))
    }

    /// `‖x^k − x^{k−1}‖` of the newest column.
    pub fn last_dx_norm(&self) -> Option<f64> {
        self.columns.back().map(|c| c.dx_norm)
    }

    /// `out = ω r − (X + ω R) g`.
    pub fn mixing_update(&self, r: &[f64], omega: f64, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.len());
        let mut out: Vec<f64> = r.iter().map(|v| omega * v).collect();
        for (c, &gj) in self.columns.iter().zip(g) {
            if gj == 0.0 {
                continue;
            }
            for ((o, dx), dr) in out.iter_mut().zip(&c.dx).zip(&c.dr) {
                *o -= gj * (dx + omega * dr);
            }
        }
        out
    }

    /// Anderson correction of the linear split form: `(x − X g, r − R g)`.
    pub fn correction(&self, x: &[f64], r: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut xb = x.to_vec();
        let mut rb = r.to_vec();
        for (c, &gj) in self.columns.iter().zip(g) {
            crate::axpy(-gj, &c.dx, &mut xb);
            crate::axpy(-gj, &c.dr, &mut rb);
        }
        (xb, rb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_eviction() {
        let mut h = AndersonHistory::new(2);
        for i in 1..=3 {
            h.push(i, vec![i as f64, 0.0], vec![0.0, i as f64], 1.0);
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.iterations().collect::<Vec<_>>(), vec![2, 3]);
        let x = h.x_matrix();
        assert_eq!(x.column(0), &[2.0, 0.0]);
        assert_eq!(h.r_matrix().column(1), &[0.0, 3.0]);
    }

    #[test]
    fn gather_rows() {
        let mut h = AndersonHistory::new(3);
        h.push(1, vec![0.0; 3], vec![1.0, 2.0, 3.0], 1.0);
        h.push(2, vec![0.0; 3], vec![4.0, 5.0, 6.0], 1.0);
        assert_eq!(h.r_rows(&[0, 2]), h.r_matrix().select_rows(&[0, 2]));
    }
}
