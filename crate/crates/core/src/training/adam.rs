use crate::model::{EmbeddingTable, RowKind, SparseGrad};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Lazy Adam state: moments for every embedding entry and a step counter per
/// row. Only rows present in a gradient advance their counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    dim: usize,
    m_users: Vec<f64>,
    v_users: Vec<f64>,
    m_items: Vec<f64>,
    v_items: Vec<f64>,
    steps_users: Vec<u64>,
    steps_items: Vec<u64>,
}

impl OptimizerState {
    pub fn new(table: &EmbeddingTable, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        let (nu, ni, d) = (table.n_users(), table.n_items(), table.dim());
        Self {
            learning_rate,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            dim: d,
            m_users: vec![0.0; nu * d],
            v_users: vec![0.0; nu * d],
            m_items: vec![0.0; ni * d],
            v_items: vec![0.0; ni * d],
            steps_users: vec![0; nu],
            steps_items: vec![0; ni],
        }
    }

    pub fn step_count(&self, kind: RowKind, idx: usize) -> u64 {
        match kind {
            RowKind::User => self.steps_users[idx],
            RowKind::Item => self.steps_items[idx],
        }
    }

    pub fn moments(&self, kind: RowKind, idx: usize) -> (&[f64], &[f64]) {
        let span = idx * self.dim..(idx + 1) * self.dim;
        match kind {
            RowKind::User => (&self.m_users[span.clone()], &self.v_users[span]),
            RowKind::Item => (&self.m_items[span.clone()], &self.v_items[span]),
        }
    }

    fn row_state(&mut self, kind: RowKind, idx: usize) -> (&mut [f64], &mut [f64], &mut u64) {
        let span = idx * self.dim..(idx + 1) * self.dim;
        match kind {
            RowKind::User => (
                &mut self.m_users[span.clone()],
                &mut self.v_users[span],
                &mut self.steps_users[idx],
            ),
            RowKind::Item => (
                &mut self.m_items[span.clone()],
                &mut self.v_items[span],
                &mut self.steps_items[idx],
            ),
        }
    }
}

/// One bias-corrected Adam update for every row in `grads`.
pub fn adam_step(state: &mut OptimizerState, table: &mut EmbeddingTable, grads: &SparseGrad) {
    let (lr, b1, b2, eps) = (state.learning_rate, state.beta1, state.beta2, state.epsilon);
    for (kind, idx, g) in grads.iter() {
        let (m, v, t) = state.row_state(kind, idx);
        *t += 1;
        let t = *t as i32;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let row = table.row_mut(kind, idx);
        for k in 0..row.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            row[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    debug_assert!(table.all_finite(), "non-finite embedding after Adam step");
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam, written out independently of the row machinery.
    struct ScalarAdam {
        m: f64,
        v: f64,
        t: i32,
    }

    impl ScalarAdam {
        fn step(&mut self, theta: f64, g: f64, lr: f64) -> f64 {
            self.t += 1;
            self.m = 0.9 * self.m + (1.0 - 0.9) * g;
            self.v = 0.999 * self.v + (1.0 - 0.999) * g * g;
            let m_hat = self.m / (1.0 - 0.9f64.powi(self.t));
            let v_hat = self.v / (1.0 - 0.999f64.powi(self.t));
            theta - lr * m_hat / (v_hat.sqrt() + 1e-8)
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut table = EmbeddingTable::from_rows(2, vec![0.3, -0.2], vec![0.0, 0.0]);
        let mut st = OptimizerState::new(&table, 0.01);
        let mut g = SparseGrad::new(2);
        g.add_scaled(RowKind::User, 0, 1.0, &[0.5, -2.0]);
        adam_step(&mut st, &mut table, &g);
        let mut s0 = ScalarAdam { m: 0.0, v: 0.0, t: 0 };
        let mut s1 = ScalarAdam { m: 0.0, v: 0.0, t: 0 };
        let e0 = s0.step(0.3, 0.5, 0.01);
        let e1 = s1.step(-0.2, -2.0, 0.01);
        assert!((table.user(0)[0] - e0).abs() < 1e-12);
        assert!((table.user(0)[1] - e1).abs() < 1e-12);
        // bias-corrected first step is ~ lr * sign(g)
        assert!((table.user(0)[0] - (0.3 - 0.01)).abs() < 1e-9);
        assert!((table.user(0)[1] - (-0.2 + 0.01)).abs() < 1e-9);
    }

    #[test]
    fn untouched_rows_keep_value_and_counter() {
        let mut table = EmbeddingTable::init(3, 2, 2, 1);
        let before = table.clone();
        let mut st = OptimizerState::new(&table, 0.01);
        let mut g = SparseGrad::new(2);
        g.add_scaled(RowKind::Item, 1, 1.0, &[1.0, 1.0]);
        adam_step(&mut st, &mut table, &g);
        assert_eq!(table.user(2), before.user(2));
        assert_eq!(table.item(0), before.item(0));
        assert_eq!(st.step_count(RowKind::User, 2), 0);
        assert_eq!(st.step_count(RowKind::Item, 1), 1);
    }

    #[test]
    fn repeated_steps_follow_scalar_recurrence_exactly() {
        let mut table = EmbeddingTable::from_rows(1, vec![0.7], vec![0.0]);
        let mut st = OptimizerState::new(&table, 0.005);
        let mut oracle = ScalarAdam { m: 0.0, v: 0.0, t: 0 };
        let mut theta = 0.7;
        for g in [0.4, 0.4, -1.3, 0.05] {
            let mut sg = SparseGrad::new(1);
            sg.add_scaled(RowKind::User, 0, 1.0, &[g]);
            adam_step(&mut st, &mut table, &sg);
            theta = oracle.step(theta, g, 0.005);
            assert_eq!(table.user(0)[0], theta);
        }
        assert_eq!(st.step_count(RowKind::User, 0), 4);
    }
}
