//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use impulsim_core::random::{random_system, RandomProblem, RandomSystemConfig};

/// Classical RK4 for `x' = A(t) x + B u(t)` with the jump
/// `x ← (I + D_k) x + E_k v_k` applied at each `t_k`. Every gap between
/// consecutive breakpoints gets `steps_per_gap` equal steps. Returns the
/// left-limit states at the requested (sorted) times and the terminal state.
#[allow(clippy::too_many_arguments)]
pub fn rk4_impulsive(
    a: &dyn Fn(f64) -> DMatrix<f64>,
    b: &DMatrix<f64>,
    u: &dyn Fn(f64) -> DVector<f64>,
    times: &[f64],
    d: &[DMatrix<f64>],
    e: &[DMatrix<f64>],
    v: &[DVector<f64>],
    x0: &DVector<f64>,
    horizon: f64,
    steps_per_gap: usize,
    eval: &[f64],
) -> (Vec<DVector<f64>>, DVector<f64>) {
    // `u` may jump at the impulse times; inside a gap it is sampled at
    // times strictly above the gap's left end.
    let rhs = |lo: f64, t: f64, x: &DVector<f64>| a(t) * x + b * u(t.max(lo.next_up()));
    let step = |lo: f64, t: f64, x: &DVector<f64>, h: f64| {
        let k1 = rhs(lo, t, x);
        let k2 = rhs(lo, t + h / 2.0, &(x + &k1 * (h / 2.0)));
        let k3 = rhs(lo, t + h / 2.0, &(x + &k2 * (h / 2.0)));
        let k4 = rhs(lo, t + h, &(x + &k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    };
    let mut bps = vec![0.0];
    bps.extend_from_slice(times);
    bps.push(horizon);
    let mut out = Vec::with_capacity(eval.len());
    let mut next_eval = 0;
    let mut x = x0.clone();
    for (gap, w) in bps.windows(2).enumerate() {
        if gap > 0 {
            let k = gap - 1;
            x = &x + &d[k] * &x + &e[k] * &v[k];
        }
        let (lo, hi) = (w[0], w[1]);
        let h = (hi - lo) / steps_per_gap as f64;
        for s in 0..steps_per_gap {
            let t0 = lo + s as f64 * h;
            let t1 = if s + 1 == steps_per_gap { hi } else { t0 + h };
            // Samples strictly inside this step, or at its right end.
            while next_eval < eval.len() && eval[next_eval] <= t1 && (eval[next_eval] > t0 || (gap == 0 && s == 0 && eval[next_eval] <= t0)) {
                let te = eval[next_eval];
                out.push(if te <= t0 { x.clone() } else { step(lo, t0, &x, te - t0) });
                next_eval += 1;
            }
            x = step(lo, t0, &x, t1 - t0);
        }
    }
    (out, x)
}

/// The randomized suite: 20 seeded systems with state dimension 1..=6 and
/// 0..=3 impulses.
pub fn random_suite() -> Vec<RandomProblem> {
    (0..20u64)
        .map(|i| {
            let cfg = RandomSystemConfig {
                state_dim: 1 + (i as usize % 6),
                control_dim: 1 + (i as usize % 2),
                impulses: (i as usize) % 4,
                seed: 1000 + i,
                ..RandomSystemConfig::default()
            };
            random_system(&cfg).expect("random system")
        })
        .collect()
}

/// `exp(A)` by scaling, a 30-term Taylor series and squaring.
pub fn expm_series(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().max() * n as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}
