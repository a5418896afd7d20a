//! Local objective `J = J_scout + J_samp + J_reg` with its analytic gradient.

use serde::{Deserialize, Serialize};

use super::kinematics::{step_unwrapped, Control};
use super::proxy::{
    evidence_magnitude, evidence_magnitude_with_grad, h_proxy, h_proxy_prime, p_samp, p_samp_prime, DlcField, ProxySensorParams,
    ScoutField, SensorSuite,
};
use crate::scalar::{lit, Scalar};
use crate::sensors::RobotState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CostWeights<T> {
    /// Substrate scouting weight (FLS).
    pub w_sub: T,
    /// Coral search weight (FLC).
    pub w_search: T,
    /// DLC sampling weight.
    pub w_samp: T,
    pub energy: T,
    pub jerk: T,
    /// Terminal pull toward the waypoint, per m².
    pub terminal: T,
}

impl<T: Scalar> Default for CostWeights<T> {
    fn default() -> Self {
        Self {
            w_sub: lit(1.0),
            w_search: lit(10.0),
            w_samp: lit(5.0),
            energy: lit(0.01),
            jerk: lit(0.05),
            terminal: lit(0.5),
        }
    }
}

impl<T: Scalar> CostWeights<T> {
    pub fn is_valid(&self) -> bool {
        [self.w_sub, self.w_search, self.w_samp, self.energy, self.jerk, self.terminal]
            .iter()
            .all(|w| *w >= T::zero() && w.is_finite())
    }
}

/// Per-term values of one cost evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown<T> {
    pub total: T,
    pub scout_substrate: T,
    pub scout_coral: T,
    pub samp: T,
    pub energy: T,
    pub jerk: T,
    pub terminal: T,
}

impl<T: Scalar> CostBreakdown<T> {
    pub fn scout(&self) -> T {
        self.scout_substrate + self.scout_coral
    }

    fn finish(mut self) -> Self {
        self.total = self.scout_substrate + self.scout_coral + self.samp + self.energy + self.jerk + self.terminal;
        self
    }
}

/// Everything the cost needs besides the controls. Controls are passed flattened as
/// `[v_x, v_y, ω]` per step.
#[derive(Debug, Clone)]
pub struct CostContext<T> {
    pub x0: RobotState<T>,
    pub dt: T,
    pub v_next: [T; 2],
    pub cells: Vec<[T; 2]>,
    pub lambda_fls0: Vec<T>,
    pub lambda_flc0: Vec<T>,
    pub candidates: Vec<[T; 2]>,
    pub sensors: SensorSuite<T>,
    pub params: ProxySensorParams<T>,
    pub weights: CostWeights<T>,
    fls: ScoutField<T>,
    flc: ScoutField<T>,
    dlc: DlcField<T>,
}

/// One nonzero field contribution `∂(ηα)/∂x_k` for an active cell.
#[derive(Clone, Copy)]
struct Contribution<T> {
    cell: u32,
    grad: [T; 3],
}

impl<T: Scalar> CostContext<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x0: RobotState<T>,
        dt: T,
        v_next: [T; 2],
        cells: Vec<[T; 2]>,
        lambda_fls0: Vec<T>,
        lambda_flc0: Vec<T>,
        candidates: Vec<[T; 2]>,
        sensors: SensorSuite<T>,
        params: ProxySensorParams<T>,
        weights: CostWeights<T>,
    ) -> Self {
        assert_eq!(cells.len(), lambda_fls0.len());
        assert_eq!(cells.len(), lambda_flc0.len());
        Self {
            fls: ScoutField::new(&sensors.fls, &params),
            flc: ScoutField::new(&sensors.flc, &params),
            dlc: DlcField::new(&sensors.dlc, &params),
            x0,
            dt,
            v_next,
            cells,
            lambda_fls0,
            lambda_flc0,
            candidates,
            sensors,
            params,
            weights,
        }
    }

    /// States `x_0..x_H` induced by flattened controls (heading unwrapped).
    pub fn rollout_states(&self, u: &[T]) -> Vec<RobotState<T>> {
        let h = u.len() / 3;
        let mut xs = Vec::with_capacity(h + 1);
        let mut x = self.x0;
        xs.push(x);
        for k in 0..h {
            x = step_unwrapped(&x, &Control::new(u[3 * k], u[3 * k + 1], u[3 * k + 2]), self.dt);
            xs.push(x);
        }
        xs
    }

    fn regularization(&self, u: &[T], xs: &[RobotState<T>], grad: Option<&mut [T]>) -> CostBreakdown<T> {
        let w = &self.weights;
        let h = u.len() / 3;
        let two = lit::<T>(2.0);
        let energy = w.energy * u.iter().map(|&v| v * v).sum::<T>();
        let mut jerk = T::zero();
        for k in 1..h.saturating_sub(1) {
            for j in 0..3 {
                let d = u[3 * (k + 1) + j] - two * u[3 * k + j] + u[3 * (k - 1) + j];
                jerk = jerk + d * d;
            }
        }
        jerk = jerk * w.jerk;
        let p_h = xs[h].p;
        let (ex, ey) = (p_h[0] - self.v_next[0], p_h[1] - self.v_next[1]);
        let terminal = w.terminal * (ex * ex + ey * ey);
        if let Some(g) = grad {
            for (gi, &ui) in g.iter_mut().zip(u) {
                *gi = *gi + two * w.energy * ui;
            }
            for k in 1..h.saturating_sub(1) {
                for j in 0..3 {
                    let d = u[3 * (k + 1) + j] - two * u[3 * k + j] + u[3 * (k - 1) + j];
                    let c = two * w.jerk * d;
                    g[3 * (k + 1) + j] = g[3 * (k + 1) + j] + c;
                    g[3 * k + j] = g[3 * k + j] - two * c;
                    g[3 * (k - 1) + j] = g[3 * (k - 1) + j] + c;
                }
            }
        }
        CostBreakdown { energy, jerk, terminal, ..Default::default() }
    }

    /// Cost value only.
    pub fn cost(&self, u: &[T]) -> CostBreakdown<T> {
        assert_eq!(u.len() % 3, 0);
        let h = u.len() / 3;
        let xs = self.rollout_states(u);
        let n = self.cells.len();
        let mut acc_s = vec![T::zero(); n];
        let mut acc_c = vec![T::zero(); n];
        let mut acc_d = vec![T::zero(); self.candidates.len()];
        for x in &xs[..h] {
            let (s, c) = x.theta.sin_cos();
            for (i, q) in self.cells.iter().enumerate() {
                let (dx, dy) = (q[0] - x.p[0], q[1] - x.p[1]);
                if let Some((a, r)) = self.fls.value(dx, dy, s, c) {
                    acc_s[i] = acc_s[i] + evidence_magnitude(r, &self.sensors.fls) * a;
                }
                if let Some((a, r)) = self.flc.value(dx, dy, s, c) {
                    acc_c[i] = acc_c[i] + evidence_magnitude(r, &self.sensors.flc) * a;
                }
            }
            for (j, q) in self.candidates.iter().enumerate() {
                if let Some(a) = self.dlc.value(q[0] - x.p[0], q[1] - x.p[1], s, c) {
                    acc_d[j] = acc_d[j] + self.params.eta_down * a;
                }
            }
        }
        let mut out = self.regularization(u, &xs, None);
        self.information_terms(&acc_s, &acc_c, &acc_d, &mut out);
        out.finish()
    }

    fn information_terms(&self, acc_s: &[T], acc_c: &[T], acc_d: &[T], out: &mut CostBreakdown<T>) {
        let w = &self.weights;
        // telescoped: −Σ_k ΔH = H(Λ_H) − H(Λ_0)
        let mut js = T::zero();
        let mut jc = T::zero();
        for i in 0..self.cells.len() {
            if acc_s[i] > T::zero() {
                let l0 = self.lambda_fls0[i];
                js = js + h_proxy(l0 + acc_s[i]) - h_proxy(l0);
            }
            if acc_c[i] > T::zero() {
                let l0 = self.lambda_flc0[i];
                jc = jc + h_proxy(l0 + acc_c[i]) - h_proxy(l0);
            }
        }
        out.scout_substrate = w.w_sub * js;
        out.scout_coral = w.w_search * jc;
        let lam = self.params.lambda_sat;
        out.samp = -w.w_samp * acc_d.iter().map(|&d| p_samp(d, lam)).sum::<T>();
    }

    /// Cost and its gradient with respect to the flattened controls (written into `grad`).
    pub fn cost_grad(&self, u: &[T], grad: &mut [T]) -> CostBreakdown<T> {
        assert_eq!(u.len() % 3, 0);
        assert_eq!(grad.len(), u.len());
        let h = u.len() / 3;
        let xs = self.rollout_states(u);
        let n = self.cells.len();
        let mut acc_s = vec![T::zero(); n];
        let mut acc_c = vec![T::zero(); n];
        let mut acc_d = vec![T::zero(); self.candidates.len()];
        // per step: (start, end) into the contribution buffers
        let mut fls_buf: Vec<Contribution<T>> = Vec::new();
        let mut flc_buf: Vec<Contribution<T>> = Vec::new();
        let mut dlc_buf: Vec<Contribution<T>> = Vec::new();
        let mut spans = Vec::with_capacity(h);
        for x in &xs[..h] {
            let (s, c) = x.theta.sin_cos();
            let starts = (fls_buf.len(), flc_buf.len(), dlc_buf.len());
            for (i, q) in self.cells.iter().enumerate() {
                let (dx, dy) = (q[0] - x.p[0], q[1] - x.p[1]);
                for (field, spec, acc, buf) in [
                    (&self.fls, &self.sensors.fls, &mut acc_s, &mut fls_buf),
                    (&self.flc, &self.sensors.flc, &mut acc_c, &mut flc_buf),
                ] {
                    if let Some((a, ga, r)) = field.value_grad(dx, dy, s, c) {
                        let (eta, deta) = evidence_magnitude_with_grad(r, spec);
                        acc[i] = acc[i] + eta * a;
                        // ∂r/∂p = −Δp/r
                        let (drx, dry) = if r > lit(1e-12) { (-dx / r, -dy / r) } else { (T::zero(), T::zero()) };
                        let k = deta * a;
                        buf.push(Contribution {
                            cell: i as u32,
                            grad: [k * drx + eta * ga[0], k * dry + eta * ga[1], eta * ga[2]],
                        });
                    }
                }
            }
            for (j, q) in self.candidates.iter().enumerate() {
                if let Some((a, ga)) = self.dlc.value_grad(q[0] - x.p[0], q[1] - x.p[1], s, c) {
                    let e = self.params.eta_down;
                    acc_d[j] = acc_d[j] + e * a;
                    dlc_buf.push(Contribution { cell: j as u32, grad: [e * ga[0], e * ga[1], e * ga[2]] });
                }
            }
            spans.push((starts, (fls_buf.len(), flc_buf.len(), dlc_buf.len())));
        }

        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut out = self.regularization(u, &xs, Some(grad));
        self.information_terms(&acc_s, &acc_c, &acc_d, &mut out);

        let w = &self.weights;
        let coef_s: Vec<T> = (0..n).map(|i| w.w_sub * h_proxy_prime(self.lambda_fls0[i] + acc_s[i])).collect();
        let coef_c: Vec<T> = (0..n).map(|i| w.w_search * h_proxy_prime(self.lambda_flc0[i] + acc_c[i])).collect();
        let coef_d: Vec<T> =
            acc_d.iter().map(|&d| -w.w_samp * p_samp_prime(d, self.params.lambda_sat)).collect();

        // adjoint sweep, λ = ∂J/∂x_{k+1}
        let two = lit::<T>(2.0);
        let mut lam = [
            two * w.terminal * (xs[h].p[0] - self.v_next[0]),
            two * w.terminal * (xs[h].p[1] - self.v_next[1]),
            T::zero(),
        ];
        let dt = self.dt;
        for k in (0..h).rev() {
            let x = &xs[k];
            let (s, c) = x.theta.sin_cos();
            let (vx, vy) = (u[3 * k], u[3 * k + 1]);
            grad[3 * k] = grad[3 * k] + dt * (c * lam[0] + s * lam[1]);
            grad[3 * k + 1] = grad[3 * k + 1] + dt * (-s * lam[0] + c * lam[1]);
            grad[3 * k + 2] = grad[3 * k + 2] + dt * lam[2];
            // propagate through f, then add the stage term at x_k
            let dth = dt * ((-s * vx - c * vy) * lam[0] + (c * vx - s * vy) * lam[1]);
            lam[2] = lam[2] + dth;
            let ((a0, b0, c0), (a1, b1, c1)) = spans[k];
            for (buf, coef, range) in [(&fls_buf, &coef_s, a0..a1), (&flc_buf, &coef_c, b0..b1), (&dlc_buf, &coef_d, c0..c1)] {
                for e in &buf[range] {
                    let cf = coef[e.cell as usize];
                    lam[0] = lam[0] + cf * e.grad[0];
                    lam[1] = lam[1] + cf * e.grad[1];
                    lam[2] = lam[2] + cf * e.grad[2];
                }
            }
        }
        out.finish()
    }
}

pub fn flatten<T: Scalar>(u: &[Control<T>]) -> Vec<T> {
    u.iter().flat_map(|c| [c.vx, c.vy, c.omega]).collect()
}

pub fn unflatten<T: Scalar>(u: &[T]) -> Vec<Control<T>> {
    u.chunks_exact(3).map(|c| Control::new(c[0], c[1], c[2])).collect()
}

/// `(J, ∂J/∂U)` for a control sequence.
pub fn cost<T: Scalar>(u: &[Control<T>], ctx: &CostContext<T>) -> (CostBreakdown<T>, Vec<Control<T>>) {
    let flat = flatten(u);
    let mut g = vec![T::zero(); flat.len()];
    let b = ctx.cost_grad(&flat, &mut g);
    (b, unflatten(&g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::DlcSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn context(rng: &mut ChaCha8Rng, n_cand: usize) -> CostContext<f64> {
        let x0 = RobotState::new(rng.random_range(5.0..15.0), rng.random_range(5.0..15.0), rng.random_range(-3.0..3.0));
        let mut cells = Vec::new();
        for r in 0..20 {
            for c in 0..20 {
                cells.push([c as f64 + 0.5, r as f64 + 0.5]);
            }
        }
        let l_s = (0..cells.len()).map(|_| rng.random_range(0.0..6.0)).collect();
        let l_c = (0..cells.len()).map(|_| rng.random_range(0.0..3.0)).collect();
        let cand = (0..n_cand)
            .map(|_| [x0.p[0] + rng.random_range(-3.0..3.0), x0.p[1] + rng.random_range(-3.0..3.0)])
            .collect();
        CostContext::new(
            x0,
            0.5,
            [x0.p[0] + 4.0, x0.p[1] - 2.0],
            cells,
            l_s,
            l_c,
            cand,
            SensorSuite::default(),
            ProxySensorParams::default(),
            CostWeights::default(),
        )
    }

    fn random_controls(rng: &mut ChaCha8Rng, h: usize) -> Vec<f64> {
        (0..h).flat_map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]).collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let ctx = context(&mut rng, 8);
            let u = random_controls(&mut rng, 12);
            let mut g = vec![0.0; u.len()];
            ctx.cost_grad(&u, &mut g);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += 1e-5;
                dn[i] -= 1e-5;
                let fd = (ctx.cost(&up).total - ctx.cost(&dn).total) / 2e-5;
                assert!((fd - g[i]).abs() <= 1e-5 * scale.max(1.0), "{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn value_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ctx = context(&mut rng, 5);
        let u = random_controls(&mut rng, 20);
        let mut g = vec![0.0; u.len()];
        assert_eq!(ctx.cost(&u), ctx.cost_grad(&u, &mut g));
    }

    #[test]
    fn idle_far_from_everything_is_terminal_only() {
        let ctx = CostContext::new(
            RobotState::new(0.0, 0.0, 0.0),
            0.5,
            [3.0, 4.0],
            vec![[100.0, 100.0]],
            vec![0.0],
            vec![0.0],
            vec![],
            SensorSuite::default(),
            ProxySensorParams::default(),
            CostWeights::default(),
        );
        let b = ctx.cost(&[0.0f64; 30]);
        assert_eq!(b.scout(), 0.0);
        assert_eq!(b.samp, 0.0);
        assert!((b.total - 0.5 * 25.0).abs() < 1e-12);
    }

    #[test]
    fn samp_term_linear_in_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ctx = context(&mut rng, 10);
        let u = random_controls(&mut rng, 10);
        let a = ctx.cost(&u);
        ctx.weights.w_samp *= 2.0;
        let b = ctx.cost(&u);
        assert_eq!(b.samp, 2.0 * a.samp);
        assert_eq!(a.scout(), b.scout());
    }

    #[test]
    fn hovering_over_candidate_saturates() {
        let x0 = RobotState::new(5.0, 5.0, 0.0);
        let mk = |eta_down: f64| {
            let params = ProxySensorParams { eta_down, ..Default::default() };
            CostContext::new(
                x0,
                0.5,
                [5.0, 5.0],
                vec![],
                vec![],
                vec![],
                vec![[5.0, 5.0]],
                SensorSuite { dlc: DlcSpec::default(), ..Default::default() },
                params,
                CostWeights::default(),
            )
        };
        let u = vec![0.0; 3 * 10];
        let mut prev = f64::INFINITY;
        for eta in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let ctx = mk(eta);
            let b = ctx.cost(&u);
            // Λ_H = 10·η·α, J_samp = −w(1 − e^{−Λ_H})
            let lambda_h = -(1.0 + b.samp / 5.0).ln();
            let slope = 5.0 * p_samp_prime(lambda_h, 1.0);
            assert!(slope < prev);
            prev = slope;
        }
    }
}
