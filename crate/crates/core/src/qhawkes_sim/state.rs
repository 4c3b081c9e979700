use crate::error::{param, Error, Result};
use crate::kernels::{Kernel, KernelShape, KernelSpec};

use super::params::MicroParams;

/// Event mark: `+1` for the buy side (`N¹`), `−1` for the sell side (`N²`).
pub type Mark = i8;

#[derive(Debug, Clone)]
enum Profile {
    /// `v0 · e^{−rate x}`
    Exp { rate: f64, v0: f64 },
    /// `α · amp · x^{−α−1}` for `x ≥ cut`, with tail `amp · max(x, cut)^{−α}`.
    PowerLaw { alpha: f64, cut: f64, amp: f64 },
    General(KernelSpec),
}

impl Profile {
    fn of(k: &KernelSpec) -> Self {
        let (w, ts) = (k.weight(), k.time_scale());
        match *k.shape() {
            KernelShape::Exponential { rate, scale } => Profile::Exp {
                rate: rate / ts,
                v0: w * scale,
            },
            KernelShape::PowerLaw { alpha, cutoff } => Profile::PowerLaw {
                alpha,
                cut: cutoff * ts,
                amp: w * ts.powf(1.0 + alpha),
            },
            _ => Profile::General(k.clone()),
        }
    }

    fn at_zero(&self) -> f64 {
        match self {
            Profile::Exp { v0, .. } => *v0,
            Profile::PowerLaw { .. } => 0.0,
            Profile::General(k) => k.value(0.0),
        }
    }

    /// `(value, tail mass)` at lag `x ≥ 0` (non-exponential profiles).
    fn value_tail(&self, x: f64) -> (f64, f64) {
        match self {
            Profile::PowerLaw { alpha, cut, amp } => {
                if x < *cut {
                    (0.0, amp * cut.powf(-alpha))
                } else {
                    let p = x.powf(-alpha);
                    (alpha * amp * p / x, amp * p)
                }
            }
            Profile::General(k) => (k.value(x), k.tail_mass(x).unwrap_or(f64::NAN)),
            Profile::Exp { .. } => unreachable!("exponential profiles are recursive"),
        }
    }

    fn sup_on(&self, x0: f64, x1: f64) -> f64 {
        match self {
            Profile::PowerLaw { alpha, cut, amp } => {
                if x1 < *cut {
                    0.0
                } else {
                    let x = x0.max(*cut);
                    alpha * amp * x.powf(-alpha - 1.0)
                }
            }
            Profile::General(k) => k.sup_on(x0, x1),
            Profile::Exp { .. } => unreachable!("exponential profiles are recursive"),
        }
    }
}

/// Self- and cross-excitation through one kernel profile `P`:
/// `λ₁ += same·A + cross·B`, `λ₂ += cross·A + same·B`, where `A` (`B`) sums
/// `P(t − t_j)` over buy (sell) events.
#[derive(Debug, Clone)]
struct Group {
    profile: Profile,
    same: f64,
    cross: f64,
    /// Exponential profile: `Σ e^{−rate (t − t_j)}` per side.
    /// Other profiles: `Σ tail(t − t_j)` per side.
    acc: [f64; 2],
    times: [Vec<f64>; 2],
}

struct Advance {
    mass: [f64; 2],
    value: [f64; 2],
}

impl Group {
    fn new(profile: Profile, same: f64, cross: f64) -> Self {
        Self {
            profile,
            same,
            cross,
            acc: [0.0; 2],
            times: [Vec::new(), Vec::new()],
        }
    }

    /// Moves the sums from `t` to `t + dt`; returns per-side masses over the
    /// step and values at the end.
    fn advance(&mut self, t_new: f64, dt: f64) -> Advance {
        match self.profile {
            Profile::Exp { rate, v0 } => {
                let decay = (-rate * dt).exp();
                let mut out = Advance {
                    mass: [0.0; 2],
                    value: [0.0; 2],
                };
                for s in 0..2 {
                    out.mass[s] = v0 / rate * self.acc[s] * -(-rate * dt).exp_m1();
                    self.acc[s] *= decay;
                    out.value[s] = v0 * self.acc[s];
                }
                out
            }
            _ => {
                let mut out = Advance {
                    mass: [0.0; 2],
                    value: [0.0; 2],
                };
                for s in 0..2 {
                    let mut tail = 0.0;
                    let mut value = 0.0;
                    for &tj in &self.times[s] {
                        let (v, tl) = self.profile.value_tail(t_new - tj);
                        value += v;
                        tail += tl;
                    }
                    out.mass[s] = (self.acc[s] - tail).max(0.0);
                    out.value[s] = value;
                    self.acc[s] = tail;
                }
                out
            }
        }
    }

    fn add(&mut self, t: f64, side: usize) {
        match self.profile {
            Profile::Exp { .. } => self.acc[side] += 1.0,
            _ => {
                self.times[side].push(t);
                self.acc[side] += self.profile.value_tail(0.0).1;
            }
        }
    }

    fn sup(&self, t: f64, t_end: f64) -> [f64; 2] {
        match self.profile {
            Profile::Exp { v0, .. } => [v0 * self.acc[0], v0 * self.acc[1]],
            _ => {
                let mut out = [0.0; 2];
                for s in 0..2 {
                    out[s] = self.times[s]
                        .iter()
                        .map(|tj| self.profile.sup_on(t - tj, t_end - tj))
                        .sum();
                }
                out
            }
        }
    }

    fn split(&self, side_values: [f64; 2]) -> [f64; 2] {
        [
            self.same * side_values[0] + self.cross * side_values[1],
            self.cross * side_values[0] + self.same * side_values[1],
        ]
    }
}

#[derive(Debug, Clone)]
enum Feedback {
    None,
    /// `k(x) = k0 e^{−rate x}`: `Y_i` decays exactly between updates.
    Exp { rate: f64, k0: f64 },
    /// Any other `k`: `Y_i` is recomputed from events and compensator pieces.
    General {
        k: KernelSpec,
        events: [Vec<f64>; 2],
        /// `(midpoint, ΔΛ¹, ΔΛ²)` per step.
        pieces: Vec<(f64, f64, f64)>,
    },
}

/// State of the bivariate intensity at the current time.
///
/// `Y_i(t) = ∫_0^t k(t−s) dM^i_s` is advanced by one Heun step per call to
/// [`IntensityState::advance`]: the compensator increment `ΔΛ_i` is the exact
/// kernel mass of the excitation part plus the trapezoid of the quadratic
/// part, and it enters `Y_i` with weight `k(Δ/2)`.
#[derive(Debug, Clone)]
pub struct IntensityState {
    mu: [f64; 2],
    /// `(√α₁ ± √α₂)/2`: the amplitudes of `k₁` and `k₂` relative to `k`.
    k1c: f64,
    k2c: f64,
    groups: Vec<Group>,
    feedback: Feedback,
    t: f64,
    y: [f64; 2],
    excitation: [f64; 2],
    quad: [f64; 2],
    compensator: [f64; 2],
    counts: [usize; 2],
}

impl IntensityState {
    pub fn new(params: &MicroParams) -> Result<Self> {
        params.validate()?;
        for (name, phi) in [("phi1", &params.phi1), ("phi2", &params.phi2)] {
            if !phi.is_zero() && !phi.value(0.0).is_finite() {
                return param(format!("{name} must be bounded at 0 for simulation"));
            }
        }
        let mut groups = Vec::new();
        let (p1, p2) = (&params.phi1, &params.phi2);
        match (p1.is_zero(), p2.is_zero()) {
            (true, true) => {}
            (false, true) => groups.push(Group::new(Profile::of(p1), 1.0, 0.0)),
            (true, false) => groups.push(Group::new(Profile::of(p2), 0.0, 1.0)),
            (false, false) if p1.same_profile(p2) => {
                groups.push(Group::new(Profile::of(p1), 1.0, p2.amplitude() / p1.amplitude()))
            }
            (false, false) => {
                groups.push(Group::new(Profile::of(p1), 1.0, 0.0));
                groups.push(Group::new(Profile::of(p2), 0.0, 1.0));
            }
        }
        let k1c = 0.5 * (params.alpha1.sqrt() + params.alpha2.sqrt());
        let k2c = 0.5 * (params.alpha1.sqrt() - params.alpha2.sqrt()).max(0.0);
        let feedback = if params.k.is_zero() || k1c == 0.0 {
            Feedback::None
        } else {
            match *params.k.shape() {
                KernelShape::Exponential { rate, scale } => Feedback::Exp {
                    rate: rate / params.k.time_scale(),
                    k0: params.k.weight() * scale,
                },
                _ => {
                    if !params.k.value(0.0).is_finite() {
                        return param("k must be bounded at 0 for simulation");
                    }
                    Feedback::General {
                        k: params.k.clone(),
                        events: [Vec::new(), Vec::new()],
                        pieces: Vec::new(),
                    }
                }
            }
        };
        Ok(Self {
            mu: [params.mu1, params.mu2],
            k1c,
            k2c,
            groups,
            feedback,
            t: 0.0,
            y: [0.0; 2],
            excitation: [0.0; 2],
            quad: [0.0; 2],
            compensator: [0.0; 2],
            counts: [0; 2],
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `(λ₁, λ₂)` at the current time, including any event at this time.
    pub fn intensities(&self) -> (f64, f64) {
        (
            self.mu[0] + self.excitation[0] + self.quad[0],
            self.mu[1] + self.excitation[1] + self.quad[1],
        )
    }

    /// `(Λ₁, Λ₂)`, the integrated intensities up to now.
    pub fn compensators(&self) -> (f64, f64) {
        (self.compensator[0], self.compensator[1])
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.counts[0], self.counts[1])
    }

    /// `(∫k dM¹, ∫k dM²)` at the current time.
    pub fn feedback_integrals(&self) -> (f64, f64) {
        (self.y[0], self.y[1])
    }

    fn quadratic(&self, y: [f64; 2]) -> [f64; 2] {
        let a = self.k1c * y[0] - self.k2c * y[1];
        let b = self.k2c * y[0] - self.k1c * y[1];
        [a * a, b * b]
    }

    fn k_value(&self, x: f64) -> f64 {
        match &self.feedback {
            Feedback::None => 0.0,
            Feedback::Exp { rate, k0 } => k0 * (-rate * x).exp(),
            Feedback::General { k, .. } => k.value(x),
        }
    }

    /// Contribution of past events and completed compensator pieces to `Y_i`
    /// at time `tau`.
    fn y_history(&self, tau: f64) -> [f64; 2] {
        match &self.feedback {
            Feedback::None => [0.0; 2],
            Feedback::Exp { rate, .. } => {
                let d = (-rate * (tau - self.t)).exp();
                [self.y[0] * d, self.y[1] * d]
            }
            Feedback::General { k, events, pieces } => {
                let mut out = [0.0; 2];
                for s in 0..2 {
                    out[s] = events[s].iter().map(|tj| k.value(tau - tj)).sum();
                }
                for &(mid, d1, d2) in pieces {
                    let w = k.value(tau - mid);
                    out[0] -= w * d1;
                    out[1] -= w * d2;
                }
                out
            }
        }
    }

    /// Advances the state to `tau ≥ t` in a single step.
    pub fn advance(&mut self, tau: f64) -> Result<()> {
        if tau < self.t {
            return Err(Error::State(format!(
                "cannot move back from t = {} to {tau}",
                self.t
            )));
        }
        let dt = tau - self.t;
        if dt == 0.0 {
            return Ok(());
        }
        let mut lin = [self.mu[0] * dt, self.mu[1] * dt];
        let mut exc = [0.0; 2];
        for g in &mut self.groups {
            let adv = g.advance(tau, dt);
            let m = g.split(adv.mass);
            let v = g.split(adv.value);
            for s in 0..2 {
                lin[s] += m[s];
                exc[s] += v[s];
            }
        }
        let mut d_comp = [lin[0] + dt * self.quad[0], lin[1] + dt * self.quad[1]];
        if !matches!(self.feedback, Feedback::None) {
            let hist = self.y_history(tau);
            let kmid = self.k_value(0.5 * dt);
            let pred = [hist[0] - kmid * d_comp[0], hist[1] - kmid * d_comp[1]];
            let q_pred = self.quadratic(pred);
            for s in 0..2 {
                d_comp[s] = lin[s] + 0.5 * dt * (self.quad[s] + q_pred[s]);
            }
            self.y = [hist[0] - kmid * d_comp[0], hist[1] - kmid * d_comp[1]];
            self.quad = self.quadratic(self.y);
            if let Feedback::General { pieces, .. } = &mut self.feedback {
                pieces.push((self.t + 0.5 * dt, d_comp[0], d_comp[1]));
            }
        }
        self.compensator[0] += d_comp[0];
        self.compensator[1] += d_comp[1];
        self.excitation = exc;
        self.t = tau;
        Ok(())
    }

    /// Advances to `tau` in steps no longer than `max_step`.
    pub fn advance_by_steps(&mut self, tau: f64, max_step: f64) -> Result<()> {
        if tau < self.t {
            return self.advance(tau);
        }
        let n = ((tau - self.t) / max_step).ceil().max(1.0) as usize;
        let start = self.t;
        for i in 1..=n {
            let target = if i == n {
                tau
            } else {
                start + (tau - start) * i as f64 / n as f64
            };
            self.advance(target)?;
        }
        Ok(())
    }

    /// Records an event at the current time.
    pub fn add_event(&mut self, mark: Mark) {
        let side = if mark > 0 { 0 } else { 1 };
        self.counts[side] += 1;
        for g in &mut self.groups {
            g.add(self.t, side);
            let mut v = [0.0; 2];
            v[side] = g.profile.at_zero();
            let add = g.split(v);
            self.excitation[0] += add[0];
            self.excitation[1] += add[1];
        }
        let k0 = self.k_value(0.0);
        match &mut self.feedback {
            Feedback::None => return,
            Feedback::Exp { .. } => {}
            Feedback::General { events, .. } => events[side].push(self.t),
        }
        self.y[side] += k0;
        self.quad = self.quadratic(self.y);
    }

    /// `μ̄ + sup_{[t, t_end]} excitation + current quadratic terms`.
    pub fn bound_base(&self, t_end: f64) -> f64 {
        let mut exc = 0.0;
        for g in &self.groups {
            let s = g.sup(self.t, t_end);
            let v = g.split(s);
            exc += v[0] + v[1];
        }
        self.mu[0] + self.mu[1] + exc + self.quad[0] + self.quad[1]
    }
}

/// Advances the state to `t` (in steps of at most `max_step`) and returns
/// `(λ₁, λ₂)` there.
pub fn intensity_at(state: &mut IntensityState, t: f64, max_step: f64) -> Result<(f64, f64)> {
    state.advance_by_steps(t, max_step)?;
    Ok(state.intensities())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_params() -> MicroParams {
        MicroParams::new(
            0.4,
            0.3,
            KernelSpec::exponential(1.0, 0.3).unwrap(),
            KernelSpec::exponential(1.0, 0.1).unwrap(),
            KernelSpec::exponential(0.5, 0.8).unwrap(),
            1.0,
            0.25,
        )
        .unwrap()
    }

    #[test]
    fn empty_history() {
        let mut s = IntensityState::new(&exp_params()).unwrap();
        assert_eq!(s.intensities(), (0.4, 0.3));
        let r = intensity_at(&mut s, 0.0, 0.1).unwrap();
        assert_eq!(r, (0.4, 0.3));
        assert!(matches!(
            {
                s.advance(1.0).unwrap();
                s.advance(0.5)
            },
            Err(Error::State(_))
        ));
    }

    #[test]
    fn equal_impact_kernels_cancel_in_price_intensity() {
        let mut p = exp_params();
        p.alpha2 = 0.0;
        let mut s = IntensityState::new(&p).unwrap();
        s.advance(0.3).unwrap();
        s.add_event(1);
        s.advance(0.9).unwrap();
        let q = s.quadratic(s.y);
        assert!((q[0] - q[1]).abs() < 1e-15);
    }

    #[test]
    fn single_buy_event_by_hand() {
        let p = exp_params();
        let (t1, h) = (0.5, 0.01);
        let mut s = IntensityState::new(&p).unwrap();
        s.advance(t1).unwrap();
        s.add_event(1);
        s.advance(t1 + h).unwrap();
        let (l1, l2) = s.intensities();

        // Manual replay of the same steps.
        let (mu1, mu2) = (0.4, 0.3);
        let (r, k0) = (0.5, 0.8);
        let k1c = 0.5 * (1.0 + 0.5);
        let k2c = 0.5 * (1.0 - 0.5);
        let quad = |y1: f64, y2: f64| {
            ((k1c * y1 - k2c * y2).powi(2), (k2c * y1 - k1c * y2).powi(2))
        };
        // Step 1: [0, t1], no events, Y starts at 0.
        let kmid = k0 * (-r * t1 / 2.0).exp();
        let (lin1, lin2) = (mu1 * t1, mu2 * t1);
        let (p1, p2) = (-kmid * lin1, -kmid * lin2);
        let (qp1, qp2) = quad(p1, p2);
        let (d1, d2) = (lin1 + 0.5 * t1 * qp1, lin2 + 0.5 * t1 * qp2);
        let (mut y1, y2) = (-kmid * d1, -kmid * d2);
        // Buy event: Y₁ jumps by k(0).
        y1 += k0;
        let (q1, q2) = quad(y1, y2);
        // Step 2: [t1, t1 + h]; excitation masses are exact.
        let decay = (-r * h).exp();
        let kmid = k0 * (-r * h / 2.0).exp();
        let mass = 1.0 - (-h as f64).exp();
        let (lin1, lin2) = (mu1 * h + 0.3 * mass, mu2 * h + 0.1 * mass);
        let (hy1, hy2) = (y1 * decay, y2 * decay);
        let (p1, p2) = (hy1 - kmid * (lin1 + h * q1), hy2 - kmid * (lin2 + h * q2));
        let (qp1, qp2) = quad(p1, p2);
        let (d1, d2) = (lin1 + 0.5 * h * (q1 + qp1), lin2 + 0.5 * h * (q2 + qp2));
        let (y1, y2) = (hy1 - kmid * d1, hy2 - kmid * d2);
        let (q1, q2) = quad(y1, y2);
        let e = (-h as f64).exp();
        let expected1 = mu1 + 0.3 * e + q1;
        let expected2 = mu2 + 0.1 * e + q2;
        assert!((l1 - expected1).abs() < 1e-14, "{l1} vs {expected1}");
        assert!((l2 - expected2).abs() < 1e-14, "{l2} vs {expected2}");
    }

    #[test]
    fn general_feedback_matches_exponential_recursion() {
        // The same k once as an exponential and once as a dense table.
        let p = exp_params();
        let times: Vec<f64> = (0..=20000).map(|i| i as f64 * 0.001).collect();
        let values: Vec<f64> = times.iter().map(|t| 0.8 * (-0.5 * t).exp()).collect();
        let mut q = p.clone();
        q.k = KernelSpec::tabulated(times, values).unwrap();
        let mut a = IntensityState::new(&p).unwrap();
        let mut b = IntensityState::new(&q).unwrap();
        for (t, m) in [(0.4, 1), (0.7, -1), (1.1, 1)] {
            a.advance_by_steps(t, 0.01).unwrap();
            b.advance_by_steps(t, 0.01).unwrap();
            a.add_event(m);
            b.add_event(m);
        }
        a.advance_by_steps(3.0, 0.01).unwrap();
        b.advance_by_steps(3.0, 0.01).unwrap();
        let (ya, yb) = (a.feedback_integrals(), b.feedback_integrals());
        assert!((ya.0 - yb.0).abs() < 1e-5 && (ya.1 - yb.1).abs() < 1e-5, "{ya:?} {yb:?}");
    }

    #[test]
    fn power_law_excitation_switches_on_at_cutoff() {
        let phi = KernelSpec::power_law(0.6, 1.0).unwrap();
        let p = MicroParams::new(0.1, 0.1, phi.clone(), KernelSpec::zero(), KernelSpec::zero(), 0.0, 0.0).unwrap();
        let mut s = IntensityState::new(&p).unwrap();
        s.advance(0.2).unwrap();
        s.add_event(1);
        s.advance(0.9).unwrap();
        assert_eq!(s.intensities(), (0.1, 0.1));
        assert!((s.bound_base(1.5) - (0.2 + 0.6)).abs() < 1e-15);
        s.advance(2.2).unwrap();
        assert!((s.intensities().0 - 0.1 - phi.value(2.0)).abs() < 1e-15);
        // Compensator: μ̄ t plus the exact mass of φ on [0, 2].
        let (c1, _) = s.compensators();
        assert!((c1 - 0.1 * 2.2 - phi.mass(0.0, 2.0).unwrap()).abs() < 1e-14);
    }
}
