//! Slip-driven grasp force controller: `u_c = K_p (x_e + u_ff)`.

pub const DEFAULT_KP: f64 = 50.0;
pub const APPROACH_UFF: f64 = -2.0;
pub const LIFT_SLIP_INC: f64 = -1.0;
pub const BALANCE_SLIP_INC: f64 = -2.0;
pub const NO_SLIP_INC: f64 = 0.01;
pub const LIFT_CLIP: (f64, f64) = (-5.0, 0.0);
pub const BALANCE_CLIP: (f64, f64) = (-5.0, 2.0);
/// Controller ticks with penetration that end the approach.
pub const CONTACT_TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Lift,
    Balance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GripperState {
    pub x_g: f64,
    pub x_ref: Option<f64>,
    pub u_ff: f64,
    pub phase: Phase,
    pub clip: (f64, f64),
    pub k_p: f64,
    prev_slip: bool,
    prev_x_g: f64,
    balance_slipped: bool,
}

impl GripperState {
    pub fn new(x_g: f64, k_p: f64) -> Self {
        GripperState {
            x_g,
            x_ref: None,
            u_ff: APPROACH_UFF,
            phase: Phase::Approach,
            clip: LIFT_CLIP,
            k_p,
            prev_slip: false,
            prev_x_g: x_g,
            balance_slipped: false,
        }
    }

    /// Position error; zero until a reference has been latched.
    pub fn x_e(&self) -> f64 {
        self.x_ref.map_or(0.0, |r| r - self.x_g)
    }

    pub fn u_c(&self) -> f64 {
        self.k_p * (self.x_e() + self.u_ff)
    }

    pub fn approach_step(&mut self, x_g: f64) -> f64 {
        self.observe(x_g);
        self.u_ff = APPROACH_UFF;
        self.u_c()
    }

    pub fn start_lift(&mut self) {
        self.phase = Phase::Lift;
        self.clip = LIFT_CLIP;
        self.u_ff = self.u_ff.clamp(self.clip.0, self.clip.1);
    }

    pub fn start_balance(&mut self) {
        self.phase = Phase::Balance;
        self.clip = BALANCE_CLIP;
        self.balance_slipped = false;
    }

    fn observe(&mut self, x_g: f64) {
        self.prev_x_g = self.x_g;
        self.x_g = x_g;
    }

    pub fn lift_step(&mut self, slip: bool, x_g: f64) -> f64 {
        self.observe(x_g);
        self.u_ff = (self.u_ff + if slip { LIFT_SLIP_INC } else { NO_SLIP_INC }).clamp(self.clip.0, self.clip.1);
        if self.prev_slip && !slip {
            // the reference can only tighten
            self.x_ref = Some(self.x_ref.map_or(x_g, |r| r.min(x_g)));
        }
        self.prev_slip = slip;
        self.u_c()
    }

    pub fn balance_step(&mut self, slip: bool, x_g: f64) -> f64 {
        self.observe(x_g);
        if slip && !self.balance_slipped {
            self.balance_slipped = true;
            self.clip = LIFT_CLIP;
            self.x_ref = Some(self.prev_x_g);
        }
        self.u_ff = (self.u_ff + if slip { BALANCE_SLIP_INC } else { NO_SLIP_INC }).clamp(self.clip.0, self.clip.1);
        self.prev_slip = slip;
        self.u_c()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lifting() -> GripperState {
        let mut g = GripperState::new(38.0, DEFAULT_KP);
        g.u_ff = 0.0;
        g.start_lift();
        g
    }

    #[test]
    fn three_slips_reach_minus_three() {
        let mut g = lifting();
        for _ in 0..3 {
            g.lift_step(true, 38.0);
        }
        assert!((g.u_ff + 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_slip_clips_at_zero() {
        let mut g = lifting();
        for _ in 0..50 {
            assert_eq!(g.lift_step(false, 38.0), 0.0);
        }
        assert_eq!(g.u_ff, 0.0);
    }

    #[test]
    fn recovery_latches_reference() {
        let mut g = lifting();
        g.lift_step(true, 38.0);
        assert_eq!(g.x_ref, None);
        g.lift_step(false, 37.5);
        assert_eq!(g.x_ref, Some(37.5));
        g.lift_step(true, 37.8);
        g.lift_step(false, 37.8);
        assert_eq!(g.x_ref, Some(37.5));
    }

    #[test]
    fn balance_increments() {
        let mut g = GripperState::new(38.0, DEFAULT_KP);
        g.u_ff = 0.0;
        g.start_balance();
        for _ in 0..10 {
            g.balance_step(false, 38.0);
        }
        assert!((g.u_ff - 0.1).abs() < 1e-12);
        for _ in 0..300 {
            g.balance_step(false, 38.0);
        }
        assert_eq!(g.u_ff, 2.0);
    }

    #[test]
    fn first_balance_slip_latches_previous_width() {
        let mut g = GripperState::new(38.0, DEFAULT_KP);
        g.u_ff = 1.0;
        g.start_balance();
        g.balance_step(false, 38.2);
        g.balance_step(true, 38.4);
        assert_eq!(g.x_ref, Some(38.2));
        assert_eq!(g.clip, (-5.0, 0.0));
        assert!((g.u_ff + 0.99).abs() < 1e-12);
    }

    #[test]
    fn floor_holds_under_slip() {
        let mut g = lifting();
        g.u_ff = -5.0;
        g.start_balance();
        g.balance_step(true, 38.0);
        assert_eq!(g.u_ff, -5.0);
    }
}
