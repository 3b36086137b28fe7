//! One-dimensional gripper and object model.
//!
//! The gripper opening is overdamped: it moves with a velocity proportional
//! to the net of the command and the contact reaction. The object is held by
//! two-finger Coulomb friction with capacity `2 mu N` and moves vertically.
//! Units: mm, s, N, kg.

pub const GRAVITY_MM_S2: f64 = 9810.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GripperParams {
    /// Opening velocity per command unit (mm/s).
    pub servo_gain: f64,
    /// Contact force balanced by one command unit at stall (N).
    pub force_per_unit: f64,
    pub max_opening: f64,
    /// Relative slide (mm) after which the object has left the fingers.
    pub finger_length: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        GripperParams { servo_gain: 2.0, force_per_unit: 0.02, max_opening: 100.0, finger_length: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspSimObject {
    pub name: String,
    pub mass_g: f64,
    /// Static friction coefficient.
    pub friction: f64,
    /// Kinetic over static friction.
    pub kinetic_ratio: f64,
    pub width_mm: f64,
    /// Contact stiffness (N/mm of squeeze).
    pub stiffness: f64,
    /// Stripe period of the object's surface texture in pixels.
    pub texture_period_px: f64,
}

impl GraspSimObject {
    pub fn new(name: &str, mass_g: f64, friction: f64) -> Self {
        GraspSimObject {
            name: name.to_string(),
            mass_g,
            friction,
            kinetic_ratio: 0.8,
            width_mm: 40.0,
            stiffness: 2.0,
            texture_period_px: 8.0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.mass_g > 0.0) || !(self.friction > 0.0) {
            return Err(crate::Error::InvalidInput(format!(
                "object {} needs positive mass and friction",
                self.name
            )));
        }
        if !(self.kinetic_ratio > 0.0 && self.kinetic_ratio <= 1.0) || !(self.stiffness > 0.0) {
            return Err(crate::Error::InvalidInput(format!("object {} has invalid contact", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsState {
    pub t: f64,
    pub x_g: f64,
    pub z_g: f64,
    pub v_g: f64,
    pub z_o: f64,
    pub v_o: f64,
    pub normal: f64,
    /// Friction force on the object, upward positive.
    pub friction: f64,
    pub slipping: bool,
    /// Gripper height minus object height, relative to the start.
    pub rel_slide: f64,
    pub slip_travel: f64,
    pub extra_mass_kg: f64,
    pub dropped: bool,
}

impl PhysicsState {
    /// Object velocity relative to the fingers (mm/s, positive when sliding down).
    pub fn slip_velocity(&self) -> f64 {
        if self.dropped {
            0.0
        } else {
            self.v_g - self.v_o
        }
    }
}

pub struct GraspPhysics {
    pub params: GripperParams,
    pub object: GraspSimObject,
    pub state: PhysicsState,
}

impl GraspPhysics {
    /// Gripper open at `opening` mm, object resting on the table.
    pub fn new(params: GripperParams, object: GraspSimObject, opening: f64) -> Self {
        let mut p = GraspPhysics {
            params,
            object,
            state: PhysicsState {
                t: 0.0,
                x_g: opening,
                z_g: 0.0,
                v_g: 0.0,
                z_o: 0.0,
                v_o: 0.0,
                normal: 0.0,
                friction: 0.0,
                slipping: false,
                rel_slide: 0.0,
                slip_travel: 0.0,
                extra_mass_kg: 0.0,
                dropped: false,
            },
        };
        p.state.normal = p.normal_at(opening);
        p
    }

    /// Object held in the air at rest with the squeeze that balances command `u_c`.
    pub fn holding(params: GripperParams, object: GraspSimObject, u_c: f64, height: f64) -> Self {
        let squeeze = (-u_c * params.force_per_unit / object.stiffness).max(0.0);
        let opening = object.width_mm - squeeze;
        let mut p = Self::new(params, object, opening);
        p.state.z_g = height;
        p.state.z_o = height;
        let m = p.mass_kg();
        p.state.friction = m * GRAVITY_MM_S2 / 1000.0;
        p
    }

    pub fn mass_kg(&self) -> f64 {
        self.object.mass_g / 1000.0 + self.state.extra_mass_kg
    }

    fn normal_at(&self, x_g: f64) -> f64 {
        self.object.stiffness * (self.object.width_mm - x_g).max(0.0)
    }

    pub fn static_capacity(&self) -> f64 {
        2.0 * self.object.friction * self.state.normal
    }

    pub fn add_mass(&mut self, grams: f64) {
        self.state.extra_mass_kg += grams / 1000.0;
    }

    /// Advances by `dt` seconds with gripper command `u_c`, commanded gripper
    /// vertical velocity `v_g` (mm/s) and an external vertical force on the
    /// object `f_ext` (N, upward positive).
    pub fn step(&mut self, u_c: f64, v_g: f64, f_ext: f64, dt: f64) {
        let prm = &self.params;
        let s = &mut self.state;
        // gripper opening
        let n_prev = if s.dropped { 0.0 } else { s.normal };
        let dx = dt * prm.servo_gain * (u_c + n_prev / prm.force_per_unit);
        s.x_g = (s.x_g + dx).clamp(0.0, prm.max_opening);
        let a_g = (v_g - s.v_g) / dt;
        s.v_g = v_g;
        s.z_g += v_g * dt;
        s.t += dt;

        if s.dropped {
            s.normal = 0.0;
            s.friction = 0.0;
            s.slipping = false;
            return;
        }
        let normal = self.object.stiffness * (self.object.width_mm - s.x_g).max(0.0);
        s.normal = normal;
        let m = self.object.mass_g / 1000.0 + s.extra_mass_kg;
        let g = GRAVITY_MM_S2;
        let cap_s = 2.0 * self.object.friction * normal;
        let cap_k = cap_s * self.object.kinetic_ratio;
        let on_table = s.z_o <= 0.0;

        // friction needed for the object to move with the fingers
        let f_req = m * (a_g + g) / 1000.0 - f_ext;
        let mut stick = !s.slipping && f_req.abs() <= cap_s;
        if on_table && !s.slipping && v_g <= 0.0 && s.v_o == 0.0 {
            // resting on the table, the support carries what friction cannot
            stick = true;
        }
        if stick {
            s.v_o = v_g;
            s.friction = if on_table && v_g <= 0.0 { f_req.clamp(-cap_s, cap_s) } else { f_req };
        } else {
            let rel = v_g - s.v_o;
            let dir = if rel != 0.0 { rel.signum() } else { f_req.signum() };
            let friction = cap_k * dir;
            let a_o = (friction + f_ext) * 1000.0 / m - g;
            let mut v_o = s.v_o + a_o * dt;
            if on_table && v_o < 0.0 {
                v_o = 0.0;
            }
            let new_rel = v_g - v_o;
            if new_rel == 0.0 || new_rel.signum() != dir {
                // relative motion stopped within the step
                if f_req.abs() <= cap_s {
                    v_o = v_g;
                    s.slipping = false;
                } else {
                    s.slipping = true;
                }
            } else {
                s.slipping = true;
            }
            s.v_o = v_o;
            s.friction = friction;
        }
        s.z_o = (s.z_o + s.v_o * dt).max(0.0);
        if s.z_o == 0.0 && s.v_o < 0.0 {
            s.v_o = 0.0;
        }
        let rel_v = s.v_g - s.v_o;
        s.slipping = s.slipping && rel_v.abs() > 1e-9;
        s.slip_travel += rel_v.abs() * dt;
        s.rel_slide = s.z_g - s.z_o;
        if s.rel_slide.abs() > prm.finger_length || (normal == 0.0 && s.z_o > 0.0 && s.rel_slide.abs() > 1.0) {
            s.dropped = true;
            s.slipping = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj() -> GraspSimObject {
        GraspSimObject::new("test", 250.0, 0.6)
    }

    #[test]
    fn stall_force_matches_command() {
        let mut p = GraspPhysics::new(GripperParams::default(), obj(), 45.0);
        for _ in 0..3000 {
            p.step(-100.0, 0.0, 0.0, 1e-3);
        }
        // N = k_f * |u_c|
        assert!((p.state.normal - 2.0).abs() < 1e-3, "{}", p.state.normal);
        assert!(!p.state.slipping);
    }

    #[test]
    fn weak_grasp_slips_on_lift() {
        let mut p = GraspPhysics::new(GripperParams::default(), obj(), 40.0);
        for _ in 0..500 {
            p.step(-50.0, 0.0, 0.0, 1e-3);
        }
        // capacity 2 * 0.6 * 1 N = 1.2 N < 2.45 N weight
        let mut slipped = false;
        for _ in 0..1000 {
            p.step(-50.0, 20.0, 0.0, 1e-3);
            slipped |= p.state.slipping;
        }
        assert!(slipped);
        assert!(p.state.z_o < 1e-9);
    }

    #[test]
    fn firm_grasp_lifts_object() {
        let mut p = GraspPhysics::new(GripperParams::default(), obj(), 40.0);
        for _ in 0..500 {
            p.step(-250.0, 0.0, 0.0, 1e-3);
        }
        for i in 0..1000 {
            let v = 20.0 * (i as f64 / 200.0).min(1.0);
            p.step(-250.0, v, 0.0, 1e-3);
        }
        assert!(p.state.z_o > 10.0);
        assert!(p.state.rel_slide.abs() < 1e-6);
        assert!(!p.state.dropped);
    }

    #[test]
    fn holding_starts_in_equilibrium() {
        let mut p = GraspPhysics::holding(GripperParams::default(), obj(), -250.0, 50.0);
        for _ in 0..200 {
            p.step(-250.0, 0.0, 0.0, 1e-3);
        }
        assert!(!p.state.slipping);
        assert!((p.state.z_o - 50.0).abs() < 1e-9);
    }

    #[test]
    fn opening_releases_object() {
        let mut p = GraspPhysics::holding(GripperParams::default(), obj(), -250.0, 50.0);
        let mut onset = None;
        for i in 0..3000 {
            let u = -250.0 + i as f64 * 0.2;
            p.step(u, 0.0, 0.0, 1e-3);
            if p.state.slipping && onset.is_none() {
                onset = Some(i);
            }
        }
        assert!(onset.is_some());
        assert!(p.state.dropped);
    }
}
