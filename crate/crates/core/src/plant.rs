//! Synthetic ground-truth robot.
//!
//! The decoupled transfer function maps yaw/pitch `(α, β)` to three tendon
//! length variations with `L1 + L2 + L3 = 0`. The plant adds a smooth
//! perturbation on top of it (cubic saturation, yaw/pitch cross-coupling and
//! a cosine gravity droop on pitch) so that learned controllers have
//! something to correct.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Divisor on yaw for `L1`.
pub const YAW_DIVISOR: f64 = 1.5;
/// Divisor on pitch for `L2`/`L3`. Kept as the literal rather than `√3`.
pub const PITCH_DIVISOR: f64 = 1.732;
/// Workspace half-width in degrees.
pub const WORKSPACE_LIMIT: f64 = 90.0;
/// Half-width inside which inversion is guaranteed under default gains.
pub const INVERSION_MARGIN: f64 = 80.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseAngles {
    pub alpha: f64,
    pub beta: f64,
}

impl PoseAngles {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        PoseAngles { alpha, beta }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }

    pub fn in_workspace(&self) -> bool {
        self.alpha.abs() <= WORKSPACE_LIMIT && self.beta.abs() <= WORKSPACE_LIMIT
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.alpha, self.beta]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TendonDelta {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl TendonDelta {
    pub const fn new(l1: f64, l2: f64, l3: f64) -> Self {
        TendonDelta { l1, l2, l3 }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        TendonDelta::new(v[0], v[1], v[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn sum(&self) -> f64 {
        self.l1 + self.l2 + self.l3
    }

    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.l2.is_finite() && self.l3.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub segments: u32,
    pub kappa_sat: f64,
    pub kappa_x: f64,
    pub g_sag: f64,
    pub noise_sigma: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            segments: 4,
            kappa_sat: 0.08,
            kappa_x: 0.02,
            g_sag: 3.0,
            noise_sigma: 0.0,
        }
    }
}

/// Named plant configurations exposed on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantPreset {
    Ideal,
    Default,
    Heavy,
}

impl PlantPreset {
    pub const ALL: [PlantPreset; 3] = [PlantPreset::Ideal, PlantPreset::Default, PlantPreset::Heavy];

    pub fn name(self) -> &'static str {
        match self {
            PlantPreset::Ideal => "ideal",
            PlantPreset::Default => "default",
            PlantPreset::Heavy => "heavy",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        PlantPreset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown plant preset `{}`", name)))
    }

    pub fn params(self) -> PlantParams {
        match self {
            PlantPreset::Ideal => PlantParams {
                kappa_sat: 0.0,
                kappa_x: 0.0,
                g_sag: 0.0,
                ..PlantParams::default()
            },
            PlantPreset::Default => PlantParams::default(),
            PlantPreset::Heavy => PlantParams {
                kappa_sat: 0.15,
                g_sag: 6.0,
                ..PlantParams::default()
            },
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.segments < 1 {
            return bad("segments must be >= 1".into());
        }
        if !(0.0..=0.5).contains(&self.kappa_sat) {
            return bad(format!("kappa_sat {} outside [0, 0.5]", self.kappa_sat));
        }
        if !(0.0..=0.5).contains(&self.kappa_x) {
            return bad(format!("kappa_x {} outside [0, 0.5]", self.kappa_x));
        }
        if !(0.0..=30.0).contains(&self.g_sag) {
            return bad(format!("g_sag {} outside [0, 30]", self.g_sag));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        Ok(())
    }

    /// Same gains with measurement noise switched off.
    pub fn noise_free(&self) -> PlantParams {
        PlantParams {
            noise_sigma: 0.0,
            ..*self
        }
    }

    fn segment_scale(&self) -> f64 {
        4.0 / self.segments as f64
    }

    /// Saturation gain after segment scaling.
    pub fn effective_kappa_sat(&self) -> f64 {
        self.kappa_sat * self.segment_scale()
    }

    /// Gravity droop after segment scaling.
    pub fn effective_g_sag(&self) -> f64 {
        self.g_sag * self.segment_scale()
    }

    /// Deterministic part of the plant applied to the ideal pose.
    pub fn perturb(&self, ideal: PoseAngles) -> PoseAngles {
        let ks = self.effective_kappa_sat();
        let gs = self.effective_g_sag();
        let (a, b) = (ideal.alpha, ideal.beta);
        let ra = a / WORKSPACE_LIMIT;
        let rb = b / WORKSPACE_LIMIT;
        PoseAngles {
            alpha: a * (1.0 - ks * ra * ra) + self.kappa_x * a * b / WORKSPACE_LIMIT,
            beta: b * (1.0 - ks * rb * rb) - gs * b.to_radians().cos(),
        }
    }
}

/// Decoupled inverse kinematics: pose to tendon command.
pub fn analytical_inverse(pose: PoseAngles) -> Result<TendonDelta> {
    if !pose.is_finite() {
        return Err(Error::NonFiniteInput(format!("pose {:?}", pose)));
    }
    Ok(analytical_inverse_unchecked(pose))
}

pub(crate) fn analytical_inverse_unchecked(pose: PoseAngles) -> TendonDelta {
    let (a, b) = (pose.alpha, pose.beta);
    let yaw_share = a / 3.0;
    TendonDelta {
        l1: a / YAW_DIVISOR,
        l2: b / PITCH_DIVISOR - yaw_share,
        l3: -b / PITCH_DIVISOR - yaw_share,
    }
}

/// Inverse of [`analytical_inverse`]. The common mode of `cmd` is removed
/// first, so any command maps onto the sum-zero subspace.
pub fn analytical_forward(cmd: TendonDelta) -> PoseAngles {
    let mean = cmd.sum() / 3.0;
    let l1 = cmd.l1 - mean;
    let l2 = cmd.l2 - mean;
    let alpha = YAW_DIVISOR * l1;
    PoseAngles {
        alpha,
        beta: PITCH_DIVISOR * (l2 + alpha / 3.0),
    }
}

/// Achieved pose of the simulated robot for a tendon command. Noise is added
/// only when an RNG is supplied and `noise_sigma > 0`.
pub fn plant_forward(cmd: TendonDelta, params: &PlantParams, rng: Option<&mut RngStream>) -> PoseAngles {
    let mut pose = params.perturb(analytical_forward(cmd));
    if let Some(rng) = rng {
        if params.noise_sigma > 0.0 {
            pose.alpha += params.noise_sigma * rng.next_gaussian();
            pose.beta += params.noise_sigma * rng.next_gaussian();
        }
    }
    pose
}

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;
const MAX_HALVINGS: usize = 8;
/// Extra Newton steps taken after the tolerance is met.
const POLISH_STEPS: usize = 2;

/// Finds the tendon command that drives the noise-free plant to `target`.
///
/// Damped Newton on the ideal pose `(a, b)` with a central finite-difference
/// Jacobian, started at the target itself. Once the residual is below
/// tolerance a couple of further steps are taken while they still reduce it.
pub fn invert_plant(target: PoseAngles, params: &PlantParams) -> Result<TendonDelta> {
    if !target.is_finite() {
        return Err(Error::NonFiniteInput(format!("target {:?}", target)));
    }
    if !target.in_workspace() {
        return Err(Error::InvalidParameter(format!(
            "target {:?} outside the ±{} deg workspace",
            target, WORKSPACE_LIMIT
        )));
    }
    params.validate()?;
    let params = params.noise_free();

    let residual = |x: [f64; 2]| -> [f64; 2] {
        let p = plant_forward(analytical_inverse_unchecked(PoseAngles::new(x[0], x[1])), &params, None);
        [p.alpha - target.alpha, p.beta - target.beta]
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());

    let mut x = [target.alpha, target.beta];
    let mut r = residual(x);
    let mut polished = 0;
    for _ in 0..NEWTON_MAX_ITER {
        if norm(r) < NEWTON_TOL {
            if polished == POLISH_STEPS {
                break;
            }
            polished += 1;
        }
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += FD_STEP;
            xm[k] -= FD_STEP;
            let (rp, rm) = (residual(xp), residual(xm));
            for i in 0..2 {
                jac[i][k] = (rp[i] - rm[i]) / (2.0 * FD_STEP);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = [x[0] - scale * step[0], x[1] - scale * step[1]];
            let rc = residual(cand);
            if norm(rc) < norm(r) {
                accepted = Some((cand, rc));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((cand, rc)) => {
                x = cand;
                r = rc;
            }
            None => break,
        }
    }

    let res = norm(r);
    if res < NEWTON_TOL {
        Ok(analytical_inverse_unchecked(PoseAngles::new(x[0], x[1])))
    } else {
        Err(Error::NoConvergence { residual: res })
    }
}
