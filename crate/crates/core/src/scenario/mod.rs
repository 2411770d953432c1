//! Built-in systems and scenario documents.

pub mod systems;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SystemModel;
use crate::planner::PlannerParams;

/// A system plus the defaults needed to run experiments on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub system: SystemModel,
    pub params: PlannerParams,
    /// Default initial configuration.
    pub q0: Vec<f64>,
    /// Default goal configuration (object rows used).
    #[serde(default)]
    pub goal: Option<Vec<f64>>,
    /// World rotations about the origin that map the scenario onto itself.
    #[serde(default)]
    pub symmetries: Vec<f64>,
    /// Object poses the roadmap may seed vertices at.
    #[serde(default)]
    pub stable_poses: Vec<Vec<f64>>,
    /// Base robot configurations (grasps) for roadmap construction.
    #[serde(default)]
    pub grasps: Vec<Vec<f64>>,
    /// Weight α in C = V − αr².
    #[serde(default)]
    pub alpha: f64,
    /// Largest object rotation a roadmap edge may be planned across.
    #[serde(default)]
    pub max_edge_rotation: Option<f64>,
}

pub const BUILTIN: [&str; 6] = ["pusher1d", "squeeze1d", "boxball2d", "planarhand", "pushert", "palmsquare"];

impl Scenario {
    pub fn q0(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.q0)
    }

    pub fn goal(&self) -> Option<DVector<f64>> {
        self.goal.as_ref().map(|g| DVector::from_row_slice(g))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.params.validate(&self.system)?;
        let n = self.system.n_q();
        if self.q0.len() != n || self.goal.as_ref().is_some_and(|g| g.len() != n) {
            return Err(Error::Dimension(format!("scenario configurations must have length {n}")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A registry name, or else a path to a scenario JSON file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(s) = builtin(name_or_path) {
            return Ok(s);
        }
        let path = std::path::Path::new(name_or_path);
        if path.exists() {
            return Scenario::from_json(&std::fs::read_to_string(path)?);
        }
        Err(Error::UnknownScenario(name_or_path.to_string()))
    }
}

fn make(name: &str, system: SystemModel, q0: &[f64], goal: Option<&[f64]>, tune: impl FnOnce(&mut PlannerParams)) -> Scenario {
    let mut params = PlannerParams::for_system(&system);
    tune(&mut params);
    Scenario {
        name: name.into(),
        system,
        params,
        q0: q0.to_vec(),
        goal: goal.map(|g| g.to_vec()),
        symmetries: vec![],
        stable_poses: vec![],
        grasps: vec![],
        alpha: 0.0,
        max_edge_rotation: None,
    }
}

/// Built-in scenario by registry name.
pub fn builtin(name: &str) -> Option<Scenario> {
    use systems::*;
    let s = match name {
        "pusher1d" => make(name, pusher1d(), &[0.2, -0.02], Some(&[0.22, 0.0]), |p| {
            p.kappa = 1e4;
            p.radius = 0.05;
            p.variant = crate::trust_region::Variant::RCtr;
        }),
        "squeeze1d" => make(name, squeeze1d(), &[0.0, -0.19, 0.19], None, |p| p.kappa = 100.0),
        "boxball2d" => make(name, boxball2d(), &[0.0, 0.0, 0.03], Some(&[0.2, 0.0, 0.0]), |p| {
            p.kappa = 1e3;
            p.radius = 0.05;
        }),
        "planarhand" => {
            let goal = [0.02, 0.0, 0.0, 0.0, 0.0, 0.0];
            let mut s = make(name, planarhand(), &planarhand_antipodal(), Some(&goal), |p| {
                p.kappa = 1e4;
                p.radius = 0.05;
            });
            s.alpha = 1.0;
            s
        }
        "pushert" => make(name, pushert(), &pushert_default_q0(), None, |p| {
            p.kappa = 1e3;
            p.radius = 0.05;
        }),
        "palmsquare" => {
            let mut s = make(name, palmsquare(), &palmsquare_grasps()[0], None, |p| {
                p.kappa = 1e3;
                p.radius = 0.01;
                p.rollout_steps = 40;
                p.joint_limits = true;
            });
            use std::f64::consts::FRAC_PI_2;
            s.symmetries = (0..4).map(|k| k as f64 * FRAC_PI_2).collect();
            s.stable_poses = vec![vec![0.0, 0.0, 0.0]];
            s.grasps = palmsquare_grasps().to_vec();
            s.max_edge_rotation = Some(FRAC_PI_2 + 0.05);
            s
        }
        _ => return None,
    };
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trips() {
        for name in BUILTIN {
            let s = builtin(name).unwrap();
            s.validate().unwrap();
            let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
            assert_eq!(back, s);
        }
        assert!(matches!(Scenario::load("nope"), Err(Error::UnknownScenario(_))));
    }
}
