//! Built-in test scenes and their default run settings.

use anyhow::{bail, Result};
use num_complex::Complex64;
use sbd_core::geometry::{DofLayout, DofSpace, DofVector, Point, RoleBounds};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Homogeneous rounded square, `tau = 4`, centered, noiseless.
    Tc1,
    /// Eight-point contour, `tau = 4`, 10 dB.
    Tc2,
    /// Ring with an empty core, `tau_out = 3`, `upsilon = 0.6`, 10 dB.
    Tc3a,
    /// Two-layer profile, `tau_out = 2`, `tau_int = 4`, `upsilon = 0.4`, 10 dB.
    Tc3b,
    /// Two disjoint objects, `tau = 4` each, 10 dB.
    Tc4,
    /// Measured data supplied as a dataset CSV; no synthetic scene.
    Tc5,
}

const NAMES: &[(&str, Scenario)] = &[
    ("tc1", Scenario::Tc1),
    ("tc2", Scenario::Tc2),
    ("tc3a", Scenario::Tc3a),
    ("tc3b", Scenario::Tc3b),
    ("tc4", Scenario::Tc4),
    ("tc5", Scenario::Tc5),
];

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        match NAMES.iter().find(|(n, _)| *n == name) {
            Some((_, s)) => Ok(*s),
            None => bail!("unknown scenario `{name}` (expected one of tc1, tc2, tc3a, tc3b, tc4, tc5)"),
        }
    }

    pub fn name(self) -> &'static str {
        NAMES.iter().find(|(_, s)| *s == self).map(|(n, _)| *n).unwrap_or("?")
    }

    pub fn layout(self) -> DofLayout {
        match self {
            Scenario::Tc1 => DofLayout::Single { q: 4 },
            Scenario::Tc2 => DofLayout::Single { q: 8 },
            Scenario::Tc3a | Scenario::Tc3b | Scenario::Tc5 => DofLayout::DoublyConnected { q: 4 },
            Scenario::Tc4 => DofLayout::MultiObject { q: 4 },
        }
    }

    /// Default for a key the scenario owns: `snr_db`, `initial_samples`
    /// (five samples per unknown) and `iterations`.
    pub fn default_for(self, key: &str) -> String {
        match key {
            "snr_db" => match self {
                Scenario::Tc1 | Scenario::Tc5 => "none".into(),
                _ => "10".into(),
            },
            "initial_samples" => (5 * self.layout().dim()).to_string(),
            "iterations" => match self {
                Scenario::Tc1 => "100",
                Scenario::Tc2 => "80",
                Scenario::Tc3a | Scenario::Tc3b | Scenario::Tc5 => "85",
                Scenario::Tc4 => "60",
            }
            .into(),
            _ => unreachable!("scenario has no default for `{key}`"),
        }
    }

    /// Ground-truth DoFs, `None` for measured data.
    pub fn truth(self) -> Result<Option<DofVector>> {
        let origin = Point::new(0.0, 0.0);
        let dof = match self {
            Scenario::Tc1 => DofVector::single(origin, real(4.0), &[0.5; 4])?,
            Scenario::Tc2 => {
                DofVector::single(origin, real(4.0), &[0.6, 0.35, 0.55, 0.3, 0.6, 0.35, 0.55, 0.3])?
            }
            Scenario::Tc3a => DofVector::doubly_connected(origin, real(3.0), real(0.0), &[0.6; 4], 0.6)?,
            Scenario::Tc3b => DofVector::doubly_connected(origin, real(2.0), real(4.0), &[0.6; 4], 0.4)?,
            Scenario::Tc4 => DofVector::multi_object(
                [Point::new(-0.4, 0.35), Point::new(0.4, -0.35)],
                [real(4.0), real(4.0)],
                [&[0.25; 4], &[0.3; 4]],
            )?,
            Scenario::Tc5 => return Ok(None),
        };
        Ok(Some(dof))
    }

    /// Search space on a domain of `side`; the role bounds are set for a
    /// domain of 2 wavelengths and scale with the side.
    pub fn space(self, side: f64) -> Result<DofSpace> {
        let d = RoleBounds::default();
        let s = side / 2.0;
        let bounds = RoleBounds {
            position: (d.position.0 * s, d.position.1 * s),
            radius: (d.radius.0 * s, d.radius.1 * s),
            ..d
        };
        Ok(DofSpace::from_roles(self.layout(), &bounds)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sbd_core::forward::Grid;
    use sbd_core::geometry::decode_to_contrast;

    #[test]
    fn names_round_trip() {
        for (name, s) in NAMES {
            assert_eq!(Scenario::parse(name).unwrap(), *s);
            assert_eq!(s.name(), *name);
        }
        assert!(Scenario::parse("tc6").is_err());
    }

    #[test]
    fn truths_lie_inside_their_search_space() {
        for (_, s) in NAMES {
            if let Some(t) = s.truth().unwrap() {
                let space = s.space(2.0).unwrap();
                assert_eq!(t.layout(), s.layout());
                assert!(space.contains(t.values()), "{}", s.name());
                let map = decode_to_contrast(&t, &Grid::new(2.0, 20).unwrap()).unwrap();
                assert!(!map.support().is_empty());
            }
        }
        assert!(Scenario::Tc5.truth().unwrap().is_none());
    }

    #[test]
    fn ring_has_an_empty_core() {
        let t = Scenario::Tc3a.truth().unwrap().unwrap();
        let grid = Grid::new(2.0, 20).unwrap();
        let map = decode_to_contrast(&t, &grid).unwrap();
        let center = grid.index_of(Point::new(0.05, 0.05)).unwrap();
        let rim = grid.index_of(Point::new(0.32, 0.05)).unwrap();
        assert_eq!(map.values()[center], real(0.0));
        assert_eq!(map.values()[rim], real(3.0));
    }

    #[test]
    fn budgets_use_five_samples_per_unknown() {
        assert_eq!(Scenario::Tc1.default_for("initial_samples"), "40");
        assert_eq!(Scenario::Tc2.default_for("initial_samples"), "60");
        assert_eq!(Scenario::Tc3a.default_for("initial_samples"), "55");
        assert_eq!(Scenario::Tc4.default_for("initial_samples"), "80");
    }
}
