//! The 22 conventional cephalometric measurements used by the baseline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::line_distance;
use crate::landmarks::{Landmark, LandmarkSet};

pub const MEASUREMENT_COUNT: usize = 22;

pub const MEASUREMENT_NAMES: [&str; MEASUREMENT_COUNT] = [
    "Ba-N",
    "S-N",
    "Ba-S",
    "MP-H",
    "H-Phw",
    "u1-PNS",
    "Va-Tant",
    "ph1-ph2",
    "Go-Gn",
    "Ba-S-N",
    "Ba-S-PNS",
    "Gn-Go-H",
    "SN-GoGn",
    "PNSANS-GoGn",
    "S-N-A",
    "S-N-B",
    "A-N-B",
    "Ar-Go-Gn",
    "Ar-Go-N",
    "N-Go-Gn",
    "MP-H/Go-Gn",
    "MP-SN",
];

/// Distances in pixels, angles in degrees, the ratio dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub values: [f64; MEASUREMENT_COUNT],
}

impl MeasurementVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        MEASUREMENT_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|k| self.values[k])
    }
}

fn ray(from: Complex64, to: Complex64, what: &str) -> Result<Complex64> {
    let d = to - from;
    if d.norm() < 1e-12 {
        return Err(Error::DegenerateLandmark(format!("{what}: coincident points")));
    }
    Ok(d)
}

fn between(u: Complex64, v: Complex64) -> f64 {
    (u.conj() * v).arg().abs().to_degrees()
}

/// Angle at `b` between the rays towards `a` and `c`, in degrees.
pub fn vertex_angle(a: Complex64, b: Complex64, c: Complex64) -> Result<f64> {
    Ok(between(ray(b, a, "angle")?, ray(b, c, "angle")?))
}

/// Acute angle between the lines `p1 p2` and `q1 q2`, in degrees.
pub fn line_angle(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> Result<f64> {
    let t = between(ray(p1, p2, "line")?, ray(q1, q2, "line")?);
    Ok(t.min(180.0 - t))
}

pub fn conventional_measurements(lm: &LandmarkSet) -> Result<MeasurementVector> {
    use Landmark::*;
    let p = |l: Landmark| lm.get(l);
    let d = |a: Landmark, b: Landmark| (p(a) - p(b)).norm();
    let angle = |a: Landmark, b: Landmark, c: Landmark| vertex_angle(p(a), p(b), p(c));

    let mp_h = line_distance(p(H), p(Go), p(Me))
        .ok_or_else(|| Error::DegenerateLandmark("Go and Me coincide".into()))?;
    let go_gn = d(Go, Gn);
    if go_gn < 1e-12 {
        return Err(Error::DegenerateLandmark("Go and Gn coincide".into()));
    }
    let values = [
        d(Ba, N),
        d(S, N),
        d(Ba, S),
        mp_h,
        d(H, Phw),
        d(U1, Pns),
        d(Va, Tant),
        d(Ph1, Ph2),
        go_gn,
        angle(Ba, S, N)?,
        angle(Ba, S, Pns)?,
        angle(Gn, Go, H)?,
        line_angle(p(S), p(N), p(Go), p(Gn))?,
        line_angle(p(Pns), p(Ans), p(Go), p(Gn))?,
        angle(S, N, A)?,
        angle(S, N, B)?,
        angle(A, N, B)?,
        angle(Ar, Go, Gn)?,
        angle(Ar, Go, N)?,
        angle(N, Go, Gn)?,
        mp_h / go_gn,
        line_angle(p(Go), p(Me), p(S), p(N))?,
    ];
    Ok(MeasurementVector { values })
}
