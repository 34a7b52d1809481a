//! Craniofacial landmark schema and per-subject records.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGray;

/// The eighteen labelled craniofacial points, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Landmark {
    /// Nasion
    N,
    /// Sella
    S,
    /// Basion
    Ba,
    /// Anterior nasal spine
    Ans,
    /// Posterior nasal spine
    Pns,
    /// Deepest point of the maxillary dimple
    A,
    /// Deepest point of the mandibular dimple
    B,
    /// Gnathion
    Gn,
    /// Menton
    Me,
    /// Gonion
    Go,
    /// Articulare
    Ar,
    /// Most anterior-superior point of the hyoid
    H,
    /// Tip of tongue
    Tant,
    /// Tip of uvula
    U1,
    /// Vallecula
    Va,
    /// Posterior pharyngeal wall at hyoid height
    Phw,
    /// Anterior end of the minimal tongue-base to pharyngeal-wall distance
    Ph1,
    /// Posterior end of the minimal tongue-base to pharyngeal-wall distance
    Ph2,
}

pub const LANDMARK_COUNT: usize = 18;

impl Landmark {
    pub const ALL: [Landmark; LANDMARK_COUNT] = [
        Landmark::N,
        Landmark::S,
        Landmark::Ba,
        Landmark::Ans,
        Landmark::Pns,
        Landmark::A,
        Landmark::B,
        Landmark::Gn,
        Landmark::Me,
        Landmark::Go,
        Landmark::Ar,
        Landmark::H,
        Landmark::Tant,
        Landmark::U1,
        Landmark::Va,
        Landmark::Phw,
        Landmark::Ph1,
        Landmark::Ph2,
    ];

    /// Default window landmarks: the first fifteen schema rows. The three
    /// pharyngeal-wall points only enter through distance features.
    pub const WINDOWED: [Landmark; 15] = [
        Landmark::N,
        Landmark::S,
        Landmark::Ba,
        Landmark::Ans,
        Landmark::Pns,
        Landmark::A,
        Landmark::B,
        Landmark::Gn,
        Landmark::Me,
        Landmark::Go,
        Landmark::Ar,
        Landmark::H,
        Landmark::Tant,
        Landmark::U1,
        Landmark::Va,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Landmark::N => "N",
            Landmark::S => "S",
            Landmark::Ba => "Ba",
            Landmark::Ans => "ANS",
            Landmark::Pns => "PNS",
            Landmark::A => "A",
            Landmark::B => "B",
            Landmark::Gn => "Gn",
            Landmark::Me => "Me",
            Landmark::Go => "Go",
            Landmark::Ar => "Ar",
            Landmark::H => "H",
            Landmark::Tant => "Tant",
            Landmark::U1 => "u1",
            Landmark::Va => "Va",
            Landmark::Phw => "Phw",
            Landmark::Ph1 => "ph1",
            Landmark::Ph2 => "ph2",
        }
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Landmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Landmark::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown landmark name {s:?}")))
    }
}

/// Positions (pixel units) of all eighteen landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    positions: [Complex64; LANDMARK_COUNT],
}

impl LandmarkSet {
    pub fn new(positions: [Complex64; LANDMARK_COUNT]) -> Result<Self> {
        if let Some(k) = positions
            .iter()
            .position(|p| !(p.re.is_finite() && p.im.is_finite()))
        {
            return Err(Error::InvalidLandmark {
                name: Landmark::ALL[k].name().into(),
                reason: "non-finite coordinate".into(),
            });
        }
        Ok(LandmarkSet { positions })
    }

    /// Build from `(name, position)` pairs; every schema name must appear exactly once.
    pub fn from_named<'a>(
        entries: impl IntoIterator<Item = (&'a str, Complex64)>,
    ) -> Result<Self> {
        let mut slots: [Option<Complex64>; LANDMARK_COUNT] = [None; LANDMARK_COUNT];
        for (name, p) in entries {
            let l: Landmark = name.parse()?;
            if slots[l.index()].replace(p).is_some() {
                return Err(Error::InvalidLandmark {
                    name: name.into(),
                    reason: "listed more than once".into(),
                });
            }
        }
        let mut positions = [Complex64::new(0.0, 0.0); LANDMARK_COUNT];
        for (k, slot) in slots.iter().enumerate() {
            positions[k] = slot.ok_or_else(|| Error::MissingLandmark(Landmark::ALL[k].name().into()))?;
        }
        LandmarkSet::new(positions)
    }

    pub fn get(&self, l: Landmark) -> Complex64 {
        self.positions[l.index()]
    }

    pub fn positions(&self) -> &[Complex64; LANDMARK_COUNT] {
        &self.positions
    }

    pub fn iter(&self) -> impl Iterator<Item = (Landmark, Complex64)> + '_ {
        Landmark::ALL.iter().map(move |&l| (l, self.get(l)))
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> LandmarkSet {
        LandmarkSet {
            positions: self.positions.map(&mut f),
        }
    }

    /// Fail on the first landmark outside `[0, width-1] x [0, height-1]`.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for (l, p) in self.iter() {
            let inside = p.re >= 0.0
                && p.im >= 0.0
                && p.re <= (width - 1) as f64
                && p.im <= (height - 1) as f64;
            if !inside {
                return Err(Error::InvalidLandmark {
                    name: l.name().into(),
                    reason: format!(
                        "({}, {}) lies outside the {width}x{height} image",
                        p.re, p.im
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn select(&self, which: &[Landmark]) -> Vec<Complex64> {
        which.iter().map(|&l| self.get(l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Control,
    Osa,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Control => "control",
            Label::Osa => "osa",
        }
    }

    pub fn is_osa(self) -> bool {
        self == Label::Osa
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" | "nc" => Ok(Label::Control),
            "osa" => Ok(Label::Osa),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubjectRecord {
    pub id: String,
    pub image: ImageGray,
    pub landmarks: LandmarkSet,
    pub label: Option<Label>,
}

impl SubjectRecord {
    pub fn new(
        id: impl Into<String>,
        image: ImageGray,
        landmarks: LandmarkSet,
        label: Option<Label>,
    ) -> Result<Self> {
        landmarks.check_bounds(image.width(), image.height())?;
        Ok(SubjectRecord {
            id: id.into(),
            image,
            landmarks,
            label,
        })
    }

    pub fn require_label(&self) -> Result<Label> {
        self.label
            .ok_or_else(|| Error::InvalidCohort(format!("subject {} has no label", self.id)))
    }
}
