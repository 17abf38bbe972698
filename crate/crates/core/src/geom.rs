//! Planar geometry shared by every module: step-grid coordinates, bearing/distance
//! relations and the eight-way compass.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Meters covered by one step of the discretized road network.
pub const STEP_M: f64 = 50.0;

/// Position in step units: `x` east, `y` north.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const ORIGIN: Coord = Coord { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Coord { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_meters(self) -> (f64, f64) {
        (self.x * STEP_M, self.y * STEP_M)
    }

    /// Euclidean length in steps.
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Coord) -> f64 {
        (other - self).norm()
    }

    /// Component-wise rounding, half away from zero.
    pub fn rounded(self) -> Coord {
        Coord::new(self.x.round() + 0.0, self.y.round() + 0.0)
    }

    pub fn dot(self, other: Coord) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn scale(self, k: f64) -> Coord {
        Coord::new(self.x * k, self.y * k)
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }

    /// Bearing of this vector, degrees clockwise from north; 0 for the zero vector.
    pub fn bearing_deg(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        normalize_bearing(self.x.atan2(self.y).to_degrees())
    }
}

impl Add for Coord {
    type Output = Coord;
    fn add(self, rhs: Coord) -> Coord {
        Coord::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Coord {
    type Output = Coord;
    fn sub(self, rhs: Coord) -> Coord {
        Coord::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Renders as `(x, y)`, the form used in agent prompts.
impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", fmt_num(self.x), fmt_num(self.y))
    }
}

/// Integral values print without a fractional part; others keep two decimals.
pub fn fmt_num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Maps any angle into `[0, 360)`.
pub fn normalize_bearing(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b + 0.0
    }
}

/// Smallest absolute angle between two bearings, in `[0, 180]`.
pub fn angular_deviation(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Bearing plus distance: where a target lies as seen from a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelPos {
    pub bearing_deg: f64,
    pub distance_m: f64,
}

impl RelPos {
    pub fn new(bearing_deg: f64, distance_m: f64) -> Self {
        RelPos {
            bearing_deg: normalize_bearing(bearing_deg),
            distance_m: distance_m.max(0.0),
        }
    }

    /// Relation for a displacement given in steps.
    pub fn from_delta(delta: Coord) -> Self {
        RelPos {
            bearing_deg: delta.bearing_deg(),
            distance_m: delta.norm() * STEP_M,
        }
    }

    /// Relation for an east/north displacement in meters.
    pub fn from_vector_m(east: f64, north: f64) -> Self {
        RelPos::from_delta(Coord::new(east / STEP_M, north / STEP_M))
    }

    /// East/north displacement in meters.
    pub fn to_vector_m(self) -> (f64, f64) {
        let rad = self.bearing_deg.to_radians();
        (self.distance_m * rad.sin(), self.distance_m * rad.cos())
    }

    /// East/north displacement in steps.
    pub fn to_delta(self) -> Coord {
        let (e, n) = self.to_vector_m();
        Coord::new(e / STEP_M, n / STEP_M)
    }

    pub fn octant(self) -> Octant {
        Octant::from_bearing(self.bearing_deg)
    }
}

/// Ground-truth relation of `to` as seen from `from`.
pub fn rel_pos(from: Coord, to: Coord) -> RelPos {
    RelPos::from_delta(to - from)
}

/// The eight compass directions, clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Octant {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Octant {
    pub const ALL: [Octant; 8] = [
        Octant::N,
        Octant::NE,
        Octant::E,
        Octant::SE,
        Octant::S,
        Octant::SW,
        Octant::W,
        Octant::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Octant {
        Octant::ALL[i % 8]
    }

    /// Octant `k` covers `[45k - 22.5, 45k + 22.5)`.
    pub fn from_bearing(bearing_deg: f64) -> Octant {
        let b = normalize_bearing(bearing_deg);
        let k = ((b + 22.5) / 45.0).floor() as usize;
        Octant::from_index(k)
    }

    pub fn center_deg(self) -> f64 {
        45.0 * self.index() as f64
    }

    pub fn is_cardinal(self) -> bool {
        self.index().is_multiple_of(2)
    }

    pub fn opposite(self) -> Octant {
        Octant::from_index(self.index() + 4)
    }

    /// Rotates clockwise by `steps` eighths of a turn.
    pub fn rotate(self, steps: i32) -> Octant {
        Octant::from_index((self.index() as i32 + steps).rem_euclid(8) as usize)
    }

    /// Unit vector in step space.
    pub fn unit(self) -> Coord {
        let rad = self.center_deg().to_radians();
        Coord::new(rad.sin(), rad.cos())
    }

    /// Unit grid displacement, e.g. `(1, 1)` for NE.
    pub fn grid_step(self) -> (i64, i64) {
        match self {
            Octant::N => (0, 1),
            Octant::NE => (1, 1),
            Octant::E => (1, 0),
            Octant::SE => (1, -1),
            Octant::S => (0, -1),
            Octant::SW => (-1, -1),
            Octant::W => (-1, 0),
            Octant::NW => (-1, 1),
        }
    }

    /// Capitalized word used in prompts ("Northeast").
    pub fn word(self) -> &'static str {
        match self {
            Octant::N => "North",
            Octant::NE => "Northeast",
            Octant::E => "East",
            Octant::SE => "Southeast",
            Octant::S => "South",
            Octant::SW => "Southwest",
            Octant::W => "West",
            Octant::NW => "Northwest",
        }
    }

    pub fn lower_word(self) -> &'static str {
        match self {
            Octant::N => "north",
            Octant::NE => "northeast",
            Octant::E => "east",
            Octant::SE => "southeast",
            Octant::S => "south",
            Octant::SW => "southwest",
            Octant::W => "west",
            Octant::NW => "northwest",
        }
    }

    pub fn adjective(self) -> &'static str {
        match self {
            Octant::N => "northern",
            Octant::NE => "northeastern",
            Octant::E => "eastern",
            Octant::SE => "southeastern",
            Octant::S => "southern",
            Octant::SW => "southwestern",
            Octant::W => "western",
            Octant::NW => "northwestern",
        }
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            Octant::N => "N",
            Octant::NE => "NE",
            Octant::E => "E",
            Octant::SE => "SE",
            Octant::S => "S",
            Octant::SW => "SW",
            Octant::W => "W",
            Octant::NW => "NW",
        }
    }

    /// Accepts "Northeast", "north-east", "north east", "NE" and similar spellings.
    pub fn parse_loose(s: &str) -> Option<Octant> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect::<String>()
            .to_ascii_lowercase();
        let oct = match key.as_str() {
            "n" | "north" | "northern" => Octant::N,
            "ne" | "northeast" | "northeastern" => Octant::NE,
            "e" | "east" | "eastern" => Octant::E,
            "se" | "southeast" | "southeastern" => Octant::SE,
            "s" | "south" | "southern" => Octant::S,
            "sw" | "southwest" | "southwestern" => Octant::SW,
            "w" | "west" | "western" => Octant::W,
            "nw" | "northwest" | "northwestern" => Octant::NW,
            _ => return None,
        };
        Some(oct)
    }
}

impl fmt::Display for Octant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Renders a direction list the way the prompts show it: `['North', 'South']`.
pub fn bracket_list<S: AsRef<str>>(items: &[S]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("'{}'", s.as_ref())).collect();
    format!("[{}]", inner.join(", "))
}
