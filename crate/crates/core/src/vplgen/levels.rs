//! Aberration level table.
//!
//! Each row gives the RMS spot radius range (center FoV minimum, edge FoV
//! maximum), the overall coefficient range `(-x, y)` in µm, and for the six
//! dominant Noll orders the peak-fraction ranges used for negative and
//! positive peaks.

use crate::{Behavior, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Noll orders that carry their own peak-fraction ranges.
pub const DOMINANT_ORDERS: [usize; 6] = [1, 3, 4, 6, 7, 9];

/// Identifier of one tabulated level, `C1..C4` or `H1..H4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LevelId {
    pub behavior: Behavior,
    pub level: u8,
}

impl LevelId {
    pub fn new(behavior: Behavior, level: u8) -> Result<Self> {
        if (1..=4).contains(&level) {
            Ok(LevelId { behavior, level })
        } else {
            Err(Error::Lookup(format!(
                "no tabulated level {}{level}",
                behavior.prefix()
            )))
        }
    }

    pub fn all() -> impl Iterator<Item = LevelId> {
        [Behavior::Csl, Behavior::Hrdl].into_iter().flat_map(|b| {
            (1..=4).map(move |l| LevelId {
                behavior: b,
                level: l,
            })
        })
    }
}

impl fmt::Display for LevelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.behavior.prefix(), self.level)
    }
}

impl FromStr for LevelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Lookup(format!("unknown level `{s}`"));
        let mut chars = s.chars();
        let behavior = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('C') => Behavior::Csl,
            Some('H') => Behavior::Hrdl,
            _ => return Err(unknown()),
        };
        let level: u8 = chars.as_str().parse().map_err(|_| unknown())?;
        LevelId::new(behavior, level).map_err(|_| unknown())
    }
}

impl TryFrom<String> for LevelId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LevelId> for String {
    fn from(id: LevelId) -> String {
        id.to_string()
    }
}

/// Peak-fraction ranges of one Noll order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRange {
    pub order: usize,
    /// `(x⁻, y⁻)` used for negative peaks.
    pub negative: (f64, f64),
    /// `(x⁺, y⁺)` used for positive peaks.
    pub positive: (f64, f64),
}

/// One level row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub id: LevelId,
    /// `(min at center FoV, max at edge FoV)`, µm.
    pub radius_um: (f64, f64),
    /// `(negative bound, positive bound)`, µm OPD.
    pub overall: (f64, f64),
    pub per_order: Vec<OrderRange>,
}

impl LevelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("level {}: {m}", self.id)));
        let (rmin, rmax) = self.radius_um;
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return bad(format!(
                "radius range ({rmin}, {rmax}) is not ordered and positive"
            ));
        }
        let (neg, pos) = self.overall;
        if !(neg < 0.0 && pos > 0.0 && neg.is_finite() && pos.is_finite()) {
            return bad(format!("overall range ({neg}, {pos}) must straddle zero"));
        }
        for r in &self.per_order {
            if !(1..=crate::ZERNIKE_TERMS).contains(&r.order) {
                return bad(format!("order {} out of range", r.order));
            }
            for (lo, hi) in [r.negative, r.positive] {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return bad(format!(
                        "fraction range ({lo}, {hi}) of order {} outside [0, 1]",
                        r.order
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn order_range(&self, order: usize) -> Option<&OrderRange> {
        self.per_order.iter().find(|r| r.order == order)
    }

    /// Largest edge/center radius ratio the row allows.
    pub fn max_radius_ratio(&self) -> f64 {
        self.radius_um.1 / self.radius_um.0
    }
}

type Row = (f64, f64);

fn row(id: &str, radius: Row, overall: Row, orders: [(Row, Row); 6]) -> LevelSpec {
    LevelSpec {
        id: id.parse().expect("tabulated id"),
        radius_um: radius,
        overall,
        per_order: DOMINANT_ORDERS
            .iter()
            .zip(orders)
            .map(|(&order, (negative, positive))| OrderRange {
                order,
                negative,
                positive,
            })
            .collect(),
    }
}

/// Tabulated row for `id`.
pub fn level_spec(id: LevelId) -> LevelSpec {
    let same_low = |radius, overall| {
        row(
            "C1",
            radius,
            overall,
            [
                ((0.45, 1.0), (0.8, 1.0)),
                ((0.45, 1.0), (0.45, 1.0)),
                ((0.2, 0.5), (0.3, 0.5)),
                ((0.1, 0.5), (0.2, 0.7)),
                ((0.1, 0.35), (0.0, 0.1)),
                ((0.1, 0.15), (0.1, 0.15)),
            ],
        )
    };
    let h_low = |radius, overall| {
        row(
            "H1",
            radius,
            overall,
            [
                ((0.3, 0.8), (0.75, 0.9)),
                ((0.3, 0.8), (0.6, 0.8)),
                ((0.3, 0.4), (0.35, 0.55)),
                ((0.1, 0.3), (0.4, 0.7)),
                ((0.1, 0.2), (0.0, 0.15)),
                ((0.1, 0.15), (0.1, 0.15)),
            ],
        )
    };
    let mut spec = match (id.behavior, id.level) {
        (Behavior::Csl, 1) => same_low((5.0, 35.0), (-0.4, 0.3)),
        (Behavior::Csl, 2) => same_low((5.0, 75.0), (-0.7, 0.95)),
        (Behavior::Csl, 3) => row(
            "C3",
            (5.0, 150.0),
            (-3.0, 1.5),
            [
                ((0.6, 1.0), (0.8, 1.0)),
                ((0.45, 1.0), (0.45, 1.0)),
                ((0.2, 0.5), (0.3, 0.5)),
                ((0.1, 0.25), (0.1, 0.5)),
                ((0.1, 0.2), (0.0, 0.2)),
                ((0.45, 0.6), (0.45, 0.6)),
            ],
        ),
        (Behavior::Csl, _) => row(
            "C4",
            (5.0, 300.0),
            (-6.0, 5.0),
            [
                ((0.8, 1.0), (0.8, 1.0)),
                ((0.9, 1.0), (0.9, 1.0)),
                ((0.25, 0.7), (0.4, 0.7)),
                ((0.1, 0.15), (0.1, 0.3)),
                ((0.1, 0.15), (0.2, 0.4)),
                ((0.45, 0.8), (0.45, 0.8)),
            ],
        ),
        (Behavior::Hrdl, 1) => h_low((15.0, 25.0), (-0.3, 0.3)),
        (Behavior::Hrdl, 2) => h_low((15.0, 25.0), (-0.6, 0.7)),
        (Behavior::Hrdl, 3) => row(
            "H3",
            (70.0, 100.0),
            (-2.5, 2.0),
            [
                ((0.6, 0.8), (0.75, 0.9)),
                ((0.3, 0.8), (0.6, 0.8)),
                ((0.4, 0.6), (0.45, 0.65)),
                ((0.1, 0.25), (0.3, 0.5)),
                ((0.1, 0.15), (0.1, 0.2)),
                ((0.45, 0.65), (0.45, 0.6)),
            ],
        ),
        (Behavior::Hrdl, _) => row(
            "H4",
            (160.0, 200.0),
            (-6.0, 5.0),
            [
                ((0.75, 0.8), (0.75, 0.9)),
                ((0.9, 1.0), (0.8, 0.9)),
                ((0.25, 0.6), (0.4, 0.75)),
                ((0.1, 0.25), (0.2, 0.4)),
                ((0.1, 0.15), (0.3, 0.4)),
                ((0.65, 0.8), (0.45, 0.6)),
            ],
        ),
    };
    spec.id = id;
    spec
}

/// Looks up a row by its textual id.
pub fn level_spec_by_name(name: &str) -> Result<LevelSpec> {
    Ok(level_spec(name.parse()?))
}
