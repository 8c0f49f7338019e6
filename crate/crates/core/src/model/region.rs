use serde::{Deserialize, Serialize};

use super::interval::{Interval, Side};
use crate::error::{Error, Result};

/// Admissibility classification of a stopping region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Admissibility {
    Admissible,
    /// Boundary points that are neither edges of interior intervals nor
    /// isolated points. Never produced for finite unions of closed pieces.
    InadmissibleCaseC(Vec<f64>),
}

/// Classification of a state relative to a stopping region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    InteriorOfS,
    /// Boundary point with an interval of S on one side and S^c on the other.
    BoundaryCaseA,
    /// Isolated point of S.
    BoundaryCaseB,
    InComplement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCase {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub case: BoundaryCase,
    /// For case (a): the side on which the region lies. `None` for isolated points.
    pub region_side: Option<Side>,
}

/// End of a connected component of the continuation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapEnd {
    /// A boundary point of S where the process is stopped.
    Stop(f64),
    /// An (open) end of the state space, possibly infinite.
    DomainEnd(f64),
}

impl GapEnd {
    pub fn position(&self) -> f64 {
        match *self {
            GapEnd::Stop(x) | GapEnd::DomainEnd(x) => x,
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, GapEnd::Stop(_))
    }
}

/// Open connected component of S^c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub left: GapEnd,
    pub right: GapEnd,
}

impl Gap {
    pub fn contains(&self, x: f64) -> bool {
        x > self.left.position() && x < self.right.position()
    }

    pub fn as_interval(&self) -> Interval {
        Interval {
            lower: self.left.position(),
            upper: self.right.position(),
            lower_closed: false,
            upper_closed: false,
        }
    }
}

/// A finite union of disjoint closed (within the state space) intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRegion {
    domain: Interval,
    pieces: Vec<Interval>,
    admissibility: Admissibility,
}

impl StoppingRegion {
    /// Sorts, merges and validates raw pieces. Touching or overlapping pieces
    /// are fused; an empty input yields the empty region.
    pub fn normalize(domain: Interval, raw_pieces: &[Interval]) -> Result<Self> {
        let mut pieces = Vec::with_capacity(raw_pieces.len());
        for p in raw_pieces {
            if p.lower < domain.lower || p.upper > domain.upper {
                return Err(Error::InvalidInterval(format!("piece {p} is not within {domain}")));
            }
            let lower_ok = p.lower_closed || p.lower == domain.lower;
            let upper_ok = p.upper_closed || p.upper == domain.upper;
            if !lower_ok || !upper_ok {
                return Err(Error::OpenPiece(p.to_string()));
            }
            // Restrict to the state space: endpoints at an open end of the
            // state space are not part of the region.
            let lower_closed = p.lower > domain.lower;
            let upper_closed = p.upper < domain.upper;
            if p.lower == p.upper && !(lower_closed && upper_closed) {
                continue;
            }
            pieces.push(Interval {
                lower: p.lower,
                upper: p.upper,
                lower_closed,
                upper_closed,
            });
        }
        pieces.sort_by(|a, b| a.lower.total_cmp(&b.lower));
        let mut merged: Vec<Interval> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match merged.last_mut() {
                Some(last) if p.lower <= last.upper => {
                    if p.upper > last.upper {
                        last.upper = p.upper;
                        last.upper_closed = p.upper_closed;
                    }
                }
                _ => merged.push(p),
            }
        }
        Ok(Self {
            domain,
            pieces: merged,
            admissibility: Admissibility::Admissible,
        })
    }

    pub fn empty(domain: Interval) -> Self {
        Self {
            domain,
            pieces: Vec::new(),
            admissibility: Admissibility::Admissible,
        }
    }

    /// The whole state space.
    pub fn full(domain: Interval) -> Self {
        Self {
            domain,
            pieces: vec![Interval {
                lower: domain.lower,
                upper: domain.upper,
                lower_closed: false,
                upper_closed: false,
            }],
            admissibility: Admissibility::Admissible,
        }
    }

    /// Finite set of stopping points.
    pub fn points(domain: Interval, xs: &[f64]) -> Result<Self> {
        let pieces = xs.iter().map(|&x| Interval::point(x)).collect::<Result<Vec<_>>>()?;
        Self::normalize(domain, &pieces)
    }

    /// `(inf X, a]`.
    pub fn left_ray(domain: Interval, a: f64) -> Result<Self> {
        Self::normalize(domain, &[Interval::new(domain.lower, a, false, true)?])
    }

    /// `[b, sup X)`.
    pub fn right_ray(domain: Interval, b: f64) -> Result<Self> {
        Self::normalize(domain, &[Interval::new(b, domain.upper, true, false)?])
    }

    pub fn domain(&self) -> &Interval {
        &self.domain
    }

    pub fn pieces(&self) -> &[Interval] {
        &self.pieces
    }

    pub fn admissibility(&self) -> &Admissibility {
        &self.admissibility
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn ensure_admissible(&self) -> Result<()> {
        match &self.admissibility {
            Admissibility::Admissible => Ok(()),
            Admissibility::InadmissibleCaseC(pts) => Err(Error::InadmissibleRegion(pts.clone())),
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                x,
                domain: self.domain.to_string(),
            })
        }
    }

    pub fn contains(&self, x: f64) -> Result<Membership> {
        self.check_domain(x)?;
        Ok(self.membership(x))
    }

    /// Membership without the domain check.
    pub fn membership(&self, x: f64) -> Membership {
        // pieces are sorted and disjoint: binary search on the lower end
        let idx = self.pieces.partition_point(|p| p.lower <= x);
        if idx == 0 {
            return Membership::InComplement;
        }
        let p = &self.pieces[idx - 1];
        if !p.closure_contains(x) {
            return Membership::InComplement;
        }
        if p.is_point() {
            Membership::BoundaryCaseB
        } else if (x == p.lower && p.lower_closed) || (x == p.upper && p.upper_closed) {
            Membership::BoundaryCaseA
        } else if x > p.lower && x < p.upper {
            Membership::InteriorOfS
        } else {
            Membership::InComplement
        }
    }

    pub fn is_member(&self, x: f64) -> bool {
        self.membership(x) != Membership::InComplement
    }

    pub fn boundary_points(&self) -> Vec<BoundaryPoint> {
        let mut out = Vec::new();
        for p in &self.pieces {
            if p.is_point() {
                out.push(BoundaryPoint {
                    x: p.lower,
                    case: BoundaryCase::B,
                    region_side: None,
                });
                continue;
            }
            if p.lower_closed {
                out.push(BoundaryPoint {
                    x: p.lower,
                    case: BoundaryCase::A,
                    region_side: Some(Side::Right),
                });
            }
            if p.upper_closed {
                out.push(BoundaryPoint {
                    x: p.upper,
                    case: BoundaryCase::A,
                    region_side: Some(Side::Left),
                });
            }
        }
        out
    }

    pub fn is_boundary(&self, x: f64) -> bool {
        matches!(
            self.membership(x),
            Membership::BoundaryCaseA | Membership::BoundaryCaseB
        )
    }

    /// Connected components of the continuation set, in increasing order.
    pub fn gaps(&self) -> Vec<Gap> {
        let mut out = Vec::new();
        let mut cursor = Some(GapEnd::DomainEnd(self.domain.lower));
        for p in &self.pieces {
            if let Some(c) = cursor {
                if p.lower > c.position() {
                    out.push(Gap {
                        left: c,
                        right: GapEnd::Stop(p.lower),
                    });
                }
            }
            cursor = if p.upper_closed {
                Some(GapEnd::Stop(p.upper))
            } else {
                None
            };
        }
        if let Some(c) = cursor {
            if c.position() < self.domain.upper {
                out.push(Gap {
                    left: c,
                    right: GapEnd::DomainEnd(self.domain.upper),
                });
            }
        }
        out
    }

    /// The component of S^c adjacent to `x` on the given side, if the
    /// one-sided neighbourhood of `x` lies in S^c.
    pub fn adjacent_gap(&self, x: f64, side: Side) -> Option<Gap> {
        self.gaps().into_iter().find(|g| match side {
            Side::Left => x > g.left.position() && x <= g.right.position(),
            Side::Right => x >= g.left.position() && x < g.right.position(),
        })
    }

    /// True when a one-sided neighbourhood `(x - h, x)` or `(x, x + h)` lies in S^c
    /// for all small `h`.
    pub fn side_in_complement(&self, x: f64, side: Side) -> bool {
        match self.membership(x) {
            Membership::InComplement | Membership::BoundaryCaseB => true,
            Membership::InteriorOfS => false,
            Membership::BoundaryCaseA => {
                let piece = self
                    .pieces
                    .iter()
                    .find(|p| p.closure_contains(x))
                    .expect("boundary point belongs to a piece");
                match side {
                    Side::Left => x == piece.lower,
                    Side::Right => x == piece.upper,
                }
            }
        }
    }

    pub fn describe(&self) -> Vec<String> {
        self.pieces.iter().map(|p| p.to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real() -> Interval {
        Interval::real_line()
    }

    #[test]
    fn touching_pieces_merge() {
        let r = StoppingRegion::normalize(
            real(),
            &[Interval::closed(1.0, 2.0).unwrap(), Interval::closed(2.0, 3.0).unwrap()],
        )
        .unwrap();
        assert_eq!(r.pieces(), &[Interval::closed(1.0, 3.0).unwrap()]);
    }

    #[test]
    fn isolated_point_sorted_and_case_b() {
        let r = StoppingRegion::normalize(
            real(),
            &[Interval::point(5.0).unwrap(), Interval::closed(0.0, 1.0).unwrap()],
        )
        .unwrap();
        assert_eq!(r.pieces()[0], Interval::closed(0.0, 1.0).unwrap());
        assert_eq!(r.pieces()[1], Interval::point(5.0).unwrap());
        assert_eq!(r.contains(5.0).unwrap(), Membership::BoundaryCaseB);
    }

    #[test]
    fn left_ray_on_half_line() {
        let d = Interval::positive_half_line();
        let r = StoppingRegion::normalize(d, &[Interval::new(0.0, 0.6, false, true).unwrap()]).unwrap();
        assert_eq!(r.pieces().len(), 1);
        assert!(!r.pieces()[0].lower_closed);
        let bps = r.boundary_points();
        assert_eq!(bps.len(), 1);
        assert_eq!(bps[0].x, 0.6);
        assert_eq!(bps[0].case, BoundaryCase::A);
        assert_eq!(bps[0].region_side, Some(Side::Left));
        assert_eq!(r.gaps().len(), 1);
        assert_eq!(r.gaps()[0].left, GapEnd::Stop(0.6));
    }

    #[test]
    fn open_piece_rejected() {
        let err = StoppingRegion::normalize(real(), &[Interval::open(0.0, 1.0).unwrap()]);
        assert!(matches!(err, Err(Error::OpenPiece(_))));
    }

    #[test]
    fn membership_examples() {
        let r = StoppingRegion::normalize(real(), &[Interval::closed(0.0, 1.0).unwrap()]).unwrap();
        assert_eq!(r.contains(0.5).unwrap(), Membership::InteriorOfS);
        assert_eq!(r.contains(2.0).unwrap(), Membership::InComplement);
        assert_eq!(r.contains(1.0).unwrap(), Membership::BoundaryCaseA);
        let h = StoppingRegion::full(Interval::positive_half_line());
        assert!(h.contains(-1.0).is_err());
    }

    #[test]
    fn gaps_of_two_points() {
        let r = StoppingRegion::points(real(), &[0.0, 1.0]).unwrap();
        let g = r.gaps();
        assert_eq!(g.len(), 3);
        assert_eq!(g[1], Gap { left: GapEnd::Stop(0.0), right: GapEnd::Stop(1.0) });
        assert!(r.side_in_complement(0.0, Side::Left));
        assert!(r.side_in_complement(0.0, Side::Right));
        assert_eq!(r.adjacent_gap(1.0, Side::Left), Some(g[1]));
    }

    #[test]
    fn empty_and_full() {
        let e = StoppingRegion::empty(real());
        assert_eq!(e.gaps().len(), 1);
        let f = StoppingRegion::full(real());
        assert!(f.gaps().is_empty());
        assert!(f.boundary_points().is_empty());
    }
}
