use crate::geometry::Point;

/// One annotated point. Points that were mapped outside the valid domain
/// keep their position but are flagged and left out of error statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub position: Point,
    pub out_of_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSet {
    pub points: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn from_points(points: impl IntoIterator<Item = Point>) -> Self {
        Self {
            points: points
                .into_iter()
                .map(|position| Landmark {
                    position,
                    out_of_bounds: false,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.points.iter().map(|l| l.position)
    }

    pub fn flagged_count(&self) -> usize {
        self.points.iter().filter(|l| l.out_of_bounds).count()
    }
}
