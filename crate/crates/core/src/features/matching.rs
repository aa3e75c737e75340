use super::{Keypoint, MatchPair, MatchSet};

/// Best and second-best neighbour of one descriptor.
#[derive(Clone, Copy)]
struct Neighbours {
    best: usize,
    d1: f64,
    d2: f64,
}

impl Neighbours {
    fn ratio(&self) -> f64 {
        if self.d2 > 0.0 {
            self.d1 / self.d2
        } else {
            // Two exact duplicates: ambiguous unless the best is exact too.
            if self.d1 == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Mutual-nearest-neighbour matching with a ratio test applied on both sides.
/// Without a second neighbour the second distance is taken as the largest
/// distance between unit vectors, 2.
pub fn match_descriptors(a: Vec<Keypoint>, b: Vec<Keypoint>, ratio: f64) -> MatchSet {
    let pairs = if a.is_empty() || b.is_empty() {
        Vec::new()
    } else {
        mutual_matches(&a, &b, ratio)
    };
    MatchSet {
        keypoints_a: a,
        keypoints_b: b,
        pairs,
    }
}

fn mutual_matches(a: &[Keypoint], b: &[Keypoint], ratio: f64) -> Vec<MatchPair> {
    let empty = Neighbours {
        best: usize::MAX,
        d1: f64::INFINITY,
        d2: f64::INFINITY,
    };
    let mut from_a = vec![empty; a.len()];
    let mut from_b = vec![empty; b.len()];
    for (i, ka) in a.iter().enumerate() {
        for (j, kb) in b.iter().enumerate() {
            let d = distance(&ka.descriptor, &kb.descriptor);
            offer(&mut from_a[i], j, d);
            offer(&mut from_b[j], i, d);
        }
    }
    let mut pairs = Vec::new();
    for (i, na) in from_a.iter().enumerate() {
        let j = na.best;
        if j == usize::MAX || from_b[j].best != i {
            continue;
        }
        let na = with_default_second(*na);
        let nb = with_default_second(from_b[j]);
        let worst = na.ratio().max(nb.ratio());
        if worst < ratio {
            pairs.push(MatchPair {
                index_a: i,
                index_b: j,
                confidence: (1.0 - worst).clamp(0.0, 1.0),
            });
        }
    }
    pairs
}

fn with_default_second(mut n: Neighbours) -> Neighbours {
    if !n.d2.is_finite() {
        n.d2 = 2.0;
    }
    n
}

#[inline]
fn offer(n: &mut Neighbours, idx: usize, d: f64) {
    // Strict comparison keeps the lowest index on ties.
    if d < n.d1 {
        n.d2 = n.d1;
        n.d1 = d;
        n.best = idx;
    } else if d < n.d2 {
        n.d2 = d;
    }
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_keypoints(n: usize, seed: u64) -> Vec<Keypoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut d: Vec<f32> = (0..128).map(|_| rng.gen::<f32>()).collect();
                let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
                d.iter_mut().for_each(|v| *v /= norm);
                Keypoint {
                    descriptor: d,
                    ..Keypoint::at(Point::new(i as f64, 0.0))
                }
            })
            .collect()
    }

    /// Reference: all-pairs distance table, mutual argmin and both ratio tests.
    fn brute_force(a: &[Keypoint], b: &[Keypoint], ratio: f64) -> Vec<(usize, usize)> {
        let d: Vec<Vec<f64>> = a
            .iter()
            .map(|ka| b.iter().map(|kb| distance(&ka.descriptor, &kb.descriptor)).collect())
            .collect();
        let sorted = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v
        };
        let mut out = vec![];
        for i in 0..a.len() {
            let j = (0..b.len()).min_by(|&x, &y| d[i][x].total_cmp(&d[i][y])).unwrap();
            let i_back = (0..a.len()).min_by(|&x, &y| d[x][j].total_cmp(&d[y][j])).unwrap();
            if i_back != i {
                continue;
            }
            let row = sorted(d[i].clone());
            let col = sorted((0..a.len()).map(|k| d[k][j]).collect());
            let r1 = row[0] / row.get(1).copied().unwrap_or(2.0);
            let r2 = col[0] / col.get(1).copied().unwrap_or(2.0);
            if r1.max(r2) < ratio {
                out.push((i, j));
            }
        }
        out
    }

    #[test]
    fn identical_lists_match_identically() {
        let a = random_keypoints(40, 1);
        let set = match_descriptors(a.clone(), a, 0.8);
        assert_eq!(set.len(), 40);
        for m in &set.pairs {
            assert_eq!(m.index_a, m.index_b);
            assert_eq!(m.confidence, 1.0);
        }
    }

    #[test]
    fn random_descriptors_rarely_match() {
        let a = random_keypoints(100, 2);
        let b = random_keypoints(100, 3);
        let set = match_descriptors(a.clone(), b.clone(), 0.8);
        let expected = brute_force(&a, &b, 0.8);
        let got: Vec<(usize, usize)> = set.pairs.iter().map(|m| (m.index_a, m.index_b)).collect();
        assert_eq!(got, expected);
        assert!(set.len() <= 5, "{} matches", set.len());
    }

    #[test]
    fn originals_survive_distractors() {
        let a = random_keypoints(30, 4);
        let mut with_distractors = a.clone();
        with_distractors.extend(random_keypoints(200, 5));
        let set = match_descriptors(with_distractors, a, 0.8);
        assert_eq!(set.len(), 30);
        for m in &set.pairs {
            assert_eq!(m.index_a, m.index_b);
        }
    }

    #[test]
    fn matching_is_symmetric() {
        let a = random_keypoints(60, 6);
        let mut b = random_keypoints(50, 7);
        b.extend(a[..20].iter().cloned());
        let ab: Vec<(usize, usize)> = match_descriptors(a.clone(), b.clone(), 0.9)
            .pairs
            .iter()
            .map(|m| (m.index_a, m.index_b))
            .collect();
        let mut ba: Vec<(usize, usize)> = match_descriptors(b, a, 0.9)
            .pairs
            .iter()
            .map(|m| (m.index_b, m.index_a))
            .collect();
        ba.sort();
        let mut ab_sorted = ab.clone();
        ab_sorted.sort();
        assert_eq!(ab_sorted, ba);
        assert!(ab.len() >= 20);
    }

    #[test]
    fn empty_inputs() {
        assert!(match_descriptors(vec![], random_keypoints(3, 1), 0.8).is_empty());
        assert!(match_descriptors(random_keypoints(3, 1), vec![], 0.8).is_empty());
    }
}
