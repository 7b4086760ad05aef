//! Shortest forward-only paths of bounded curvature.
//!
//! The six candidate words are evaluated in the normalized frame where the
//! start sits at the origin and the goal on the positive x axis, scaled by
//! the turning radius.

use std::f64::consts::PI;

use crate::geometry::{normalize_angle, Point2, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Left,
    Straight,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Word {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl Word {
    pub const ALL: [Word; 6] = [Word::Lsl, Word::Rsr, Word::Lsr, Word::Rsl, Word::Rlr, Word::Lrl];

    pub fn turns(self) -> [Turn; 3] {
        use Turn::*;
        match self {
            Word::Lsl => [Left, Straight, Left],
            Word::Rsr => [Right, Straight, Right],
            Word::Lsr => [Left, Straight, Right],
            Word::Rsl => [Right, Straight, Left],
            Word::Rlr => [Right, Left, Right],
            Word::Lrl => [Left, Right, Left],
        }
    }
}

fn mod2pi(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Normalized segment lengths `(t, p, q)` for one word, if it exists.
fn word_params(word: Word, alpha: f64, beta: f64, d: f64) -> Option<[f64; 3]> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let c_ab = (alpha - beta).cos();
    match word {
        Word::Lsl => {
            let p2 = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sa - sb);
            if p2 < 0.0 {
                return None;
            }
            let tmp = (cb - ca).atan2(d + sa - sb);
            Some([mod2pi(tmp - alpha), p2.sqrt(), mod2pi(beta - tmp)])
        }
        Word::Rsr => {
            let p2 = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sb - sa);
            if p2 < 0.0 {
                return None;
            }
            let tmp = (ca - cb).atan2(d - sa + sb);
            Some([mod2pi(alpha - tmp), p2.sqrt(), mod2pi(tmp - beta)])
        }
        Word::Lsr => {
            let p2 = -2.0 + d * d + 2.0 * c_ab + 2.0 * d * (sa + sb);
            if p2 < 0.0 {
                return None;
            }
            let p = p2.sqrt();
            let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            Some([mod2pi(tmp - alpha), p, mod2pi(tmp - beta)])
        }
        Word::Rsl => {
            let p2 = -2.0 + d * d + 2.0 * c_ab - 2.0 * d * (sa + sb);
            if p2 < 0.0 {
                return None;
            }
            let p = p2.sqrt();
            let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            Some([mod2pi(alpha - tmp), p, mod2pi(beta - tmp)])
        }
        Word::Rlr => {
            let tmp = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
            if tmp.abs() > 1.0 {
                return None;
            }
            let phi = (ca - cb).atan2(d - sa + sb);
            let p = mod2pi(2.0 * PI - tmp.acos());
            let t = mod2pi(alpha - phi + mod2pi(p / 2.0));
            Some([t, p, mod2pi(alpha - beta - t + mod2pi(p))])
        }
        Word::Lrl => {
            let tmp = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
            if tmp.abs() > 1.0 {
                return None;
            }
            let phi = (ca - cb).atan2(d + sa - sb);
            let p = mod2pi(2.0 * PI - tmp.acos());
            let t = mod2pi(-alpha - phi + p / 2.0);
            Some([t, p, mod2pi(mod2pi(beta) - alpha - t + mod2pi(p))])
        }
    }
}

/// A three-segment path of arcs at `radius` and straight lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DubinsPath {
    pub start: Pose,
    pub radius: f64,
    pub word: Word,
    /// Segment lengths in units of `radius`.
    pub params: [f64; 3],
}

impl DubinsPath {
    /// Shortest path over all six words. `None` only for a non-positive radius.
    pub fn shortest(from: &Pose, to: &Pose, radius: f64) -> Option<Self> {
        Word::ALL
            .iter()
            .filter_map(|&w| Self::with_word(from, to, radius, w))
            .fold(None, |best: Option<Self>, cand| match best {
                Some(b) if b.length() <= cand.length() => Some(b),
                _ => Some(cand),
            })
    }

    pub fn with_word(from: &Pose, to: &Pose, radius: f64, word: Word) -> Option<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return None;
        }
        let delta = to.position - from.position;
        let d = delta.norm() / radius;
        let theta = if d > 0.0 { mod2pi(delta.y.atan2(delta.x)) } else { 0.0 };
        let alpha = mod2pi(from.heading - theta);
        let beta = mod2pi(to.heading - theta);
        word_params(word, alpha, beta, d).map(|params| Self {
            start: *from,
            radius,
            word,
            params,
        })
    }

    pub fn length(&self) -> f64 {
        (self.params[0] + self.params[1] + self.params[2]) * self.radius
    }

    /// Pose after travelling `s` meters along the path.
    pub fn pose_at(&self, s: f64) -> Pose {
        let mut t = (s / self.radius).clamp(0.0, self.params.iter().sum());
        // unit-radius frame anchored at the start position
        let mut x = 0.0;
        let mut y = 0.0;
        let mut phi = self.start.heading;
        for (turn, &len) in self.word.turns().iter().zip(&self.params) {
            let seg = t.min(len);
            match turn {
                Turn::Left => {
                    x += (phi + seg).sin() - phi.sin();
                    y += -(phi + seg).cos() + phi.cos();
                    phi += seg;
                }
                Turn::Right => {
                    x += -(phi - seg).sin() + phi.sin();
                    y += (phi - seg).cos() - phi.cos();
                    phi -= seg;
                }
                Turn::Straight => {
                    x += seg * phi.cos();
                    y += seg * phi.sin();
                }
            }
            t -= seg;
            if t <= 0.0 {
                break;
            }
        }
        Pose {
            position: self.start.position + Point2::new(x, y) * self.radius,
            heading: normalize_angle(phi),
        }
    }

    /// Segment type in effect `s` meters along the path.
    pub fn turn_at(&self, s: f64) -> Turn {
        let mut t = s / self.radius;
        let turns = self.word.turns();
        for (i, &len) in self.params.iter().enumerate() {
            if t < len || i == 2 {
                return turns[i];
            }
            t -= len;
        }
        turns[2]
    }

    /// Poses at no more than `step` spacing, both endpoints included.
    pub fn sample(&self, step: f64) -> Vec<Pose> {
        let len = self.length();
        let n = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        (0..=n).map(|i| self.pose_at(len * i as f64 / n as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        a.position.distance(b.position) < tol && normalize_angle(a.heading - b.heading).abs() < tol
    }

    #[test]
    fn straight_and_semicircle() {
        let p = DubinsPath::shortest(&Pose::new(0.0, 0.0, 0.0), &Pose::new(4.0, 0.0, 0.0), 1.0).unwrap();
        assert!((p.length() - 4.0).abs() < 1e-12);
        let p = DubinsPath::shortest(&Pose::new(0.0, 0.0, 0.0), &Pose::new(0.0, 2.0, PI), 1.0).unwrap();
        assert!((p.length() - PI).abs() < 1e-9);
        // half-way along the semicircle about (0, 1) is (1, 1) facing up
        assert!(close(&p.pose_at(PI / 2.0), &Pose::new(1.0, 1.0, PI / 2.0), 1e-9));
    }

    #[test]
    fn every_word_ends_at_goal() {
        let cases = [
            (Pose::new(0.0, 0.0, 0.0), Pose::new(1.0, 0.5, 2.5)),
            (Pose::new(3.0, -2.0, 1.0), Pose::new(-4.0, 6.0, -2.0)),
            (Pose::new(0.0, 0.0, 0.0), Pose::new(0.5, 0.0, PI - 0.1)),
            (Pose::new(1.0, 1.0, -3.0), Pose::new(1.2, 0.8, 3.0)),
        ];
        for (a, b) in cases {
            let mut found = 0;
            for w in Word::ALL {
                if let Some(p) = DubinsPath::with_word(&a, &b, 1.3, w) {
                    found += 1;
                    let end = p.pose_at(p.length());
                    assert!(close(&end, &b, 1e-8), "{w:?}: {end:?} vs {b:?}");
                }
            }
            assert!(found > 0);
        }
    }

    #[test]
    fn samples_are_dense() {
        let p = DubinsPath::shortest(&Pose::new(0.0, 0.0, 0.3), &Pose::new(-3.0, 5.0, -1.0), 2.0).unwrap();
        let s = p.sample(0.1);
        assert!(close(&s[0], &p.start, 1e-12));
        for w in s.windows(2) {
            assert!(w[0].position.distance(w[1].position) <= 0.1 + 1e-9);
        }
    }
}
