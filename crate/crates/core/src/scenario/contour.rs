use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

/// Edge of the sample lattice: `(i, j, horizontal)` starts at node `(i, j)`.
type EdgeKey = (usize, usize, bool);

/// Contours of `{f = level}` over a `res x res` lattice on `[lo, hi]`.
/// Crossings are located by bisection along lattice edges; saddle cells are
/// resolved with the cell-center value.
pub fn marching_squares<F>(f: F, lo: [f64; 2], hi: [f64; 2], res: usize, level: f64) -> Vec<Polyline>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let res = res.max(2);
    let hx = (hi[0] - lo[0]) / res as f64;
    let hy = (hi[1] - lo[1]) / res as f64;
    let node = |i: usize, j: usize| [lo[0] + i as f64 * hx, lo[1] + j as f64 * hy];
    let vals: Vec<Vec<f64>> = (0..=res).map(|i| (0..=res).map(|j| {
        let p = node(i, j);
        f(p[0], p[1]) - level
    }).collect()).collect();
    let inside = |i: usize, j: usize| vals[i][j] <= 0.0;

    let mut links: HashMap<EdgeKey, Vec<EdgeKey>> = HashMap::new();
    let mut link = |a: EdgeKey, b: EdgeKey| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for i in 0..res {
        for j in 0..res {
            // corners: 0 = (i,j), 1 = (i+1,j), 2 = (i+1,j+1), 3 = (i,j+1)
            let case = inside(i, j) as u8 | (inside(i + 1, j) as u8) << 1 | (inside(i + 1, j + 1) as u8) << 2 | (inside(i, j + 1) as u8) << 3;
            let bottom = (i, j, true);
            let right = (i + 1, j, false);
            let top = (i, j + 1, true);
            let left = (i, j, false);
            match case {
                0 | 15 => {}
                1 | 14 => link(left, bottom),
                2 | 13 => link(bottom, right),
                3 | 12 => link(left, right),
                4 | 11 => link(right, top),
                6 | 9 => link(bottom, top),
                7 | 8 => link(left, top),
                5 | 10 => {
                    let c = node(i, j);
                    let center_inside = f(c[0] + 0.5 * hx, c[1] + 0.5 * hy) - level <= 0.0;
                    if (case == 5) == center_inside {
                        link(left, top);
                        link(bottom, right);
                    } else {
                        link(left, bottom);
                        link(right, top);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let crossing = |(i, j, horizontal): EdgeKey| -> [f64; 2] {
        let a = node(i, j);
        let b = if horizontal { node(i + 1, j) } else { node(i, j + 1) };
        let fa = vals[i][j];
        let (mut t0, mut t1) = (0.0, 1.0);
        let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        for _ in 0..60 {
            let tm = 0.5 * (t0 + t1);
            let p = at(tm);
            if ((f(p[0], p[1]) - level) <= 0.0) == (fa <= 0.0) {
                t0 = tm;
            } else {
                t1 = tm;
            }
        }
        at(0.5 * (t0 + t1))
    };

    let mut keys: Vec<EdgeKey> = links.keys().copied().collect();
    keys.sort_unstable();
    let mut used: HashMap<EdgeKey, bool> = HashMap::new();
    let mut out = Vec::new();
    // open chains start at lattice-boundary edges (degree 1)
    let starts: Vec<EdgeKey> = keys.iter().copied().filter(|k| links[k].len() == 1).chain(keys.iter().copied()).collect();
    for start in starts {
        if used.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        used.insert(start, true);
        let mut prev = None;
        let mut cur = start;
        let closed = loop {
            let next = links[&cur].iter().copied().find(|n| Some(*n) != prev && !used.contains_key(n));
            match next {
                Some(n) => {
                    used.insert(n, true);
                    chain.push(n);
                    prev = Some(cur);
                    cur = n;
                }
                None => break chain.len() > 2 && links[&cur].contains(&start),
            }
        };
        let mut points: Vec<[f64; 2]> = chain.into_iter().map(crossing).collect();
        if closed {
            points.push(points[0]);
        }
        out.push(Polyline { points, closed });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_one_closed_loop() {
        let lines = marching_squares(|x, y| x * x + y * y, [-2.0, -2.0], [2.0, 2.0], 64, 1.0);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        for p in &lines[0].points {
            assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_disks_two_loops() {
        let f = |x: f64, y: f64| ((x - 1.5).powi(2) + y * y).min((x + 1.5).powi(2) + y * y);
        let lines = marching_squares(f, [-3.0, -2.0], [3.0, 2.0], 90, 1.0);
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.closed));
    }

    #[test]
    fn clipped_contour_is_open() {
        let lines = marching_squares(|x, y| x * x + y * y, [0.0, 0.0], [2.0, 2.0], 40, 1.0);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
    }
}
