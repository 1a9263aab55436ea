//! Torus geometry for the plaquette sector.
//!
//! Plaquette `(x, y)` is the face whose lower-left corner is vertex `(x, y)`
//! and has index `y * L + x`. Edge indices put the `L²` horizontal edges first
//! (`h(x, y)` joins vertices `(x, y)` and `(x + 1, y)`, index `y * L + x`),
//! followed by the `L²` vertical edges (`v(x, y)` joins `(x, y)` and
//! `(x, y + 1)`, index `L² + y * L + x`).
//!
//! The logical `Z` string is the row of horizontal edges `h(x, 0)`. It
//! separates plaquette row `L - 1` from row `0`, so an anyon that moves
//! vertically across that boundary toggles the sign of `Z`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    size: usize,
    edge_plaquettes: Vec<[usize; 2]>,
    plaquette_edges: Vec<[usize; 4]>,
    logical_z: Vec<usize>,
    on_logical: Vec<bool>,
}

/// Minimal-image displacement between two plaquettes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Displacement {
    pub dx: i64,
    pub dy: i64,
}

impl Displacement {
    pub fn manhattan(self) -> u64 {
        self.dx.unsigned_abs() + self.dy.unsigned_abs()
    }

    pub fn euclidean<S: Scalar>(self) -> S {
        let dx = S::lit(self.dx as f64);
        let dy = S::lit(self.dy as f64);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Wraps `d` into `(-L/2, L/2]`, so ties at `|d| = L/2` resolve to the positive direction.
fn minimal_image(d: i64, size: i64) -> i64 {
    let mut r = d.rem_euclid(size);
    if 2 * r > size {
        r -= size;
    }
    r
}

impl Lattice {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidSize(size));
        }
        let l = size;
        let n = l * l;
        let mut edge_plaquettes = vec![[0usize; 2]; 2 * n];
        let mut plaquette_edges = vec![[0usize; 4]; n];
        for y in 0..l {
            for x in 0..l {
                let e = y * l + x;
                // h(x, y): below is (x, y - 1), above is (x, y)
                edge_plaquettes[e] = [((y + l - 1) % l) * l + x, y * l + x];
                // v(x, y): left is (x - 1, y), right is (x, y)
                edge_plaquettes[n + e] = [y * l + (x + l - 1) % l, y * l + x];
            }
        }
        for y in 0..l {
            for x in 0..l {
                plaquette_edges[y * l + x] = [
                    y * l + x,
                    ((y + 1) % l) * l + x,
                    n + y * l + x,
                    n + y * l + (x + 1) % l,
                ];
            }
        }
        let logical_z: Vec<usize> = (0..l).collect();
        let mut on_logical = vec![false; 2 * n];
        for &e in &logical_z {
            on_logical[e] = true;
        }
        Ok(Self {
            size,
            edge_plaquettes,
            plaquette_edges,
            logical_z,
            on_logical,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_plaquettes(&self) -> usize {
        self.size * self.size
    }

    pub fn num_edges(&self) -> usize {
        2 * self.size * self.size
    }

    pub fn plaquette(&self, x: usize, y: usize) -> usize {
        (y % self.size) * self.size + (x % self.size)
    }

    pub fn coords(&self, p: usize) -> (usize, usize) {
        (p % self.size, p / self.size)
    }

    /// The two plaquettes bordering `edge`.
    pub fn edge_plaquettes(&self, edge: usize) -> [usize; 2] {
        self.edge_plaquettes[edge]
    }

    /// Bottom, top, left and right edges of plaquette `p`.
    pub fn plaquette_edges(&self, p: usize) -> [usize; 4] {
        self.plaquette_edges[p]
    }

    /// The four edges meeting at vertex `(x, y)`: the support of a star stabilizer.
    pub fn star_edges(&self, x: usize, y: usize) -> [usize; 4] {
        let l = self.size;
        let n = l * l;
        let (xm, ym) = ((x + l - 1) % l, (y + l - 1) % l);
        [y * l + x, y * l + xm, n + y * l + x, n + ym * l + x]
    }

    pub fn is_horizontal(&self, edge: usize) -> bool {
        edge < self.num_plaquettes()
    }

    pub fn logical_z_edges(&self) -> &[usize] {
        &self.logical_z
    }

    pub fn on_logical_z(&self, edge: usize) -> bool {
        self.on_logical[edge]
    }

    pub fn displacement(&self, from: usize, to: usize) -> Displacement {
        let (x0, y0) = self.coords(from);
        let (x1, y1) = self.coords(to);
        let l = self.size as i64;
        Displacement {
            dx: minimal_image(x1 as i64 - x0 as i64, l),
            dy: minimal_image(y1 as i64 - y0 as i64, l),
        }
    }

    pub fn manhattan_distance(&self, p: usize, q: usize) -> u64 {
        self.displacement(p, q).manhattan()
    }

    pub fn euclidean_distance<S: Scalar>(&self, p: usize, q: usize) -> S {
        self.displacement(p, q).euclidean()
    }

    /// Edges whose flips carry an anyon from `from` to `to` along a shortest
    /// minimal-image path: all x steps first, then all y steps.
    pub fn geodesic_path(&self, from: usize, to: usize) -> Vec<usize> {
        self.path_with_order(from, to, true)
    }

    /// Same endpoints and winding as [`Lattice::geodesic_path`], taking the y steps first.
    pub fn geodesic_path_y_first(&self, from: usize, to: usize) -> Vec<usize> {
        self.path_with_order(from, to, false)
    }

    fn path_with_order(&self, from: usize, to: usize, x_first: bool) -> Vec<usize> {
        let d = self.displacement(from, to);
        let (mut x, mut y) = self.coords(from);
        let mut path = Vec::with_capacity(d.manhattan() as usize);
        let l = self.size;
        let n = l * l;
        let walk_x = |x: &mut usize, y: usize, path: &mut Vec<usize>| {
            for _ in 0..d.dx.unsigned_abs() {
                if d.dx > 0 {
                    let nx = (*x + 1) % l;
                    path.push(n + y * l + nx);
                    *x = nx;
                } else {
                    path.push(n + y * l + *x);
                    *x = (*x + l - 1) % l;
                }
            }
        };
        let walk_y = |x: usize, y: &mut usize, path: &mut Vec<usize>| {
            for _ in 0..d.dy.unsigned_abs() {
                if d.dy > 0 {
                    let ny = (*y + 1) % l;
                    path.push(ny * l + x);
                    *y = ny;
                } else {
                    path.push(*y * l + x);
                    *y = (*y + l - 1) % l;
                }
            }
        };
        if x_first {
            walk_x(&mut x, y, &mut path);
            walk_y(x, &mut y, &mut path);
        } else {
            walk_y(x, &mut y, &mut path);
            walk_x(&mut x, y, &mut path);
        }
        path
    }

    /// Number of logical-string edges on a path, mod 2.
    pub fn crossing_parity(&self, path: &[usize]) -> bool {
        path.iter().filter(|&&e| self.on_logical[e]).count() % 2 == 1
    }
}
