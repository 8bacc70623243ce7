//! Embarrassingly parallel value-function sweeps over rectangular grids and
//! zero level-set extraction for two-dimensional slices.
//!
//! Every grid point is an independent point-wise solve sharing one
//! immutable prepared operator stack. Results are written back by index,
//! so the output is bitwise identical for any worker count.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{HopfError, Result};
use crate::problem::{HopfProblem, SolverConfig};
use crate::solver::{prepare, HopfSolution};

/// Axis-aligned rectangular grid, endpoints inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Per-axis `(lo, hi)`.
    pub bounds: Vec<(f64, f64)>,
    /// Per-axis point counts, each at least 2.
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        if bounds.len() != resolution.len() {
            return Err(HopfError::DimensionMismatch(format!(
                "{} bounds for {} resolutions",
                bounds.len(),
                resolution.len()
            )));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(HopfError::InvalidConfig(
                "grid resolution must be at least 2 per axis".into(),
            ));
        }
        if bounds.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(HopfError::InvalidConfig(
                "grid bounds must satisfy lo < hi".into(),
            ));
        }
        Ok(Self { bounds, resolution })
    }

    pub fn axes(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate along one axis.
    pub fn coord(&self, axis: usize, index: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        lo + (hi - lo) * index as f64 / (self.resolution[axis] - 1) as f64
    }

    /// Grid spacing along one axis.
    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.resolution[axis] - 1) as f64
    }

    /// Decompose a flat row-major index (first axis slowest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes()];
        for axis in (0..self.axes()).rev() {
            idx[axis] = flat % self.resolution[axis];
            flat /= self.resolution[axis];
        }
        idx
    }

    /// The state vector at a flat index.
    pub fn point(&self, flat: usize) -> DVector<f64> {
        let idx = self.multi_index(flat);
        DVector::from_fn(self.axes(), |axis, _| self.coord(axis, idx[axis]))
    }
}

/// Value function sampled over a grid at one horizon.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub spec: GridSpec,
    pub horizon: f64,
    /// Row-major values, first axis slowest.
    pub values: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Aggregate wall time of the point solves (not byte-stable).
    pub total_solve_ms: f64,
}

impl ValueField {
    pub fn mean_solve_ms(&self) -> f64 {
        self.total_solve_ms / self.values.len() as f64
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn value_at(&self, indices: &[usize]) -> f64 {
        let mut flat = 0;
        for (axis, &i) in indices.iter().enumerate() {
            flat = flat * self.spec.resolution[axis] + i;
        }
        self.values[flat]
    }

    /// CSV with `# key: value` metadata lines, then coordinate/value rows.
    /// Wall-time aggregates are deliberately left out so identical runs
    /// produce identical bytes.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (axis, (lo, hi)) in self.spec.bounds.iter().enumerate() {
            writeln!(
                out,
                "# axis{}: lo={} hi={} resolution={}",
                axis + 1,
                lo,
                hi,
                self.spec.resolution[axis]
            )?;
        }
        writeln!(out, "# horizon: {}", self.horizon)?;
        writeln!(out, "# ordering: row-major, first axis slowest")?;
        let coords: Vec<String> = (1..=self.spec.axes()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},value,converged,iterations", coords.join(","))?;
        for flat in 0..self.values.len() {
            let p = self.spec.point(flat);
            let coords: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            writeln!(
                out,
                "{},{},{},{}",
                coords.join(","),
                self.values[flat],
                self.converged[flat],
                self.iterations[flat]
            )?;
        }
        Ok(())
    }
}

/// Solve the value function at every grid point.
///
/// Non-convergent points land in the `converged` mask without aborting the
/// sweep. With `workers = Some(w)` the sweep runs on a private thread pool
/// of that size; the numbers produced do not depend on the choice.
pub fn solve_grid(
    problem: &HopfProblem,
    horizon: f64,
    spec: &GridSpec,
    config: &SolverConfig,
    workers: Option<usize>,
) -> Result<ValueField> {
    if spec.axes() != problem.state_dim() {
        return Err(HopfError::DimensionMismatch(format!(
            "grid has {} axes but the state dimension is {}",
            spec.axes(),
            problem.state_dim()
        )));
    }
    let prepared = prepare(problem, horizon)?;

    let run = || -> Result<Vec<(HopfSolution, f64)>> {
        (0..spec.len())
            .into_par_iter()
            .map(|flat| {
                let z0 = spec.point(flat);
                let start = Instant::now();
                let sol = prepared.solve(&z0, config, None)?;
                Ok((sol, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect()
    };

    let solutions = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| HopfError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }?;

    let mut values = Vec::with_capacity(solutions.len());
    let mut converged = Vec::with_capacity(solutions.len());
    let mut iterations = Vec::with_capacity(solutions.len());
    let mut total_solve_ms = 0.0;
    for (sol, ms) in solutions {
        values.push(sol.value);
        converged.push(sol.converged);
        iterations.push(sol.iterations);
        total_solve_ms += ms;
    }

    Ok(ValueField {
        spec: spec.clone(),
        horizon,
        values,
        converged,
        iterations,
        total_solve_ms,
    })
}

/// Marching-squares extraction of the zero isoline of a 2-D field.
///
/// Crossings are interpolated linearly along cell edges and computed once
/// per edge, so shared vertices are bitwise identical and segments stitch
/// into polylines exactly. Saddle cells are disambiguated by the sign of
/// the cell average. Closed loops repeat their first vertex at the end.
pub fn zero_contour(field: &ValueField) -> Result<Vec<Vec<[f64; 2]>>> {
    if field.spec.axes() != 2 {
        return Err(HopfError::NotTwoDimensional(field.spec.axes()));
    }
    let r0 = field.spec.resolution[0];
    let r1 = field.spec.resolution[1];
    let value = |i: usize, j: usize| field.values[i * r1 + j];
    let coord = |i: usize, j: usize| [field.spec.coord(0, i), field.spec.coord(1, j)];
    let inside = |v: f64| v < 0.0;

    // Crossing points per edge, keyed canonically by the lower corner.
    let cross = |a: [f64; 2], va: f64, b: [f64; 2], vb: f64| -> [f64; 2] {
        let t = va / (va - vb);
        // Snap endpoint hits to the node coordinates so crossings shared by
        // neighboring cells stay bitwise identical.
        if t <= 0.0 {
            a
        } else if t >= 1.0 {
            b
        } else {
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        }
    };
    let mut edge0: Vec<Option<[f64; 2]>> = vec![None; (r0 - 1) * r1]; // along axis 0
    let mut edge1: Vec<Option<[f64; 2]>> = vec![None; r0 * (r1 - 1)]; // along axis 1
    for i in 0..r0 - 1 {
        for j in 0..r1 {
            let (va, vb) = (value(i, j), value(i + 1, j));
            if inside(va) != inside(vb) {
                edge0[i * r1 + j] = Some(cross(coord(i, j), va, coord(i + 1, j), vb));
            }
        }
    }
    for i in 0..r0 {
        for j in 0..r1 - 1 {
            let (va, vb) = (value(i, j), value(i, j + 1));
            if inside(va) != inside(vb) {
                edge1[i * (r1 - 1) + j] = Some(cross(coord(i, j), va, coord(i, j + 1), vb));
            }
        }
    }

    let mut segments: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for i in 0..r0 - 1 {
        for j in 0..r1 - 1 {
            // Corners a=(i,j), b=(i+1,j), c=(i+1,j+1), d=(i,j+1);
            // edges ab, bc, cd, da in that order.
            let (va, vb, vc, vd) = (value(i, j), value(i + 1, j), value(i + 1, j + 1), value(i, j + 1));
            let case = (inside(va) as u8)
                | (inside(vb) as u8) << 1
                | (inside(vc) as u8) << 2
                | (inside(vd) as u8) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let ab = edge0[i * r1 + j];
            let bc = edge1[(i + 1) * (r1 - 1) + j];
            let cd = edge0[i * r1 + (j + 1)];
            let da = edge1[i * (r1 - 1) + j];
            let mut push = |p: Option<[f64; 2]>, q: Option<[f64; 2]>| {
                let (p, q) = (p.expect("crossing exists"), q.expect("crossing exists"));
                // A cell whose isoline touches a single node produces a
                // zero-length segment; it carries no geometry.
                if point_key(p) != point_key(q) {
                    segments.push((p, q));
                }
            };
            match case {
                1 | 14 => push(da, ab),
                2 | 13 => push(ab, bc),
                3 | 12 => push(da, bc),
                4 | 11 => push(bc, cd),
                6 | 9 => push(ab, cd),
                7 | 8 => push(da, cd),
                5 => {
                    // Saddle (a, c inside): cell average picks the topology.
                    if inside((va + vb + vc + vd) / 4.0) {
                        push(ab, bc);
                        push(cd, da);
                    } else {
                        push(da, ab);
                        push(bc, cd);
                    }
                }
                10 => {
                    if inside((va + vb + vc + vd) / 4.0) {
                        push(da, ab);
                        push(bc, cd);
                    } else {
                        push(ab, bc);
                        push(cd, da);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    Ok(stitch_segments(segments))
}

fn point_key(p: [f64; 2]) -> (u64, u64) {
    (p[0].to_bits(), p[1].to_bits())
}

/// Chain raw segments into polylines by exact endpoint matching.
fn stitch_segments(segments: Vec<([f64; 2], [f64; 2])>) -> Vec<Vec<[f64; 2]>> {
    use std::collections::HashMap;
    let mut adjacency: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(point_key(*a)).or_default().push(idx);
        adjacency.entry(point_key(*b)).or_default().push(idx);
    }

    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut line = std::collections::VecDeque::from([a, b]);

        // Extend forward from the tail, then backward from the head.
        for forward in [true, false] {
            loop {
                let tip = if forward {
                    *line.back().unwrap()
                } else {
                    *line.front().unwrap()
                };
                let Some(candidates) = adjacency.get(&point_key(tip)) else {
                    break;
                };
                let next = candidates.iter().copied().find(|&s| !used[s]);
                let Some(seg) = next else { break };
                used[seg] = true;
                let (p, q) = segments[seg];
                let other = if point_key(p) == point_key(tip) { q } else { p };
                if forward {
                    line.push_back(other);
                } else {
                    line.push_front(other);
                }
            }
        }
        polylines.push(line.into_iter().collect());
    }
    polylines
}

/// Write polylines as `polyline,vertex,x1,x2` rows.
pub fn write_contours_csv<W: std::io::Write>(
    contours: &[Vec<[f64; 2]>],
    horizon: f64,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "# horizon: {horizon}")?;
    writeln!(out, "polyline,vertex,x1,x2")?;
    for (pi, line) in contours.iter().enumerate() {
        for (vi, p) in line.iter().enumerate() {
            writeln!(out, "{pi},{vi},{},{}", p[0], p[1])?;
        }
    }
    Ok(())
}
