//! 2-D parallel-beam geometry and the sparse system matrix.
//!
//! Rays are traced through the pixel grid Siddon-style (parametric traversal
//! of grid crossings), so each nonzero `h_ij` is the exact length of the
//! intersection between ray `i` and pixel `j`, in mm. The matrix is stored
//! row-compressed; rows are rays, columns are pixels.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::image::ImageVolume;
use crate::math;
use crate::par::map_indexed;

/// Segments shorter than `pixel_size * SEGMENT_EPS_REL` are dropped during
/// traversal; they arise when a ray passes through (or within float noise of)
/// a grid corner.
const SEGMENT_EPS_REL: f64 = 1e-12;

/// Direction components below this magnitude are treated as axis-parallel.
const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectorError {
    InvalidGeometry(&'static str),
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    RayIndexOutOfBounds {
        index: usize,
        n_rays: usize,
    },
    AllZeroMatrix,
    InvalidMatrix(&'static str),
    InvalidPartition(&'static str),
    TooManySubsets {
        requested: usize,
        n_views: usize,
    },
}

impl fmt::Display for ProjectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectorError::InvalidGeometry(msg) => write!(f, "invalid geometry: {msg}"),
            ProjectorError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, got {got}"),
            ProjectorError::RayIndexOutOfBounds { index, n_rays } => {
                write!(f, "ray index {index} out of bounds (matrix has {n_rays} rays)")
            }
            ProjectorError::AllZeroMatrix => {
                write!(f, "system matrix has no nonzero row; Z is undefined")
            }
            ProjectorError::InvalidMatrix(msg) => write!(f, "invalid system matrix: {msg}"),
            ProjectorError::InvalidPartition(msg) => write!(f, "invalid partition: {msg}"),
            ProjectorError::TooManySubsets { requested, n_views } => write!(
                f,
                "cannot split {n_views} views into {requested} subsets (need n_subsets <= n_views)"
            ),
        }
    }
}

impl core::error::Error for ProjectorError {}

/// 2-D parallel-beam scan description.
///
/// View angles are implied: `n_views` angles uniformly spaced over `[0, pi)`.
/// Detector bins are centered on the rotation axis with `det_spacing` pitch;
/// the image is centered on the origin with `pixel_size` square pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Pixel edge length, mm.
    pub pixel_size: f64,
    pub n_views: usize,
    pub n_dets: usize,
    /// Detector bin pitch, mm.
    pub det_spacing: f64,
}

impl Geometry {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        pixel_size: f64,
        n_views: usize,
        n_dets: usize,
        det_spacing: f64,
    ) -> Result<Self, ProjectorError> {
        if n_rows < 1 || n_cols < 1 || n_views < 1 || n_dets < 1 {
            return Err(ProjectorError::InvalidGeometry("all counts must be >= 1"));
        }
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(ProjectorError::InvalidGeometry("pixel_size must be > 0"));
        }
        if !(det_spacing > 0.0) || !det_spacing.is_finite() {
            return Err(ProjectorError::InvalidGeometry("det_spacing must be > 0"));
        }
        Ok(Geometry {
            n_rows,
            n_cols,
            pixel_size,
            n_views,
            n_dets,
            det_spacing,
        })
    }

    pub fn n_rays(&self) -> usize {
        self.n_views * self.n_dets
    }

    pub fn n_voxels(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Angle of view `v`, radians in `[0, pi)`.
    pub fn view_angle(&self, view: usize) -> f64 {
        view as f64 * core::f64::consts::PI / self.n_views as f64
    }

    /// Signed lateral offset of detector bin `t` from the rotation axis, mm.
    pub fn det_offset(&self, det: usize) -> f64 {
        (det as f64 - (self.n_dets as f64 - 1.0) / 2.0) * self.det_spacing
    }

    pub fn image_width(&self) -> f64 {
        self.n_cols as f64 * self.pixel_size
    }

    pub fn image_height(&self) -> f64 {
        self.n_rows as f64 * self.pixel_size
    }

    /// Whether the detector array spans the image at every view, i.e. the
    /// outermost ray offsets reach the image half-diagonal. When false, some
    /// rays miss the image (their matrix rows are legitimately empty) or the
    /// object is laterally truncated; callers may want to warn.
    pub fn detector_covers_image(&self) -> bool {
        let w = self.image_width();
        let h = self.image_height();
        let half_diag = math::sqrt(w * w + h * h) / 2.0;
        let max_offset = (self.n_dets as f64 - 1.0) / 2.0 * self.det_spacing;
        max_offset + 0.5 * self.det_spacing >= half_diag
    }

    /// Ray origin point and unit direction for ray index `i = view * n_dets + det`.
    fn ray_line(&self, ray: usize) -> ([f64; 2], [f64; 2]) {
        let view = ray / self.n_dets;
        let det = ray % self.n_dets;
        let theta = self.view_angle(view);
        let (sin_t, cos_t) = (math::sin(theta), math::cos(theta));
        let offset = self.det_offset(det);
        // Detector axis is perpendicular to the ray direction (cos, sin).
        ([-sin_t * offset, cos_t * offset], [cos_t, sin_t])
    }
}

/// Row-compressed nonnegative system matrix: one row per ray, entries are
/// ray/pixel intersection lengths in mm.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystemMatrix {
    m: usize,
    n: usize,
    row_offsets: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseSystemMatrix {
    /// Traces every ray of `geom` through the pixel grid.
    ///
    /// Rays that miss the image get empty rows and are retained so that the
    /// row count always equals `geom.n_rays()`.
    pub fn build(geom: &Geometry) -> Self {
        let rows = map_indexed(geom.n_rays(), |i| trace_ray(geom, i));
        Self::assemble(geom.n_rays(), geom.n_voxels(), rows)
    }

    /// Builds from explicit per-row entry lists, validating indices, signs,
    /// and duplicate columns. Used by tests and the cache-file loader.
    pub fn from_rows(
        m: usize,
        n: usize,
        rows: Vec<Vec<(u32, f64)>>,
    ) -> Result<Self, ProjectorError> {
        if rows.len() != m {
            return Err(ProjectorError::DimensionMismatch {
                what: "row count",
                expected: m,
                got: rows.len(),
            });
        }
        let mut seen = vec![usize::MAX; n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                if (j as usize) >= n {
                    return Err(ProjectorError::InvalidMatrix("column index out of range"));
                }
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(ProjectorError::InvalidMatrix(
                        "intersection lengths must be finite and >= 0",
                    ));
                }
                if seen[j as usize] == i {
                    return Err(ProjectorError::InvalidMatrix("duplicate column in row"));
                }
                seen[j as usize] = i;
            }
        }
        Ok(Self::assemble(m, n, rows))
    }

    fn assemble(m: usize, n: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut row_offsets = Vec::with_capacity(m + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_offsets.push(col_idx.len());
        }
        SparseSystemMatrix {
            m,
            n,
            row_offsets,
            col_idx,
            values,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let (_, vals) = self.row(i);
        let mut s = 0.0;
        for &v in vals {
            s += v;
        }
        s
    }

    /// The Jensen normalizer `Z = max_i sum_j h_ij`.
    ///
    /// Computed once from the full matrix; the subset schemes share this
    /// value. Errors if every row is empty or zero.
    pub fn max_row_sum(&self) -> Result<f64, ProjectorError> {
        let mut z = 0.0;
        for i in 0..self.m {
            let s = self.row_sum(i);
            if s > z {
                z = s;
            }
        }
        if z > 0.0 {
            Ok(z)
        } else {
            Err(ProjectorError::AllZeroMatrix)
        }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        let mut acc = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            acc += v * x[j as usize];
        }
        acc
    }

    fn check_x(&self, x: &[f64]) -> Result<(), ProjectorError> {
        if x.len() != self.n {
            return Err(ProjectorError::DimensionMismatch {
                what: "image length",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Line integrals `l_i = sum_j h_ij x_j` for all rays.
    pub fn forward_project(&self, x: &[f64]) -> Result<Vec<f64>, ProjectorError> {
        self.check_x(x)?;
        Ok(map_indexed(self.m, |i| self.row_dot(i, x)))
    }

    /// Line integrals for the listed rays only, in list order.
    pub fn forward_project_rays(
        &self,
        rays: &[u32],
        x: &[f64],
    ) -> Result<Vec<f64>, ProjectorError> {
        self.check_x(x)?;
        self.check_rays(rays)?;
        Ok(map_indexed(rays.len(), |idx| {
            self.row_dot(rays[idx] as usize, x)
        }))
    }

    pub fn forward_project_image(&self, x: &ImageVolume) -> Result<Vec<f64>, ProjectorError> {
        self.forward_project(x.data())
    }

    fn check_rays(&self, rays: &[u32]) -> Result<(), ProjectorError> {
        for &r in rays {
            if (r as usize) >= self.m {
                return Err(ProjectorError::RayIndexOutOfBounds {
                    index: r as usize,
                    n_rays: self.m,
                });
            }
        }
        Ok(())
    }

    /// Adjoint action `(H^T w)_j = sum_i w_i h_ij` over all rays.
    ///
    /// Accumulation is sequential in ray order, so the result is independent
    /// of thread count.
    pub fn back_project(&self, w: &[f64]) -> Result<Vec<f64>, ProjectorError> {
        if w.len() != self.m {
            return Err(ProjectorError::DimensionMismatch {
                what: "weight length",
                expected: self.m,
                got: w.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for i in 0..self.m {
            self.accumulate_row(i, w[i], &mut out);
        }
        Ok(out)
    }

    /// Adjoint action restricted to `rays`; `w[idx]` weights ray `rays[idx]`.
    pub fn back_project_rays(&self, rays: &[u32], w: &[f64]) -> Result<Vec<f64>, ProjectorError> {
        if w.len() != rays.len() {
            return Err(ProjectorError::DimensionMismatch {
                what: "subset weight length",
                expected: rays.len(),
                got: w.len(),
            });
        }
        self.check_rays(rays)?;
        let mut out = vec![0.0; self.n];
        for (idx, &ray) in rays.iter().enumerate() {
            self.accumulate_row(ray as usize, w[idx], &mut out);
        }
        Ok(out)
    }

    #[inline]
    fn accumulate_row(&self, i: usize, w: f64, out: &mut [f64]) {
        let (cols, vals) = self.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            out[j as usize] += w * v;
        }
    }
}

/// Entry/exit parameters of the line `p + t d` against `[lo0,hi0] x [lo1,hi1]`.
/// Returns `None` when the line misses the box.
fn clip_to_box(
    p: [f64; 2],
    d: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
) -> Option<(f64, f64)> {
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for axis in 0..2 {
        if math::abs(d[axis]) < PARALLEL_EPS {
            if p[axis] < lo[axis] || p[axis] > hi[axis] {
                return None;
            }
        } else {
            let ta = (lo[axis] - p[axis]) / d[axis];
            let tb = (hi[axis] - p[axis]) / d[axis];
            let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            if ta > t_min {
                t_min = ta;
            }
            if tb < t_max {
                t_max = tb;
            }
        }
    }
    if t_min < t_max {
        Some((t_min, t_max))
    } else {
        None
    }
}

/// Exact intersection lengths of one ray with every pixel it crosses.
///
/// Grid-crossing parameters along each axis are generated in ascending order,
/// merged, and each resulting segment is binned to the pixel containing its
/// midpoint. Corner hits produce near-zero segments which are dropped.
fn trace_ray(geom: &Geometry, ray: usize) -> Vec<(u32, f64)> {
    let (p, d) = geom.ray_line(ray);
    let s = geom.pixel_size;
    let x0 = -geom.image_width() / 2.0;
    let y0 = -geom.image_height() / 2.0;
    let lo = [x0, y0];
    let hi = [x0 + geom.image_width(), y0 + geom.image_height()];

    let (t_enter, t_exit) = match clip_to_box(p, d, lo, hi) {
        Some(span) => span,
        None => return Vec::new(),
    };

    let crossings_x = axis_crossings(p[0], d[0], x0, geom.n_cols, s, t_enter, t_exit);
    let crossings_y = axis_crossings(p[1], d[1], y0, geom.n_rows, s, t_enter, t_exit);

    // Merge the two ascending crossing lists between the entry/exit params.
    let mut ts = Vec::with_capacity(crossings_x.len() + crossings_y.len() + 2);
    ts.push(t_enter);
    let (mut ix, mut iy) = (0, 0);
    while ix < crossings_x.len() || iy < crossings_y.len() {
        let next = match (crossings_x.get(ix), crossings_y.get(iy)) {
            (Some(&tx), Some(&ty)) => {
                if tx <= ty {
                    ix += 1;
                    tx
                } else {
                    iy += 1;
                    ty
                }
            }
            (Some(&tx), None) => {
                ix += 1;
                tx
            }
            (None, Some(&ty)) => {
                iy += 1;
                ty
            }
            (None, None) => unreachable!(),
        };
        ts.push(next);
    }
    ts.push(t_exit);

    let eps_len = s * SEGMENT_EPS_REL;
    let mut row: Vec<(u32, f64)> = Vec::new();
    for pair in ts.windows(2) {
        let (ta, tb) = (pair[0], pair[1]);
        let len = tb - ta;
        if len <= eps_len {
            continue;
        }
        let tm = 0.5 * (ta + tb);
        let col = bin_index(p[0] + tm * d[0], x0, s, geom.n_cols);
        let rowi = bin_index(p[1] + tm * d[1], y0, s, geom.n_rows);
        let j = (rowi * geom.n_cols + col) as u32;
        match row.last_mut() {
            Some(last) if last.0 == j => last.1 += len,
            _ => row.push((j, len)),
        }
    }
    row
}

/// Ascending parameters at which the ray crosses interior grid lines of one
/// axis, restricted to the open interval `(t_enter, t_exit)`.
fn axis_crossings(
    p: f64,
    d: f64,
    origin: f64,
    n_cells: usize,
    cell: f64,
    t_enter: f64,
    t_exit: f64,
) -> Vec<f64> {
    if math::abs(d) < PARALLEL_EPS {
        return Vec::new();
    }
    let mut ts = Vec::with_capacity(n_cells.saturating_sub(1));
    for k in 1..n_cells {
        let t = (origin + k as f64 * cell - p) / d;
        if t > t_enter && t < t_exit {
            ts.push(t);
        }
    }
    if d < 0.0 {
        ts.reverse();
    }
    ts
}

fn bin_index(coord: f64, origin: f64, cell: f64, n_cells: usize) -> usize {
    let raw = math::floor((coord - origin) / cell);
    let idx = if raw < 0.0 { 0_usize } else { raw as usize };
    idx.min(n_cells - 1)
}

/// Disjoint cover of the ray indices into `n_subsets` view-interleaved
/// subsets, with the per-subset back projections of the measured counts
/// (`b^k_j = sum_{i in subset k} d_i h_ij`) precomputed.
#[derive(Clone, Debug)]
pub struct SubsetPartition {
    subsets: Vec<Vec<u32>>,
    per_subset_backprojection: Vec<Vec<f64>>,
}

impl SubsetPartition {
    /// Validates that `subsets` are pairwise disjoint and cover `0..m`
    /// exactly, then precomputes the per-subset back projections of `d`.
    pub fn from_ray_sets(
        subsets: Vec<Vec<u32>>,
        matrix: &SparseSystemMatrix,
        d: &[f64],
    ) -> Result<Self, ProjectorError> {
        if subsets.is_empty() {
            return Err(ProjectorError::InvalidPartition("no subsets"));
        }
        if d.len() != matrix.m() {
            return Err(ProjectorError::DimensionMismatch {
                what: "measured counts length",
                expected: matrix.m(),
                got: d.len(),
            });
        }
        let mut seen = vec![false; matrix.m()];
        for subset in &subsets {
            for &r in subset {
                let r = r as usize;
                if r >= matrix.m() {
                    return Err(ProjectorError::RayIndexOutOfBounds {
                        index: r,
                        n_rays: matrix.m(),
                    });
                }
                if seen[r] {
                    return Err(ProjectorError::InvalidPartition(
                        "subsets are not pairwise disjoint",
                    ));
                }
                seen[r] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(ProjectorError::InvalidPartition(
                "subsets do not cover every ray",
            ));
        }
        let per_subset_backprojection = subsets
            .iter()
            .map(|rays| {
                let w: Vec<f64> = rays.iter().map(|&i| d[i as usize]).collect();
                matrix.back_project_rays(rays, &w)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SubsetPartition {
            subsets,
            per_subset_backprojection,
        })
    }

    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn rays(&self, k: usize) -> &[u32] {
        &self.subsets[k]
    }

    pub fn backprojection(&self, k: usize) -> &[f64] {
        &self.per_subset_backprojection[k]
    }
}

/// Splits rays into `n_subsets` by view interleaving: view `v` (all of its
/// detector bins, in order) goes to subset `v mod n_subsets`. Interleaving
/// keeps every subset spread over the angular range.
pub fn partition_rays(
    geom: &Geometry,
    matrix: &SparseSystemMatrix,
    d: &[f64],
    n_subsets: usize,
) -> Result<SubsetPartition, ProjectorError> {
    if n_subsets == 0 || n_subsets > geom.n_views {
        return Err(ProjectorError::TooManySubsets {
            requested: n_subsets,
            n_views: geom.n_views,
        });
    }
    if matrix.m() != geom.n_rays() {
        return Err(ProjectorError::DimensionMismatch {
            what: "matrix row count",
            expected: geom.n_rays(),
            got: matrix.m(),
        });
    }
    let mut subsets = vec![Vec::new(); n_subsets];
    for view in 0..geom.n_views {
        let k = view % n_subsets;
        for det in 0..geom.n_dets {
            subsets[k].push((view * geom.n_dets + det) as u32);
        }
    }
    SubsetPartition::from_ray_sets(subsets, matrix, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, u01};

    fn single_ray_geom(n_rows: usize, n_cols: usize, pixel: f64) -> Geometry {
        // One view at angle 0 (ray direction +x), one detector bin through
        // the center.
        Geometry::new(n_rows, n_cols, pixel, 1, 1, pixel).unwrap()
    }

    #[test]
    fn single_pixel_axis_aligned_chord() {
        let geom = single_ray_geom(1, 1, 2.5);
        let h = SparseSystemMatrix::build(&geom);
        let (cols, vals) = h.row(0);
        assert_eq!(cols, &[0]);
        assert!((vals[0] - 2.5).abs() < 1e-12, "chord = pixel width");
    }

    #[test]
    fn horizontal_ray_through_row_of_four() {
        let s = 1.75;
        let geom = single_ray_geom(1, 4, s);
        let h = SparseSystemMatrix::build(&geom);
        let (cols, vals) = h.row(0);
        assert_eq!(cols, &[0, 1, 2, 3]);
        for &v in vals {
            assert!((v - s).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_ray_through_two_by_two() {
        // 4 views over [0, pi): view 1 is exactly 45 degrees; the center ray
        // runs along the grid diagonal through the shared corner.
        let s = 1.0;
        let geom = Geometry::new(2, 2, s, 4, 1, s).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let ray = geom.n_dets; // view 1, det 0
        let (cols, vals) = h.row(ray);
        let total: f64 = vals.iter().sum();
        let diag = 2.0 * s * core::f64::consts::SQRT_2;
        assert!(
            (total - diag).abs() < 1e-9,
            "total {total} vs analytic {diag}"
        );
        // The two diagonal pixels carry essentially everything.
        let mut by_pixel = [0.0f64; 4];
        for (&j, &v) in cols.iter().zip(vals) {
            by_pixel[j as usize] += v;
        }
        let per = s * core::f64::consts::SQRT_2;
        let diag_sum = by_pixel[0] + by_pixel[3];
        let off_sum = by_pixel[1] + by_pixel[2];
        let (diag_sum, off_sum) = if diag_sum >= off_sum {
            (diag_sum, off_sum)
        } else {
            (off_sum, diag_sum)
        };
        assert!(off_sum < 1e-9, "off-diagonal leakage {off_sum}");
        assert!((diag_sum / 2.0 - per).abs() < 1e-9);
    }

    /// Analytic chord length of a ray through the image rectangle
    /// (independent of the traversal code).
    fn analytic_chord(geom: &Geometry, ray: usize) -> f64 {
        let (p, d) = geom.ray_line(ray);
        let lo = [-geom.image_width() / 2.0, -geom.image_height() / 2.0];
        let hi = [geom.image_width() / 2.0, geom.image_height() / 2.0];
        match clip_to_box(p, d, lo, hi) {
            Some((t0, t1)) => t1 - t0,
            None => 0.0,
        }
    }

    #[test]
    fn row_sums_match_analytic_chords() {
        let geom = Geometry::new(13, 17, 0.8, 19, 31, 0.7).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        for i in 0..geom.n_rays() {
            let chord = analytic_chord(&geom, i);
            let sum = h.row_sum(i);
            assert!(
                (sum - chord).abs() < 1e-9,
                "ray {i}: row sum {sum} vs chord {chord}"
            );
        }
    }

    #[test]
    fn forward_project_trivial_and_dense_oracle() {
        let h = SparseSystemMatrix::from_rows(1, 1, vec![vec![(0, 2.0)]]).unwrap();
        assert_eq!(h.forward_project(&[0.5]).unwrap(), vec![1.0]);
        assert_eq!(h.forward_project(&[0.0]).unwrap(), vec![0.0]);

        // random 6x4 sparse-ish matrix against a dense multiply
        let mut rng = stream_rng(11, 0);
        let (m, n) = (6, 4);
        let mut rows = Vec::new();
        let mut dense = vec![vec![0.0; n]; m];
        for i in 0..m {
            let mut row = Vec::new();
            for j in 0..n {
                if u01(&mut rng) < 0.7 {
                    let v = u01(&mut rng) * 3.0;
                    row.push((j as u32, v));
                    dense[i][j] = v;
                }
            }
            rows.push(row);
        }
        let h = SparseSystemMatrix::from_rows(m, n, rows).unwrap();
        let x: Vec<f64> = (0..n).map(|_| u01(&mut rng)).collect();
        let l = h.forward_project(&x).unwrap();
        for i in 0..m {
            let want: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            let scale = want.abs().max(1e-30);
            assert!((l[i] - want).abs() / scale < 1e-12);
        }
    }

    #[test]
    fn back_project_zero_and_adjoint_identity() {
        let geom = Geometry::new(8, 8, 1.0, 12, 12, 1.0).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let zeros = h.back_project(&vec![0.0; h.m()]).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));

        let mut rng = stream_rng(5, 1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..h.n()).map(|_| u01(&mut rng) - 0.3).collect();
            let w: Vec<f64> = (0..h.m()).map(|_| u01(&mut rng) - 0.3).collect();
            let hx = h.forward_project(&x).unwrap();
            let htw = h.back_project(&w).unwrap();
            let lhs: f64 = hx.iter().zip(&w).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&htw).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(
                (lhs - rhs).abs() / scale < 1e-10,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn max_row_sum_examples() {
        let h = SparseSystemMatrix::from_rows(
            3,
            2,
            vec![vec![(0, 1.0)], vec![(0, 1.5), (1, 2.0)], vec![(1, 2.0)]],
        )
        .unwrap();
        assert_eq!(h.max_row_sum().unwrap(), 3.5);

        let single = SparseSystemMatrix::from_rows(1, 2, vec![vec![(0, 2.0), (1, 3.0)]]).unwrap();
        assert_eq!(single.max_row_sum().unwrap(), 5.0);

        let ident = SparseSystemMatrix::from_rows(2, 2, vec![vec![(0, 1.0)], vec![(1, 1.0)]])
            .unwrap();
        assert_eq!(ident.max_row_sum().unwrap(), 1.0);

        let zero = SparseSystemMatrix::from_rows(2, 2, vec![vec![], vec![(0, 0.0)]]).unwrap();
        assert_eq!(zero.max_row_sum(), Err(ProjectorError::AllZeroMatrix));
    }

    #[test]
    fn row_sums_bounded_by_z_and_attained() {
        let geom = Geometry::new(10, 10, 1.0, 9, 15, 1.0).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let z = h.max_row_sum().unwrap();
        let mut attained = false;
        for i in 0..h.m() {
            let s = h.row_sum(i);
            assert!(s <= z);
            if s == z {
                attained = true;
            }
        }
        assert!(attained, "no row attains Z exactly");
    }

    #[test]
    fn partition_interleaves_views() {
        let geom = Geometry::new(4, 4, 1.0, 8, 3, 1.5).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let d = vec![1.0; h.m()];
        let p = partition_rays(&geom, &h, &d, 4).unwrap();
        assert_eq!(p.n_subsets(), 4);
        for (k, expect_views) in [(0, [0, 4]), (1, [1, 5]), (2, [2, 6]), (3, [3, 7])] {
            let views: Vec<usize> = p.rays(k).iter().map(|&r| r as usize / 3).collect();
            assert_eq!(views, vec![expect_views[0]; 3]
                .into_iter()
                .chain(vec![expect_views[1]; 3])
                .collect::<Vec<_>>());
        }
    }

    #[test]
    fn single_subset_partition_equals_full_backprojection() {
        let geom = Geometry::new(5, 6, 1.0, 4, 9, 1.0).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let mut rng = stream_rng(2, 2);
        let d: Vec<f64> = (0..h.m()).map(|_| u01(&mut rng) * 10.0).collect();
        let p = partition_rays(&geom, &h, &d, 1).unwrap();
        let full = h.back_project(&d).unwrap();
        assert_eq!(p.backprojection(0), full.as_slice());
    }

    #[test]
    fn subset_backprojections_sum_to_full() {
        let geom = Geometry::new(7, 7, 1.0, 10, 11, 1.0).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let mut rng = stream_rng(9, 0);
        let d: Vec<f64> = (0..h.m()).map(|_| u01(&mut rng) * 100.0).collect();
        let full = h.back_project(&d).unwrap();
        for b in [2, 3, 5, 10] {
            let p = partition_rays(&geom, &h, &d, b).unwrap();
            for j in 0..h.n() {
                let sum: f64 = (0..b).map(|k| p.backprojection(k)[j]).sum();
                let scale = full[j].abs().max(1e-12);
                assert!(
                    (sum - full[j]).abs() / scale < 1e-9,
                    "voxel {j}: subset sum {sum} vs full {full:?}",
                    full = full[j]
                );
            }
        }
    }

    #[test]
    fn partition_rejects_bad_subset_counts() {
        let geom = Geometry::new(2, 2, 1.0, 4, 2, 1.0).unwrap();
        let h = SparseSystemMatrix::build(&geom);
        let d = vec![0.0; h.m()];
        assert!(matches!(
            partition_rays(&geom, &h, &d, 5),
            Err(ProjectorError::TooManySubsets { .. })
        ));
        assert!(matches!(
            partition_rays(&geom, &h, &d, 0),
            Err(ProjectorError::TooManySubsets { .. })
        ));
    }

    #[test]
    fn dimension_and_bounds_errors() {
        let h = SparseSystemMatrix::from_rows(2, 3, vec![vec![(0, 1.0)], vec![(2, 1.0)]]).unwrap();
        assert!(h.forward_project(&[0.0; 2]).is_err());
        assert!(h.back_project(&[0.0; 3]).is_err());
        assert!(h.back_project_rays(&[7], &[1.0]).is_err());
        assert!(h.forward_project_rays(&[0, 9], &[0.0; 3]).is_err());
    }

    #[test]
    fn coverage_predicate() {
        // 95 mm detector span vs 90.5 mm image diagonal: covered.
        let covered = Geometry::new(64, 64, 1.0, 90, 96, 1.0).unwrap();
        assert!(covered.detector_covers_image());
        let truncated = Geometry::new(64, 64, 1.0, 90, 40, 1.0).unwrap();
        assert!(!truncated.detector_covers_image());
    }
}
