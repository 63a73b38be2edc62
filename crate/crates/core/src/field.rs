//! Grid functions with boundary values at the cut-cell crossings.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Grid, Link, Point};

/// A boundary trace evaluated anywhere on the boundary.
pub type Trace = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

pub fn trace(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Trace {
    Arc::new(f)
}

/// Values on interior nodes plus, optionally, values at every boundary
/// hit of the grid (in hit order) and a callable trace.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    boundary: Option<Vec<f64>>,
    trace: Option<Trace>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("nodes", &self.values.len())
            .field("boundary", &self.boundary.as_ref().map(Vec::len))
            .field("trace", &self.trace.is_some())
            .finish()
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidField(format!(
            "{what} value at index {k} is not finite"
        )));
    }
    Ok(())
}

impl ScalarField {
    /// Interior values only; derivatives will fail near the boundary.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values, "interior")?;
        Ok(Self {
            grid,
            values,
            boundary: None,
            trace: None,
        })
    }

    pub fn with_boundary(grid: Arc<Grid>, values: Vec<f64>, boundary: Vec<f64>) -> Result<Self> {
        let mut f = Self::new(grid, values)?;
        f.set_boundary(boundary)?;
        Ok(f)
    }

    /// Samples `f` on nodes and boundary hits and keeps it as the trace.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_trace(grid, trace(f))
    }

    pub fn from_trace(grid: Arc<Grid>, t: Trace) -> Self {
        let values = grid.points().map(|p| t(p)).collect();
        let boundary = grid.hits().iter().map(|h| t(h.point)).collect();
        Self {
            grid,
            values,
            boundary: Some(boundary),
            trace: Some(t),
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        Self::from_fn(grid, move |_| c)
    }

    /// Replaces the boundary data by samples of `t` and keeps `t`.
    pub fn with_trace(mut self, t: Trace) -> Self {
        self.boundary = Some(self.grid.hits().iter().map(|h| t(h.point)).collect());
        self.trace = Some(t);
        self
    }

    pub fn set_boundary(&mut self, boundary: Vec<f64>) -> Result<()> {
        if boundary.len() != self.grid.hits().len() {
            return Err(Error::InvalidField(format!(
                "expected {} boundary values, got {}",
                self.grid.hits().len(),
                boundary.len()
            )));
        }
        check_finite(&boundary, "boundary")?;
        self.boundary = Some(boundary);
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn boundary(&self) -> Option<&[f64]> {
        self.boundary.as_deref()
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    /// Same boundary data, new interior values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut f = Self::new(self.grid.clone(), values)?;
        f.boundary = self.boundary.clone();
        f.trace = self.trace.clone();
        Ok(f)
    }

    /// Value at the end of a stencil arm.
    ///
    /// # Panics
    /// If the link is a boundary hit and the field has no boundary data.
    pub fn link_value(&self, link: Link) -> f64 {
        match link {
            Link::Node(m) => self.values[m],
            Link::Hit(m) => self.boundary.as_ref().expect("boundary data required")[m],
        }
    }

    /// Trace value at a boundary point, falling back to the nearest hit.
    pub fn boundary_value(&self, p: Point) -> Option<f64> {
        if let Some(t) = &self.trace {
            return Some(t(p));
        }
        let b = self.boundary.as_ref()?;
        self.grid
            .hits()
            .iter()
            .zip(b)
            .min_by(|x, y| x.0.point.dist(p).total_cmp(&y.0.point.dist(p)))
            .map(|(_, &v)| v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `max_k |self_k - other_k|`.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Max error against an exact function on the interior nodes.
    pub fn sup_error(&self, exact: impl Fn(Point) -> f64) -> f64 {
        self.grid
            .points()
            .zip(&self.values)
            .fold(0.0_f64, |m, (p, v)| m.max((v - exact(p)).abs()))
    }

    /// Writes `x,y,value` rows with 17 significant digits: interior nodes
    /// first, then boundary hits when present.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "value"])?;
        let mut row = |p: Point, v: f64| out.write_record([fmt17(p.x), fmt17(p.y), fmt17(v)]);
        for (p, &v) in self.grid.points().zip(&self.values) {
            row(p, v)?;
        }
        if let Some(b) = &self.boundary {
            for (hit, &v) in self.grid.hits().iter().zip(b) {
                row(hit.point, v)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a field written by [`ScalarField::write_csv`] onto `grid`.
    /// Every interior node must be present; boundary rows are optional but
    /// must then cover every hit, in order.
    pub fn read_csv<R: Read>(grid: Arc<Grid>, r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut values = vec![f64::NAN; grid.len()];
        let mut extra = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::InvalidField(format!(
                    "expected 3 columns, got {}",
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidField(format!("bad number {s:?}: {e}")))
            };
            let (p, v) = (Point::new(parse(&rec[0])?, parse(&rec[1])?), parse(&rec[2])?);
            match grid.node_at(p) {
                Some(k) => values[k] = v,
                None => extra.push((p, v)),
            }
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::IncompleteData(format!(
                "no value for node {k} at {}",
                grid.point(k)
            )));
        }
        let mut field = Self::new(grid.clone(), values)?;
        if !extra.is_empty() {
            // boundary rows follow hit order; distinct hits may share a point
            let hits = grid.hits();
            if extra.len() != hits.len() {
                return Err(Error::IncompleteData(format!(
                    "expected {} boundary rows, got {}",
                    hits.len(),
                    extra.len()
                )));
            }
            let tol = 1e-9 * grid.h();
            if let Some((hit, _)) = hits.iter().zip(&extra).find(|(h, e)| h.point.dist(e.0) > tol) {
                return Err(Error::IncompleteData(format!(
                    "boundary rows do not match the grid near {}",
                    hit.point
                )));
            }
            field.set_boundary(extra.into_iter().map(|e| e.1).collect())?;
        }
        Ok(field)
    }
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
