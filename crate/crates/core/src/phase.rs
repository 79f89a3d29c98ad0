//! Phase-space state and the event-log representation of a piecewise linear path.
//!
//! Between events the flow is `dx/dt = v`, `dv/dt = 0`, so a start point plus
//! the ordered list of velocity changes reconstructs the path exactly.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::vecops::{all_finite, dot};

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("event time {t} is not after the previous time {prev}")]
    NonIncreasingTime { t: f64, prev: f64 },
    #[error("position discontinuity at t={t}: coordinate {coord} is {got}, flow predicts {expected}")]
    Discontinuity {
        t: f64,
        coord: usize,
        got: f64,
        expected: f64,
    },
    #[error("coordinate {0} is not recorded in this trajectory")]
    UnrecordedCoordinate(usize),
    #[error("coordinate {coord} out of range for dimension {dim}")]
    CoordinateOutOfRange { coord: usize, dim: usize },
}

/// Position, velocity and clock of the linear flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self, TrajectoryError> {
        if x.len() != v.len() {
            return Err(TrajectoryError::DimensionMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        if x.is_empty() {
            return Err(TrajectoryError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if !all_finite(&x) || !all_finite(&v) || !t.is_finite() {
            return Err(TrajectoryError::NonFinite("phase point"));
        }
        Ok(Self { x, v, t })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Move along the flow for `dt` time units.
    pub fn advance(&mut self, dt: f64) {
        for (xi, vi) in self.x.iter_mut().zip(&self.v) {
            *xi += vi * dt;
        }
        self.t += dt;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Switch,
    Refresh,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Switch => f.write_str("Switch"),
            EventKind::Refresh => f.write_str("Refresh"),
        }
    }
}

/// A velocity jump. Velocities are stored in the trajectory's recorded
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub v_before: Vec<f64>,
    pub v_after: Vec<f64>,
}

/// Start point plus ordered event log.
///
/// A trajectory may record only a subset of coordinates. Each coordinate of
/// the linear flow evolves independently, so the projection onto any subset
/// is still an exact, lossless record of those coordinates.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    coords: Vec<usize>,
    start: PhasePoint,
    events: Vec<Event>,
    x_at_event: Vec<Vec<f64>>,
    end_time: f64,
}

fn project(full: &[f64], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&c| full[c]).collect()
}

impl Trajectory {
    /// Begin a trajectory at `start`, recording `coords` (all coordinates when
    /// `None`).
    pub fn new(start: &PhasePoint, coords: Option<&[usize]>) -> Result<Self, TrajectoryError> {
        let dim = start.dim();
        let coords: Vec<usize> = match coords {
            Some(c) => c.to_vec(),
            None => (0..dim).collect(),
        };
        if let Some(&bad) = coords.iter().find(|&&c| c >= dim) {
            return Err(TrajectoryError::CoordinateOutOfRange { coord: bad, dim });
        }
        let projected = PhasePoint {
            x: project(&start.x, &coords),
            v: project(&start.v, &coords),
            t: start.t,
        };
        Ok(Self {
            dim,
            coords,
            end_time: start.t,
            start: projected,
            events: Vec::new(),
            x_at_event: Vec::new(),
        })
    }

    /// Append an event given full-dimensional state; only the recorded
    /// coordinates are kept. Checks time ordering and position continuity.
    pub fn record(
        &mut self,
        t: f64,
        kind: EventKind,
        v_before: &[f64],
        v_after: &[f64],
        x: &[f64],
    ) -> Result<(), TrajectoryError> {
        for len in [v_before.len(), v_after.len(), x.len()] {
            if len != self.dim {
                return Err(TrajectoryError::DimensionMismatch {
                    expected: self.dim,
                    got: len,
                });
            }
        }
        let event = Event {
            t,
            kind,
            v_before: project(v_before, &self.coords),
            v_after: project(v_after, &self.coords),
        };
        self.push(event, project(x, &self.coords))
    }

    /// Append an event already expressed in the recorded coordinates.
    pub fn push(&mut self, event: Event, x: Vec<f64>) -> Result<(), TrajectoryError> {
        let k = self.coords.len();
        for len in [event.v_before.len(), event.v_after.len(), x.len()] {
            if len != k {
                return Err(TrajectoryError::DimensionMismatch {
                    expected: k,
                    got: len,
                });
            }
        }
        if !event.t.is_finite()
            || !all_finite(&event.v_before)
            || !all_finite(&event.v_after)
            || !all_finite(&x)
        {
            return Err(TrajectoryError::NonFinite("event"));
        }
        let (prev_t, prev_x, prev_v) = self.last_state();
        if event.t <= prev_t || event.t < self.end_time {
            return Err(TrajectoryError::NonIncreasingTime {
                t: event.t,
                prev: prev_t.max(self.end_time),
            });
        }
        let dt = event.t - prev_t;
        for (i, ((&xi, &x0), &v0)) in x.iter().zip(prev_x).zip(prev_v).enumerate() {
            let expected = x0 + v0 * dt;
            if (xi - expected).abs() > 1e-12 * expected.abs().max(1.0) {
                return Err(TrajectoryError::Discontinuity {
                    t: event.t,
                    coord: self.coords[i],
                    got: xi,
                    expected,
                });
            }
        }
        self.end_time = event.t;
        self.events.push(event);
        self.x_at_event.push(x);
        Ok(())
    }

    /// Extend the final segment (no velocity change) up to `t`.
    pub fn extend_to(&mut self, t: f64) -> Result<(), TrajectoryError> {
        if !(t >= self.end_time) {
            return Err(TrajectoryError::NonIncreasingTime {
                t,
                prev: self.end_time,
            });
        }
        self.end_time = t;
        Ok(())
    }

    fn last_state(&self) -> (f64, &[f64], &[f64]) {
        match self.events.last() {
            Some(e) => (e.t, self.x_at_event.last().unwrap(), &e.v_after),
            None => (self.start.t, &self.start.x, &self.start.v),
        }
    }

    /// Full dimension of the simulated process.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    /// Position of `coord` within the recorded columns.
    pub fn column_of(&self, coord: usize) -> Result<usize, TrajectoryError> {
        self.coords
            .iter()
            .position(|&c| c == coord)
            .ok_or(TrajectoryError::UnrecordedCoordinate(coord))
    }

    pub fn start(&self) -> &PhasePoint {
        &self.start
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn x_at_event(&self) -> &[Vec<f64>] {
        &self.x_at_event
    }

    pub fn start_time(&self) -> f64 {
        self.start.t
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start.t
    }

    /// Linear segments as `(t0, t1, x(t0), v)` in recorded coordinates.
    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> + '_ {
        let n = self.events.len();
        (0..=n).map(move |k| {
            let (t0, x0, v) = if k == 0 {
                (self.start.t, &self.start.x[..], &self.start.v[..])
            } else {
                (
                    self.events[k - 1].t,
                    &self.x_at_event[k - 1][..],
                    &self.events[k - 1].v_after[..],
                )
            };
            let t1 = if k < n { self.events[k].t } else { self.end_time };
            Segment { t0, t1, x0, v }
        })
    }

    /// Position (recorded coordinates) at time `t`.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>, TrajectoryError> {
        if !(t >= self.start.t && t <= self.end_time) {
            return Err(TrajectoryError::OutOfRange {
                t,
                start: self.start.t,
                end: self.end_time,
            });
        }
        let idx = self.events.partition_point(|e| e.t <= t);
        let (t0, x0, v) = if idx == 0 {
            (self.start.t, &self.start.x, &self.start.v)
        } else {
            (
                self.events[idx - 1].t,
                &self.x_at_event[idx - 1],
                &self.events[idx - 1].v_after,
            )
        };
        let dt = t - t0;
        Ok(x0.iter().zip(v).map(|(x, v)| x + v * dt).collect())
    }

    /// Velocity in force at time `t` (right-continuous).
    pub fn velocity_at(&self, t: f64) -> Result<&[f64], TrajectoryError> {
        if !(t >= self.start.t && t <= self.end_time) {
            return Err(TrajectoryError::OutOfRange {
                t,
                start: self.start.t,
                end: self.end_time,
            });
        }
        let idx = self.events.partition_point(|e| e.t <= t);
        Ok(if idx == 0 {
            &self.start.v
        } else {
            &self.events[idx - 1].v_after
        })
    }

    /// Write the event log as CSV: `t,kind,x_<c>...,v_<c>...`, one `Start`
    /// row, one row per event (position at the event, velocity after it) and a
    /// closing `End` row. `coords` restricts the columns to a subset of the
    /// recorded coordinates.
    pub fn write_csv<W: Write>(&self, mut w: W, coords: Option<&[usize]>) -> io::Result<()> {
        let cols: Vec<usize> = match coords {
            Some(cs) => cs
                .iter()
                .map(|&c| {
                    self.column_of(c)
                        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))
                })
                .collect::<io::Result<_>>()?,
            None => (0..self.coords.len()).collect(),
        };
        write!(w, "t,kind")?;
        for &j in &cols {
            write!(w, ",x_{}", self.coords[j])?;
        }
        for &j in &cols {
            write!(w, ",v_{}", self.coords[j])?;
        }
        writeln!(w)?;

        let row = |w: &mut W, t: f64, kind: &str, x: &[f64], v: &[f64]| -> io::Result<()> {
            write!(w, "{t},{kind}")?;
            for &j in &cols {
                write!(w, ",{}", x[j])?;
            }
            for &j in &cols {
                write!(w, ",{}", v[j])?;
            }
            writeln!(w)
        };
        row(&mut w, self.start.t, "Start", &self.start.x, &self.start.v)?;
        for (e, x) in self.events.iter().zip(&self.x_at_event) {
            row(&mut w, e.t, &e.kind.to_string(), x, &e.v_after)?;
        }
        let x_end = self
            .interpolate(self.end_time)
            .expect("end time is inside the trajectory");
        let (_, _, v_end) = self.last_state();
        row(&mut w, self.end_time, "End", &x_end, v_end)?;
        Ok(())
    }
}

/// One linear piece of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub t0: f64,
    pub t1: f64,
    pub x0: &'a [f64],
    pub v: &'a [f64],
}

/// Switching intensity `max(0, -v . g)` where `g` is the gradient of the log
/// target density.
pub fn switching_rate(v: &[f64], g: &[f64]) -> Result<f64, TrajectoryError> {
    if v.len() != g.len() {
        return Err(TrajectoryError::DimensionMismatch {
            expected: v.len(),
            got: g.len(),
        });
    }
    Ok((-dot(v, g)).max(0.0))
}
