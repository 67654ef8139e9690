//! Dense storage for many equal-length actions.
//!
//! Synthetic audits treat each 2D point as a one-step action, so the same
//! code path serves both point clouds and windowed trajectories.

use crate::error::{Error, Result};
use crate::trajectory::{grid_steps, replan_window, Point, Trajectory};

/// Which part of each action is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// Every stored step.
    Full,
    /// The first `seconds` of the action.
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    steps: usize,
    sample_rate: Option<f64>,
    /// Sample index (relative to the action start) of the first stored step.
    first_index: usize,
    data: Vec<Point>,
}

impl ActionSet {
    pub fn new(steps: usize, data: Vec<Point>) -> Result<Self> {
        if steps == 0 || data.len() % steps != 0 {
            return Err(Error::Schema(format!(
                "{} samples do not split into actions of {steps} steps",
                data.len()
            )));
        }
        Ok(Self {
            steps,
            sample_rate: None,
            first_index: 0,
            data,
        })
    }

    /// One single-step action per point.
    pub fn from_points(points: Vec<Point>) -> Self {
        Self {
            steps: 1,
            sample_rate: None,
            first_index: 0,
            data: points,
        }
    }

    /// Absolute positions of each action over its first `horizon` seconds.
    pub fn from_trajectories(actions: &[Trajectory], horizon: f64) -> Result<Self> {
        let mut data = Vec::new();
        let mut steps = None;
        let mut rate = None;
        for a in actions {
            let w = replan_window(a, horizon)?;
            check_shape(&mut steps, &mut rate, w.len(), a.sample_rate())?;
            data.extend_from_slice(w.positions());
        }
        Ok(Self {
            steps: steps.unwrap_or(1),
            sample_rate: rate,
            first_index: 0,
            data,
        })
    }

    /// Displacement of each action from its first sample, over its first
    /// `horizon` seconds. The first sample (always the origin) is dropped.
    pub fn displacements(actions: &[Trajectory], horizon: f64) -> Result<Self> {
        let mut data = Vec::new();
        let mut steps = None;
        let mut rate = None;
        for a in actions {
            let w = replan_window(a, horizon)?;
            if w.len() < 2 {
                return Err(Error::range("horizon", horizon, "window holds a single sample"));
            }
            check_shape(&mut steps, &mut rate, w.len() - 1, a.sample_rate())?;
            let o = w.positions()[0];
            data.extend(w.positions()[1..].iter().map(|p| [p[0] - o[0], p[1] - o[1]]));
        }
        Ok(Self {
            steps: steps.unwrap_or(1),
            sample_rate: rate,
            first_index: 1,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    /// Time of each stored step since the action start, when the sample rate
    /// is known.
    pub fn step_times(&self) -> Option<Vec<f64>> {
        self.sample_rate
            .map(|r| (0..self.steps).map(|t| (t + self.first_index) as f64 / r).collect())
    }

    pub fn action(&self, i: usize) -> &[Point] {
        &self.data[i * self.steps..(i + 1) * self.steps]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[Point]> + '_ {
        self.data.chunks_exact(self.steps)
    }

    pub fn as_slice(&self) -> &[Point] {
        &self.data
    }

    /// Positions of every action at step `t`.
    pub fn step_points(&self, t: usize) -> Vec<Point> {
        self.iter().map(|a| a[t]).collect()
    }

    /// Stacked coordinates of each action: `[x0, y0, x1, y1, ...]`.
    pub fn flattened(&self) -> Vec<Vec<f64>> {
        self.iter()
            .map(|a| a.iter().flat_map(|p| [p[0], p[1]]).collect())
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.steps);
        for &i in indices {
            data.extend_from_slice(self.action(i));
        }
        Self { data, ..*self }
    }

    /// Number of leading steps covered by `window`.
    pub fn window_steps(&self, window: Window) -> Result<usize> {
        match window {
            Window::Full => Ok(self.steps),
            Window::Seconds(h) => {
                let rate = self.sample_rate.ok_or_else(|| {
                    Error::Unsupported("time window on actions without a sample rate".into())
                })?;
                let last = grid_steps(h, rate)?;
                if last < self.first_index || last + 1 - self.first_index > self.steps {
                    return Err(Error::range(
                        "window",
                        h,
                        format!("outside the {} stored steps", self.steps),
                    ));
                }
                Ok(last + 1 - self.first_index)
            }
        }
    }

    /// The leading part of every action selected by `window`.
    pub fn windowed(&self, window: Window) -> Result<Self> {
        let k = self.window_steps(window)?;
        if k == self.steps {
            return Ok(self.clone());
        }
        let data = self.iter().flat_map(|a| a[..k].iter().copied()).collect();
        Ok(Self {
            steps: k,
            data,
            ..*self
        })
    }
}

fn check_shape(
    steps: &mut Option<usize>,
    rate: &mut Option<f64>,
    len: usize,
    sample_rate: f64,
) -> Result<()> {
    match (*steps, *rate) {
        (None, _) => {
            *steps = Some(len);
            *rate = Some(sample_rate);
            Ok(())
        }
        (Some(s), Some(r)) if s == len && r == sample_rate => Ok(()),
        _ => Err(Error::Schema("actions differ in length or sample rate".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n: usize) -> Trajectory {
        Trajectory::new((0..n).map(|i| [i as f64, 1.0]).collect(), 25.0).unwrap()
    }

    #[test]
    fn window_of_absolute_actions() {
        let set = ActionSet::from_trajectories(&[traj(201), traj(201)], 8.0).unwrap();
        assert_eq!(set.steps(), 201);
        assert_eq!(set.windowed(Window::Seconds(2.0)).unwrap().steps(), 51);
        assert!(set.windowed(Window::Seconds(2.02)).is_err());
        assert!(set.windowed(Window::Seconds(9.0)).is_err());
    }

    #[test]
    fn displacements_drop_origin() {
        let set = ActionSet::displacements(&[traj(201)], 2.0).unwrap();
        assert_eq!(set.steps(), 50);
        assert_eq!(set.action(0)[0], [1.0, 0.0]);
        assert_eq!(set.windowed(Window::Seconds(1.0)).unwrap().steps(), 25);
        let times = set.step_times().unwrap();
        assert_eq!((times[0], times[49]), (0.04, 2.0));
    }

    #[test]
    fn points_are_single_step() {
        let set = ActionSet::from_points(vec![[0.0, 1.0], [2.0, 3.0]]);
        assert_eq!(set.len(), 2);
        assert_eq!(set.step_points(0), vec![[0.0, 1.0], [2.0, 3.0]]);
        assert!(set.windowed(Window::Seconds(1.0)).is_err());
        assert_eq!(set.subset(&[1]).action(0), &[[2.0, 3.0]]);
        assert!(set.step_times().is_none());
    }
}
