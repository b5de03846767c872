use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Saved solution frames `u(t = i·dt_save)`, `i = 0..=n_saves`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Vec<f64>>,
    pub dt_save: f64,
}

impl Trajectory {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn last(&self) -> &[f64] {
        self.frames.last().expect("trajectory holds the initial frame")
    }

    pub fn to_tensor(&self) -> Tensor {
        let m = self.frames[0].len();
        let data = self.frames.iter().flatten().copied().collect();
        Tensor::matrix(self.frames.len(), m, data).expect("frames share one length")
    }
}

/// Number of whole `fine` steps in one `coarse` interval.
pub(crate) fn ratio(coarse: f64, fine: f64, what: &str) -> Result<usize> {
    if !(coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite()) {
        return Err(Error::Config(format!("{what}: intervals must be positive ({coarse}, {fine})")));
    }
    let r = coarse / fine;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n {
        return Err(Error::Config(format!("{what}: {coarse} is not a multiple of {fine}")));
    }
    Ok(n as usize)
}

/// Runs `step` `substeps` times between saves and records `to_frame` after
/// each save interval. Non-finite or exploding states abort with the step
/// index and time of failure.
pub(crate) fn march<S>(
    mut state: S,
    dt: f64,
    substeps: usize,
    n_saves: usize,
    dt_save: f64,
    mut step: impl FnMut(&mut S),
    to_frame: impl Fn(&S) -> Vec<f64>,
) -> Result<Trajectory> {
    let mut frames = Vec::with_capacity(n_saves + 1);
    frames.push(to_frame(&state));
    let mut n = 0usize;
    for _ in 0..n_saves {
        for _ in 0..substeps {
            step(&mut state);
            n += 1;
        }
        let f = to_frame(&state);
        if f.iter().any(|v| !v.is_finite() || v.abs() > crate::integrators::BLOWUP_THRESHOLD) {
            return Err(Error::Blowup {
                step: n,
                time: n as f64 * dt,
            });
        }
        frames.push(f);
    }
    Ok(Trajectory { frames, dt_save })
}
