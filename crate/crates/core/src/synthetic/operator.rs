//! A scripted stand-in for the person holding the board.
//!
//! Each tick the operator moves a fixed fraction of the remaining way toward
//! the displayed target and adds hand jitter. Driving a session with it
//! exercises the full guidance loop without a camera.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{detect_corners, NoiseModel, SyntheticError, VirtualCamera};
use crate::calibration::Corner;
use crate::geometry::{BoardSpec, CameraIntrinsics, Pose};
use crate::seed;
use crate::session::{advance, manual_capture, CaptureMode, Phase, SessionEvent, SessionState};

#[derive(Debug, Clone)]
pub struct SimulatedOperator {
    /// Fraction of the remaining offset covered per tick, in (0, 1].
    pub step_fraction: f64,
    /// Hand jitter, pixels (per-coordinate standard deviation).
    pub jitter: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl SimulatedOperator {
    pub fn new(step_fraction: f64, jitter: f64, seed: u64) -> Result<Self, SyntheticError> {
        if !(step_fraction > 0.0 && step_fraction <= 1.0) {
            return Err(SyntheticError::InvalidOperator(format!(
                "step_fraction must be in (0, 1], got {step_fraction}"
            )));
        }
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(SyntheticError::InvalidOperator(format!(
                "jitter must be non-negative, got {jitter}"
            )));
        }
        Ok(Self {
            step_fraction,
            jitter,
            seed,
            rng: seed::rng(seed),
        })
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma)
            .expect("non-negative sigma")
            .sample(&mut self.rng)
    }

    /// Moves the board toward `target`. Jitter is applied as a lateral
    /// translation whose image displacement at the board center is
    /// `jitter` pixels per axis.
    pub fn tick_pose(
        &mut self,
        current: &Pose,
        target: &Pose,
        intrinsics: &CameraIntrinsics,
        board: &BoardSpec,
    ) -> Pose {
        let moved = current.interpolate(target, self.step_fraction);
        let depth = moved.transform_point(&board.center()).z.abs();
        let sx = self.gaussian(self.jitter * depth / intrinsics.fx);
        let sy = self.gaussian(self.jitter * depth / intrinsics.fy);
        let mut t = *moved.translation();
        t.x += sx;
        t.y += sy;
        Pose::new(*moved.rotation(), t)
    }
}

/// One step in corner space: every corner moves `step_fraction` of the way
/// to its target counterpart, plus Gaussian jitter per coordinate. Corners
/// without a target counterpart stay put.
pub fn operator_tick(
    operator: &mut SimulatedOperator,
    current: &[Corner],
    target: &[Corner],
) -> Vec<Corner> {
    let a = operator.step_fraction;
    let j = operator.jitter;
    current
        .iter()
        .map(|c| {
            let mut pixel = c.pixel;
            if let Some(t) = target.iter().find(|t| t.index == c.index) {
                pixel += (t.pixel - c.pixel) * a;
                pixel.x += operator.gaussian(j);
                pixel.y += operator.gaussian(j);
            }
            Corner {
                index: c.index,
                pixel,
            }
        })
        .collect()
}

/// Detections fed to the session in one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_token: u64,
    pub corners: Vec<Corner>,
    /// A manual capture was requested after this frame's update.
    #[serde(default)]
    pub manual_capture: bool,
}

#[derive(Debug, Clone)]
pub struct OperatorRun {
    pub state: SessionState,
    pub events: Vec<SessionEvent>,
    /// Every frame in order, for replaying the run elsewhere.
    pub frames: Vec<Frame>,
    pub ticks: usize,
}

/// Runs the operator against a session until it completes or `max_ticks`
/// frames have been fed. Frame `k` carries token `k` and detector noise from
/// stream `k` of `detector_noise.seed`.
///
/// In manual mode the operator presses capture once the session has been
/// matched for `dwell_frames` updates.
pub fn drive_session(
    state: SessionState,
    operator: &mut SimulatedOperator,
    camera: &VirtualCamera,
    detector_noise: &NoiseModel,
    start: Pose,
    max_ticks: usize,
) -> Result<OperatorRun, SyntheticError> {
    detector_noise.validate()?;
    let board = state.config().board;
    let mode = state.config().capture_mode;
    let dwell = state.config().dwell_frames;
    let mut state = state;
    let mut pose = start;
    let mut events = Vec::new();
    let mut frames = Vec::new();
    let mut ticks = 0;
    while ticks < max_ticks && !state.is_closed() {
        let target = state.target().expect("open session has a target").pose;
        pose = operator.tick_pose(&pose, &target, &state.plan.intrinsics, &board);
        let token = ticks as u64;
        let corners = detect_corners(camera, &pose, &board, &detector_noise.reseeded(token));
        let (next, ev) = advance(&state, &corners, token)?;
        events.extend(ev);
        state = next;
        let press = mode == CaptureMode::Manual
            && state.phase == Phase::MatchedDwelling
            && state.dwell_count >= dwell;
        if press {
            let (next, ev) = manual_capture(&state, &corners, token)?;
            events.extend(ev);
            state = next;
        }
        frames.push(Frame {
            frame_token: token,
            corners,
            manual_capture: press,
        });
        ticks += 1;
    }
    Ok(OperatorRun {
        state,
        events,
        frames,
        ticks,
    })
}
