use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::domain::MediaId;

/// Upper bound on timestamps in a single plan.
pub const MAX_PLANNED_FRAMES: usize = 10_000_000;

/// Timestamps at which still frames should be pulled from a video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub source_video: MediaId,
    pub timestamps_s: Vec<f64>,
    pub effective_rate_fps: f64,
    pub requested_rate_fps: f64,
    /// Set when the requested rate exceeded the video's own frame rate.
    pub clamped: bool,
}

impl FramePlan {
    pub fn warnings(&self) -> Vec<String> {
        if self.clamped {
            vec![format!(
                "requested {} fps exceeds the video's {} fps; extracting every frame instead",
                self.requested_rate_fps, self.effective_rate_fps
            )]
        } else {
            Vec::new()
        }
    }
}

fn positive(what: &'static str, value: f64) -> Result<f64, DatasetError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DatasetError::InvalidRate { what, value })
    }
}

/// Plans timestamps `k / rate` for `k = 0, 1, ...` strictly below `duration_s`.
/// The rate is clamped to the video's frame rate.
pub fn plan_frame_extraction(
    source_video: impl Into<MediaId>,
    duration_s: f64,
    video_fps: f64,
    requested_rate_fps: f64,
) -> Result<FramePlan, DatasetError> {
    let duration_s = positive("duration_s", duration_s)?;
    let video_fps = positive("video_fps", video_fps)?;
    let requested_rate_fps = positive("requested_rate_fps", requested_rate_fps)?;

    let clamped = requested_rate_fps > video_fps;
    let rate = requested_rate_fps.min(video_fps);
    let expected = (duration_s * rate).ceil();
    if expected > MAX_PLANNED_FRAMES as f64 {
        return Err(DatasetError::TooManyFrames {
            count: expected,
            limit: MAX_PLANNED_FRAMES,
        });
    }

    let timestamps_s: Vec<f64> = (0u64..)
        .map(|k| k as f64 / rate)
        .take_while(|&t| t < duration_s)
        .collect();

    Ok(FramePlan {
        source_video: source_video.into(),
        timestamps_s,
        effective_rate_fps: rate,
        requested_rate_fps,
        clamped,
    })
}
