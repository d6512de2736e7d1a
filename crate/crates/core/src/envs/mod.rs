//! Goal-conditioned PSM Reach and Pick environments with a Gym-style
//! make/reset/step/render surface.

mod config;
mod demo;
mod env;
mod episode;
mod frame;

pub use config::{EnvConfig, EnvKind, GoalSampling, DEFAULT_CENTER};
pub use demo::{
    generate_demos, scripted_demo, DemoEpisode, DemoOutcome, DemoSet, DemoStats,
    ScriptedController, CLOSE_HOLD_STEPS, HOVER_HEIGHT,
};
pub use env::{compute_reward, Environment, GoalObservation, StepInfo, StepResult};
pub use episode::{run_episode, Episode, Policy};
pub use frame::{read_frames, write_frames, Frame};
