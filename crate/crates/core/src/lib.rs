//! Reinforcement-learning toolkit for autonomous racing of a miniature car.
//!
//! The crate contains the racing MDP (curvilinear track coordinates, a
//! dynamic bicycle model with model randomization, lifted rate actions),
//! a from-scratch Soft Actor-Critic with policy-output, reward-action and
//! weight regularizers, evaluation metrics, an asynchronous policy
//! refinement harness and two classic-control benchmarks.

pub mod classic;
pub mod config;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod refine;
pub mod sac;
pub mod track;
pub mod vehicle;

pub use config::Config;
pub use env::{Action, Environment, MdpState, RaceConfig, RaceEnv};
pub use error::{Error, Result};
pub use sac::{RegularizerSpec, SacAgent, SacConfig, Transition};
pub use track::{FrenetPose, Projection, Track, TrackKind};
pub use vehicle::{BodyState, NoiseSpec, PhysicalInputs, TireForces, VehicleParams};
