//! Physical layer: corridor mobility, pathloss, correlated Rayleigh fading and link gains.

mod channel;
mod config;
mod mobility;

pub use channel::{
    ar1_update, complex_gaussian, compute_gains, link_gain, pathloss_db, sample_fading, FadingState, GainSnapshot,
};
pub use config::{bessel_j0, dbm_to_mw, mw_to_dbm, EnvConfig, TurnProbs, DESK_AREA_M, DESK_CORRIDOR_SPACING_M};
pub use mobility::{apply_turn, draw_turn, place, step_mobility, CorridorGrid, Heading, MobilityState, Point, Turn};
