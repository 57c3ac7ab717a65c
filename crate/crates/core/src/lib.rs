//! Physics-informed digital twin of a LEO satellite network: orbit and
//! link-budget simulation, a conditional diffusion model for channel
//! reconstruction and a spatiotemporal graph network for traffic prediction.

pub mod channel_dt;
pub mod channel_sim;
pub mod geo_data;
pub mod orbital;
pub mod physics_tensor;
pub mod scenario;
pub mod seeds;
pub mod traffic_dt;
