//! ISS-Lyapunov certificates, average dwell-time bounds and hybrid
//! simulation for switched cascade systems.

pub mod kfun;
pub mod quad;
pub mod linear_synth;
pub mod cascade_cert;
pub mod adt_bounds;
pub mod hybrid_sim;
pub mod sampled_loop;
pub mod iss_check;
