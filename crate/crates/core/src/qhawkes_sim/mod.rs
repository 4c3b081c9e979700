//! Microscopic bivariate quadratic Hawkes process: parameters, intensity
//! state, thinning simulation and the scaled processes.

mod params;
mod scaled;
mod simulate;
mod state;

pub use params::{rescale_params, MicroParams, RescaledParams};
pub use scaled::{kernel_integral_by_parts, scaled_processes, ScaledPaths};
pub use simulate::{
    compensator_path, simulate, Event, EventPath, IntensitySample, SimDiagnostics, SimOptions,
};
pub use state::{intensity_at, IntensityState, Mark};
