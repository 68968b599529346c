//! Small sampling helpers shared by the models and the field generator.

use rand::Rng;

/// One draw from the standard normal via Box-Muller. Consumes exactly two
/// uniform draws per call, so sequences stay reproducible for a fixed seed.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
