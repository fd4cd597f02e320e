//! Fixtures shared by the benchmarks.

use wgheat_core::{random_field, CrossSection, GammaSide, KGrid, ModalField, Result, TimeGrid};

/// A moderately sized problem on `ω = (0, π)` observed at the right end.
pub struct Fixture {
    pub beta: ModalField,
    pub tg: TimeGrid,
}

pub fn fixture(n_k: usize, l_max: usize, n_t: usize) -> Result<Fixture> {
    let cs = CrossSection::new(std::f64::consts::PI, GammaSide::RightEnd, l_max)?;
    let kgrid = KGrid::new(6.0, n_k)?;
    let beta = random_field(cs, kgrid, 30.0, 7)?;
    Ok(Fixture { beta, tg: TimeGrid::new(1.0, n_t)? })
}
