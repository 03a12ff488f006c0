/// Plane wave travelling in `+x` in normalized units (`c = 1`, `k = ω`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentWave {
    pub omega: f64,
    pub amplitude: f64,
}

impl IncidentWave {
    pub fn new(omega: f64) -> Self {
        Self { omega, amplitude: 1.0 }
    }

    /// No excitation.
    pub fn silent(omega: f64) -> Self {
        Self { omega, amplitude: 0.0 }
    }

    /// `(Hx, Hy, Ez)` of the incident wave at `(x, y, t)`.
    pub fn fields(&self, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
        let (hx, hy, ez) = incident_field(x, y, t, self.omega);
        (hx * self.amplitude, hy * self.amplitude, ez * self.amplitude)
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// Unit-amplitude incident plane wave `Ez = cos(ωt − kx)`, `Hy = −Ez`,
/// `Hx = 0`.
pub fn incident_field(x: f64, _y: f64, t: f64, omega: f64) -> (f64, f64, f64) {
    let ez = (omega * t - omega * x).cos();
    (0.0, -ez, ez)
}
