use std::f64::consts::PI;

use log::warn;

use super::{distance, ArrayGeometry, RoomSpec, SourcePlacement};
use crate::signal::Mic;
use crate::{Error, Result, SPEED_OF_SOUND};

/// Half-width of the windowed-sinc fractional delay (81 taps in total).
const SINC_HALF_WIDTH: i64 = 40;

/// Per-microphone room impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    taps: [Vec<f64>; 2],
    sample_rate: u32,
}

impl Rir {
    pub fn new(taps: [Vec<f64>; 2], sample_rate: u32) -> Result<Self> {
        if taps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("RIR has non-finite taps".into()));
        }
        Ok(Self { taps, sample_rate })
    }

    pub fn taps(&self, mic: Mic) -> &[f64] {
        &self.taps[mic.index()]
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.taps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps[0].is_empty()
    }
}

/// Uniform wall absorption from Sabine's formula,
/// `α = 0.1611 V / (T60 S)`, clamped to 1.
pub fn sabine_absorption(room: &RoomSpec) -> f64 {
    let alpha = 0.1611 * room.volume() / (room.t60 * room.surface_area());
    if alpha > 1.0 {
        warn!(
            "room {:.2}x{:.2}x{:.2} m is too small for T60 = {:.3} s; clamping absorption to 1",
            room.width, room.length, room.height, room.t60
        );
        1.0
    } else {
        alpha
    }
}

/// Wall absorption at which the specular image model decays at the room's T60.
///
/// Images reached along direction `u` lie behind `g(u) = c (|ux|/w + |uy|/l +
/// |uz|/h)` walls per second of travel, and 1/d² spreading cancels the growth
/// in image count, so the energy envelope is the direction average of
/// `exp(-β g(u) t)` with `β = -ln(1-α)`. Near-axial paths meet few walls and
/// dominate the tail, so that average decays well below the rate Sabine or
/// Eyring predict. β is fitted so the envelope's -5 to -25 dB slope
/// extrapolates to the requested T60.
pub fn specular_absorption(room: &RoomSpec) -> f64 {
    let beta = unit_envelope_t60(room) / room.t60;
    1.0 - (-beta).exp()
}

/// T60 of the direction-averaged envelope at `β = 1`.
fn unit_envelope_t60(room: &RoomSpec) -> f64 {
    const N: usize = 96;
    let [w, l, h] = room.dims();
    // Midpoint grid over the positive octant, uniform in solid angle.
    let rates: Vec<f64> = (0..N * N)
        .map(|k| {
            let mu = ((k / N) as f64 + 0.5) / N as f64;
            let phi = ((k % N) as f64 + 0.5) / N as f64 * PI / 2.0;
            let r = (1.0 - mu * mu).sqrt();
            SPEED_OF_SOUND * (r * phi.cos() / w + r * phi.sin() / l + mu / h)
        })
        .collect();
    // Backward integral of the envelope, in closed form per direction.
    let remaining = |t: f64| rates.iter().map(|g| (-g * t).exp() / g).sum::<f64>();
    let total = remaining(0.0);
    let crossing = |db: f64| {
        let target = total * 10f64.powf(db / 10.0);
        let mut hi = 0.1;
        while remaining(hi) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if remaining(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    3.0 * (crossing(-25.0) - crossing(-5.0))
}

/// Reflection order needed for image distances to cover `c · T60`.
pub fn default_max_order(room: &RoomSpec) -> usize {
    let min_dim = room.dims().into_iter().fold(f64::INFINITY, f64::min);
    (SPEED_OF_SOUND * room.t60 / min_dim).ceil() as usize + 1
}

/// Samples kept in a generated response: the full T60 plus the
/// interpolation kernel.
pub fn default_rir_len(room: &RoomSpec, sample_rate: u32) -> usize {
    (room.t60 * sample_rate as f64).ceil() as usize + 2 * SINC_HALF_WIDTH as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirParams {
    pub max_order: usize,
    pub absorption: f64,
    pub len: usize,
    pub sample_rate: u32,
    /// Cutoff of the DC-blocking filter applied to the summed images; 0
    /// leaves the response unfiltered.
    pub highpass_hz: f64,
}

/// Default DC-blocker cutoff. With all reflection coefficients positive the
/// image arrivals pile up coherently near 0 Hz, and that build-up alone
/// stretches the measured decay by a third.
pub const RIR_HIGHPASS_HZ: f64 = 50.0;

/// Image-source response with the room's default absorption and length.
pub fn image_source_rir(
    room: &RoomSpec,
    array: &ArrayGeometry,
    src: &SourcePlacement,
    max_order: usize,
    sample_rate: u32,
) -> Result<Rir> {
    let params = RirParams {
        max_order,
        absorption: specular_absorption(room),
        len: default_rir_len(room, sample_rate),
        sample_rate,
        highpass_hz: RIR_HIGHPASS_HZ,
    };
    image_source_rir_with(room, array, src, &params)
}

/// Image-source method for a shoebox room with uniform absorption.
///
/// Every image up to `max_order` reflections whose arrival falls inside the
/// response contributes `(1-α)^(r/2) / (4π d)` at delay `d / c`, spread with
/// an 81-tap Hann-windowed sinc.
pub fn image_source_rir_with(
    room: &RoomSpec,
    array: &ArrayGeometry,
    src: &SourcePlacement,
    params: &RirParams,
) -> Result<Rir> {
    room.validate()?;
    array.validate_in(room)?;
    if !room.contains(src.position, 0.0) {
        return Err(Error::Geometry(format!(
            "source at {:?} lies outside the room",
            src.position
        )));
    }
    if !(0.0..=1.0).contains(&params.absorption) {
        return Err(Error::Config(format!(
            "absorption {} outside [0, 1]",
            params.absorption
        )));
    }
    let fs = params.sample_rate as f64;
    let reflect = (1.0 - params.absorption).sqrt();
    let dims = room.dims();
    let s = src.position;
    let order = params.max_order as i64;
    let max_dist = (params.len as f64 + SINC_HALF_WIDTH as f64) * SPEED_OF_SOUND / fs;

    let taps = array.mics.map(|mic| {
        let mut h = vec![0.0; params.len];
        let n_range = |dim: f64| {
            let n = ((max_dist / (2.0 * dim)).ceil() as i64 + 1).min(order);
            -n..=n
        };
        for nx in n_range(dims[0]) {
            for qx in 0..2i64 {
                let rx = (2 * nx - qx).abs();
                if rx > order {
                    continue;
                }
                let x = (1 - 2 * qx) as f64 * s[0] + 2.0 * nx as f64 * dims[0] - mic[0];
                if x.abs() > max_dist {
                    continue;
                }
                for ny in n_range(dims[1]) {
                    for qy in 0..2i64 {
                        let ry = (2 * ny - qy).abs();
                        if rx + ry > order {
                            continue;
                        }
                        let y = (1 - 2 * qy) as f64 * s[1] + 2.0 * ny as f64 * dims[1] - mic[1];
                        if x.hypot(y) > max_dist {
                            continue;
                        }
                        for nz in n_range(dims[2]) {
                            for qz in 0..2i64 {
                                let rz = (2 * nz - qz).abs();
                                let r = rx + ry + rz;
                                if r > order {
                                    continue;
                                }
                                let z = (1 - 2 * qz) as f64 * s[2] + 2.0 * nz as f64 * dims[2]
                                    - mic[2];
                                let d = (x * x + y * y + z * z).sqrt();
                                if d > max_dist {
                                    continue;
                                }
                                let amp = reflect.powi(r as i32) / (4.0 * PI * d.max(1e-3));
                                add_fractional_impulse(&mut h, d / SPEED_OF_SOUND * fs, amp);
                            }
                        }
                    }
                }
            }
        }
        if params.highpass_hz > 0.0 {
            dc_block(&mut h, params.highpass_hz, fs);
        }
        h
    });
    Rir::new(taps, params.sample_rate)
}

/// One-pole DC blocker `y[n] = x[n] - x[n-1] + R y[n-1]`, in place.
fn dc_block(h: &mut [f64], cutoff_hz: f64, fs: f64) {
    let r = (-2.0 * PI * cutoff_hz / fs).exp();
    let (mut x_prev, mut y_prev) = (0.0, 0.0);
    for v in h.iter_mut() {
        let y = *v - x_prev + r * y_prev;
        x_prev = *v;
        y_prev = y;
        *v = y;
    }
}

fn add_fractional_impulse(h: &mut [f64], delay: f64, amp: f64) {
    // sin(π(t + k)) = (−1)^k sin(πt), and the window's cosine advances by a
    // fixed rotation per tap, so only three transcendentals are needed.
    let centre = delay.round() as i64;
    let width = SINC_HALF_WIDTH as f64 + 0.5;
    let first = centre - SINC_HALF_WIDTH;
    let t0 = first as f64 - delay;
    let sin0 = (PI * t0).sin();
    let (mut ws, mut wc) = (PI * t0 / width).sin_cos();
    let (ds, dc) = (PI / width).sin_cos();
    for (k, n) in (first..=centre + SINC_HALF_WIDTH).enumerate() {
        let t = t0 + k as f64;
        if n >= 0 && (n as usize) < h.len() {
            let window = 0.5 * (1.0 + wc);
            let sinc = if t.abs() < 1e-12 {
                1.0
            } else {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * sin0 / (PI * t)
            };
            h[n as usize] += amp * window * sinc;
        }
        (ws, wc) = (ws * dc + wc * ds, wc * dc - ws * ds);
    }
}

/// Geometric direct-path delay in samples from `src` to `mic`.
pub fn direct_delay_samples(array: &ArrayGeometry, src: &SourcePlacement, mic: Mic, sample_rate: u32) -> f64 {
    distance(array.mics[mic.index()], src.position) / SPEED_OF_SOUND * sample_rate as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> RoomSpec {
        RoomSpec::new(5.0, 4.0, 3.0, 0.32296).unwrap()
    }

    #[test]
    fn sabine_reference_value() {
        let a = sabine_absorption(&room());
        // 0.1611 * 60 / (0.32296 * 94) = 0.31840 by hand.
        assert!((a - 0.3190).abs() < 1e-3, "{a}");
        assert!((a - 0.31840).abs() < 1e-5, "{a}");
    }

    #[test]
    fn sabine_scaling_and_limit() {
        let mut r = room();
        let a = sabine_absorption(&r);
        r.t60 *= 2.0;
        assert!((sabine_absorption(&r) - a / 2.0).abs() < 1e-12);
        r.t60 = 1e12;
        assert!(sabine_absorption(&r) < 1e-9);
    }

    #[test]
    fn sabine_clamps_to_one() {
        let r = RoomSpec::new(1.0, 1.0, 1.0, 0.01).unwrap();
        assert_eq!(sabine_absorption(&r), 1.0);
    }

    #[test]
    fn specular_needs_more_absorption_than_eyring() {
        for t60 in [0.2, 0.35, 0.5] {
            let mut r = room();
            r.t60 = t60;
            let eyring = 1.0 - (-0.1611 * r.volume() / (r.t60 * r.surface_area())).exp();
            let a = specular_absorption(&r);
            assert!(a > eyring && a < 1.0, "{a} vs {eyring}");
        }
    }

    #[test]
    fn specular_absorption_shrinks_with_t60() {
        let mut r = room();
        let a = specular_absorption(&r);
        r.t60 *= 2.0;
        assert!(specular_absorption(&r) < a);
    }

    fn setup() -> (RoomSpec, ArrayGeometry, SourcePlacement) {
        let r = room();
        let a = ArrayGeometry::default_at([2.5, 1.5, 1.5]);
        let s = SourcePlacement::new(&a, 60.0, 1.6, 1.6).unwrap();
        (r, a, s)
    }

    #[test]
    fn order_zero_is_direct_path() {
        let (r, a, s) = setup();
        let p = RirParams {
            max_order: 0,
            absorption: specular_absorption(&r),
            len: default_rir_len(&r, 16_000),
            sample_rate: 16_000,
            highpass_hz: 0.0,
        };
        let rir = image_source_rir_with(&r, &a, &s, &p).unwrap();
        for mic in [Mic::First, Mic::Second] {
            let d = distance(a.mics[mic.index()], s.position);
            let taps = rir.taps(mic);
            let peak = taps
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .unwrap()
                .0;
            let want = d / SPEED_OF_SOUND * 16_000.0;
            assert!((peak as f64 - want).abs() <= 1.0);
            // The interpolation kernel integrates to the impulse amplitude.
            let sum: f64 = taps.iter().sum();
            assert!((sum - 1.0 / (4.0 * PI * d)).abs() < 2e-3 / (4.0 * PI * d));
        }
    }

    #[test]
    fn dc_blocker_removes_constant() {
        let mut h = vec![1.0; 16_000];
        dc_block(&mut h, RIR_HIGHPASS_HZ, 16_000.0);
        assert_eq!(h[0], 1.0);
        assert!(h[15_999].abs() < 1e-6);
        // A full-band impulse passes almost unchanged.
        let mut imp = vec![0.0; 8];
        imp[0] = 1.0;
        dc_block(&mut imp, RIR_HIGHPASS_HZ, 16_000.0);
        assert_eq!(imp[0], 1.0);
        assert!(imp[1] < 0.0 && imp[1] > -0.02);
    }

    #[test]
    fn integer_delay_gives_single_tap() {
        let r = RoomSpec::new(6.0, 6.0, 3.0, 0.3).unwrap();
        let a = ArrayGeometry::new([1.0, 3.0, 1.5], 0.03, 0.0).unwrap();
        // 100 samples at 16 kHz.
        let d = 100.0 * SPEED_OF_SOUND / 16_000.0;
        let mut s = SourcePlacement::new(&a, 0.0, 1.0, 1.5).unwrap();
        s.position = [a.mics[0][0] + d, a.mics[0][1], a.mics[0][2]];
        let p = RirParams {
            max_order: 0,
            absorption: 0.5,
            len: 400,
            sample_rate: 16_000,
            highpass_hz: 0.0,
        };
        let rir = image_source_rir_with(&r, &a, &s, &p).unwrap();
        let taps = rir.taps(Mic::First);
        let amp = 1.0 / (4.0 * PI * d);
        assert!((taps[100] - amp).abs() < 1e-12);
        let rest: f64 = taps.iter().enumerate().filter(|(i, _)| *i != 100).map(|(_, v)| v.abs()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn full_absorption_equals_direct_path() {
        let (r, a, s) = setup();
        let mk = |order, absorption| {
            image_source_rir_with(
                &r,
                &a,
                &s,
                &RirParams {
                    max_order: order,
                    absorption,
                    len: 3000,
                    sample_rate: 16_000,
                    highpass_hz: RIR_HIGHPASS_HZ,
                },
            )
            .unwrap()
        };
        assert_eq!(mk(8, 1.0), mk(0, 1.0));
        assert_eq!(mk(0, 1.0), mk(0, 0.3));
    }

    #[test]
    fn source_outside_is_geometry_error() {
        let (r, a, mut s) = setup();
        s.position = [7.0, 1.0, 1.0];
        assert!(matches!(
            image_source_rir(&r, &a, &s, 3, 16_000),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn fast_kernel_matches_direct_windowed_sinc() {
        for &delay in &[50.0, 50.25, 61.731, 3.5, 199.99] {
            let mut h = vec![0.0; 200];
            add_fractional_impulse(&mut h, delay, 0.7);
            let width = SINC_HALF_WIDTH as f64 + 0.5;
            let c = (delay as f64).round() as i64;
            for (n, &v) in h.iter().enumerate() {
                let t = n as f64 - delay;
                let want = if (n as i64 - c).abs() > SINC_HALF_WIDTH {
                    0.0
                } else {
                    let sinc = if t.abs() < 1e-12 { 1.0 } else { (PI * t).sin() / (PI * t) };
                    0.7 * 0.5 * (1.0 + (PI * t / width).cos()) * sinc
                };
                assert!((v - want).abs() < 1e-12, "delay {delay}, n {n}: {v} vs {want}");
            }
        }
    }
}
