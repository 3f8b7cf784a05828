//! Room geometry, propagation and the per-state expected rate map.
//!
//! The application area is a rectangular room tiled into square states. A
//! ceiling-mounted transmitter with `L` antennas serves single-antenna users
//! standing anywhere on the floor. Large-scale attenuation follows the indoor
//! log-distance model `32.4 + 20 log10(f[GHz]) + 10 η log10(d[m]) + ζ`, where
//! the shadowing term `ζ` is drawn once per state and then frozen. Small-scale
//! fading is i.i.d. Rayleigh.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHADOWING_STREAM: u64 = 1;
const RATE_STREAM: u64 = 2;

/// Scenario geometry and propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub room_width_m: f64,
    pub room_depth_m: f64,
    pub tile_size_m: f64,
    /// Transmitter position `[x, y, height]` in meters; users stand at height 0.
    pub tx_position: [f64; 3],
    pub antenna_count: usize,
    pub spatial_multiplexing_gain: usize,
    pub carrier_frequency_ghz: f64,
    pub pathloss_exponent: f64,
    pub shadowing_std_db: f64,
    pub noise_power: f64,
    pub border_snr_db: f64,
    pub prelog_factor: f64,
    pub bandwidth: f64,
    pub file_size: f64,
    /// Monte Carlo samples per state for the expected rate estimate.
    pub rate_samples: usize,
    pub rng_seed: u64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            room_width_m: 10.0,
            room_depth_m: 10.0,
            tile_size_m: 1.0,
            tx_position: [5.0, 5.0, 5.0],
            antenna_count: 4,
            spatial_multiplexing_gain: 2,
            carrier_frequency_ghz: 3.5,
            pathloss_exponent: 3.0,
            shadowing_std_db: 8.0,
            noise_power: 1.0,
            border_snr_db: 0.0,
            prelog_factor: 1.0,
            bandwidth: 1.0,
            file_size: 1.0,
            rate_samples: 1000,
            rng_seed: 1,
        }
    }
}

impl EnvironmentConfig {
    /// Full-scale room: 30 m x 30 m with 1 m tiles and 32 antennas.
    pub fn full_scale() -> Self {
        Self {
            room_width_m: 30.0,
            room_depth_m: 30.0,
            tx_position: [15.0, 15.0, 5.0],
            antenna_count: 32,
            ..Self::default()
        }
    }

    fn tiles_along(&self, extent: f64) -> Result<usize> {
        let n = extent / self.tile_size_m;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Config(format!(
                "room extent {extent} m is not a whole number of {} m tiles",
                self.tile_size_m
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("room_width_m", self.room_width_m),
            ("room_depth_m", self.room_depth_m),
            ("tile_size_m", self.tile_size_m),
            ("carrier_frequency_ghz", self.carrier_frequency_ghz),
            ("pathloss_exponent", self.pathloss_exponent),
            ("noise_power", self.noise_power),
            ("prelog_factor", self.prelog_factor),
            ("bandwidth", self.bandwidth),
            ("file_size", self.file_size),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::Config("shadowing_std_db must be nonnegative".into()));
        }
        if self.antenna_count == 0 {
            return Err(Error::Config("antenna_count must be at least 1".into()));
        }
        if self.spatial_multiplexing_gain == 0 || self.spatial_multiplexing_gain > self.antenna_count {
            return Err(Error::Config(format!(
                "spatial_multiplexing_gain must lie in 1..={}, got {}",
                self.antenna_count, self.spatial_multiplexing_gain
            )));
        }
        if self.rate_samples == 0 {
            return Err(Error::Config("rate_samples must be at least 1".into()));
        }
        self.tiles_along(self.room_width_m)?;
        self.tiles_along(self.room_depth_m)?;
        Ok(())
    }

    /// `C_p * Ω / F`, the factor converting bits/s/Hz into files/second.
    pub fn rate_scale(&self) -> f64 {
        self.prelog_factor * self.bandwidth / self.file_size
    }

    pub fn state_count(&self) -> Result<usize> {
        Ok(self.tiles_along(self.room_width_m)? * self.tiles_along(self.room_depth_m)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub index: usize,
    pub center: [f64; 3],
    /// Distance from the tile center to the transmitter, meters.
    pub distance_m: f64,
    pub shadowing_db: f64,
}

/// The tiled room. States are numbered row-major: `index = row * columns + column`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub columns: usize,
    pub rows: usize,
    pub tile_size_m: f64,
    pub states: Vec<State>,
}

impl StateGrid {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, index: usize) -> Result<&State> {
        self.states
            .get(index)
            .ok_or_else(|| Error::Domain(format!("unknown state index {index}")))
    }

    /// State with the largest distance to the transmitter; ties go to the lowest index.
    pub fn farthest_state(&self) -> &State {
        let mut best = &self.states[0];
        for s in &self.states[1..] {
            if s.distance_m > best.distance_m {
                best = s;
            }
        }
        best
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lays out the tile lattice and draws the frozen per-state shadowing map.
pub fn build_grid(config: &EnvironmentConfig) -> Result<StateGrid> {
    config.validate()?;
    let columns = config.tiles_along(config.room_width_m)?;
    let rows = config.tiles_along(config.room_depth_m)?;
    let tile = config.tile_size_m;
    let mut rng = stream_rng(config.rng_seed, SHADOWING_STREAM);
    let shadow = Normal::new(0.0, config.shadowing_std_db)
        .map_err(|e| Error::Config(format!("shadowing distribution: {e}")))?;

    let mut states = Vec::with_capacity(rows * columns);
    for row in 0..rows {
        for col in 0..columns {
            let center = [(col as f64 + 0.5) * tile, (row as f64 + 0.5) * tile, 0.0];
            let distance_m = distance(center, config.tx_position);
            if distance_m <= 0.0 {
                return Err(Error::Domain(format!(
                    "state {} coincides with the transmitter",
                    row * columns + col
                )));
            }
            states.push(State {
                index: row * columns + col,
                center,
                distance_m,
                shadowing_db: shadow.sample(&mut rng),
            });
        }
    }
    Ok(StateGrid { columns, rows, tile_size_m: tile, states })
}

/// Log-distance path loss in dB at distance `distance_m` with shadowing `shadowing_db`.
pub fn pathloss_at(distance_m: f64, shadowing_db: f64, config: &EnvironmentConfig) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    Ok(32.4
        + 20.0 * config.carrier_frequency_ghz.log10()
        + 10.0 * config.pathloss_exponent * distance_m.log10()
        + shadowing_db)
}

/// Path loss of a state, measured at the tile center and including its shadowing.
pub fn pathloss_db(state: &State, config: &EnvironmentConfig) -> Result<f64> {
    pathloss_at(state.distance_m, state.shadowing_db, config)
}

/// Linear power gain `10^(-PL/10)` of a state.
pub fn path_gain(state: &State, config: &EnvironmentConfig) -> Result<f64> {
    Ok(db_to_linear(-pathloss_db(state, config)?))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Transmit power giving `border_snr_db` mean SNR at the farthest state,
/// ignoring shadowing.
pub fn calibrate_power(config: &EnvironmentConfig, grid: &StateGrid) -> Result<f64> {
    let border = grid.farthest_state();
    let pl = pathloss_at(border.distance_m, 0.0, config)?;
    Ok(config.noise_power * db_to_linear(config.border_snr_db) * db_to_linear(pl))
}

/// Mean SNR in dB at the farthest state for a given transmit power, ignoring shadowing.
pub fn border_snr_db(config: &EnvironmentConfig, grid: &StateGrid, transmit_power: f64) -> Result<f64> {
    let border = grid.farthest_state();
    let pl = pathloss_at(border.distance_m, 0.0, config)?;
    Ok(linear_to_db(transmit_power / config.noise_power) - pl)
}

/// Per-user channel vectors for one user drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub states: Vec<usize>,
    pub channels: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    pub fn user_count(&self) -> usize {
        self.states.len()
    }
}

/// Draws a circularly-symmetric complex Gaussian vector with identity covariance.
pub fn rayleigh_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect()
}

/// `h_k = sqrt(gain(s_k)) * g_k` with `g_k ~ CN(0, I_L)`.
pub fn draw_channels<R: Rng + ?Sized>(
    grid: &StateGrid,
    user_states: &[usize],
    config: &EnvironmentConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let mut channels = Vec::with_capacity(user_states.len());
    for &s in user_states {
        let amplitude = path_gain(grid.state(s)?, config)?.sqrt();
        let g = rayleigh_vector(config.antenna_count, rng);
        channels.push(g.into_iter().map(|x| x * amplitude).collect());
    }
    Ok(ChannelRealization { states: user_states.to_vec(), channels })
}

/// Normalized expected throughput per state, files/second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMap {
    pub rates: Vec<f64>,
}

impl RateMap {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("rate map is empty".into()));
        }
        if let Some((s, r)) = rates.iter().enumerate().find(|(_, r)| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("rate of state {s} must be positive, got {r}")));
        }
        Ok(Self { rates })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Reads `state_index,rate` rows; lines starting with `#` are ignored.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for record in reader.deserialize() {
            let row: RateRow = record?;
            rows.push((row.state_index, row.rate));
        }
        rows.sort_by_key(|r| r.0);
        for (expected, (idx, _)) in rows.iter().enumerate() {
            if *idx != expected {
                return Err(Error::Config(format!(
                    "rate map indices must cover 0..{} exactly once",
                    rows.len()
                )));
            }
        }
        Self::new(rows.into_iter().map(|r| r.1).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "# {header}")?;
        let mut writer = csv::Writer::from_writer(out);
        for (state_index, &rate) in self.rates.iter().enumerate() {
            writer.serialize(RateRow { state_index, rate })?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RateRow {
    state_index: usize,
    rate: f64,
}

/// One rate sample `scale * log2(1 + P_T |h|^2 / N0)`.
pub fn rate_sample(transmit_power: f64, channel_norm_sq: f64, noise_power: f64, scale: f64) -> f64 {
    scale * (1.0 + transmit_power * channel_norm_sq / noise_power).log2()
}

/// The eight symmetries of the square applied to an in-tile offset.
fn square_image(offset: (f64, f64), image: usize) -> (f64, f64) {
    let (x, y) = if image & 4 == 0 { offset } else { (offset.1, offset.0) };
    let x = if image & 1 == 0 { x } else { -x };
    let y = if image & 2 == 0 { y } else { -y };
    (x, y)
}

/// Monte Carlo estimate of the per-state expected single-user rate.
///
/// Every state sees the same sequence of in-tile offsets and fading norms
/// (common random numbers), and offsets are used in groups of the eight
/// square symmetries so that the estimate depends on geometry only through
/// the tile's placement relative to the transmitter.
pub fn estimate_rate_map(
    grid: &StateGrid,
    config: &EnvironmentConfig,
    transmit_power: f64,
    n_samples: usize,
) -> Result<RateMap> {
    if n_samples == 0 {
        return Err(Error::Config("rate estimation needs at least one sample".into()));
    }
    let mut rng = stream_rng(config.rng_seed, RATE_STREAM);
    let half = grid.tile_size_m / 2.0;
    let bases = n_samples.div_ceil(8);
    let draws: Vec<((f64, f64), f64)> = (0..bases)
        .map(|_| {
            let offset = (rng.gen_range(-half..half), rng.gen_range(-half..half));
            let norm_sq: f64 = rayleigh_vector(config.antenna_count, &mut rng)
                .iter()
                .map(|g| g.norm_sqr())
                .sum();
            (offset, norm_sq)
        })
        .collect();

    let scale = config.rate_scale();
    let mut rates = Vec::with_capacity(grid.len());
    for state in &grid.states {
        let mut acc = 0.0;
        for i in 0..n_samples {
            let (offset, norm_sq) = draws[i / 8];
            let (dx, dy) = square_image(offset, i % 8);
            let pos = [state.center[0] + dx, state.center[1] + dy, state.center[2]];
            let pl = pathloss_at(distance(pos, config.tx_position), state.shadowing_db, config)?;
            acc += rate_sample(transmit_power, norm_sq * db_to_linear(-pl), config.noise_power, scale);
        }
        rates.push(acc / n_samples as f64);
    }
    RateMap::new(rates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shadowless(width: f64, tile: f64) -> EnvironmentConfig {
        EnvironmentConfig {
            room_width_m: width,
            room_depth_m: width,
            tile_size_m: tile,
            tx_position: [width / 2.0, width / 2.0, 5.0],
            shadowing_std_db: 0.0,
            ..EnvironmentConfig::default()
        }
    }

    #[test]
    fn full_room_has_900_states() {
        let grid = build_grid(&EnvironmentConfig::full_scale()).unwrap();
        assert_eq!(grid.len(), 900);
        for (i, s) in grid.states.iter().enumerate() {
            assert_eq!(s.index, i);
            assert!(s.distance_m > 0.0);
        }
    }

    #[test]
    fn single_tile_room() {
        let cfg = EnvironmentConfig { tx_position: [1.0, 2.0, 5.0], ..shadowless(5.0, 5.0) };
        let grid = build_grid(&cfg).unwrap();
        assert_eq!(grid.len(), 1);
        let expected = (1.5f64.powi(2) + 0.5f64.powi(2) + 25.0).sqrt();
        assert!((grid.states[0].distance_m - expected).abs() < 1e-12);
        assert_eq!(grid.farthest_state().index, 0);
    }

    #[test]
    fn symmetric_quadrants_share_distance() {
        let grid = build_grid(&shadowless(4.0, 2.0)).unwrap();
        assert_eq!(grid.len(), 4);
        let d0 = grid.states[0].distance_m;
        assert!(grid.states.iter().all(|s| (s.distance_m - d0).abs() < 1e-12));
        // ties resolve to the lowest index
        assert_eq!(grid.farthest_state().index, 0);
    }

    #[test]
    fn indivisible_room_is_rejected() {
        let cfg = shadowless(5.0, 2.0);
        assert!(matches!(build_grid(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn shadowing_is_seeded() {
        let cfg = EnvironmentConfig { shadowing_std_db: 8.0, ..shadowless(10.0, 1.0) };
        let a = build_grid(&cfg).unwrap();
        let b = build_grid(&cfg).unwrap();
        assert_eq!(a, b);
        let c = build_grid(&EnvironmentConfig { rng_seed: 99, ..cfg }).unwrap();
        assert_ne!(a.states[0].shadowing_db, c.states[0].shadowing_db);
    }

    fn state_at(distance_m: f64, shadowing_db: f64) -> State {
        State { index: 0, center: [0.0; 3], distance_m, shadowing_db }
    }

    #[test]
    fn pathloss_hand_values() {
        let cfg = EnvironmentConfig { carrier_frequency_ghz: 1.0, pathloss_exponent: 3.0, ..Default::default() };
        assert!((pathloss_db(&state_at(1.0, 0.0), &cfg).unwrap() - 32.4).abs() < 1e-12);
        assert!((pathloss_db(&state_at(10.0, 0.0), &cfg).unwrap() - 62.4).abs() < 1e-12);
        let cfg2 = EnvironmentConfig { carrier_frequency_ghz: 2.0, ..cfg.clone() };
        // 32.4 + 20 log10(2) + 30 + 5
        let expected = 67.4 + 20.0 * 2f64.log10();
        let got = pathloss_db(&state_at(10.0, 5.0), &cfg2).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 73.42).abs() < 5e-3);
        assert!(matches!(pathloss_db(&state_at(0.0, 0.0), &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn calibration_round_trip() {
        // border distance 10 m with f = 1 GHz, eta = 3 gives 62.4 dB
        let cfg = EnvironmentConfig {
            carrier_frequency_ghz: 1.0,
            border_snr_db: 0.0,
            ..shadowless(5.0, 5.0)
        };
        let grid = StateGrid {
            columns: 1,
            rows: 1,
            tile_size_m: 5.0,
            states: vec![State { index: 0, center: [0.0; 3], distance_m: 10.0, shadowing_db: 3.0 }],
        };
        let p = calibrate_power(&cfg, &grid).unwrap();
        assert!((p / 10f64.powf(6.24) - 1.0).abs() < 1e-12);
        let p10 = calibrate_power(&EnvironmentConfig { border_snr_db: 10.0, ..cfg.clone() }, &grid).unwrap();
        assert!((p10 / p - 10.0).abs() < 1e-9);
        for snr in [-5.0, 0.0, 7.5, 15.0] {
            let c = EnvironmentConfig { border_snr_db: snr, ..cfg.clone() };
            let p = calibrate_power(&c, &grid).unwrap();
            assert!((border_snr_db(&c, &grid, p).unwrap() - snr).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_fading_has_unit_mean_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|_| rayleigh_vector(1, &mut rng)[0].norm_sqr()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn channel_power_matches_path_gain() {
        let cfg = EnvironmentConfig { antenna_count: 4, ..shadowless(4.0, 2.0) };
        let grid = build_grid(&cfg).unwrap();
        let gain = path_gain(&grid.states[1], &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let users = vec![1; 10_000];
        let real = draw_channels(&grid, &users, &cfg, &mut rng).unwrap();
        let mean = real
            .channels
            .iter()
            .map(|h| h.iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / (users.len() as f64 * 4.0 * gain);
        assert!((mean - 1.0).abs() < 0.05, "normalized power {mean}");
        assert!(real.channels.iter().flatten().all(|x| x.re.is_finite() && x.im.is_finite()));
    }

    #[test]
    fn channels_are_deterministic_and_independent() {
        let cfg = shadowless(4.0, 2.0);
        let grid = build_grid(&cfg).unwrap();
        let a = draw_channels(&grid, &[2, 2], &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = draw_channels(&grid, &[2, 2], &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.channels[0], a.channels[1]);
        assert!(matches!(
            draw_channels(&grid, &[4], &cfg, &mut ChaCha8Rng::seed_from_u64(5)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn closed_form_rate_sample() {
        assert!((rate_sample(1.0, 1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rate_map_is_monotone_without_shadowing() {
        let cfg = EnvironmentConfig { rate_samples: 200, ..shadowless(10.0, 1.0) };
        let grid = build_grid(&cfg).unwrap();
        let p = calibrate_power(&cfg, &grid).unwrap();
        let map = estimate_rate_map(&grid, &cfg, p, cfg.rate_samples).unwrap();
        for a in &grid.states {
            for b in &grid.states {
                if a.distance_m < b.distance_m - 1e-9 {
                    assert!(
                        map.rates[a.index] >= map.rates[b.index],
                        "state {} (d={}) rate {} < state {} (d={}) rate {}",
                        a.index, a.distance_m, map.rates[a.index], b.index, b.distance_m, map.rates[b.index]
                    );
                }
            }
        }
        // mirror-image states agree up to float rounding
        assert!((map.rates[0] - map.rates[99]).abs() < 1e-9 * map.rates[0]);
    }

    #[test]
    fn rate_map_csv_round_trip() {
        let map = RateMap::new(vec![3000.0, 2000.0, 1000.0, 2000.0, 3000.0]).unwrap();
        let mut buf = Vec::new();
        map.write_csv("test", &mut buf).unwrap();
        let dir = std::env::temp_dir().join(format!("ldcc-ratemap-{}", std::process::id()));
        std::fs::write(&dir, &buf).unwrap();
        let back = RateMap::read_csv(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(back, map);
    }

    #[test]
    fn rate_map_rejects_nonpositive() {
        assert!(RateMap::new(vec![1.0, 0.0]).is_err());
        assert!(RateMap::new(vec![]).is_err());
    }
}
