//! Uniform-linear-array steering vectors, the cosine-uniform angular grid
//! dictionary, and sparse multipath channel realizations.

use std::collections::HashSet;
use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMat, CVec, C64};

/// Half-wavelength element spacing.
pub const HALF_WAVELENGTH: f64 = 0.5;

/// Array response of an `num_antennas`-element ULA towards `angle`,
/// normalized to unit Euclidean norm.
pub fn steering_vector(num_antennas: usize, angle: f64, spacing_ratio: f64) -> Result<CVec> {
    if num_antennas == 0 {
        return Err(Error::Config("steering vector needs at least one antenna".into()));
    }
    if !angle.is_finite() {
        return Err(Error::Domain(format!("non-finite steering angle {angle}")));
    }
    if !(spacing_ratio.is_finite() && spacing_ratio > 0.0) {
        return Err(Error::Domain(format!("element spacing ratio must be positive, got {spacing_ratio}")));
    }
    let scale = 1.0 / (num_antennas as f64).sqrt();
    let step = TAU * spacing_ratio * angle.cos();
    Ok(CVec::from_fn(num_antennas, |n, _| C64::from_polar(scale, step * n as f64)))
}

/// Steering vectors sampled on the grid `cos(angle_g) = 2(g-1)/G - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDictionary {
    pub num_antennas: usize,
    pub grid_angles: Vec<f64>,
    /// `num_antennas x num_grids`, one unit-norm steering vector per column.
    pub matrix: CMat,
    pub element_spacing_ratio: f64,
}

impl AngularDictionary {
    pub fn num_grids(&self) -> usize {
        self.grid_angles.len()
    }
}

pub fn build_dictionary(num_antennas: usize, num_grids: usize, spacing_ratio: f64) -> Result<AngularDictionary> {
    if num_antennas == 0 {
        return Err(Error::Config("dictionary needs at least one antenna".into()));
    }
    if num_grids <= num_antennas {
        return Err(Error::Config(format!(
            "grid size {num_grids} must exceed the antenna count {num_antennas}"
        )));
    }
    let g = num_grids as f64;
    let grid_angles: Vec<f64> = (0..num_grids)
        .map(|idx| (2.0 * idx as f64 / g - 1.0).clamp(-1.0, 1.0).acos())
        .collect();
    let mut matrix = CMat::zeros(num_antennas, num_grids);
    for (col, &angle) in grid_angles.iter().enumerate() {
        matrix.set_column(col, &steering_vector(num_antennas, angle, spacing_ratio)?);
    }
    Ok(AngularDictionary { num_antennas, grid_angles, matrix, element_spacing_ratio: spacing_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridMode {
    /// Paths sit exactly on dictionary grid points.
    #[default]
    OnGrid,
    /// Path angles are continuous, `cos` uniform on `[-1, 1]`.
    OffGrid,
}

/// One propagation path. Grid indices are present only for on-grid paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    pub aod: f64,
    pub aoa: f64,
    pub aod_index: Option<usize>,
    pub aoa_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub num_tx: usize,
    pub num_rx: usize,
    pub paths: Vec<Path>,
    /// `num_rx x num_tx` channel matrix.
    pub dense: CMat,
    /// `vec` of the `G_r x G_t` angular-domain matrix (on-grid only).
    pub angular_vector: Option<CVec>,
    /// Nonzero positions of `angular_vector`, sorted.
    pub support: Vec<usize>,
}

impl ChannelRealization {
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Assembles a channel from explicit paths. When every path carries grid
    /// indices the angular vector is populated and the dense matrix is built
    /// from it, otherwise the dense matrix is the continuous path sum.
    pub fn from_paths(dict_tx: &AngularDictionary, dict_rx: &AngularDictionary, paths: Vec<Path>) -> Result<Self> {
        let num_paths = paths.len();
        if num_paths == 0 {
            return Err(Error::Domain("a channel needs at least one path".into()));
        }
        let (nt, nr) = (dict_tx.num_antennas, dict_rx.num_antennas);
        let (gt, gr) = (dict_tx.num_grids(), dict_rx.num_grids());
        let scale = ((nt * nr) as f64 / num_paths as f64).sqrt();
        let on_grid = paths.iter().all(|p| p.aod_index.is_some() && p.aoa_index.is_some());

        if on_grid {
            let mut angular = CMat::zeros(gr, gt);
            for p in &paths {
                let (it, ir) = (p.aod_index.unwrap(), p.aoa_index.unwrap());
                if it >= gt || ir >= gr {
                    return Err(Error::Domain(format!("grid index ({it}, {ir}) outside ({gt}, {gr})")));
                }
                angular[(ir, it)] += p.gain * scale;
            }
            let dense = &dict_rx.matrix * &angular * dict_tx.matrix.adjoint();
            let angular_vector = crate::linalg::vec(&angular);
            let support = angular_vector
                .iter()
                .enumerate()
                .filter(|(_, z)| z.norm() > 0.0)
                .map(|(i, _)| i)
                .collect();
            Ok(Self { num_tx: nt, num_rx: nr, paths, dense, angular_vector: Some(angular_vector), support })
        } else {
            let mut dense = CMat::zeros(nr, nt);
            for p in &paths {
                let ar = steering_vector(nr, p.aoa, dict_rx.element_spacing_ratio)?;
                let at = steering_vector(nt, p.aod, dict_tx.element_spacing_ratio)?;
                dense += ar * at.adjoint() * (p.gain * scale);
            }
            Ok(Self { num_tx: nt, num_rx: nr, paths, dense, angular_vector: None, support: Vec::new() })
        }
    }
}

/// Draws a sparse channel with `num_paths` paths and `CN(0, 1/L)` gains.
///
/// On-grid mode picks distinct (AoD, AoA) grid pairs uniformly at random by
/// rejection, so the angular vector has exactly `num_paths` nonzeros.
pub fn sample_channel<R: Rng + ?Sized>(
    dict_tx: &AngularDictionary,
    dict_rx: &AngularDictionary,
    num_paths: usize,
    mode: GridMode,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if num_paths == 0 {
        return Err(Error::Domain("number of paths must be positive".into()));
    }
    let (gt, gr) = (dict_tx.num_grids(), dict_rx.num_grids());
    if num_paths > gt.min(gr) {
        return Err(Error::Config(format!("{num_paths} paths exceed min(G_t, G_r) = {}", gt.min(gr))));
    }
    let variance = 1.0 / num_paths as f64;
    let mut paths = Vec::with_capacity(num_paths);
    match mode {
        GridMode::OnGrid => {
            let mut taken = HashSet::with_capacity(num_paths);
            while paths.len() < num_paths {
                let it = rng.random_range(0..gt);
                let ir = rng.random_range(0..gr);
                if !taken.insert((it, ir)) {
                    continue;
                }
                paths.push(Path {
                    gain: complex_gaussian(variance, rng),
                    aod: dict_tx.grid_angles[it],
                    aoa: dict_rx.grid_angles[ir],
                    aod_index: Some(it),
                    aoa_index: Some(ir),
                });
            }
        }
        GridMode::OffGrid => {
            for _ in 0..num_paths {
                let aod = rng.random_range(-1.0..=1.0f64).acos();
                let aoa = rng.random_range(-1.0..=1.0f64).acos();
                paths.push(Path { gain: complex_gaussian(variance, rng), aod, aoa, aod_index: None, aoa_index: None });
            }
        }
    }
    ChannelRealization::from_paths(dict_tx, dict_rx, paths)
}
