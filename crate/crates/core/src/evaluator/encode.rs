//! Stacked occupancy tensor fed to the evaluation network.

use crate::geometry::{footprint_polygon, GridSpec, OccupancyLayer, Point2};
use crate::scenario::{ObstacleClass, Scenario};
use crate::vehicle::{Gear, MotionState, VehicleParams};

/// Cells per side of the square input grid.
pub const GRID_SIZE: usize = 64;
/// Three obstacle classes, three vehicle bodies, gear, steer.
pub const CHANNELS: usize = 8;
/// Occupancy channels stored as bits; the last two are constant scalars.
pub const OCCUPANCY_CHANNELS: usize = 6;

pub const CH_CURRENT: usize = 3;
pub const CH_PARENT: usize = 4;
pub const CH_DESTINATION: usize = 5;
pub const CH_GEAR: usize = 6;
pub const CH_STEER: usize = 7;

/// Compact `CHANNELS × size × size` tensor: one bitmask byte per cell for the
/// occupancy channels plus the two constant numeric channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    pub size: usize,
    pub occupancy: Vec<u8>,
    pub gear: f64,
    pub steer: f64,
}

impl StateTensor {
    pub fn get(&self, channel: usize, iy: usize, ix: usize) -> f64 {
        match channel {
            CH_GEAR => self.gear,
            CH_STEER => self.steer,
            c => f64::from((self.occupancy[iy * self.size + ix] >> c) & 1),
        }
    }

    pub fn channel_count(&self, channel: usize) -> usize {
        assert!(channel < OCCUPANCY_CHANNELS);
        self.occupancy.iter().filter(|&&b| (b >> channel) & 1 == 1).count()
    }

    /// Channel-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.size * self.size;
        let mut out = vec![0.0; CHANNELS * n];
        for (i, &bits) in self.occupancy.iter().enumerate() {
            for c in 0..OCCUPANCY_CHANNELS {
                out[c * n + i] = f64::from((bits >> c) & 1);
            }
        }
        out[CH_GEAR * n..(CH_GEAR + 1) * n].fill(self.gear);
        out[CH_STEER * n..(CH_STEER + 1) * n].fill(self.steer);
        out
    }
}

/// Per-scenario constant layers (obstacles and destination) plus the grid.
#[derive(Debug, Clone)]
pub struct SceneEncoder {
    grid: GridSpec,
    base: Vec<u8>,
    vehicle: VehicleParams,
}

impl SceneEncoder {
    /// Square grid anchored at the lower-left bounds corner covering the larger extent.
    pub fn new(scenario: &Scenario) -> Self {
        let b = &scenario.bounds;
        let grid = GridSpec {
            origin: Point2::new(b.min_x, b.min_y),
            resolution: b.width().max(b.height()) / GRID_SIZE as f64,
            width: GRID_SIZE,
            height: GRID_SIZE,
        };
        Self::with_grid(scenario, grid)
    }

    pub fn with_grid(scenario: &Scenario, grid: GridSpec) -> Self {
        let mut base = vec![0u8; grid.cell_count()];
        for class in ObstacleClass::ALL {
            let mut layer = OccupancyLayer::empty(grid);
            for o in scenario.obstacles.iter().filter(|o| o.class == class) {
                layer.fill_polygon(&o.polygon);
            }
            set_bits(&mut base, &layer, class.channel());
        }
        let mut dest = OccupancyLayer::empty(grid);
        dest.fill_polygon(&footprint_polygon(&scenario.vehicle.footprint, &scenario.goal));
        set_bits(&mut base, &dest, CH_DESTINATION);
        Self {
            grid,
            base,
            vehicle: scenario.vehicle,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn encode(&self, state: &MotionState, parent: &MotionState) -> StateTensor {
        let mut occupancy = self.base.clone();
        for (s, channel) in [(state, CH_CURRENT), (parent, CH_PARENT)] {
            let mut layer = OccupancyLayer::empty(self.grid);
            layer.fill_polygon(&footprint_polygon(&self.vehicle.footprint, &s.pose));
            set_bits(&mut occupancy, &layer, channel);
        }
        StateTensor {
            size: self.grid.width,
            occupancy,
            gear: match state.gear {
                Gear::Forward => 1.0,
                Gear::Reverse => -1.0,
            },
            steer: (state.steer / self.vehicle.max_steer).clamp(-1.0, 1.0),
        }
    }
}

fn set_bits(dst: &mut [u8], layer: &OccupancyLayer, channel: usize) {
    for (d, &occ) in dst.iter_mut().zip(&layer.cells) {
        if occ {
            *d |= 1 << channel;
        }
    }
}
