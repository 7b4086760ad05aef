use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::rng;

/// Scenario ids partitioned for training, testing and validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

/// Seeded shuffle, then 70/15/15 with test and validation each `round(0.15 n)`.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<DatasetSplit, DataError> {
    let n = ids.len();
    if n < 3 {
        return Err(DataError::TooFewScenarios(n));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng::seeded(seed));
    let held = ((0.15 * n as f64).round() as usize).max(1);
    let validation = shuffled.split_off(n - held);
    let test = shuffled.split_off(n - 2 * held);
    Ok(DatasetSplit {
        train: shuffled,
        test,
        validation,
    })
}
