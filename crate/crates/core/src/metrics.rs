//! Evaluation metrics: lifetime, energy consumption rate and the total
//! variation distance of the residual energy distribution from uniform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic::SimulationTrace;
use crate::topology::NetworkInstance;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("energy distribution is undefined: total energy is zero")]
    ZeroTotal,
    #[error("energy vector is empty")]
    Empty,
    #[error("energy of node {0} is negative or not finite")]
    BadEnergy(usize),
    #[error("lifetime must be positive")]
    ZeroLifetime,
}

/// Total consumed energy over lifetime, in joules per hour.
pub fn energy_consumption_rate(trace: &SimulationTrace) -> Result<f64, MetricsError> {
    let hours = trace.lifetime_hours();
    if !(hours > 0.0) {
        return Err(MetricsError::ZeroLifetime);
    }
    Ok(trace.total_consumed_j() / hours)
}

fn normalized(energies: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if energies.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(u) = energies.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(MetricsError::BadEnergy(u));
    }
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Err(MetricsError::ZeroTotal);
    }
    Ok(energies.iter().map(|e| e / total).collect())
}

/// `1/2 * sum |p - q|` between two distributions over the same support.
pub fn tvd_between(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over the same support");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Distance between the normalized energy vector and the uniform
/// distribution over its nodes. Zero exactly when every node holds the same
/// energy.
pub fn total_variation_distance(energies: &[f64]) -> Result<f64, MetricsError> {
    let p = normalized(energies)?;
    let u = 1.0 / p.len() as f64;
    Ok(0.5 * p.iter().map(|x| (x - u).abs()).sum::<f64>())
}

/// The same distance computed as the mass the energy distribution puts above
/// uniform.
pub fn total_variation_distance_one_sided(energies: &[f64]) -> Result<f64, MetricsError> {
    let p = normalized(energies)?;
    let u = 1.0 / p.len() as f64;
    Ok(p.iter().filter(|&&x| x > u).map(|x| x - u).sum())
}

/// True when the residual distribution is within `mu` of uniform.
pub fn is_energy_balanced(energies: &[f64], mu: f64) -> Result<bool, MetricsError> {
    Ok(total_variation_distance(energies)? <= mu)
}

/// Entries of `energies` belonging to non-cache nodes.
pub fn field_only(instance: &NetworkInstance, energies: &[f64]) -> Vec<f64> {
    energies
        .iter()
        .enumerate()
        .filter(|&(u, _)| !instance.nodes()[u].is_cache)
        .map(|(_, &e)| e)
        .collect()
}

/// Metrics of one completed simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub nodes: usize,
    pub caches: usize,
    pub consumers: usize,
    pub seed: u64,
    pub lifetime_h: f64,
    pub energy_rate_j_per_h: f64,
    pub tvd_all: f64,
    pub tvd_field: f64,
}

impl RunSummary {
    pub fn from_trace(
        instance: &NetworkInstance,
        trace: &SimulationTrace,
        algorithm: &str,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            algorithm: algorithm.to_string(),
            nodes: instance.node_count(),
            caches: instance.caches().len(),
            consumers: instance.data().len(),
            seed,
            lifetime_h: trace.lifetime_hours(),
            energy_rate_j_per_h: energy_consumption_rate(trace)?,
            tvd_all: total_variation_distance(&trace.remaining_j)?,
            tvd_field: total_variation_distance(&field_only(instance, &trace.remaining_j))?,
        })
    }
}
