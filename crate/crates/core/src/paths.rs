//! Brownian paths on a [`TimeGrid`] with counter-based per-path streams.
//!
//! Path `m` draws from a ChaCha8 stream keyed by `(seed, m)`, so its
//! increments are identical however the paths are partitioned across
//! workers. Gaussians come from the inverse normal CDF of 53-bit uniforms
//! (no rejection loop, one uniform per draw).

use std::io::{self, Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coefficients::TimeGrid;
use crate::error::{domain, Error, Result};

/// Default cap on `M * N * d` (per stored array).
pub const DEFAULT_MEMORY_CAP: usize = 100_000_000;

/// Simulated Brownian increments and levels, row-major `[path][node][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    increments: Vec<f64>,
    levels: Vec<f64>,
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn simulate_paths(grid: &TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<PathBundle> {
    simulate_paths_with_cap(grid, dim, paths, seed, DEFAULT_MEMORY_CAP)
}

pub fn simulate_paths_with_cap(
    grid: &TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    memory_cap: usize,
) -> Result<PathBundle> {
    if paths == 0 || dim == 0 {
        return Err(domain(format!("need M >= 1 and d >= 1, got M = {paths}, d = {dim}")));
    }
    let nodes = grid.len();
    let size = paths
        .checked_mul(nodes)
        .and_then(|x| x.checked_mul(dim))
        .ok_or_else(|| Error::ResourceLimit("M * N * d overflows".into()))?;
    if size > memory_cap {
        return Err(Error::ResourceLimit(format!(
            "M * N * d = {size} exceeds the cap {memory_cap}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let steps = nodes - 1;
    let sd: Vec<f64> = (0..steps).map(|i| grid.step(i).sqrt()).collect();
    let inc_len = steps * dim;
    let lev_len = nodes * dim;
    let mut increments = vec![0.0; paths * inc_len];
    let mut levels = vec![0.0; paths * lev_len];
    increments
        .par_chunks_mut(inc_len.max(1))
        .zip(levels.par_chunks_mut(lev_len))
        .enumerate()
        .for_each(|(m, (inc, lev))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            for i in 0..steps {
                for k in 0..dim {
                    let z = normal.inverse_cdf(uniform_open(&mut rng));
                    let dw = sd[i] * z;
                    inc[i * dim + k] = dw;
                    lev[(i + 1) * dim + k] = lev[i * dim + k] + dw;
                }
            }
        });
    Ok(PathBundle {
        grid: grid.clone(),
        dim,
        paths,
        seed,
        increments,
        levels,
    })
}

impl PathBundle {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// `W` of path `m` at node `i`.
    pub fn level(&self, m: usize, i: usize) -> &[f64] {
        let base = (m * self.nodes() + i) * self.dim;
        &self.levels[base..base + self.dim]
    }

    /// `ΔW` of path `m` over step `i` (from node `i` to `i + 1`).
    pub fn increment(&self, m: usize, i: usize) -> &[f64] {
        let base = (m * (self.nodes() - 1) + i) * self.dim;
        &self.increments[base..base + self.dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn integrand_dim(&self, integrand: &[f64]) -> Result<usize> {
        let steps = self.nodes() - 1;
        if integrand.len() == steps {
            Ok(1)
        } else if integrand.len() == steps * self.dim {
            Ok(self.dim)
        } else {
            Err(domain(format!(
                "integrand has {} values; expected {} (scalar) or {} (per coordinate)",
                integrand.len(),
                steps,
                steps * self.dim
            )))
        }
    }

    fn step_sum(&self, m: usize, i: usize, integrand: &[f64], idim: usize) -> f64 {
        let dw = self.increment(m, i);
        if idim == 1 {
            integrand[i] * dw.iter().sum::<f64>()
        } else {
            (0..self.dim).map(|k| integrand[i * self.dim + k] * dw[k]).sum()
        }
    }

    /// Itô left-point sums `Σ_i β(t_i) · ΔW_i` per path. A scalar `β` (one value
    /// per step) multiplies every coordinate.
    pub fn stochastic_integral(&self, integrand: &[f64]) -> Result<Vec<f64>> {
        let idim = self.integrand_dim(integrand)?;
        let steps = self.nodes() - 1;
        Ok((0..self.paths)
            .into_par_iter()
            .map(|m| {
                let mut acc = 0.0;
                for i in 0..steps {
                    acc += self.step_sum(m, i, integrand, idim);
                }
                acc
            })
            .collect())
    }

    /// Running Itô sums at every node, row-major `[path][node]`, starting at 0.
    pub fn running_integrals(&self, integrand: &[f64]) -> Result<Vec<f64>> {
        let idim = self.integrand_dim(integrand)?;
        let nodes = self.nodes();
        let mut out = vec![0.0; self.paths * nodes];
        out.par_chunks_mut(nodes).enumerate().for_each(|(m, row)| {
            for i in 0..nodes - 1 {
                row[i + 1] = row[i] + self.step_sum(m, i, integrand, idim);
            }
        });
        Ok(out)
    }

    /// Little-endian dump: header `{seed, M, N, d}` as `u64`, then the
    /// increments row-major as `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in [self.seed, self.paths as u64, self.nodes() as u64, self.dim as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        for x in &self.increments {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`PathBundle::write_binary`] on `grid`.
    pub fn read_binary<R: Read>(mut input: R, grid: &TimeGrid) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            input
                .read_exact(&mut word)
                .map_err(|e| domain(format!("truncated path header: {e}")))?;
            *h = u64::from_le_bytes(word);
        }
        let [seed, paths, nodes, dim] = header;
        let (paths, nodes, dim) = (paths as usize, nodes as usize, dim as usize);
        if nodes != grid.len() {
            return Err(domain(format!("dump has {nodes} nodes, grid has {}", grid.len())));
        }
        let inc_len = paths * (nodes - 1) * dim;
        let mut increments = Vec::with_capacity(inc_len);
        for _ in 0..inc_len {
            input
                .read_exact(&mut word)
                .map_err(|e| domain(format!("truncated path body: {e}")))?;
            increments.push(f64::from_le_bytes(word));
        }
        let mut levels = vec![0.0; paths * nodes * dim];
        for m in 0..paths {
            for i in 0..nodes - 1 {
                for k in 0..dim {
                    levels[(m * nodes + i + 1) * dim + k] =
                        levels[(m * nodes + i) * dim + k] + increments[(m * (nodes - 1) + i) * dim + k];
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            dim,
            paths,
            seed,
            increments,
            levels,
        })
    }
}
