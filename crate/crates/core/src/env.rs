//! Decoding environment: noise injection, faulty syndrome volumes, the
//! action history, referee-gated death and the reward rule.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::lattice::{CodeLayout, ErrorConfig, LatticeInput, Syndrome};
use crate::referee::Referee;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    p_phys: f64,
    p_meas: f64,
}

impl NoiseParams {
    pub fn new(p_phys: f64, p_meas: f64) -> Result<Self> {
        check_probability("p_phys", p_phys)?;
        check_probability("p_meas", p_meas)?;
        Ok(Self { p_phys, p_meas })
    }

    /// Equal physical and measurement error rates.
    pub fn uniform(p_err: f64) -> Result<Self> {
        Self::new(p_err, p_err)
    }

    pub fn p_phys(&self) -> f64 {
        self.p_phys
    }

    pub fn p_meas(&self) -> f64 {
        self.p_meas
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

/// Index into the action set: `0..d*d` flips a data qubit, `d*d` requests a
/// new syndrome volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn identity(num_qubits: usize) -> Self {
        ActionId(num_qubits)
    }

    pub fn is_identity(self, num_qubits: usize) -> bool {
        self.0 == num_qubits
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Agent observation: `depth` faulty syndrome slices followed by one
/// action-history slice, each a `(2d+1) x (2d+1)` binary grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EnvState {
    depth: usize,
    side: usize,
    cells: Vec<u8>,
}

impl EnvState {
    pub fn zeros(depth: usize, side: usize) -> Self {
        Self {
            depth,
            side,
            cells: vec![0; (depth + 1) * side * side],
        }
    }

    /// Builds a state from raw channel-major cells.
    pub fn from_cells(depth: usize, side: usize, cells: Vec<u8>) -> Result<Self> {
        let expected = (depth + 1) * side * side;
        if cells.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: cells.len(),
            });
        }
        Ok(Self { depth, side, cells })
    }

    /// Syndrome-volume depth (number of syndrome slices).
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.depth + 1
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels(), self.side, self.side]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn slice(&self, channel: usize) -> &[u8] {
        let n = self.side * self.side;
        &self.cells[channel * n..(channel + 1) * n]
    }

    fn slice_mut(&mut self, channel: usize) -> &mut [u8] {
        let n = self.side * self.side;
        &mut self.cells[channel * n..(channel + 1) * n]
    }

    pub fn history(&self) -> &[u8] {
        self.slice(self.depth)
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> bool {
        self.slice(channel)[row * self.side + col] != 0
    }

    /// Writes the state as `0.0 / 1.0` floats into `out` (channel-major).
    pub fn write_f32(&self, out: &mut [f32]) {
        assert_eq!(out.len(), self.cells.len());
        for (o, &c) in out.iter_mut().zip(&self.cells) {
            *o = c as f32;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepInfo {
    /// Completed syndrome cycles (identity actions survived).
    pub cycles: u64,
    pub steps: u64,
    pub corrective_actions: u64,
    pub rewarded_actions: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// `None` once the agent has died.
    pub next_state: Option<EnvState>,
    pub reward: f32,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of the optional episode trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub step: u64,
    pub action: usize,
    pub reward: u8,
    pub done: bool,
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    writeln!(out, "cycle,step,action,reward,done")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.cycle, r.step, r.action, r.reward, r.done as u8
        )?;
    }
    Ok(())
}

pub struct SurfaceEnv {
    layout: Arc<CodeLayout>,
    referee: Arc<dyn Referee>,
    noise: NoiseParams,
    depth: usize,
    rng: Rng,
    hidden: ErrorConfig,
    state: EnvState,
    info: StepInfo,
    terminated: bool,
    trace: Option<Vec<TraceRecord>>,
}

impl fmt::Debug for SurfaceEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceEnv")
            .field("d", &self.layout.distance())
            .field("noise", &self.noise)
            .field("depth", &self.depth)
            .field("referee", &self.referee.name())
            .field("info", &self.info)
            .finish()
    }
}

impl SurfaceEnv {
    /// A fresh environment; call [`SurfaceEnv::reset`] before stepping.
    pub fn new(
        layout: Arc<CodeLayout>,
        referee: Arc<dyn Referee>,
        noise: NoiseParams,
        depth: usize,
        rng: Rng,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("syndrome volume depth must be >= 1".into()));
        }
        let side = layout.grid_side();
        let hidden = layout.empty_errors();
        Ok(Self {
            layout,
            referee,
            noise,
            depth,
            rng,
            hidden,
            state: EnvState::zeros(depth, side),
            info: StepInfo::default(),
            terminated: true,
            trace: None,
        })
    }

    pub fn layout(&self) -> &CodeLayout {
        &self.layout
    }

    pub fn noise(&self) -> NoiseParams {
        self.noise
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_actions(&self) -> usize {
        self.layout.num_qubits() + 1
    }

    pub fn identity_action(&self) -> ActionId {
        ActionId::identity(self.layout.num_qubits())
    }

    pub fn hidden(&self) -> &ErrorConfig {
        &self.hidden
    }

    /// Replaces the hidden error; for scripted scenarios.
    pub fn set_hidden(&mut self, errors: ErrorConfig) -> Result<()> {
        if errors.len() != self.layout.num_qubits() {
            return Err(Error::LengthMismatch {
                expected: self.layout.num_qubits(),
                actual: errors.len(),
            });
        }
        self.hidden = errors;
        Ok(())
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn info(&self) -> StepInfo {
        self.info
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn perfect_syndrome(&self) -> Syndrome {
        self.layout.z_syndrome_unchecked(&self.hidden)
    }

    pub fn reset(&mut self) -> EnvState {
        self.hidden = self.layout.empty_errors();
        self.info = StepInfo::default();
        self.terminated = false;
        if let Some(trace) = &mut self.trace {
            trace.clear();
        }
        self.extract_volume();
        self.state.clone()
    }

    /// Injects one noise round before each slice and records the faulty
    /// measurement of the accumulated error; clears the action history.
    fn extract_volume(&mut self) {
        let n = self.layout.num_qubits();
        let checks = self.layout.num_z_checks();
        let (p_phys, p_meas) = (self.noise.p_phys, self.noise.p_meas);
        for slice in 0..self.depth {
            for q in 0..n {
                if self.rng.random::<f64>() < p_phys {
                    self.hidden.flip(q);
                }
            }
            let mut syndrome = self.layout.z_syndrome_unchecked(&self.hidden);
            for j in 0..checks {
                if self.rng.random::<f64>() < p_meas {
                    syndrome.flip(j);
                }
            }
            let grid = self
                .layout
                .encode_lattice(LatticeInput::Syndrome(&syndrome))
                .expect("syndrome length matches layout");
            self.state.slice_mut(slice).copy_from_slice(grid.cells());
        }
        let depth = self.depth;
        self.state.slice_mut(depth).fill(0);
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.terminated {
            return Err(Error::Terminated);
        }
        let n = self.layout.num_qubits();
        if action.0 > n {
            return Err(Error::InvalidAction {
                action: action.0,
                num_actions: n + 1,
            });
        }
        let cycle = self.info.cycles;
        self.info.steps += 1;
        let identity = action.is_identity(n);
        if !identity {
            self.hidden.flip(action.0);
            let (r, c) = self.layout.qubit_coords()[action.0];
            let side = self.state.side;
            let depth = self.depth;
            let cell = &mut self.state.slice_mut(depth)[r * side + c];
            *cell ^= 1;
            self.info.corrective_actions += 1;
        }

        let syndrome = self.layout.z_syndrome_unchecked(&self.hidden);
        let correction = self.referee.correction(&syndrome)?;
        let residual = self.hidden.compose(correction.flips())?;
        let alive = !self.layout.anticommutes_with_logical_z(&residual);
        let restored = syndrome.is_zero() && !self.layout.anticommutes_with_logical_z(&self.hidden);
        let reward = if restored { 1.0 } else { 0.0 };
        if restored {
            self.info.rewarded_actions += 1;
        }

        let next_state = if !alive {
            self.terminated = true;
            None
        } else {
            if identity {
                self.info.cycles += 1;
                self.extract_volume();
            }
            Some(self.state.clone())
        };

        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                cycle,
                step: self.info.steps,
                action: action.0,
                reward: restored as u8,
                done: !alive,
            });
        }

        Ok(StepOutcome {
            next_state,
            reward,
            done: !alive,
            info: self.info,
        })
    }
}

/// Running summary of one episode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub steps: u64,
    pub cycles: u64,
    pub total_reward: f64,
    pub died: bool,
}

impl EpisodeLog {
    pub fn record(&mut self, outcome: &StepOutcome) {
        self.steps = outcome.info.steps;
        self.cycles = outcome.info.cycles;
        self.total_reward += outcome.reward as f64;
        self.died |= outcome.done;
    }
}

/// Syndrome cycles survived before death or truncation.
pub fn qubit_lifetime(log: &EpisodeLog) -> u64 {
    log.cycles
}
