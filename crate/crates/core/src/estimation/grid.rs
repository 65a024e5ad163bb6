use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::agent::AgentIndex;

/// Branch record as stored in case files: series admittance `g + jb` and
/// total line charging susceptance `bsh`, split evenly between both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    #[serde(default)]
    pub bsh: f64,
}

impl BranchRecord {
    pub fn series(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }

    /// Shunt admittance at each end.
    pub fn end_shunt(&self) -> Complex64 {
        Complex64::new(0.0, self.bsh / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusAgent {
    pub bus: usize,
    pub agent: AgentIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseVoltage {
    pub vm: f64,
    pub va_deg: f64,
}

/// True-state generator: base phasors plus a Gaussian random walk on the
/// rectangular components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub base: Vec<BaseVoltage>,
    #[serde(default)]
    pub perturbation_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCase {
    #[serde(default)]
    pub name: String,
    pub n_bus: usize,
    pub branches: Vec<BranchRecord>,
    pub agents: Vec<BusAgent>,
    pub states: StateSpec,
}

const CASE5: &str = include_str!("../../data/case5.json");
const CASE118: &str = include_str!("../../data/case118_synthetic.json");

impl GridCase {
    pub fn from_json(text: &str) -> Result<Self, EstimationError> {
        let case: GridCase =
            serde_json::from_str(text).map_err(|e| EstimationError::InvalidCase(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    /// Cases shipped with the crate: `case5` and `case118`.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "case5" => CASE5,
            "case118" => CASE118,
            _ => return None,
        };
        Some(Self::from_json(text).expect("shipped case files are valid"))
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |msg: String| Err(EstimationError::InvalidCase(msg));
        if self.n_bus == 0 {
            return bad("case has no buses".into());
        }
        for (idx, br) in self.branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if end == 0 || end > self.n_bus {
                    return bad(format!("branch {idx} endpoint {end} outside 1..={}", self.n_bus));
                }
            }
            if br.from == br.to {
                return bad(format!("branch {idx} is a self loop at bus {}", br.from));
            }
        }
        let mut seen = HashSet::new();
        for ba in &self.agents {
            if ba.bus == 0 || ba.bus > self.n_bus {
                return bad(format!("agent {} mapped to missing bus {}", ba.agent, ba.bus));
            }
            if !seen.insert(ba.bus) {
                return bad(format!("bus {} has more than one agent", ba.bus));
            }
        }
        if self.states.base.len() != self.n_bus {
            return bad(format!(
                "{} base voltages for {} buses",
                self.states.base.len(),
                self.n_bus
            ));
        }
        if self.states.perturbation_sigma.is_nan() || self.states.perturbation_sigma < 0.0 {
            return bad("perturbation_sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n_bus
    }

    /// Buses (1-based) whose PMU belongs to `agent`, ascending.
    pub fn buses_of(&self, agent: AgentIndex) -> Vec<usize> {
        let mut buses: Vec<usize> = self
            .agents
            .iter()
            .filter(|ba| ba.agent == agent)
            .map(|ba| ba.bus)
            .collect();
        buses.sort_unstable();
        buses
    }

    pub fn agent_list(&self) -> Vec<AgentIndex> {
        let mut v: Vec<AgentIndex> = self.agents.iter().map(|ba| ba.agent).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Branches touching `bus`, in file order.
    pub fn incident(&self, bus: usize) -> impl Iterator<Item = &BranchRecord> {
        self.branches
            .iter()
            .filter(move |br| br.from == bus || br.to == bus)
    }

    pub fn base_state(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim());
        for (b, v) in self.states.base.iter().enumerate() {
            let phasor = Complex64::from_polar(v.vm, v.va_deg.to_radians());
            x[2 * b] = phasor.re;
            x[2 * b + 1] = phasor.im;
        }
        x
    }

    /// Rectangular true states for `n` consecutive samples.
    pub fn true_states(&self, n: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.states.seed);
        let sigma = self.states.perturbation_sigma;
        let mut x = self.base_state();
        let mut out = Vec::with_capacity(n);
        for s in 0..n {
            if s > 0 && sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                for v in x.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
            out.push(x.clone());
        }
        out
    }

    /// Synthetic connected case: a ring over all buses plus seeded chords.
    pub fn synthetic(name: &str, n_bus: usize, extra_branches: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut branches = Vec::new();
        let mut pairs = HashSet::new();
        let mut push = |from: usize, to: usize, rng: &mut ChaCha8Rng, branches: &mut Vec<BranchRecord>| {
            let key = (from.min(to), from.max(to));
            if from == to || !pairs.insert(key) {
                return false;
            }
            let x: f64 = rng.random_range(0.01..0.25);
            let r = x * rng.random_range(0.05..0.3);
            let d = r * r + x * x;
            let round = |v: f64| (v * 1e6).round() / 1e6;
            branches.push(BranchRecord {
                from: key.0,
                to: key.1,
                g: round(r / d),
                b: round(-x / d),
                bsh: round(rng.random_range(0.0..0.05)),
            });
            true
        };
        for bus in 1..=n_bus {
            let next = bus % n_bus + 1;
            push(bus, next, &mut rng, &mut branches);
        }
        let mut added = 0;
        while added < extra_branches {
            let a = rng.random_range(1..=n_bus);
            let b = rng.random_range(1..=n_bus);
            if push(a, b, &mut rng, &mut branches) {
                added += 1;
            }
        }
        let base = (0..n_bus)
            .map(|_| BaseVoltage {
                vm: (rng.random_range(0.95..1.05) * 1e4_f64).round() / 1e4,
                va_deg: (rng.random_range(-30.0..30.0) * 1e2_f64).round() / 1e2,
            })
            .collect();
        GridCase {
            name: name.to_string(),
            n_bus,
            branches,
            agents: (1..=n_bus)
                .map(|bus| BusAgent {
                    bus,
                    agent: AgentIndex(bus - 1),
                })
                .collect(),
            states: StateSpec {
                base,
                perturbation_sigma: 0.001,
                seed,
            },
        }
    }
}

/// Bus admittance matrix with pi-model line charging.
pub fn build_admittance(case: &GridCase) -> Result<DMatrix<Complex64>, EstimationError> {
    let n = case.n_bus;
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &case.branches {
        if br.from == 0 || br.from > n || br.to == 0 || br.to > n {
            return Err(EstimationError::InvalidCase(format!(
                "dangling branch {}-{}",
                br.from, br.to
            )));
        }
        let (f, t) = (br.from - 1, br.to - 1);
        let ys = br.series();
        let sh = br.end_shunt();
        y[(f, f)] += ys + sh;
        y[(t, t)] += ys + sh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(bsh: f64) -> GridCase {
        GridCase {
            name: "two".into(),
            n_bus: 2,
            branches: vec![BranchRecord {
                from: 1,
                to: 2,
                g: 1.0,
                b: -10.0,
                bsh,
            }],
            agents: vec![
                BusAgent { bus: 1, agent: AgentIndex(0) },
                BusAgent { bus: 2, agent: AgentIndex(1) },
            ],
            states: StateSpec {
                base: vec![BaseVoltage { vm: 1.0, va_deg: 0.0 }; 2],
                perturbation_sigma: 0.0,
                seed: 0,
            },
        }
    }

    #[test]
    fn single_branch_admittance() {
        let y = build_admittance(&two_bus(0.0)).unwrap();
        let ys = Complex64::new(1.0, -10.0);
        assert_eq!(y[(0, 0)], ys);
        assert_eq!(y[(1, 1)], ys);
        assert_eq!(y[(0, 1)], -ys);
        assert_eq!(y[(1, 0)], -ys);
    }

    #[test]
    fn no_branches_gives_zero_matrix() {
        let mut c = two_bus(0.0);
        c.branches.clear();
        let y = build_admittance(&c).unwrap();
        assert!(y.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn dangling_branch_rejected() {
        let mut c = two_bus(0.0);
        c.branches[0].to = 3;
        assert!(build_admittance(&c).is_err());
        assert!(c.validate().is_err());
    }

    #[test]
    fn builtin_cases_load() {
        let c5 = GridCase::builtin("case5").unwrap();
        assert_eq!(c5.n_bus, 5);
        assert_eq!(c5.branches.len(), 6);
        let c118 = GridCase::builtin("case118").unwrap();
        assert_eq!(c118.n_bus, 118);
        assert_eq!(c118.agent_list().len(), 118);
        assert!(GridCase::builtin("nope").is_none());
    }

    #[test]
    fn shipped_synthetic_case_is_reproducible() {
        let generated = GridCase::synthetic("case118", 118, 68, 118);
        assert_eq!(GridCase::builtin("case118").unwrap(), generated);
    }

    #[test]
    fn true_states_start_at_base_and_walk() {
        let c5 = GridCase::builtin("case5").unwrap();
        let xs = c5.true_states(3);
        assert_eq!(xs[0], c5.base_state());
        assert_ne!(xs[1], xs[0]);
        assert_eq!(xs, c5.true_states(3));
    }

    #[test]
    fn admittance_is_symmetric() {
        let y = build_admittance(&GridCase::builtin("case118").unwrap()).unwrap();
        assert_eq!(y.clone(), y.transpose());
    }
}
