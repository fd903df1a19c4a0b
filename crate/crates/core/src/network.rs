//! Linear resistive networks and their nodal-analysis solution.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("network has no fixed-potential node")]
    NoReference,
    #[error("nodes {0:?} are not connected to any fixed-potential node")]
    Floating(Vec<String>),
    #[error("branch {index} has invalid resistance {resistance}")]
    BadResistance { index: usize, resistance: f64 },
    #[error("branch {index} references unknown node {node}")]
    UnknownNode { index: usize, node: usize },
    #[error("nodal matrix is singular")]
    Singular,
}

/// What a branch physically is, for looking currents up after a solve.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchLabel {
    /// Read path through an input cell's MTJ (row).
    InputMtj(usize),
    /// SOT channel of the output cell (row).
    OutputChannel(usize),
    /// MTJ of the output cell (row).
    OutputMtj(usize),
    /// Leakage through an unselected cell's MTJ with its transistor off (row).
    LeakMtj(usize),
    /// Leakage through an unselected cell's write path (row).
    LeakChannel(usize),
    Custom(String),
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchLabel::InputMtj(r) => write!(f, "input_mtj[{r}]"),
            BranchLabel::OutputChannel(r) => write!(f, "output_channel[{r}]"),
            BranchLabel::OutputMtj(r) => write!(f, "output_mtj[{r}]"),
            BranchLabel::LeakMtj(r) => write!(f, "leak_mtj[{r}]"),
            BranchLabel::LeakChannel(r) => write!(f, "leak_channel[{r}]"),
            BranchLabel::Custom(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Held at a potential by an ideal source (0 V for ground).
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
    pub label: BranchLabel,
}

/// Node/branch description of a resistive network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fixed(&mut self, name: impl Into<String>, volts: f64) -> usize {
        self.nodes.push(Node {
            name: name.into(),
            kind: NodeKind::Fixed(volts),
        });
        self.nodes.len() - 1
    }

    pub fn free(&mut self, name: impl Into<String>) -> usize {
        self.nodes.push(Node {
            name: name.into(),
            kind: NodeKind::Free,
        });
        self.nodes.len() - 1
    }

    pub fn resistor(&mut self, from: usize, to: usize, resistance: f64, label: BranchLabel) {
        self.branches.push(Branch {
            from,
            to,
            resistance,
            label,
        });
    }

    fn check(&self) -> Result<(), NetworkError> {
        for (index, b) in self.branches.iter().enumerate() {
            for node in [b.from, b.to] {
                if node >= self.nodes.len() {
                    return Err(NetworkError::UnknownNode { index, node });
                }
            }
            if !(b.resistance.is_finite() && b.resistance > 0.0) {
                return Err(NetworkError::BadResistance {
                    index,
                    resistance: b.resistance,
                });
            }
        }
        if !self
            .nodes
            .iter()
            .any(|n| matches!(n.kind, NodeKind::Fixed(_)))
        {
            return Err(NetworkError::NoReference);
        }

        // every free node must reach a fixed node
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for b in &self.branches {
            adjacency[b.from].push(b.to);
            adjacency[b.to].push(b.from);
        }
        let mut reached = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Fixed(_)))
            .map(|(i, _)| i)
            .collect();
        for &i in &queue {
            reached[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !reached[j] {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let floating: Vec<String> = self
            .nodes
            .iter()
            .zip(&reached)
            .filter(|(_, &r)| !r)
            .map(|(n, _)| n.name.clone())
            .collect();
        if floating.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::Floating(floating))
        }
    }

    /// Nodal analysis: fixed nodes are eliminated, the reduced conductance
    /// system is solved by LU.
    pub fn solve(&self) -> Result<NetworkSolution, NetworkError> {
        self.check()?;

        let mut unknown_index = vec![None; self.nodes.len()];
        let mut n_unknown = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind == NodeKind::Free {
                unknown_index[i] = Some(n_unknown);
                n_unknown += 1;
            }
        }

        let mut voltages: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Fixed(v) => v,
                NodeKind::Free => 0.0,
            })
            .collect();

        if n_unknown > 0 {
            let mut g = DMatrix::<f64>::zeros(n_unknown, n_unknown);
            let mut rhs = DVector::<f64>::zeros(n_unknown);
            for b in &self.branches {
                let conductance = 1.0 / b.resistance;
                match (unknown_index[b.from], unknown_index[b.to]) {
                    (Some(a), Some(c)) => {
                        g[(a, a)] += conductance;
                        g[(c, c)] += conductance;
                        g[(a, c)] -= conductance;
                        g[(c, a)] -= conductance;
                    }
                    (Some(a), None) => {
                        g[(a, a)] += conductance;
                        rhs[a] += conductance * voltages[b.to];
                    }
                    (None, Some(c)) => {
                        g[(c, c)] += conductance;
                        rhs[c] += conductance * voltages[b.from];
                    }
                    (None, None) => {}
                }
            }
            let x = g.lu().solve(&rhs).ok_or(NetworkError::Singular)?;
            for (i, slot) in unknown_index.iter().enumerate() {
                if let Some(k) = slot {
                    voltages[i] = x[*k];
                }
            }
        }

        let nodes = self
            .nodes
            .iter()
            .zip(&voltages)
            .map(|(n, &v)| NodeVoltage {
                name: n.name.clone(),
                voltage: v,
                fixed: matches!(n.kind, NodeKind::Fixed(_)),
            })
            .collect();
        let branches = self
            .branches
            .iter()
            .map(|b| BranchCurrent {
                label: b.label.clone(),
                from: b.from,
                to: b.to,
                resistance: b.resistance,
                current: (voltages[b.from] - voltages[b.to]) / b.resistance,
            })
            .collect();
        Ok(NetworkSolution { nodes, branches })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVoltage {
    pub name: String,
    pub voltage: f64,
    pub fixed: bool,
}

/// Current through a branch, positive from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCurrent {
    pub label: BranchLabel,
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSolution {
    pub nodes: Vec<NodeVoltage>,
    pub branches: Vec<BranchCurrent>,
}

impl NetworkSolution {
    pub fn branch(&self, label: &BranchLabel) -> Option<&BranchCurrent> {
        self.branches.iter().find(|b| &b.label == label)
    }

    pub fn current(&self, label: &BranchLabel) -> Option<f64> {
        self.branch(label).map(|b| b.current)
    }

    pub fn voltage(&self, name: &str) -> Option<f64> {
        self.nodes
            .iter()
            .find(|n| n.name == name)
            .map(|n| n.voltage)
    }

    /// Largest KCL imbalance over free nodes, relative to the largest
    /// current incident on that node.
    pub fn kcl_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.fixed {
                continue;
            }
            let mut sum = 0.0;
            let mut largest: f64 = 0.0;
            for b in &self.branches {
                if b.from == i {
                    sum -= b.current;
                } else if b.to == i {
                    sum += b.current;
                } else {
                    continue;
                }
                largest = largest.max(b.current.abs());
            }
            if largest > 0.0 {
                worst = worst.max(sum.abs() / largest);
            }
        }
        worst
    }

    /// Total power delivered by the fixed-potential sources (W).
    pub fn source_power(&self) -> f64 {
        let mut power = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.fixed || node.voltage == 0.0 {
                continue;
            }
            let outflow: f64 = self
                .branches
                .iter()
                .map(|b| {
                    if b.from == i {
                        b.current
                    } else if b.to == i {
                        -b.current
                    } else {
                        0.0
                    }
                })
                .sum();
            power += node.voltage * outflow;
        }
        power
    }

    /// Total resistive dissipation, Σ I²R (W).
    pub fn dissipation(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.current * b.current * b.resistance)
            .sum()
    }
}
