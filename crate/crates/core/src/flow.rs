//! Flow matrix and its marginals.
//!
//! Every user with an initial bias is a newcomer in `I`. Newcomers split
//! into dropouts `D`, unclassified-final users `U` and active users `A`.
//! Active users are tallied in the flow matrix `FM` (row = initial group,
//! column = final group), whose column sums form `F`.

use std::borrow::Borrow;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::{UserBiasProfile, UserStatus};
use crate::catalog::NewsCategory;
use crate::geometry::{constellation_of, Constellation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("scope {0} has no newcomers")]
    ZeroPopulation(String),
    #[error("final distribution is all zero")]
    AllZero,
    #[error("flow summary violates conservation: {0}")]
    Inconsistent(String),
}

/// What happened to a newcomer by the end of the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Active(NewsCategory),
    Dropout,
    UnclassifiedFinal,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSummary {
    #[serde(rename = "I")]
    pub newcomers: [u64; 8],
    #[serde(rename = "D")]
    pub dropouts: [u64; 8],
    #[serde(rename = "U")]
    pub unclassified: [u64; 8],
    #[serde(rename = "A")]
    pub active: [u64; 8],
    #[serde(rename = "FM")]
    pub matrix: [[u64; 8]; 8],
    #[serde(rename = "F")]
    pub finals: [u64; 8],
}

impl FlowSummary {
    pub fn record(&mut self, initial: NewsCategory, outcome: Outcome) {
        let i = initial.index();
        self.newcomers[i] += 1;
        match outcome {
            Outcome::Dropout => self.dropouts[i] += 1,
            Outcome::UnclassifiedFinal => self.unclassified[i] += 1,
            Outcome::Active(fin) => {
                self.active[i] += 1;
                self.matrix[i][fin.index()] += 1;
                self.finals[fin.index()] += 1;
            }
        }
    }

    pub fn record_profile(&mut self, profile: &UserBiasProfile) {
        let outcome = match (profile.status, profile.final_group) {
            (UserStatus::Active, Some(g)) => Outcome::Active(g),
            (UserStatus::Active, None) => unreachable!("active profile without final group"),
            (UserStatus::Dropout, _) => Outcome::Dropout,
            (UserStatus::UnclassifiedFinal, _) => Outcome::UnclassifiedFinal,
        };
        self.record(profile.initial_group, outcome);
    }

    pub fn total_newcomers(&self) -> u64 {
        self.newcomers.iter().sum()
    }

    pub fn total_dropouts(&self) -> u64 {
        self.dropouts.iter().sum()
    }

    pub fn total_active(&self) -> u64 {
        self.active.iter().sum()
    }

    pub fn total_unclassified(&self) -> u64 {
        self.unclassified.iter().sum()
    }

    /// Checks `I = D + U + A`, row sums of `FM` = `A` and column sums = `F`.
    pub fn validate(&self) -> Result<(), FlowError> {
        for g in 0..8 {
            let rank = g + 1;
            let split = self.dropouts[g] + self.unclassified[g] + self.active[g];
            if self.newcomers[g] != split {
                return Err(FlowError::Inconsistent(format!(
                    "group {rank}: I={} but D+U+A={split}",
                    self.newcomers[g]
                )));
            }
            let row: u64 = self.matrix[g].iter().sum();
            if row != self.active[g] {
                return Err(FlowError::Inconsistent(format!(
                    "group {rank}: FM row sum {row} != A={}",
                    self.active[g]
                )));
            }
            let col: u64 = self.matrix.iter().map(|r| r[g]).sum();
            if col != self.finals[g] {
                return Err(FlowError::Inconsistent(format!(
                    "group {rank}: FM column sum {col} != F={}",
                    self.finals[g]
                )));
            }
        }
        Ok(())
    }
}

impl AddAssign<&FlowSummary> for FlowSummary {
    fn add_assign(&mut self, other: &FlowSummary) {
        for g in 0..8 {
            self.newcomers[g] += other.newcomers[g];
            self.dropouts[g] += other.dropouts[g];
            self.unclassified[g] += other.unclassified[g];
            self.active[g] += other.active[g];
            self.finals[g] += other.finals[g];
            for h in 0..8 {
                self.matrix[g][h] += other.matrix[g][h];
            }
        }
    }
}

impl Add for FlowSummary {
    type Output = FlowSummary;

    fn add(mut self, other: FlowSummary) -> FlowSummary {
        self += &other;
        self
    }
}

/// Tallies profiles into a flow summary.
pub fn build_flow<I>(profiles: I) -> FlowSummary
where
    I: IntoIterator,
    I::Item: Borrow<UserBiasProfile>,
{
    let mut summary = FlowSummary::default();
    for p in profiles {
        summary.record_profile(p.borrow());
    }
    summary
}

/// Population over which a dropout fraction is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Group(NewsCategory),
    Constellation(Constellation),
    All,
}

impl Scope {
    pub fn contains(self, group: NewsCategory) -> bool {
        match self {
            Scope::Group(g) => g == group,
            Scope::Constellation(c) => constellation_of(group) == c,
            Scope::All => true,
        }
    }

    pub fn label(self) -> String {
        match self {
            Scope::Group(g) => format!("group:{g}"),
            Scope::Constellation(c) => format!("constellation:{c}"),
            Scope::All => "all".to_string(),
        }
    }
}

/// Dropouts over newcomers within `scope`.
pub fn dropout_fraction(summary: &FlowSummary, scope: Scope) -> Result<f64, FlowError> {
    let (mut dropped, mut entered) = (0u64, 0u64);
    for g in NewsCategory::ALL.into_iter().filter(|g| scope.contains(*g)) {
        dropped += summary.dropouts[g.index()];
        entered += summary.newcomers[g.index()];
    }
    if entered == 0 {
        return Err(FlowError::ZeroPopulation(scope.label()));
    }
    Ok(dropped as f64 / entered as f64)
}

/// Ranks whose count strictly exceeds every rank-adjacent count.
pub fn local_modes(finals: &[u64; 8]) -> Result<Vec<NewsCategory>, FlowError> {
    if finals.iter().all(|&c| c == 0) {
        return Err(FlowError::AllZero);
    }
    let modes = (0..8)
        .filter(|&i: &usize| {
            let left = i.checked_sub(1).map(|j| finals[j]);
            let right = finals.get(i + 1).copied();
            [left, right].into_iter().flatten().all(|n| finals[i] > n)
        })
        .map(|i| NewsCategory::ALL[i])
        .collect();
    Ok(modes)
}
