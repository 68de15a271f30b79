//! Per-run accounting of privacy spend under sequential and parallel composition.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    RandomizedResponse,
    Laplace,
    /// Laplace noise added by a trusted curator holding the whole graph.
    CentralLaplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Sequential,
    /// Member of the parallel group of its round: mechanisms applied to
    /// disjoint neighbor lists, charged once at the group's maximum.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyModel {
    EdgeLdp,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub round: u32,
    pub mechanism: Mechanism,
    pub epsilon_spent: f64,
    pub composition: Composition,
    /// How many vertices ran this mechanism with this budget.
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyLedger {
    pub model: PrivacyModel,
    pub entries: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn new(model: PrivacyModel) -> Self {
        Self {
            model,
            entries: Vec::new(),
        }
    }

    pub fn spend(
        &mut self,
        round: u32,
        mechanism: Mechanism,
        epsilon: f64,
        composition: Composition,
        subjects: usize,
    ) {
        self.entries.push(LedgerEntry {
            round,
            mechanism,
            epsilon_spent: epsilon,
            composition,
            subjects,
        });
    }

    /// Sum of sequential spends plus, for each round, the largest parallel spend.
    pub fn total(&self) -> f64 {
        let mut total: f64 = self
            .entries
            .iter()
            .filter(|e| e.composition == Composition::Sequential)
            .map(|e| e.epsilon_spent)
            .sum();
        let mut rounds: Vec<u32> = self.entries.iter().map(|e| e.round).collect();
        rounds.sort_unstable();
        rounds.dedup();
        for r in rounds {
            total += self
                .entries
                .iter()
                .filter(|e| e.round == r && e.composition == Composition::Parallel)
                .map(|e| e.epsilon_spent)
                .fold(0.0, f64::max);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_group_charges_max() {
        let mut l = PrivacyLedger::new(PrivacyModel::EdgeLdp);
        l.spend(
            1,
            Mechanism::RandomizedResponse,
            0.7,
            Composition::Parallel,
            1,
        );
        l.spend(
            1,
            Mechanism::RandomizedResponse,
            0.5,
            Composition::Parallel,
            1,
        );
        l.spend(2, Mechanism::Laplace, 0.3, Composition::Sequential, 1);
        l.spend(3, Mechanism::Laplace, 0.2, Composition::Parallel, 1);
        assert!((l.total() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn empty_ledger_is_zero() {
        assert_eq!(PrivacyLedger::new(PrivacyModel::Central).total(), 0.0);
    }
}
