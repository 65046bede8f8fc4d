//! The treeplex: one player's decision structure in sequence form.

use crate::error::GameError;
use crate::game::ConstraintSystem;
use nalgebra::{DMatrix, DVector};

/// One information set: the actions (sequence indices) available there and
/// the player's own sequence leading to it (`None` for root info sets).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoSet {
    pub actions: Vec<usize>,
    pub parent: Option<usize>,
}

/// A validated treeplex. Sequences are indexed `0..num_sequences`; every
/// sequence belongs to exactly one info set and the parent relation is
/// acyclic.
#[derive(Debug, Clone, PartialEq)]
pub struct Treeplex {
    info_sets: Vec<InfoSet>,
    num_sequences: usize,
    /// ρ: sequence -> index of the info set it belongs to.
    owner: Vec<usize>,
    /// C: sequence -> info sets whose parent sequence it is.
    children: Vec<Vec<usize>>,
    /// Info set indices sorted parents-first.
    topo: Vec<usize>,
}

impl Treeplex {
    pub fn new(info_sets: Vec<InfoSet>, num_sequences: usize) -> Result<Self, GameError> {
        if info_sets.is_empty() || num_sequences == 0 {
            return Err(GameError::DimensionMismatch(
                "treeplex needs at least one info set and one sequence".into(),
            ));
        }
        let mut owner = vec![usize::MAX; num_sequences];
        for (i, set) in info_sets.iter().enumerate() {
            if set.actions.is_empty() {
                return Err(GameError::BrokenFlowStructure(format!(
                    "info set {i} has no actions"
                )));
            }
            for &a in &set.actions {
                if a >= num_sequences {
                    return Err(GameError::DimensionMismatch(format!(
                        "action {a} out of range for {num_sequences} sequences"
                    )));
                }
                if owner[a] != usize::MAX {
                    return Err(GameError::BrokenFlowStructure(format!(
                        "sequence {a} appears in info sets {} and {i}",
                        owner[a]
                    )));
                }
                owner[a] = i;
            }
            if let Some(p) = set.parent
                && p >= num_sequences
            {
                return Err(GameError::DimensionMismatch(format!(
                    "parent sequence {p} out of range"
                )));
            }
        }
        if let Some(a) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(GameError::BrokenFlowStructure(format!(
                "sequence {a} belongs to no info set"
            )));
        }

        let mut children = vec![Vec::new(); num_sequences];
        for (i, set) in info_sets.iter().enumerate() {
            if let Some(p) = set.parent {
                children[p].push(i);
            }
        }

        let topo = topological_order(&info_sets, &owner)?;

        Ok(Self {
            info_sets,
            num_sequences,
            owner,
            children,
            topo,
        })
    }

    /// Treeplex of a single root info set over `k` sequences: the
    /// probability simplex, i.e. a normal-form strategy space.
    pub fn single_info_set(k: usize) -> Self {
        Self::new(
            vec![InfoSet {
                actions: (0..k).collect(),
                parent: None,
            }],
            k,
        )
        .expect("single info set treeplex is always valid")
    }

    pub fn num_sequences(&self) -> usize {
        self.num_sequences
    }

    pub fn num_info_sets(&self) -> usize {
        self.info_sets.len()
    }

    pub fn info_sets(&self) -> &[InfoSet] {
        &self.info_sets
    }

    /// ρ_a: the info set owning sequence `a`.
    pub fn owner_of(&self, seq: usize) -> usize {
        self.owner[seq]
    }

    /// The player's own sequence preceding `seq` (`None` at the root).
    pub fn parent_of(&self, seq: usize) -> Option<usize> {
        self.info_sets[self.owner[seq]].parent
    }

    /// C_a: info sets immediately following sequence `seq`.
    pub fn children_of(&self, seq: usize) -> &[usize] {
        &self.children[seq]
    }

    /// J_a = |C_a|.
    pub fn child_count(&self, seq: usize) -> usize {
        self.children[seq].len()
    }

    /// Info set indices ordered so that parents come before children.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Derives the flow constraint system `E u = e`.
    pub fn constraints(&self) -> ConstraintSystem {
        let mut matrix = DMatrix::zeros(self.info_sets.len(), self.num_sequences);
        let mut rhs = DVector::zeros(self.info_sets.len());
        for (i, set) in self.info_sets.iter().enumerate() {
            for &a in &set.actions {
                matrix[(i, a)] = 1.0;
            }
            match set.parent {
                Some(p) => matrix[(i, p)] = -1.0,
                None => rhs[i] = 1.0,
            }
        }
        ConstraintSystem { matrix, rhs }
    }
}

/// Sorts info sets parents-first, detecting parent cycles along the way.
fn topological_order(info_sets: &[InfoSet], owner: &[usize]) -> Result<Vec<usize>, GameError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let mut marks = vec![Mark::White; info_sets.len()];
    let mut order = Vec::with_capacity(info_sets.len());

    fn visit(
        i: usize,
        info_sets: &[InfoSet],
        owner: &[usize],
        marks: &mut [Mark],
        order: &mut Vec<usize>,
    ) -> Result<(), GameError> {
        match marks[i] {
            Mark::Black => return Ok(()),
            Mark::Gray => return Err(GameError::CyclicTreeplex),
            Mark::White => {}
        }
        marks[i] = Mark::Gray;
        if let Some(p) = info_sets[i].parent {
            visit(owner[p], info_sets, owner, marks, order)?;
        }
        marks[i] = Mark::Black;
        order.push(i);
        Ok(())
    }

    for i in 0..info_sets.len() {
        visit(i, info_sets, owner, &mut marks, &mut order)?;
    }
    Ok(order)
}
