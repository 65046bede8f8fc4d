//! On-disk JSON game format. Flow constraint systems are always derived
//! from the treeplexes, never stored.

use crate::error::GameError;
use crate::game::{InfoSet, PayoffMatrix, SequenceFormGame, Treeplex};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Serialized game. A missing treeplex means a single info set over all of
/// that player's sequences, i.e. plain normal form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFile {
    pub rows: usize,
    pub cols: usize,
    pub payoff: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_treeplex: Option<TreeplexFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_treeplex: Option<TreeplexFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeplexFile {
    pub info_sets: Vec<InfoSetFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoSetFile {
    pub actions: Vec<usize>,
    pub parent: Option<usize>,
}

impl GameFile {
    pub fn from_json(text: &str) -> Result<Self, GameError> {
        serde_json::from_str(text)
            .map_err(|e| GameError::DimensionMismatch(format!("malformed game JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game file serialization cannot fail")
    }

    pub fn into_game(self) -> Result<SequenceFormGame, GameError> {
        if self.payoff.len() != self.rows || self.payoff.iter().any(|r| r.len() != self.cols) {
            return Err(GameError::DimensionMismatch(format!(
                "payoff entries do not form a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let matrix = DMatrix::from_fn(self.rows, self.cols, |r, c| self.payoff[r][c]);
        let payoff = PayoffMatrix::new(matrix)?;
        let row = treeplex_from_file(self.row_treeplex, self.rows)?;
        let col = treeplex_from_file(self.col_treeplex, self.cols)?;
        SequenceFormGame::new(payoff, row, col)
    }

    pub fn from_game(game: &SequenceFormGame) -> Self {
        let payoff = (0..game.payoff.rows())
            .map(|r| {
                (0..game.payoff.cols())
                    .map(|c| game.payoff.matrix()[(r, c)])
                    .collect()
            })
            .collect();
        Self {
            rows: game.payoff.rows(),
            cols: game.payoff.cols(),
            payoff,
            row_treeplex: Some(treeplex_to_file(&game.row_treeplex)),
            col_treeplex: Some(treeplex_to_file(&game.col_treeplex)),
        }
    }
}

fn treeplex_from_file(file: Option<TreeplexFile>, sequences: usize) -> Result<Treeplex, GameError> {
    match file {
        None => Ok(Treeplex::single_info_set(sequences)),
        Some(f) => Treeplex::new(
            f.info_sets
                .into_iter()
                .map(|s| InfoSet {
                    actions: s.actions,
                    parent: s.parent,
                })
                .collect(),
            sequences,
        ),
    }
}

fn treeplex_to_file(tp: &Treeplex) -> TreeplexFile {
    TreeplexFile {
        info_sets: tp
            .info_sets()
            .iter()
            .map(|s| InfoSetFile {
                actions: s.actions.clone(),
                parent: s.parent,
            })
            .collect(),
    }
}
