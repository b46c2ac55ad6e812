use super::space::{CompositionSpace, Pair};
use crate::diffmath::{norm, Tensor};
use crate::error::{Error, Result};

pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Frozen text prototypes in the shared feature space.
///
/// Composition rows cover the whole open-world grid (state-major); a
/// candidate set selects its rows through [`TextBank::prototypes`].
#[derive(Clone, Debug, PartialEq)]
pub struct TextBank {
    pub states: Tensor,
    pub objects: Tensor,
    pub compositions: Tensor,
    pub trainable: bool,
}

/// The prototype matrices seen by the model for one candidate set.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    pub states: Tensor,
    pub objects: Tensor,
    pub compositions: Tensor,
    pub pairs: Vec<Pair>,
}

impl TextBank {
    pub fn new(space: &CompositionSpace, states: Tensor, objects: Tensor, compositions: Tensor) -> Result<Self> {
        let bank = Self {
            states,
            objects,
            compositions,
            trainable: false,
        };
        bank.validate(space)?;
        Ok(bank)
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn validate(&self, space: &CompositionSpace) -> Result<()> {
        let d = self.dim();
        let checks = [
            ("state", &self.states, space.num_states()),
            ("object", &self.objects, space.num_objects()),
            ("composition", &self.compositions, space.open_world().len()),
        ];
        for (what, t, rows) in checks {
            if t.rows() != rows || t.cols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "{what} prototypes are {}x{}, expected {rows}x{d}",
                    t.rows(),
                    t.cols()
                )));
            }
            for (i, row) in t.row_iter().enumerate() {
                let n = norm(row);
                if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
                    return Err(Error::ShapeMismatch(format!(
                        "non-unit {what} prototype at row {i} (norm {n})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Selects the composition rows for `pairs`, in that order.
    pub fn prototypes(&self, space: &CompositionSpace, pairs: &[Pair]) -> Prototypes {
        let rows: Vec<usize> = pairs.iter().map(|&p| space.grid_index(p)).collect();
        Prototypes {
            states: self.states.clone(),
            objects: self.objects.clone(),
            compositions: self.compositions.select_rows(&rows),
            pairs: pairs.to_vec(),
        }
    }
}

impl Prototypes {
    /// Same prototypes with states and objects exchanged.
    ///
    /// Composition pairs are transposed accordingly, so the relation
    /// branches can be checked for structural symmetry.
    pub fn swapped(&self) -> Self {
        Self {
            states: self.objects.clone(),
            objects: self.states.clone(),
            compositions: self.compositions.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| Pair::new(p.object, p.state))
                .collect(),
        }
    }
}
