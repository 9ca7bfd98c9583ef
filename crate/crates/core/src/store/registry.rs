use serde::{Deserialize, Serialize};

use crate::{OwlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub class_id: usize,
    pub origin_session: usize,
    pub discovered: bool,
    pub prototype: Vec<f64>,
    pub count: usize,
    /// Ground-truth label this class was matched to at discovery time.
    /// Evaluation-only; never read by the pipeline itself.
    #[serde(default)]
    pub label_alias: Option<i64>,
}

/// The catalog of known classes, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRegistry {
    pub entries: Vec<ClassEntry>,
}

impl ClassRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a class with the next free id and returns that id.
    pub fn register(
        &mut self,
        origin_session: usize,
        discovered: bool,
        prototype: Vec<f64>,
        count: usize,
    ) -> Result<usize> {
        if count == 0 {
            return Err(OwlError::Data("class registered with zero samples".into()));
        }
        if prototype.iter().any(|v| !v.is_finite()) {
            return Err(OwlError::Data("non-finite prototype".into()));
        }
        if let Some(last) = self.entries.last() {
            if origin_session < last.origin_session {
                return Err(OwlError::State(format!(
                    "origin session {origin_session} precedes {}",
                    last.origin_session
                )));
            }
            if prototype.len() != last.prototype.len() {
                return Err(OwlError::Shape("prototype width differs from registry".into()));
            }
        }
        let class_id = self.entries.len();
        self.entries.push(ClassEntry {
            class_id,
            origin_session,
            discovered,
            prototype,
            count,
            label_alias: None,
        });
        Ok(class_id)
    }

    /// Checks the registry invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.class_id != i {
                return Err(OwlError::State(format!("class id {} at position {i}", e.class_id)));
            }
            if e.count == 0 || e.prototype.iter().any(|v| !v.is_finite()) {
                return Err(OwlError::State(format!("class {i} has an invalid prototype or count")));
            }
            if i > 0 && e.origin_session < self.entries[i - 1].origin_session {
                return Err(OwlError::State("origin sessions decrease".into()));
            }
        }
        Ok(())
    }

    /// Evaluation label for a class: its alias when matched, otherwise
    /// its id for base classes.
    pub fn eval_label(&self, class_id: usize) -> Option<i64> {
        let e = self.entries.get(class_id)?;
        e.label_alias.or((!e.discovered).then_some(class_id as i64))
    }
}
