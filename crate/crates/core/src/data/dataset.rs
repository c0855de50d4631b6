use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::nn::Task;

/// Graph-level target: a class index or a real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<FeaturedGraph>,
    pub targets: Vec<Target>,
    pub task: Task,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<FeaturedGraph>, targets: Vec<Target>, task: Task) -> Result<Self> {
        if graphs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: graphs.len(),
                got: targets.len(),
                context: "targets vs graphs",
            });
        }
        for t in &targets {
            match (t, task) {
                (Target::Class(label), Task::Classification { classes }) => {
                    if *label >= classes {
                        return Err(Error::LabelOutOfRange { label: *label, classes });
                    }
                }
                (Target::Values(v), Task::Regression { targets }) => {
                    if v.len() != targets {
                        return Err(Error::DimensionMismatch {
                            expected: targets,
                            got: v.len(),
                            context: "regression target length",
                        });
                    }
                }
                _ => return Err(Error::InvalidArgument("target kind does not match the task".into())),
            }
        }
        if let Some(first) = graphs.first() {
            let d = first.feature_dim();
            if let Some(g) = graphs.iter().find(|g| g.feature_dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.feature_dim(),
                    context: "feature dimension across graphs",
                });
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            targets,
            task,
        })
    }

    /// Infers the task from the targets: all class indices give a
    /// classification task with `max + 1` classes (at least 2), all vectors
    /// of one length give regression.
    pub fn infer(name: impl Into<String>, graphs: Vec<FeaturedGraph>, targets: Vec<Target>) -> Result<Self> {
        let task = infer_task(&targets)?;
        Self::new(name, graphs, targets, task)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.graphs.first().map(FeaturedGraph::feature_dim)
    }

    /// Class labels, or `None` for regression.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.targets
            .iter()
            .map(|t| match t {
                Target::Class(c) => Some(*c),
                Target::Values(_) => None,
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            task: self.task,
        }
    }
}

pub(crate) fn infer_task(targets: &[Target]) -> Result<Task> {
    match targets.first() {
        None | Some(Target::Class(_)) => {
            let mut max = 0;
            for t in targets {
                match t {
                    Target::Class(c) => max = max.max(*c),
                    Target::Values(_) => {
                        return Err(Error::InvalidArgument("mixed class and vector targets".into()))
                    }
                }
            }
            Ok(Task::Classification { classes: (max + 1).max(2) })
        }
        Some(Target::Values(v)) => Ok(Task::Regression { targets: v.len() }),
    }
}
