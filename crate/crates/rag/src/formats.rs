//! File formats for training: task sets (JSON), projections (CSV).

use std::path::Path;

use bee_core::adaptive::{Boundary, Projection, ToyTask};
use bee_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::output::{read_table, write_atomic, Table};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpanJson {
    begin: Vec<f64>,
    end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskJson {
    chunks: Vec<SpanJson>,
    query: SpanJson,
    gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskFile {
    tasks: Vec<TaskJson>,
}

impl From<&Boundary> for SpanJson {
    fn from(b: &Boundary) -> Self {
        Self {
            begin: b.begin.clone(),
            end: b.end.clone(),
        }
    }
}

impl From<SpanJson> for Boundary {
    fn from(s: SpanJson) -> Self {
        Boundary::new(s.begin, s.end)
    }
}

/// `{"tasks": [{"chunks": [{"begin": [..], "end": [..]}, ..], "query": {..}, "gold": k}]}`
pub fn tasks_to_json(tasks: &[ToyTask]) -> Result<String, CliError> {
    let file = TaskFile {
        tasks: tasks
            .iter()
            .map(|t| TaskJson {
                chunks: t.chunks.iter().map(SpanJson::from).collect(),
                query: SpanJson::from(&t.query),
                gold: t.gold,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| CliError::Io(e.to_string()))
}

pub fn tasks_from_json(text: &str) -> Result<Vec<ToyTask>, CliError> {
    let file: TaskFile =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("task file: {e}")))?;
    let tasks: Vec<ToyTask> = file
        .tasks
        .into_iter()
        .map(|t| ToyTask {
            chunks: t.chunks.into_iter().map(Boundary::from).collect(),
            query: t.query.into(),
            gold: t.gold,
        })
        .collect();
    let d = tasks.first().map(ToyTask::dim).ok_or_else(|| CliError::Config("task file has no tasks".into()))?;
    for (i, t) in tasks.iter().enumerate() {
        t.validate(d)
            .map_err(|e| CliError::Config(format!("task {i}: {e}")))?;
    }
    Ok(tasks)
}

pub fn read_tasks(path: &Path) -> Result<Vec<ToyTask>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    tasks_from_json(&text)
}

pub fn write_tasks(path: &Path, tasks: &[ToyTask]) -> Result<(), CliError> {
    write_atomic(path, tasks_to_json(tasks)?.as_bytes())
}

/// One CSV row per projection row, columns `c0..c{d-1}`.
pub fn projection_table(header: String, proj: &Projection) -> Table {
    let cols: Vec<String> = (0..proj.dim()).map(|c| format!("c{c}")).collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(header, &col_refs);
    for row in proj.matrix().row_iter() {
        t.push(row.iter().map(|&x| crate::cli::fmt(x)).collect());
    }
    t
}

pub fn read_projection(path: &Path) -> Result<Projection, CliError> {
    let (_, rows) = read_table(path)?;
    let parsed = rows
        .iter()
        .map(|r| r.iter().map(|x| x.parse::<f64>()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("projection {}: {e}", path.display())))?;
    Matrix::from_rows(&parsed)
        .and_then(Projection::from_matrix)
        .map_err(|e| CliError::Config(format!("projection {}: {e}", path.display())))
}
