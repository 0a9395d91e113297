//! Line-oriented workflow document parser. Indentation is not significant;
//! block membership is positional (a key line attaches to the most recent
//! `function <name>:` opener).
//!
//! ```text
//! # wordcount, fan-out of 4
//! workflow: wc4
//! function start:
//!   memory_mb: 128
//!   compute: split k=4 cost=10
//!   inputs: [input]
//!   outputs: [shard -> count0,count1,count2,count3]
//! function count0:
//!   compute: count cost=40
//!   inputs: [shard]
//!   outputs: [c0 -> merge]
//! ...
//! entry: start
//! terminals: [merge]
//! ```
//!
//! `outputs` entries are `data -> dest(,dest)*`, separated by `;`. A switch
//! line routes one data name by label: `switch: sel -> {left: b0, right: b1}`.

use super::{ComputeModel, FunctionSpec, Transform, WorkflowDefinition, WorkflowError};

struct PendingFunction {
    spec: FunctionSpec,
    outputs: Vec<(String, Vec<String>)>,
    switch: Option<(String, Vec<(String, String)>)>,
}

fn syntax(line: usize, message: impl Into<String>) -> WorkflowError {
    WorkflowError::Syntax {
        line,
        message: message.into(),
    }
}

fn ident(s: &str, line: usize, what: &str) -> Result<String, WorkflowError> {
    let t = s.trim();
    if t.is_empty()
        || !t
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
    {
        return Err(syntax(line, format!("bad {what} name {t:?}")));
    }
    Ok(t.to_string())
}

fn bracket_list(s: &str, line: usize) -> Result<Vec<String>, WorkflowError> {
    let t = s.trim();
    let inner = t
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| syntax(line, format!("expected [..], got {t:?}")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|p| ident(p, line, "list entry")).collect()
}

fn parse_compute(s: &str, line: usize) -> Result<ComputeModel, WorkflowError> {
    let mut words = s.split_whitespace();
    let tag = words.next().ok_or_else(|| syntax(line, "empty compute spec"))?;
    let mut k: Option<u32> = None;
    let mut out: Option<u64> = None;
    let mut model = ComputeModel::default();
    for w in words {
        let (key, value) = w
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected key=value, got {w:?}")))?;
        match key {
            "k" => k = Some(value.parse().map_err(|_| syntax(line, format!("bad k={value}")))?),
            "out" => {
                out = Some(value.parse().map_err(|_| syntax(line, format!("bad out={value}")))?)
            }
            "cost" => {
                model.per_mib_cpu_ms =
                    value.parse().map_err(|_| syntax(line, format!("bad cost={value}")))?
            }
            "base" => {
                model.base_cpu_ms =
                    value.parse().map_err(|_| syntax(line, format!("bad base={value}")))?
            }
            "emit_at" => {
                model.emit_at =
                    value.parse().map_err(|_| syntax(line, format!("bad emit_at={value}")))?
            }
            other => return Err(syntax(line, format!("unknown compute key {other:?}"))),
        }
    }
    model.transform = match tag {
        "concat" => Transform::Concat,
        "count" => Transform::ByteCount,
        "split" => Transform::Fold {
            k: k.ok_or_else(|| syntax(line, "split needs k=<n>"))?,
        },
        "mix" => Transform::Mix {
            out: out.ok_or_else(|| syntax(line, "mix needs out=<bytes>"))?,
        },
        other => return Err(syntax(line, format!("unknown transform {other:?}"))),
    };
    Ok(model)
}

/// `data -> dest(,dest)*` entries separated by `;`.
fn parse_outputs(s: &str, line: usize) -> Result<Vec<(String, Vec<String>)>, WorkflowError> {
    let t = s.trim();
    let inner = t
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| syntax(line, format!("expected [..], got {t:?}")))?;
    let mut out = Vec::new();
    for entry in inner.split(';') {
        if entry.trim().is_empty() {
            continue;
        }
        let (data, dests) = entry
            .split_once("->")
            .ok_or_else(|| syntax(line, format!("expected data -> dest, got {entry:?}")))?;
        let dests = dests
            .split(',')
            .map(|d| ident(d, line, "destination"))
            .collect::<Result<Vec<_>, _>>()?;
        if dests.is_empty() {
            return Err(syntax(line, format!("no destinations in {entry:?}")));
        }
        out.push((ident(data, line, "data")?, dests));
    }
    Ok(out)
}

/// `data -> {label: dest, label: dest}`
fn parse_switch(s: &str, line: usize) -> Result<(String, Vec<(String, String)>), WorkflowError> {
    let (data, arms) = s
        .split_once("->")
        .ok_or_else(|| syntax(line, format!("expected data -> {{..}}, got {s:?}")))?;
    let inner = arms
        .trim()
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(|| syntax(line, format!("expected {{label: dest, ..}}, got {}", arms.trim())))?;
    let mut pairs = Vec::new();
    for arm in inner.split(',') {
        let (label, dest) = arm
            .split_once(':')
            .ok_or_else(|| syntax(line, format!("expected label: dest, got {arm:?}")))?;
        pairs.push((ident(label, line, "label")?, ident(dest, line, "destination")?));
    }
    if pairs.is_empty() {
        return Err(syntax(line, "switch with no arms"));
    }
    Ok((ident(data, line, "data")?, pairs))
}

pub fn parse_workflow(text: &str) -> Result<WorkflowDefinition, WorkflowError> {
    let mut name: Option<String> = None;
    let mut entry: Option<(String, usize)> = None;
    let mut terminals: Option<Vec<String>> = None;
    let mut pending: Vec<PendingFunction> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| syntax(line_no, format!("expected key: value, got {line:?}")))?;
        let key = key.trim();
        let rest = rest.trim();
        if name.is_none() {
            if key != "workflow" {
                return Err(syntax(line_no, "document must start with `workflow: <name>`"));
            }
            name = Some(ident(rest, line_no, "workflow")?);
            continue;
        }
        if let Some(fn_name) = key.strip_prefix("function ") {
            if !rest.is_empty() {
                return Err(syntax(line_no, format!("unexpected text after function header: {rest:?}")));
            }
            pending.push(PendingFunction {
                spec: FunctionSpec {
                    name: ident(fn_name, line_no, "function")?,
                    memory_mb: 128,
                    compute: ComputeModel::default(),
                    declared_inputs: Vec::new(),
                },
                outputs: Vec::new(),
                switch: None,
            });
            continue;
        }
        match key {
            "workflow" => return Err(syntax(line_no, "duplicate workflow header")),
            "entry" => entry = Some((ident(rest, line_no, "entry")?, line_no)),
            "terminals" => terminals = Some(bracket_list(rest, line_no)?),
            "memory_mb" | "compute" | "inputs" | "outputs" | "switch" => {
                let block = pending
                    .last_mut()
                    .ok_or_else(|| syntax(line_no, format!("{key} outside a function block")))?;
                match key {
                    "memory_mb" => {
                        block.spec.memory_mb = rest
                            .parse()
                            .map_err(|_| syntax(line_no, format!("bad memory_mb {rest:?}")))?
                    }
                    "compute" => block.spec.compute = parse_compute(rest, line_no)?,
                    "inputs" => block.spec.declared_inputs = bracket_list(rest, line_no)?,
                    "outputs" => block.outputs = parse_outputs(rest, line_no)?,
                    "switch" => block.switch = Some(parse_switch(rest, line_no)?),
                    _ => unreachable!(),
                }
            }
            other => return Err(syntax(line_no, format!("unknown directive {other:?}"))),
        }
    }

    let name = name.ok_or_else(|| syntax(text.lines().count(), "missing workflow header"))?;
    let mut b = WorkflowDefinition::builder(name);
    for p in &pending {
        b = b.function(p.spec.clone());
    }
    for p in pending {
        let source = p.spec.name;
        for (data, dests) in p.outputs {
            let refs: Vec<&str> = dests.iter().map(|s| s.as_str()).collect();
            b = b.flow(source.clone(), data, &refs);
        }
        if let Some((data, arms)) = p.switch {
            let refs: Vec<(&str, &str)> =
                arms.iter().map(|(l, d)| (l.as_str(), d.as_str())).collect();
            b = b.switch(source.clone(), data, &refs);
        }
    }
    if let Some((e, _)) = entry {
        b = b.entry(e);
    }
    for t in terminals.unwrap_or_default() {
        b = b.terminal(t);
    }
    b.build()
}
