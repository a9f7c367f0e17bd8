//! Reader and writer for TNTP network files.
//!
//! Layout: `<KEY> value` metadata lines up to `<END OF METADATA>`, then one
//! record per link with the columns
//! `init term capacity length free_flow_time b power speed toll type ;`.
//! Lines starting with `~` are comments. Node ids are remapped to contiguous
//! 0-based indices in increasing order of their file id.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{EdgeAttributes, Network};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_tntp_file(path: impl AsRef<Path>) -> Result<Network> {
    load_tntp(File::open(path)?)
}

pub fn load_tntp<R: Read>(reader: R) -> Result<Network> {
    let reader = BufReader::new(reader);
    let mut metadata: HashMap<String, (usize, String)> = HashMap::new();
    let mut in_metadata = true;
    let mut records: Vec<(usize, u64, u64, EdgeAttributes)> = Vec::new();
    let mut last_line = 0;

    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('~') {
            continue;
        }
        if in_metadata {
            if !trimmed.starts_with('<') {
                return Err(parse_err(lineno, "expected a <KEY> metadata line"));
            }
            let close = trimmed
                .find('>')
                .ok_or_else(|| parse_err(lineno, "unterminated metadata key"))?;
            let key = trimmed[1..close].trim().to_ascii_uppercase();
            if key == "END OF METADATA" {
                in_metadata = false;
                continue;
            }
            metadata.insert(key, (lineno, trimmed[close + 1..].trim().to_string()));
            continue;
        }
        let body = trimmed.trim_end_matches(';');
        let fields: Vec<&str> = body
            .split_whitespace()
            .filter(|f| *f != ";")
            .collect();
        if fields.len() < 2 {
            return Err(parse_err(lineno, "link record needs init and term nodes"));
        }
        let node = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(lineno, format!("invalid node id {s:?}")))
        };
        let init = node(fields[0])?;
        let term = node(fields[1])?;
        let mut values = [0.0f64; 8];
        for (slot, field) in values.iter_mut().zip(&fields[2..]) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("invalid numeric field {field:?}")))?;
        }
        let attrs = EdgeAttributes {
            capacity: values[0],
            length: values[1],
            free_flow_time: values[2],
            b: values[3],
            power: values[4],
            speed: values[5],
            toll: values[6],
            link_type: values[7],
        };
        records.push((lineno, init, term, attrs));
    }

    if in_metadata {
        return Err(parse_err(last_line, "missing <END OF METADATA>"));
    }
    let count = |key: &str| -> Result<usize> {
        let (line, value) = metadata
            .get(key)
            .ok_or_else(|| parse_err(0, format!("missing <{key}> metadata")))?;
        value
            .parse::<usize>()
            .map_err(|_| parse_err(*line, format!("<{key}> is not a count: {value:?}")))
    };
    let node_count = count("NUMBER OF NODES")?;
    let link_count = count("NUMBER OF LINKS")?;
    if records.len() != link_count {
        return Err(parse_err(
            last_line,
            format!(
                "<NUMBER OF LINKS> is {link_count} but {} link records were read",
                records.len()
            ),
        ));
    }

    let ids: BTreeSet<u64> = records.iter().flat_map(|r| [r.1, r.2]).collect();
    let labels: Vec<u64> = if ids.iter().all(|&id| id >= 1 && id as usize <= node_count) {
        (1..=node_count as u64).collect()
    } else if ids.len() <= node_count {
        ids.iter().copied().collect()
    } else {
        return Err(Error::Model(format!(
            "{} distinct node ids exceed <NUMBER OF NODES> {node_count}",
            ids.len()
        )));
    };
    let remap: HashMap<u64, usize> = labels.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut edges = Vec::with_capacity(records.len());
    let mut attributes = Vec::with_capacity(records.len());
    for (_, init, term, attrs) in records {
        edges.push((remap[&init], remap[&term]));
        attributes.push(attrs);
    }
    let node_count = labels.len().max(node_count);
    let mut labels = labels;
    // Declared nodes never referenced by a link still get a label.
    let mut next = labels.iter().copied().max().unwrap_or(0) + 1;
    while labels.len() < node_count {
        labels.push(next);
        next += 1;
    }
    Network::with_attributes(node_count, edges, attributes, labels)
}

/// Writes `net` in TNTP layout using its node labels as file ids.
pub fn write_tntp<W: Write>(net: &Network, mut out: W) -> Result<()> {
    writeln!(out, "<NUMBER OF ZONES> {}", net.node_count())?;
    writeln!(out, "<NUMBER OF NODES> {}", net.node_count())?;
    writeln!(out, "<FIRST THRU NODE> 1")?;
    writeln!(out, "<NUMBER OF LINKS> {}", net.edge_count())?;
    writeln!(out, "<END OF METADATA>")?;
    writeln!(out)?;
    writeln!(
        out,
        "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;"
    )?;
    let labels = net.node_labels();
    for (&(t, h), a) in net.edges().iter().zip(net.attributes()) {
        writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;",
            labels[t],
            labels[h],
            a.capacity,
            a.length,
            a.free_flow_time,
            a.b,
            a.power,
            a.speed,
            a.toll,
            a.link_type
        )?;
    }
    Ok(())
}
