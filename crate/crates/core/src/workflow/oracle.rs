//! Direct composition of the workflow's transforms, bypassing the transfer
//! machinery entirely. Runs and recoveries are byte-compared against this.

use std::collections::BTreeMap;

use super::{switch_index, WorkflowDefinition};

/// Evaluate the workflow on `input` and return the terminal outputs that a
/// fault-free run must deliver. Switch edges route exactly one arm, so
/// terminals on unchosen branches are absent from the result.
pub fn expected_terminal_outputs(
    def: &WorkflowDefinition,
    input: &[u8],
) -> BTreeMap<String, Vec<u8>> {
    // (function, data_name) -> delivered bytes
    let mut inbox: BTreeMap<(String, String), Vec<u8>> = BTreeMap::new();
    for external in def.external_inputs() {
        inbox.insert((def.entry().to_string(), external), input.to_vec());
    }

    let mut outputs = BTreeMap::new();
    for name in def.topo_order() {
        let spec = def.function(name).expect("topo order yields known functions");
        let mut bundle: Vec<&[u8]> = Vec::with_capacity(spec.declared_inputs.len());
        let mut complete = true;
        for data in &spec.declared_inputs {
            match inbox.get(&(name.to_string(), data.clone())) {
                Some(bytes) => bundle.push(bytes),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue; // unchosen switch arm
        }
        let produced = spec.compute.transform.apply(name, &bundle);
        if def.is_terminal(name) {
            outputs.insert(name.to_string(), produced.clone());
            continue;
        }
        for edge in def.outgoing(name) {
            if edge.is_switch() {
                let chosen = switch_index(&produced, edge.destinations.len());
                let dst = &edge.destinations[chosen];
                inbox.insert((dst.clone(), edge.data_name.clone()), produced.clone());
            } else {
                for dst in &edge.destinations {
                    inbox.insert((dst.clone(), edge.data_name.clone()), produced.clone());
                }
            }
        }
    }
    outputs
}
