//! Per-node projection of a placed workflow. Each engine schedules purely
//! from its own projection: the functions hosted locally plus every flow that
//! starts or lands here.

use super::{Placement, WorkflowDefinition};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedDestination {
    pub function: String,
    pub node: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedFlow {
    pub source: String,
    pub source_node: String,
    pub data_name: String,
    pub destinations: Vec<PlacedDestination>,
    pub conditional: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDataFlowGraph {
    pub node: String,
    /// Locally hosted functions, declaration order.
    pub functions: Vec<String>,
    /// Flows with a local source or at least one local destination.
    pub flows: Vec<PlacedFlow>,
}

impl LocalDataFlowGraph {
    pub fn hosts(&self, function: &str) -> bool {
        self.functions.iter().any(|f| f == function)
    }

    /// Outbound flows of a local source function.
    pub fn outbound<'a>(&'a self, source: &'a str) -> impl Iterator<Item = &'a PlacedFlow> + 'a {
        self.flows.iter().filter(move |f| f.source == source)
    }
}

pub fn project_local_graph(
    def: &WorkflowDefinition,
    placement: &Placement,
    node: &str,
) -> LocalDataFlowGraph {
    let functions: Vec<String> = def
        .functions()
        .iter()
        .map(|f| f.name.clone())
        .filter(|f| placement.node_of(f) == node)
        .collect();
    let flows = def
        .flows()
        .iter()
        .filter_map(|edge| {
            let source_node = placement.node_of(&edge.source).to_string();
            let destinations: Vec<PlacedDestination> = edge
                .destinations
                .iter()
                .enumerate()
                .map(|(i, d)| PlacedDestination {
                    function: d.clone(),
                    node: placement.node_of(d).to_string(),
                    label: edge.switch_labels.as_ref().map(|ls| ls[i].clone()),
                })
                .collect();
            let local = source_node == node || destinations.iter().any(|d| d.node == node);
            local.then(|| PlacedFlow {
                source: edge.source.clone(),
                source_node,
                data_name: edge.data_name.clone(),
                destinations,
                conditional: edge.is_switch(),
            })
        })
        .collect();
    LocalDataFlowGraph {
        node: node.to_string(),
        functions,
        flows,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{function, plan_placement, ComputeModel, PlacementPolicy};
    use super::*;

    fn wc() -> WorkflowDefinition {
        let mut b = WorkflowDefinition::builder("wc")
            .function(function("start", 128, ComputeModel::default(), &["input"]));
        for i in 0..4 {
            b = b.function(function(
                &format!("count{i}"),
                128,
                ComputeModel::default(),
                &["shard"],
            ));
        }
        b = b.function(function(
            "merge",
            128,
            ComputeModel::default(),
            &["c0", "c1", "c2", "c3"],
        ));
        b = b.flow("start", "shard", &["count0", "count1", "count2", "count3"]);
        for i in 0..4 {
            b = b.flow(format!("count{i}"), format!("c{i}"), &["merge"]);
        }
        b.entry("start").terminal("merge").build().unwrap()
    }

    fn nodes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn projection_filters_by_node() {
        let def = wc();
        let placement = plan_placement(&def, &nodes(3), &PlacementPolicy::RoundRobin).unwrap();
        // declaration order: start n0, count0 n1, count1 n2, count2 n0, count3 n1, merge n2
        let g0 = project_local_graph(&def, &placement, "n0");
        assert_eq!(g0.functions, vec!["start", "count2"]);
        // n0 sees: the fan-out (source local), and count2's edge to merge.
        assert_eq!(g0.flows.len(), 2);
        let fan = g0.outbound("start").next().unwrap();
        assert_eq!(fan.destinations.len(), 4);
        assert_eq!(fan.destinations[0].node, "n1");

        let g2 = project_local_graph(&def, &placement, "n2");
        assert!(g2.hosts("merge"));
        // n2 sees the fan-out (count1 is local) and all four fan-ins.
        assert_eq!(g2.flows.len(), 5);
    }

    #[test]
    fn single_node_projection_is_the_whole_graph() {
        let def = wc();
        let placement = plan_placement(&def, &nodes(3), &PlacementPolicy::SingleNode).unwrap();
        let g = project_local_graph(&def, &placement, "n0");
        assert_eq!(g.functions.len(), def.functions().len());
        assert_eq!(g.flows.len(), def.flows().len());
        assert!(g.flows.iter().all(|f| f.source_node == "n0"
            && f.destinations.iter().all(|d| d.node == "n0")));
    }

    #[test]
    fn uninvolved_node_projects_empty() {
        let def = wc();
        let placement = plan_placement(&def, &nodes(2), &PlacementPolicy::RoundRobin).unwrap();
        let g = project_local_graph(&def, &placement, "n7");
        assert!(g.functions.is_empty());
        assert!(g.flows.is_empty());
    }

    #[test]
    fn union_of_projections_reconstructs_every_edge() {
        let def = wc();
        let ns = nodes(3);
        let placement = plan_placement(&def, &ns, &PlacementPolicy::RoundRobin).unwrap();
        let mut seen: Vec<(String, String)> = Vec::new();
        for n in &ns {
            for f in project_local_graph(&def, &placement, n).flows {
                let key = (f.source.clone(), f.data_name.clone());
                if !seen.contains(&key) {
                    seen.push(key);
                }
            }
        }
        assert_eq!(seen.len(), def.flows().len());
    }
}
