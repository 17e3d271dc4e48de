use std::collections::{BTreeSet, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::ir::{Program, Stmt};

/// One syntactic call statement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CallSite {
    pub caller: String,
    pub path: Vec<usize>,
    pub callee: String,
}

#[derive(Clone, Debug)]
pub struct CallGraph {
    pub nodes: Vec<String>,
    /// Distinct caller/callee pairs.
    pub edges: BTreeSet<(String, String)>,
    pub sites: Vec<CallSite>,
    /// Call sites whose callee lies on a cycle through the caller.
    pub recursive_sites: BTreeSet<CallSite>,
    /// Strongly connected components, callees before callers.
    pub sccs: Vec<Vec<String>>,
    scc_of: HashMap<String, usize>,
    cyclic: Vec<bool>,
}

impl CallGraph {
    /// Methods ordered so that callees come before their callers (cycles
    /// are kept together in source order).
    pub fn bottom_up(&self) -> Vec<String> {
        self.sccs.iter().flatten().cloned().collect()
    }

    /// Whether a call from `caller` to `callee` closes a cycle.
    pub fn is_recursive_edge(&self, caller: &str, callee: &str) -> bool {
        match (self.scc_of.get(caller), self.scc_of.get(callee)) {
            (Some(a), Some(b)) => a == b && self.cyclic[*a],
            _ => false,
        }
    }

    /// Whether the method lies on some call cycle.
    pub fn is_recursive(&self, method: &str) -> bool {
        self.scc_of.get(method).is_some_and(|&c| self.cyclic[c])
    }

    pub fn callers_of<'a>(&'a self, callee: &'a str) -> impl Iterator<Item = &'a CallSite> + 'a {
        self.sites.iter().filter(move |s| s.callee == callee)
    }
}

/// Collects the call sites of a statement tree, with paths relative to it.
pub fn call_sites(body: &Stmt) -> Vec<(Vec<usize>, String)> {
    let mut out = Vec::new();
    body.walk(&mut |s, path| {
        if let Stmt::Call { target, .. } = s {
            out.push((path.to_vec(), target.clone()));
        }
    });
    out
}

pub fn build_call_graph(program: &Program) -> CallGraph {
    let mut g: DiGraph<String, ()> = DiGraph::new();
    let mut index: HashMap<String, NodeIndex> = HashMap::new();
    for m in &program.methods {
        index.insert(m.name.clone(), g.add_node(m.name.clone()));
    }
    let mut sites = Vec::new();
    let mut edges = BTreeSet::new();
    for m in &program.methods {
        for (path, callee) in call_sites(&m.body) {
            if let (Some(&a), Some(&b)) = (index.get(&m.name), index.get(&callee)) {
                if edges.insert((m.name.clone(), callee.clone())) {
                    g.add_edge(a, b, ());
                }
            }
            sites.push(CallSite {
                caller: m.name.clone(),
                path,
                callee,
            });
        }
    }

    // tarjan_scc yields components in reverse topological order, which is
    // exactly callees first
    let order = |name: &String| program.methods.iter().position(|m| &m.name == name);
    let mut sccs: Vec<Vec<String>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut names: Vec<String> = c.into_iter().map(|n| g[n].clone()).collect();
            names.sort_by_key(order);
            names
        })
        .collect();
    sccs.retain(|c| !c.is_empty());
    let mut scc_of = HashMap::new();
    let mut cyclic = Vec::new();
    for (i, c) in sccs.iter().enumerate() {
        for n in c {
            scc_of.insert(n.clone(), i);
        }
        let self_loop = c.len() == 1 && edges.contains(&(c[0].clone(), c[0].clone()));
        cyclic.push(c.len() > 1 || self_loop);
    }
    let recursive_sites = sites
        .iter()
        .filter(|s| {
            matches!((scc_of.get(&s.caller), scc_of.get(&s.callee)), (Some(a), Some(b)) if a == b && cyclic[*a])
        })
        .cloned()
        .collect();
    CallGraph {
        nodes: program.methods.iter().map(|m| m.name.clone()).collect(),
        edges,
        sites,
        recursive_sites,
        sccs,
        scc_of,
        cyclic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_str;

    #[test]
    fn single_method() {
        let cg = build_call_graph(&parse_str("def main() { skip; }").unwrap());
        assert_eq!(cg.nodes.len(), 1);
        assert!(cg.edges.is_empty());
    }

    #[test]
    fn self_recursion_flags_only_the_recursive_site() {
        let p = parse_str(
            "def main() { q(3); } def q(n: int) { if (n > 0) { q(n - 1); } }",
        )
        .unwrap();
        let cg = build_call_graph(&p);
        assert!(cg.edges.contains(&("main".into(), "q".into())));
        assert!(cg.edges.contains(&("q".into(), "q".into())));
        assert_eq!(cg.recursive_sites.len(), 1);
        assert_eq!(cg.recursive_sites.iter().next().unwrap().caller, "q");
        assert_eq!(cg.bottom_up(), vec!["q".to_string(), "main".to_string()]);
    }

    #[test]
    fn mutual_recursion() {
        let p = parse_str("def main() { f(); } def f() { g(); } def g() { f(); }").unwrap();
        let cg = build_call_graph(&p);
        assert_eq!(cg.recursive_sites.len(), 2);
        assert!(cg.is_recursive("f") && cg.is_recursive("g"));
        assert!(!cg.is_recursive("main"));
        assert!(cg.is_recursive_edge("g", "f"));
        assert!(!cg.is_recursive_edge("main", "f"));
    }
}
