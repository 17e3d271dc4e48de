/// One benchmark program with its default input.
#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    pub name: &'static str,
    pub source: &'static str,
    /// Arguments for `main`.
    pub input: &'static [i64],
    /// Has barriers (the starred rows of the benchmark table).
    pub clocked: bool,
    /// Throws; optimized in exceptions mode.
    pub throws: bool,
}

pub const KERNELS: &[Kernel] = &[
    Kernel {
        name: "nqueens",
        source: include_str!("../../kernels/nqueens.finch"),
        input: &[6],
        clocked: false,
        throws: false,
    },
    Kernel {
        name: "health",
        source: include_str!("../../kernels/health.finch"),
        input: &[4],
        clocked: false,
        throws: false,
    },
    Kernel {
        name: "byzantine",
        source: include_str!("../../kernels/byzantine.finch"),
        input: &[128],
        clocked: false,
        throws: false,
    },
    Kernel {
        name: "clocked_bfs",
        source: include_str!("../../kernels/clocked_bfs.finch"),
        input: &[64],
        clocked: true,
        throws: false,
    },
    Kernel {
        name: "clocked_mst",
        source: include_str!("../../kernels/clocked_mst.finch"),
        input: &[48],
        clocked: true,
        throws: false,
    },
    Kernel {
        name: "exc_tree",
        source: include_str!("../../kernels/exc_tree.finch"),
        input: &[4],
        clocked: false,
        throws: true,
    },
    Kernel {
        name: "exc_nested",
        source: include_str!("../../kernels/exc_nested.finch"),
        input: &[6],
        clocked: false,
        throws: true,
    },
];

pub fn kernel(name: &str) -> Option<&'static Kernel> {
    KERNELS.iter().find(|k| k.name == name)
}
