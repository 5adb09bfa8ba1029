use thiserror::Error;

/// Errors raised by the estimators and their supporting types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AddfitError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    /// The local design at `x` has too few distinct in-window points (or is
    /// numerically rank deficient). `index` is the design-point index when
    /// the evaluation point is itself an observation.
    #[error("singular local design at x = {x}{}", index.map(|i| format!(" (design point {i})")).unwrap_or_default())]
    SingularLocalDesign { x: f64, index: Option<usize> },

    #[error("bad replicate pair ({base}, {partner}) for a panel with {replicates} replicates")]
    BadReplicateIndex {
        base: usize,
        partner: usize,
        replicates: usize,
    },

    #[error("derivative curves are defined on different grids")]
    GridMismatch,

    #[error("derivative curve covers {covered:.3} of the observed mass, {required:.3} required")]
    InsufficientCoverage { covered: f64, required: f64 },

    #[error("shared slope not identifiable at x = {x}: every in-window difference is zero")]
    NonIdentifiable { x: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<AddfitError>,
    },
}

impl AddfitError {
    pub(crate) fn in_component(self, component: usize) -> Self {
        match self {
            already @ AddfitError::Component { .. } => already,
            other => AddfitError::Component {
                component,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, AddfitError>;
