use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {0:?}: every dimension must be at least 1")]
    ZeroDim([usize; 4]),
    #[error("element count of {0:?} overflows usize")]
    Overflow([usize; 4]),
    #[error("data length {got} does not match dimensions (expected {expected})")]
    DataLength { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("spatial size {h}x{w} must be even")]
    OddSize { h: usize, w: usize },
    #[error("invalid range: lo ({lo}) must be below hi ({hi})")]
    Range { lo: f64, hi: f64 },
    #[error("block grid mismatch: {0}")]
    Grid(String),
    #[error(
        "block size {size} cannot be halved while low-resolution blocks are present; \
         use a larger base block size"
    )]
    BlockFloor { size: usize },
    #[error("unsupported padding width {0}; only width 1 is supported")]
    PadWidth(usize),
    #[error("channel mismatch: layer expects {expected} input channels, got {got}")]
    Channels { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid network: {0}")]
    Network(String),
    #[error("policy network cannot map a {input}x{input_w} input onto a {gy}x{gx} grid")]
    PolicyGeometry {
        input: usize,
        input_w: usize,
        gy: usize,
        gx: usize,
    },
    #[error("{blocks} blocks are too many to enumerate (limit {limit})")]
    TooManyBlocks { blocks: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
