//! Model parameters, initialisers and the layer-wise embedding generation.

mod checkpoint;
mod propagate;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use propagate::{
    edge_attention, fair_embedding_generation, propagate_baseline, propagate_fair, score, sigmoid,
    EdgeGates, EmbeddingLayers, ATTENTION_FLOOR,
};
pub(crate) use propagate::degree_scales;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::InteractionGraph;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::rng_from;

/// Propagation rule used by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plain light graph convolution.
    LightGcn,
    /// Per-edge scalar attention `delta * sigmoid(h_u . h_i)` in the denominator.
    FairAttention,
    /// Per-feature attention `delta * sigmoid((h_u . h_i) W_k)`, applied by Hadamard division.
    HetroFair,
}

impl Mode {
    pub fn tag(self) -> u8 {
        match self {
            Mode::LightGcn => 0,
            Mode::FairAttention => 1,
            Mode::HetroFair => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Mode::LightGcn),
            1 => Some(Mode::FairAttention),
            2 => Some(Mode::HetroFair),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LightGcn => "lightgcn",
            Mode::FairAttention => "fair_attention",
            Mode::HetroFair => "hetrofair",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lightgcn" => Ok(Mode::LightGcn),
            "fair_attention" | "fair" => Ok(Mode::FairAttention),
            "hetrofair" => Ok(Mode::HetroFair),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Zeros,
    /// Normal with mean 0 and the given standard deviation.
    Normal(f64),
    Xavier,
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Zeros => f.write_str("zeros"),
            InitScheme::Normal(std) if *std == 0.01 => f.write_str("normal"),
            InitScheme::Normal(std) => write!(f, "normal:{std}"),
            InitScheme::Xavier => f.write_str("xavier"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zeros" | "zero" => Ok(InitScheme::Zeros),
            "normal" => Ok(InitScheme::Normal(0.01)),
            "xavier" => Ok(InitScheme::Xavier),
            other => match other.strip_prefix("normal:").map(str::parse::<f64>) {
                Some(Ok(std)) if std > 0.0 => Ok(InitScheme::Normal(std)),
                _ => Err(Error::InvalidArgument(format!("unknown init scheme '{s}'"))),
            },
        }
    }
}

/// Uniform Glorot initialisation on `[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]`.
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = rng_from(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

pub fn alt_init(rows: usize, cols: usize, scheme: InitScheme, seed: u64) -> Matrix {
    match scheme {
        InitScheme::Zeros => Matrix::zeros(rows, cols),
        InitScheme::Xavier => xavier_init(rows, cols, seed),
        InitScheme::Normal(std) => {
            let mut rng = rng_from(seed);
            let dist = Normal::new(0.0, std).expect("positive standard deviation");
            Matrix::from_fn(rows, cols, |_, _| dist.sample(&mut rng))
        }
    }
}

/// Trainable state plus the structural hyper-parameters needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Initial embeddings `H^(0)`, one row per node (users then items).
    pub x: Matrix,
    /// One row vector per layer; only read in [`Mode::HetroFair`].
    pub w: Vec<Vec<f64>>,
    pub delta: f64,
    pub mode: Mode,
    pub norm_exponent: f64,
}

impl ModelParams {
    /// Xavier-initialised embeddings and per-layer weights drawn with
    /// `w_init`. `x_seed` and `w_seed` are independent streams.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        num_nodes: usize,
        dim: usize,
        layers: usize,
        mode: Mode,
        delta: f64,
        norm_exponent: f64,
        w_init: InitScheme,
        x_seed: u64,
        w_seed: u64,
    ) -> Result<Self> {
        let x = xavier_init(num_nodes, dim, x_seed);
        let w = (0..layers)
            .map(|k| alt_init(1, dim, w_init, w_seed.wrapping_add(k as u64)).into_vec())
            .collect();
        let params = Self {
            x,
            w,
            delta,
            mode,
            norm_exponent,
        };
        params.validate_shape()?;
        Ok(params)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn layers(&self) -> usize {
        self.w.len()
    }

    pub fn validate_shape(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim() == 0 {
            problems.push("embedding dimension must be >= 1".to_string());
        }
        if self.layers() == 0 {
            problems.push("number of layers must be >= 1".to_string());
        }
        if let Some(k) = self.w.iter().position(|w| w.len() != self.dim()) {
            problems.push(format!("W[{k}] has width {} but d = {}", self.w[k].len(), self.dim()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            problems.push(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if !self.norm_exponent.is_finite() {
            problems.push("norm exponent must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn validate(&self, graph: &InteractionGraph) -> Result<()> {
        self.validate_shape()?;
        if self.x.rows() != graph.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "embedding table has {} rows but the graph has {} nodes",
                self.x.rows(),
                graph.num_nodes()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.w.iter().flatten().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let a = xavier_init(40, 16, 9);
        assert_eq!(a, xavier_init(40, 16, 9));
        assert_ne!(a, xavier_init(40, 16, 10));
        let bound = (6.0f64 / 56.0).sqrt();
        assert!(a.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn xavier_mean_within_three_standard_errors() {
        let m = xavier_init(1000, 64, 1);
        let n = m.as_slice().len() as f64;
        let bound = (6.0f64 / 1064.0).sqrt();
        // Uniform(-b, b) has variance b^2 / 3.
        let se = (bound * bound / 3.0 / n).sqrt();
        let mean = m.as_slice().iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs 3se {}", 3.0 * se);
    }

    #[test]
    fn alternative_initialisers() {
        assert!(alt_init(3, 4, InitScheme::Zeros, 5).as_slice().iter().all(|&v| v == 0.0));
        let a = alt_init(10, 10, InitScheme::Normal(0.01), 5);
        assert_eq!(a, alt_init(10, 10, InitScheme::Normal(0.01), 5));
        let big = alt_init(1000, 100, InitScheme::Normal(0.01), 11);
        let n = 1e5;
        let mean = big.as_slice().iter().sum::<f64>() / n;
        let var = big.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.01).abs() < 0.002);
    }

    #[test]
    fn init_scheme_parsing() {
        assert_eq!("zeros".parse::<InitScheme>().unwrap(), InitScheme::Zeros);
        assert_eq!("normal".parse::<InitScheme>().unwrap(), InitScheme::Normal(0.01));
        assert_eq!("normal:0.1".parse::<InitScheme>().unwrap(), InitScheme::Normal(0.1));
        assert!("uniform".parse::<InitScheme>().is_err());
        for s in ["zeros", "normal", "xavier", "normal:0.5"] {
            assert_eq!(s.parse::<InitScheme>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn shape_validation() {
        let p = ModelParams::init(5, 3, 2, Mode::HetroFair, 0.5, 0.5, InitScheme::Xavier, 1, 2).unwrap();
        assert_eq!(p.layers(), 2);
        assert!(ModelParams::init(5, 3, 0, Mode::HetroFair, 0.5, 0.5, InitScheme::Xavier, 1, 2).is_err());
        assert!(ModelParams::init(5, 3, 2, Mode::HetroFair, 0.0, 0.5, InitScheme::Xavier, 1, 2).is_err());
        let g = InteractionGraph::from_edges(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert!(p.validate(&g).is_err());
    }

    #[test]
    fn mode_tags_roundtrip() {
        for m in [Mode::LightGcn, Mode::FairAttention, Mode::HetroFair] {
            assert_eq!(Mode::from_tag(m.tag()), Some(m));
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!(Mode::from_tag(3), None);
    }
}
