use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_with;
use super::params::{Bound, ParamId, ParamStore};
use super::{NnError, Result};
use crate::diff::{Tape, Tensor};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Elu,
}

impl Activation {
    pub fn apply<S: Scalar>(self, tape: &mut Tape<S>, x: Tensor) -> Result<Tensor> {
        Ok(match self {
            Self::Identity => x,
            Self::Tanh => tape.tanh(x)?,
            Self::Relu => tape.relu(x)?,
            Self::Elu => tape.elu(x)?,
        })
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(Self::Identity),
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            "elu" => Ok(Self::Elu),
            _ => Err(NnError::InvalidConfig(format!("unknown activation {s}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Identity => "identity",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
            Self::Elu => "elu",
        };
        f.write_str(name)
    }
}

/// Parses layer-size lists such as `32x4,16x4,8x4` (width × repeat) or
/// `16,16`. An empty string is an empty list.
pub fn parse_layer_sizes(s: &str) -> Result<Vec<usize>> {
    let bad = || NnError::InvalidConfig(format!("bad layer sizes {s:?}"));
    let mut sizes = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (width, repeat): (usize, usize) = match part.split_once('x') {
            Some((w, r)) => (w.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?),
            None => (part.parse().map_err(|_| bad())?, 1usize),
        };
        if width == 0 || repeat == 0 {
            return Err(bad());
        }
        sizes.extend(std::iter::repeat_n(width, repeat));
    }
    Ok(sizes)
}

/// Sparse operators derived from one graph, shared by every layer that
/// runs on it. Propagation matrices are built lazily per `delta`.
#[derive(Debug)]
pub struct GraphOps<S> {
    graph: Graph<S>,
    adjacency: Arc<CsrMatrix<S>>,
    gin: Arc<CsrMatrix<S>>,
    propagation: Mutex<Vec<(u64, Arc<CsrMatrix<S>>)>>,
}

impl<S: Scalar> GraphOps<S> {
    pub fn new(graph: Graph<S>) -> Self {
        let adjacency = Arc::new(graph.adjacency().clone());
        let n = graph.n();
        let mut triplets: Vec<(usize, usize, S)> = (0..n).map(|i| (i, i, S::one())).collect();
        for i in 0..n {
            triplets.extend(graph.neighbors(i).map(|(j, w)| (i, j, w)));
        }
        let gin = Arc::new(CsrMatrix::from_triplets(n, n, triplets));
        Self {
            graph,
            adjacency,
            gin,
            propagation: Mutex::new(Vec::new()),
        }
    }

    pub fn graph(&self) -> &Graph<S> {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn adjacency(&self) -> &Arc<CsrMatrix<S>> {
        &self.adjacency
    }

    /// `I + A`: self term plus weighted neighbor sum.
    pub fn gin_operator(&self) -> &Arc<CsrMatrix<S>> {
        &self.gin
    }

    /// `I - delta * L_sym`.
    pub fn propagation(&self, delta: f64) -> Arc<CsrMatrix<S>> {
        let key = delta.to_bits();
        let mut cache = self.propagation.lock().expect("propagation cache poisoned");
        if let Some((_, p)) = cache.iter().find(|(k, _)| *k == key) {
            return Arc::clone(p);
        }
        let p = Arc::new(self.graph.propagation(S::of(delta)));
        cache.push((key, Arc::clone(&p)));
        p
    }
}

/// Affine map `x · W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot_with(rng, in_dim, out_dim));
        let bias = store.add(format!("{name}.bias"), ndarray::Array2::zeros((1, out_dim)));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, bound: &Bound, x: Tensor) -> Result<Tensor> {
        let xw = tape.matmul(x, bound.get(self.weight))?;
        Ok(tape.add_bias_row(xw, bound.get(self.bias))?)
    }
}

/// Heterophilic message passing: `act(P · X · Θ + b)` with
/// `P = I - delta * L_sym`.
#[derive(Debug, Clone)]
pub struct HetMpLayer {
    pub linear: Linear,
    pub delta: f64,
    pub activation: Activation,
}

impl HetMpLayer {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        delta: f64,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(NnError::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            linear: Linear::new(store, name, in_dim, out_dim, rng),
            delta,
            activation,
        })
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Bound,
        x: Tensor,
        ops: &GraphOps<S>,
    ) -> Result<Tensor> {
        let xw = tape.matmul(x, bound.get(self.linear.weight))?;
        let propagated = tape.spmm(&ops.propagation(self.delta), xw)?;
        let h = tape.add_bias_row(propagated, bound.get(self.linear.bias))?;
        self.activation.apply(tape, h)
    }
}

/// GIN layer with `epsilon = 0`: `mlp(x_i + Σ_j w_ij x_j)`, where the inner
/// MLP is two linear maps each followed by the layer activation.
#[derive(Debug, Clone)]
pub struct GinLayer {
    pub first: Linear,
    pub second: Linear,
    pub activation: Activation,
}

impl GinLayer {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.mlp0"), in_dim, out_dim, rng),
            second: Linear::new(store, &format!("{name}.mlp1"), out_dim, out_dim, rng),
            activation,
        }
    }

    /// Neighborhood aggregation without the MLP.
    pub fn aggregate<S: Scalar>(tape: &mut Tape<S>, x: Tensor, ops: &GraphOps<S>) -> Result<Tensor> {
        Ok(tape.spmm(ops.gin_operator(), x)?)
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Bound,
        x: Tensor,
        ops: &GraphOps<S>,
    ) -> Result<Tensor> {
        let h = Self::aggregate(tape, x, ops)?;
        let h = self.first.forward(tape, bound, h)?;
        let h = self.activation.apply(tape, h)?;
        let h = self.second.forward(tape, bound, h)?;
        self.activation.apply(tape, h)
    }
}

/// Stack of linear layers; the activation (and optional dropout) follows
/// every layer except the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Mlp {
    /// `sizes` lists every width including input and output.
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        sizes: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(NnError::InvalidConfig("an MLP needs input and output sizes".into()));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Self {
            layers,
            activation,
            dropout,
        })
    }

    /// `dropout_key` is `(seed, step)` for the dropout stream; `None`
    /// disables dropout.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Bound,
        mut x: Tensor,
        dropout_key: Option<(u64, u64)>,
    ) -> Result<Tensor> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, bound, x)?;
            if i < last {
                x = self.activation.apply(tape, x)?;
                if let Some((seed, step)) = dropout_key {
                    let site = seed.wrapping_add(i as u64);
                    x = tape.dropout(x, self.dropout, true, site, step)?;
                }
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreNetConfig {
    pub hetmp_sizes: Vec<usize>,
    pub hetmp_activation: Activation,
    /// Hidden widths of the head MLP; a final width-1 layer is appended.
    pub mlp_sizes: Vec<usize>,
    pub mlp_activation: Activation,
    pub delta: f64,
}

impl Default for ScoreNetConfig {
    fn default() -> Self {
        Self {
            hetmp_sizes: vec![32, 32, 32, 32, 16, 16, 16, 16, 8, 8, 8, 8],
            hetmp_activation: Activation::Tanh,
            mlp_sizes: vec![16, 16],
            mlp_activation: Activation::Relu,
            delta: 2.0,
        }
    }
}

/// Linear input map, HetMP stack, MLP head, and a tanh squash to one score
/// per node in `(-1, 1)`.
#[derive(Debug, Clone)]
pub struct ScoreNet {
    pub input: Linear,
    pub hetmp: Vec<HetMpLayer>,
    pub head: Mlp,
}

impl ScoreNet {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        config: &ScoreNetConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let hidden = config.hetmp_sizes.first().copied().unwrap_or(in_dim);
        let input = Linear::new(store, &format!("{name}.input"), in_dim, hidden, rng);
        let mut width = hidden;
        let mut hetmp = Vec::with_capacity(config.hetmp_sizes.len());
        for (i, &out) in config.hetmp_sizes.iter().enumerate() {
            hetmp.push(HetMpLayer::new(
                store,
                &format!("{name}.hetmp{i}"),
                width,
                out,
                config.delta,
                config.hetmp_activation,
                rng,
            )?);
            width = out;
        }
        let mut sizes = vec![width];
        sizes.extend(&config.mlp_sizes);
        sizes.push(1);
        let head = Mlp::new(store, &format!("{name}.head"), &sizes, config.mlp_activation, 0.0, rng)?;
        Ok(Self { input, hetmp, head })
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Bound,
        x: Tensor,
        ops: &GraphOps<S>,
    ) -> Result<Tensor> {
        let mut h = self.input.forward(tape, bound, x)?;
        for layer in &self.hetmp {
            h = layer.forward(tape, bound, h, ops)?;
        }
        let logits = self.head.forward(tape, bound, h, None)?;
        Ok(tape.tanh(logits)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::finite_diff_check;
    use crate::graph::{generate, GeneratorSpec};
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k2() -> Graph<f64> {
        Graph::build(2, &[(0, 1, 1.0)], None, None).unwrap()
    }

    fn identity_hetmp(store: &mut ParamStore<f64>, delta: f64) -> HetMpLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = HetMpLayer::new(store, "h", 1, 1, delta, Activation::Identity, &mut rng).unwrap();
        *store.get_mut(layer.linear.weight) = array![[1.0]];
        layer
    }

    #[test]
    fn layer_sizes_grammar() {
        assert_eq!(
            parse_layer_sizes("32x4,16x4,8x4").unwrap(),
            ScoreNetConfig::default().hetmp_sizes
        );
        assert_eq!(parse_layer_sizes("16,16").unwrap(), vec![16, 16]);
        assert_eq!(parse_layer_sizes("").unwrap(), Vec::<usize>::new());
        assert!(parse_layer_sizes("32x").is_err());
        assert!(parse_layer_sizes("0x2").is_err());
    }

    #[test]
    fn hetmp_on_single_edge_sharpens() {
        let mut store = ParamStore::new();
        let layer = identity_hetmp(&mut store, 2.0);
        let ops = GraphOps::new(k2());
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(array![[1.0], [0.0]]);
        let y = layer.forward(&mut tape, &bound, x, &ops).unwrap();
        assert_eq!(tape.value(y), &array![[-1.0], [2.0]]);
    }

    #[test]
    fn hetmp_with_unit_delta_smooths() {
        let mut store = ParamStore::new();
        let layer = identity_hetmp(&mut store, 1.0);
        let ops = GraphOps::new(k2());
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(array![[1.0], [0.0]]);
        let y = layer.forward(&mut tape, &bound, x, &ops).unwrap();
        // P = D^{-1/2} A D^{-1/2}: all mass moves to the neighbor
        assert_eq!(tape.value(y), &array![[0.0], [1.0]]);
    }

    #[test]
    fn hetmp_rejects_non_positive_delta() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(HetMpLayer::new(&mut store, "h", 1, 1, 0.0, Activation::Tanh, &mut rng).is_err());
    }

    #[test]
    fn tiny_delta_acts_per_node() {
        let mut store = ParamStore::new();
        let layer = identity_hetmp(&mut store, 1e-300);
        let g: Graph<f64> = generate(GeneratorSpec::Ring { n: 5 }, 0).unwrap();
        let ops = GraphOps::new(g);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = array![[1.0], [2.0], [3.0], [4.0], [5.0]];
        let x = tape.constant(xv.clone());
        let y = layer.forward(&mut tape, &bound, x, &ops).unwrap();
        assert_eq!(tape.value(y), &xv);
    }

    #[test]
    fn hetmp_isolated_node_is_per_node_map() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = HetMpLayer::new(&mut store, "h", 2, 2, 2.0, Activation::Tanh, &mut rng).unwrap();
        *store.get_mut(layer.linear.bias) = array![[0.1, -0.2]];
        let g = Graph::build(3, &[(0, 1, 1.0)], None, None).unwrap();
        let ops = GraphOps::new(g);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = array![[1.0, 2.0], [0.5, -1.0], [0.3, 0.7]];
        let x = tape.constant(xv.clone());
        let y = layer.forward(&mut tape, &bound, x, &ops).unwrap();
        let expected =
            (xv.row(2).dot(store.get(layer.linear.weight)) + store.get(layer.linear.bias).row(0)).mapv(f64::tanh);
        assert_eq!(tape.value(y).row(2), expected);
    }

    #[test]
    fn gin_aggregation() {
        let mut tape = Tape::new();
        let ops = GraphOps::new(k2());
        let x = tape.constant(array![[1.0], [2.0]]);
        let y = GinLayer::aggregate(&mut tape, x, &ops).unwrap();
        assert_eq!(tape.value(y), &array![[3.0], [3.0]]);

        let isolated = GraphOps::new(Graph::<f64>::build(1, &[], None, None).unwrap());
        let x = tape.constant(array![[4.0, 5.0]]);
        let y = GinLayer::aggregate(&mut tape, x, &isolated).unwrap();
        assert_eq!(tape.value(y), &array![[4.0, 5.0]]);
    }

    #[test]
    fn gin_aggregation_on_path_with_unit_epsilon() {
        // (1 + eps) x_1 + x_0 + x_2 with eps = 1 equals the eps = 0 aggregate plus x_1
        let p3 = Graph::build(3, &[(0, 1, 1.0), (1, 2, 1.0)], None, None).unwrap();
        let ops = GraphOps::new(p3);
        let mut tape = Tape::new();
        let xv = array![[1.0], [10.0], [100.0]];
        let x = tape.constant(xv.clone());
        let y = GinLayer::aggregate(&mut tape, x, &ops).unwrap();
        assert_eq!(tape.value(y)[[1, 0]] + xv[[1, 0]], 2.0 * 10.0 + 1.0 + 100.0);
    }

    #[test]
    fn scorenet_zero_weights_give_zero_scores() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ScoreNet::new(&mut store, "s", 3, &ScoreNetConfig::default(), &mut rng).unwrap();
        for v in store.values_mut() {
            v.fill(0.0);
        }
        let ops = GraphOps::new(generate(GeneratorSpec::Ring { n: 6 }, 0).unwrap());
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(Array2::ones((6, 3)));
        let s = net.forward(&mut tape, &bound, x, &ops).unwrap();
        assert_eq!(tape.value(s), &Array2::<f64>::zeros((6, 1)));
    }

    #[test]
    fn scorenet_scores_stay_in_open_interval() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ScoreNet::new(&mut store, "s", 2, &ScoreNetConfig::default(), &mut rng).unwrap();
        let single = GraphOps::new(Graph::<f64>::build(1, &[], None, None).unwrap());
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(array![[0.3, -2.0]]);
        let s = net.forward(&mut tape, &bound, x, &single).unwrap();
        assert_eq!(tape.shape(s), (1, 1));
        assert!(tape.value(s)[[0, 0]].abs() < 1.0);
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let g: Graph<f64> = generate(GeneratorSpec::ErdosRenyi { n: 7, p: 0.5 }, 2).unwrap();
        let ops = GraphOps::new(g);
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::<f64>::new();
            let config = ScoreNetConfig {
                hetmp_sizes: vec![4, 3],
                mlp_sizes: vec![3],
                ..ScoreNetConfig::default()
            };
            let gin = GinLayer::new(&mut store, "gin", 2, 3, Activation::Elu, &mut rng);
            let net = ScoreNet::new(&mut store, "s", 3, &config, &mut rng).unwrap();
            let x = glorot_with::<f64, _>(&mut rng, 7, 2);
            let check = finite_diff_check(
                |tape, leaves| {
                    let bound = Bound::from_tensors(leaves.to_vec());
                    let xt = tape.constant(x.clone());
                    let h = gin.forward(tape, &bound, xt, &ops).map_err(unwrap_diff)?;
                    let s = net.forward(tape, &bound, h, &ops).map_err(unwrap_diff)?;
                    tape.quadratic_form(s, ops.adjacency())
                },
                store.values(),
                1e-5,
            )
            .unwrap();
            assert!(check.max_rel_error <= 1e-5, "{check:?}");
        }
    }

    fn unwrap_diff(e: NnError) -> crate::diff::DiffError {
        match e {
            NnError::Diff(d) => d,
            other => panic!("{other}"),
        }
    }
}
