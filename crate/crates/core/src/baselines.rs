//! Classical comparison models on flattened prefixes: logistic
//! regression, a CART decision tree and a bagged random forest.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linalg::sigmoid;
use crate::tensorize::PrefixDataset;

/// Row-major `[s][T·v]` features with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatDataset {
    features: usize,
    x: Vec<f32>,
    y: Vec<bool>,
}

impl FlatDataset {
    pub fn new(features: usize, x: Vec<f32>, y: Vec<bool>) -> Result<Self> {
        if x.len() != features * y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill {} rows of {features} features",
                x.len(),
                y.len()
            )));
        }
        Ok(Self { features, x, y })
    }

    /// Flattens each zero-padded `[T][v]` sample into one row.
    pub fn from_prefixes(ds: &PrefixDataset) -> Self {
        Self {
            features: ds.steps() * ds.width(),
            x: ds.to_dense_f32(),
            y: ds.labels().iter().map(|&l| l >= 0.5).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> bool {
        self.y[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }
}

/// Anything that maps one flat row to a probability of the positive class.
pub trait Classifier: Sync {
    fn predict_row(&self, x: &[f32]) -> f64;

    fn predict(&self, ds: &FlatDataset) -> Vec<f64> {
        (0..ds.len()).into_par_iter().map(|i| self.predict_row(ds.row(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogRegModel {
    pub fn zeros(features: usize) -> Self {
        Self {
            weights: vec![0.0; features],
            bias: 0.0,
        }
    }

    fn logit(&self, x: &[f32]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(&w, &v)| w * v as f64).sum::<f64>()
    }
}

impl Classifier for LogRegModel {
    fn predict_row(&self, x: &[f32]) -> f64 {
        sigmoid(self.logit(x))
    }
}

const ROW_CHUNK: usize = 256;

/// Mean BCE plus `l2/2·‖w‖²` (bias unpenalized), and its gradient as
/// `(d weights, d bias)`.
pub fn logreg_loss_and_gradient(model: &LogRegModel, ds: &FlatDataset, l2: f64) -> (f64, Vec<f64>, f64) {
    let f = ds.features();
    let partials: Vec<(f64, Vec<f64>, f64)> = (0..ds.len())
        .collect::<Vec<_>>()
        .par_chunks(ROW_CHUNK)
        .map(|rows| {
            let mut loss = 0.0;
            let mut gw = vec![0.0; f];
            let mut gb = 0.0;
            for &i in rows {
                let x = ds.row(i);
                let z = model.logit(x);
                let y = if ds.label(i) { 1.0 } else { 0.0 };
                loss += crate::nn::bce_with_logit(z, y);
                let d = sigmoid(z) - y;
                gb += d;
                for (g, &v) in gw.iter_mut().zip(x) {
                    *g += d * v as f64;
                }
            }
            (loss, gw, gb)
        })
        .collect();

    let n = ds.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; f];
    let mut gb = 0.0;
    for (l, w, b) in partials {
        loss += l;
        gb += b;
        for (g, p) in gw.iter_mut().zip(w) {
            *g += p;
        }
    }
    let penalty: f64 = model.weights.iter().map(|w| w * w).sum();
    for (g, &w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + 0.5 * l2 * penalty, gw, gb / n)
}

/// Full-batch gradient descent from zero weights.
pub fn train_logreg(ds: &FlatDataset, cfg: &LogRegConfig) -> Result<LogRegModel> {
    ds.check_nonempty()?;
    let mut model = LogRegModel::zeros(ds.features());
    for _ in 0..cfg.epochs {
        let (_, gw, gb) = logreg_loss_and_gradient(&model, ds, cfg.l2);
        for (w, g) in model.weights.iter_mut().zip(gw) {
            *w -= cfg.lr * g;
        }
        model.bias -= cfg.lr * gb;
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        probability: f64,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

impl Classifier for DecisionTree {
    fn predict_row(&self, x: &[f32]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { probability, .. } => return probability,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f32,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Best threshold on one feature. Thresholds are observed values, so the
/// partition only depends on the order of the feature values.
fn best_split_on(ds: &FlatDataset, rows: &[usize], feature: usize, min_leaf: usize, parent: f64) -> Option<Candidate> {
    // Padding makes zero by far the most common value, so only the
    // non-zero values are sorted and zeros join as one group.
    let mut nonzero: Vec<(f32, bool)> = Vec::new();
    let (mut zeros, mut zero_pos) = (0usize, 0usize);
    for &r in rows {
        let v = ds.row(r)[feature];
        let y = ds.label(r);
        if v == 0.0 {
            zeros += 1;
            zero_pos += y as usize;
        } else {
            nonzero.push((v, y));
        }
    }
    if nonzero.is_empty() {
        return None;
    }
    nonzero.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // Distinct values as (value, count, positives), ascending.
    let mut groups: Vec<(f32, usize, usize)> = Vec::new();
    let mut zero_placed = zeros == 0;
    for (v, y) in nonzero {
        if !zero_placed && v > 0.0 {
            groups.push((0.0, zeros, zero_pos));
            zero_placed = true;
        }
        match groups.last_mut() {
            Some(g) if g.0 == v => {
                g.1 += 1;
                g.2 += y as usize;
            }
            _ => groups.push((v, 1, y as usize)),
        }
    }
    if !zero_placed {
        groups.push((0.0, zeros, zero_pos));
    }
    if groups.len() < 2 {
        return None;
    }

    let n = rows.len();
    let total_pos: usize = groups.iter().map(|g| g.2).sum();
    let (mut left_n, mut left_pos) = (0usize, 0usize);
    let mut best: Option<Candidate> = None;
    for g in &groups[..groups.len() - 1] {
        left_n += g.1;
        left_pos += g.2;
        let right_n = n - left_n;
        if left_n < min_leaf || right_n < min_leaf {
            continue;
        }
        let weighted = (left_n as f64 * gini(left_pos, left_n) + right_n as f64 * gini(total_pos - left_pos, right_n))
            / n as f64;
        let gain = parent - weighted;
        if best.is_none_or(|b| gain > b.gain) {
            best = Some(Candidate {
                gain,
                feature,
                threshold: g.0,
            });
        }
    }
    best
}

struct Grower<'a> {
    ds: &'a FlatDataset,
    cfg: TreeConfig,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let f = self.ds.features();
        match &mut self.rng {
            Some(rng) if self.max_features < f => {
                let mut chosen = index::sample(rng, f, self.max_features).into_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..f).collect(),
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.ds.label(r)).count();
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            probability: pos as f64 / n as f64,
            samples: n,
        });
        if depth >= self.cfg.max_depth || pos == 0 || pos == n || n < 2 * self.cfg.min_leaf {
            return at;
        }

        let parent = gini(pos, n);
        let features = self.candidate_features();
        let (ds, min_leaf) = (self.ds, self.cfg.min_leaf);
        let found: Vec<Option<Candidate>> = features
            .par_iter()
            .map(|&feature| best_split_on(ds, &rows, feature, min_leaf, parent))
            .collect();
        // Ties go to the lowest feature index.
        let best = found
            .into_iter()
            .flatten()
            .fold(None::<Candidate>, |acc, c| match acc {
                Some(a) if a.gain >= c.gain => Some(a),
                _ => Some(c),
            });
        let Some(split) = best.filter(|c| c.gain > 1e-12) else {
            return at;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.ds.row(r)[split.feature] <= split.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

fn grow_tree(ds: &FlatDataset, rows: Vec<usize>, cfg: TreeConfig, max_features: usize, rng: Option<ChaCha8Rng>) -> DecisionTree {
    let mut grower = Grower {
        ds,
        cfg,
        max_features,
        rng,
        nodes: Vec::new(),
    };
    grower.grow(rows, 0);
    DecisionTree { nodes: grower.nodes }
}

/// CART with Gini impurity over all features.
pub fn train_tree(ds: &FlatDataset, cfg: &TreeConfig) -> Result<DecisionTree> {
    ds.check_nonempty()?;
    if cfg.min_leaf == 0 {
        return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
    }
    Ok(grow_tree(ds, (0..ds.len()).collect(), *cfg, ds.features(), None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    /// Features considered per split; `None` means `⌊√F⌋`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeConfig::default(),
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub seeds: Vec<u64>,
}

impl Classifier for Forest {
    fn predict_row(&self, x: &[f32]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Per-tree seeds come from the master seed up front, so the forest does
/// not depend on how trees are scheduled across threads.
pub fn train_forest(ds: &FlatDataset, cfg: &ForestConfig) -> Result<Forest> {
    ds.check_nonempty()?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    if cfg.tree.min_leaf == 0 {
        return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
    }
    let f = ds.features();
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (f as f64).sqrt().floor() as usize)
        .clamp(1, f.max(1));
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.n_trees).map(|_| master.random()).collect();
    let trees = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = ds.len();
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(ds, rows, cfg.tree, max_features, Some(rng))
        })
        .collect();
    Ok(Forest { trees, seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn flat(rows: &[&[f32]], y: &[u8]) -> FlatDataset {
        let f = rows[0].len();
        FlatDataset::new(f, rows.concat(), y.iter().map(|&v| v == 1).collect()).unwrap()
    }

    fn accuracy<C: Classifier>(c: &C, ds: &FlatDataset) -> f64 {
        let hits = c
            .predict(ds)
            .iter()
            .zip(ds.labels())
            .filter(|(p, &y)| (**p >= 0.5) == y)
            .count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn logreg_separates_a_separable_fixture() {
        let ds = flat(
            &[&[0.0, 1.0], &[0.2, 0.9], &[0.1, 0.7], &[1.0, 0.1], &[0.9, 0.0], &[0.8, 0.3]],
            &[0, 0, 0, 1, 1, 1],
        );
        let m = train_logreg(&ds, &LogRegConfig { lr: 1.0, epochs: 500, l2: 0.0 }).unwrap();
        assert_eq!(accuracy(&m, &ds), 1.0);
    }

    #[test]
    fn logreg_on_zero_features_predicts_sigmoid_bias() {
        let ds = flat(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]], &[1, 1, 0]);
        let m = train_logreg(&ds, &LogRegConfig::default()).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert_eq!(m.predict_row(&[0.0, 0.0]), sigmoid(m.bias));
        assert!(m.bias > 0.0);
    }

    #[test]
    fn logreg_duplicated_data_fits_the_same_weights() {
        let rows: [&[f32]; 4] = [&[0.5, -1.0], &[1.5, 0.2], &[-0.3, 0.8], &[2.0, 2.0]];
        let ds = flat(&rows, &[0, 1, 0, 1]);
        let doubled = flat(&[&rows[..], &rows[..]].concat(), &[0, 1, 0, 1, 0, 1, 0, 1]);
        let cfg = LogRegConfig::default();
        let a = train_logreg(&ds, &cfg).unwrap();
        let b = train_logreg(&doubled, &cfg).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.bias - b.bias).abs() < 1e-12);
    }

    #[test]
    fn logreg_gradient_matches_finite_differences() {
        let ds = flat(
            &[&[0.3, -1.2, 0.5], &[1.1, 0.4, -0.7], &[-0.6, 0.9, 0.2], &[0.0, 0.5, 1.5]],
            &[1, 0, 0, 1],
        );
        let l2 = 0.3;
        let model = LogRegModel {
            weights: vec![0.2, -0.4, 0.7],
            bias: -0.1,
        };
        let (_, gw, gb) = logreg_loss_and_gradient(&model, &ds, l2);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        for (k, &g) in gw.iter().enumerate() {
            let mut plus = model.clone();
            plus.weights[k] += h;
            let mut minus = model.clone();
            minus.weights[k] -= h;
            let num = (logreg_loss_and_gradient(&plus, &ds, l2).0 - logreg_loss_and_gradient(&minus, &ds, l2).0) / (2.0 * h);
            assert!(rel(g, num) < 1e-6, "w{k}: {g} vs {num}");
        }
        let mut plus = model.clone();
        plus.bias += h;
        let mut minus = model.clone();
        minus.bias -= h;
        let num = (logreg_loss_and_gradient(&plus, &ds, l2).0 - logreg_loss_and_gradient(&minus, &ds, l2).0) / (2.0 * h);
        assert!(rel(gb, num) < 1e-6);
    }

    #[test]
    fn pure_labels_give_a_single_leaf() {
        let ds = flat(&[&[1.0], &[2.0], &[3.0]], &[1, 1, 1]);
        let t = train_tree(&ds, &TreeConfig::default()).unwrap();
        assert_eq!(t.nodes, vec![TreeNode::Leaf { probability: 1.0, samples: 3 }]);
    }

    #[test]
    fn one_split_fixture_finds_the_threshold() {
        // Candidates between distinct values: only x <= 3 separates the classes.
        let ds = flat(&[&[1.0, 5.0], &[2.0, 5.0], &[3.0, 5.0], &[4.0, 5.0], &[6.0, 5.0]], &[0, 0, 0, 1, 1]);
        let t = train_tree(&ds, &TreeConfig { max_depth: 10, min_leaf: 1 }).unwrap();
        assert_eq!(t.depth(), 1);
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, threshold, .. } if threshold == 3.0));
        assert_eq!(accuracy(&t, &ds), 1.0);
    }

    #[test]
    fn depth_limit_is_respected() {
        let rows: Vec<Vec<f32>> = (0..64).map(|i| vec![i as f32, (i * 7 % 13) as f32]).collect();
        let y: Vec<u8> = (0..64).map(|i| ((i / 3) % 2) as u8).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat(&refs, &y);
        for depth in 0..4 {
            let t = train_tree(&ds, &TreeConfig { max_depth: depth, min_leaf: 1 }).unwrap();
            assert!(t.depth() <= depth);
        }
    }

    #[test]
    fn degenerate_forest_equals_a_tree() {
        let rows: Vec<Vec<f32>> = (0..40).map(|i| vec![(i % 7) as f32, (i % 5) as f32 - 2.0, 0.0]).collect();
        let y: Vec<u8> = (0..40).map(|i| ((i % 7) > 3 || i % 5 == 0) as u8).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = flat(&refs, &y);
        let tree_cfg = TreeConfig { max_depth: 4, min_leaf: 2 };
        let tree = train_tree(&ds, &tree_cfg).unwrap();
        let forest = train_forest(
            &ds,
            &ForestConfig {
                n_trees: 1,
                tree: tree_cfg,
                max_features: Some(3),
                bootstrap: false,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(forest.trees[0], tree);
    }

    fn noisy_fixture(seed: u64, n: usize) -> FlatDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n * 4);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let signal = row[0] + 0.5 * row[1] > 0.0;
            y.push(if rng.random_bool(0.15) { !signal } else { signal });
            x.extend(row);
        }
        FlatDataset::new(4, x, y).unwrap()
    }

    #[test]
    fn forest_is_deterministic_per_seed() {
        let ds = noisy_fixture(1, 120);
        let cfg = ForestConfig {
            n_trees: 8,
            seed: 42,
            ..Default::default()
        };
        assert_eq!(train_forest(&ds, &cfg).unwrap(), train_forest(&ds, &cfg).unwrap());
    }

    #[test]
    fn forest_matches_or_beats_a_tree_on_noisy_data() {
        let mut wins = 0;
        for seed in 0..5 {
            let train = noisy_fixture(seed, 300);
            let test = noisy_fixture(100 + seed, 300);
            let tree = train_tree(&train, &TreeConfig::default()).unwrap();
            let forest = train_forest(
                &train,
                &ForestConfig {
                    n_trees: 30,
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            if accuracy(&forest, &train) >= accuracy(&tree, &test) {
                wins += 1;
            }
        }
        assert!(wins >= 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tree_predictions_survive_monotone_transforms(
            grid in proptest::collection::vec((-8i32..8, -8i32..8, 0u8..2), 12..60),
            probe in proptest::collection::vec((-9i32..9, -9i32..9), 1..20),
        ) {
            let cube = |v: i32| (v as f32).powi(3);
            let mut x = Vec::new();
            let mut xt = Vec::new();
            let mut y = Vec::new();
            for &(a, b, l) in &grid {
                x.extend([a as f32, b as f32]);
                xt.extend([cube(a), cube(b)]);
                y.push(l == 1);
            }
            let ds = FlatDataset::new(2, x, y.clone()).unwrap();
            let dst = FlatDataset::new(2, xt, y).unwrap();
            let cfg = TreeConfig { max_depth: 4, min_leaf: 2 };
            let t = train_tree(&ds, &cfg).unwrap();
            let tt = train_tree(&dst, &cfg).unwrap();
            for &(a, b) in &probe {
                prop_assert_eq!(t.predict_row(&[a as f32, b as f32]), tt.predict_row(&[cube(a), cube(b)]));
            }
        }

        #[test]
        fn baseline_outputs_are_probabilities(seed in 0u64..1000) {
            let ds = noisy_fixture(seed, 40);
            let lr = train_logreg(&ds, &LogRegConfig { epochs: 20, ..Default::default() }).unwrap();
            let tree = train_tree(&ds, &TreeConfig::default()).unwrap();
            let forest = train_forest(&ds, &ForestConfig { n_trees: 3, seed, ..Default::default() }).unwrap();
            for p in lr.predict(&ds).into_iter().chain(tree.predict(&ds)).chain(forest.predict(&ds)) {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
