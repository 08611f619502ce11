//! Pretrained scoring functions: KNN and MLP models fit under a feature map,
//! plus the analytic predictor wrapper and counterfactual data augmentation.

use crate::cgm::Cgm;
use crate::error::{Error, Result};
use crate::rng;
use crate::scm::{sigmoid, AnalyticMode, AnalyticPredictor, Dataset, Record, ScmSpec, Task};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which inputs a predictor consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// Observed features and group: `(x, a)`.
    Xa,
    /// Estimated exogenous variables only: `u_hat`.
    UOnly,
    /// Symmetrized features with exogenous estimate:
    /// `((x + x_cf_hat) / 2, u_hat)`.
    SymXU,
}

/// Estimated side inputs a feature map may require.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuxInputs {
    pub u_hat: Option<Vec<f64>>,
    pub x_cf_hat: Option<Vec<f64>>,
}

impl AuxInputs {
    pub const fn none() -> Self {
        Self { u_hat: None, x_cf_hat: None }
    }
}

/// Assembles the model input for one record under a feature map.
pub fn feature_vector(map: FeatureMap, x: &[f64], a: u8, aux: &AuxInputs) -> Result<Vec<f64>> {
    match map {
        FeatureMap::Xa => {
            let mut v = x.to_vec();
            v.push(f64::from(a));
            Ok(v)
        }
        FeatureMap::UOnly => Ok(aux.u_hat.clone().ok_or(Error::MissingAux("u_hat"))?),
        FeatureMap::SymXU => {
            let x_cf = aux.x_cf_hat.as_deref().ok_or(Error::MissingAux("x_cf_hat"))?;
            let u = aux.u_hat.as_deref().ok_or(Error::MissingAux("u_hat"))?;
            if x_cf.len() != x.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), got: x_cf.len() });
            }
            let mut v: Vec<f64> = x.iter().zip(x_cf).map(|(xi, ci)| (xi + ci) / 2.0).collect();
            v.extend_from_slice(u);
            Ok(v)
        }
    }
}

/// Training hyperparameters. The MLP activation is fixed to tanh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub knn_k: usize,
    pub mlp_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Effective batch size is `min(batch_size, n)`.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            mlp_hidden: vec![20, 20],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("counts in TrainConfig must be positive".into()));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// K-nearest-neighbor model over stored training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major training features, `n * dim` values.
    pub points: Vec<f64>,
    pub targets: Vec<f64>,
}

impl KnnModel {
    fn fit(features: Vec<Vec<f64>>, targets: Vec<f64>, k: usize) -> Result<Self> {
        let n = features.len();
        if n < k {
            return Err(Error::InvalidParameter(format!("n = {n} < k = {k}")));
        }
        let dim = features[0].len();
        let mut points = Vec::with_capacity(n * dim);
        for f in &features {
            if f.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.len() });
            }
            points.extend_from_slice(f);
        }
        Ok(Self { k, dim, points, targets })
    }

    /// Mean target of the `k` nearest training points under Euclidean
    /// distance; distance ties are broken toward the lowest training index.
    pub fn predict(&self, query: &[f64]) -> f64 {
        debug_assert_eq!(query.len(), self.dim);
        let n = self.targets.len();
        // Best-k kept sorted ascending by (distance^2, index).
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for i in 0..n {
            let row = &self.points[i * self.dim..(i + 1) * self.dim];
            let mut d2 = 0.0;
            for (q, p) in query.iter().zip(row) {
                let diff = q - p;
                d2 += diff * diff;
            }
            if best.len() == self.k {
                let worst = best[self.k - 1];
                if (d2, i) >= (worst.0, worst.1) {
                    continue;
                }
                best.pop();
            }
            let pos = best.partition_point(|&(bd, bi)| (bd, bi) < (d2, i));
            best.insert(pos, (d2, i));
        }
        let sum: f64 = best.iter().map(|&(_, i)| self.targets[i]).sum();
        sum / best.len() as f64
    }
}

/// Output nonlinearity of the network's last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Linear,
    Sigmoid,
}

/// One dense layer, `rows x cols` weights stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut z = self.biases[r];
            for (w, v) in row.iter().zip(input) {
                z += w * v;
            }
            out.push(z);
        }
    }
}

/// Fully connected network with tanh hidden activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub output: OutputKind,
}

impl MlpModel {
    /// Untrained network with the given layer sizes (input first, output
    /// last); weights drawn symmetric-uniform scaled by fan-in, biases zero.
    pub fn new(dims: &[usize], output: OutputKind, seed: u64) -> Self {
        let mut r = rng::rng_from(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let scale = 1.0 / (cols as f64).sqrt();
                let weights = (0..rows * cols)
                    .map(|_| r.random_range(-scale..scale))
                    .collect();
                Layer { rows, cols, weights, biases: vec![0.0; rows] }
            })
            .collect();
        Self { layers, output }
    }

    /// Activations per layer, input first, network output last.
    fn forward_full(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(acts.last().unwrap(), &mut z);
            if l < last {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            } else if self.output == OutputKind::Sigmoid {
                for v in z.iter_mut() {
                    *v = sigmoid(*v);
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict(&self, input: &[f64]) -> f64 {
        self.forward_full(input).last().unwrap()[0]
    }

    /// Mean loss on a batch: squared error for linear output, binary
    /// cross-entropy for sigmoid output.
    pub fn batch_loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| {
                let p = self.predict(x);
                match self.output {
                    OutputKind::Linear => (p - y) * (p - y),
                    OutputKind::Sigmoid => {
                        let p = p.clamp(1e-12, 1.0 - 1e-12);
                        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                    }
                }
            })
            .sum::<f64>()
            / n
    }

    /// Analytic gradient of [`batch_loss`](Self::batch_loss) in the flat
    /// parameter order of [`params`](Self::params).
    pub fn batch_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                rows: l.rows,
                cols: l.cols,
                weights: vec![0.0; l.weights.len()],
                biases: vec![0.0; l.rows],
            })
            .collect();
        let n = xs.len() as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward_full(x);
            let pred = acts.last().unwrap()[0];
            // dL/dz at the output pre-activation, averaged over the batch.
            let mut delta = vec![match self.output {
                OutputKind::Linear => 2.0 * (pred - y) / n,
                OutputKind::Sigmoid => (pred - y) / n,
            }];
            for l in (0..self.layers.len()).rev() {
                let input = &acts[l];
                let g = &mut grads[l];
                for r in 0..g.rows {
                    g.biases[r] += delta[r];
                    let row = &mut g.weights[r * g.cols..(r + 1) * g.cols];
                    for (w, v) in row.iter_mut().zip(input) {
                        *w += delta[r] * v;
                    }
                }
                if l > 0 {
                    let layer = &self.layers[l];
                    let mut prev = vec![0.0; layer.cols];
                    for (c, p) in prev.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for (r, d) in delta.iter().enumerate() {
                            s += layer.weights[r * layer.cols + c] * d;
                        }
                        let h = acts[l][c];
                        *p = s * (1.0 - h * h);
                    }
                    delta = prev;
                }
            }
        }
        flatten(&grads)
    }

    /// Flattened parameters: per layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = *it.next().expect("parameter count");
            }
        }
        assert!(it.next().is_none(), "parameter count");
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
        .collect()
}

/// Trained or analytic scoring function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PredictorModel {
    Knn(KnnModel),
    Mlp(MlpModel),
    Analytic(AnalyticPredictor),
}

/// A scoring function together with the feature map it consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub model: PredictorModel,
    pub feature_map: FeatureMap,
    pub task: Task,
}

impl Predictor {
    /// Fits a KNN model under `map`. `aux` must supply one entry per record
    /// when the map consumes estimated inputs; pass `&[]` for the plain map.
    pub fn fit_knn(
        data: &Dataset,
        map: FeatureMap,
        aux: &[AuxInputs],
        task: Task,
        cfg: &TrainConfig,
    ) -> Result<Predictor> {
        cfg.validate()?;
        let (features, targets) = training_rows(data, map, aux)?;
        Ok(Predictor {
            model: PredictorModel::Knn(KnnModel::fit(features, targets, cfg.knn_k)?),
            feature_map: map,
            task,
        })
    }

    /// Fits an MLP by mini-batch adaptive-moment gradient descent.
    /// Deterministic given `cfg.seed`.
    pub fn fit_mlp(
        data: &Dataset,
        map: FeatureMap,
        aux: &[AuxInputs],
        task: Task,
        cfg: &TrainConfig,
    ) -> Result<Predictor> {
        cfg.validate()?;
        let (features, targets) = training_rows(data, map, aux)?;
        let n = features.len();
        let batch = cfg.batch_size.min(n);
        if n < batch {
            return Err(Error::InvalidParameter(format!("n = {n} < batch = {batch}")));
        }
        let in_dim = features[0].len();
        let mut dims = vec![in_dim];
        dims.extend_from_slice(&cfg.mlp_hidden);
        dims.push(1);
        let output = match task {
            Task::Regression => OutputKind::Linear,
            Task::Classification => OutputKind::Sigmoid,
        };
        let mut model = MlpModel::new(&dims, output, rng::derive_seed(cfg.seed, "mlp-init"));

        let mut params = model.params();
        let mut m = vec![0.0; params.len()];
        let mut v = vec![0.0; params.len()];
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let mut step = 0usize;
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = rng::rng_from(rng::derive_seed(cfg.seed, "mlp-shuffle"));

        for epoch in 0..cfg.epochs {
            // Fisher-Yates on the index order.
            for i in (1..n).rev() {
                let j = shuffle_rng.random_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(batch) {
                let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| features[i].clone()).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
                let loss = model.batch_loss(&xs, &ys);
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch, loss });
                }
                let grad = model.batch_gradient(&xs, &ys);
                step += 1;
                let bc1 = 1.0 - b1.powi(step as i32);
                let bc2 = 1.0 - b2.powi(step as i32);
                for i in 0..params.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + eps);
                }
                model.set_params(&params);
            }
        }
        let final_loss = model.batch_loss(&features, &targets);
        if !final_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch: cfg.epochs, loss: final_loss });
        }
        Ok(Predictor { model: PredictorModel::Mlp(model), feature_map: map, task })
    }

    /// Wraps the analytic conditional-mean predictor (plain feature map).
    pub fn analytic(spec: &ScmSpec, mode: AnalyticMode) -> Result<Predictor> {
        Ok(Predictor {
            model: PredictorModel::Analytic(spec.analytic_bayes(mode)?),
            feature_map: FeatureMap::Xa,
            task: spec.task,
        })
    }

    /// Pure evaluation at `(x, a)` with whatever estimated inputs the feature
    /// map consumes.
    pub fn predict(&self, x: &[f64], a: u8, aux: &AuxInputs) -> Result<f64> {
        match &self.model {
            PredictorModel::Analytic(p) => Ok(p.predict(x, a)),
            PredictorModel::Knn(k) => Ok(k.predict(&feature_vector(self.feature_map, x, a, aux)?)),
            PredictorModel::Mlp(m) => Ok(m.predict(&feature_vector(self.feature_map, x, a, aux)?)),
        }
    }
}

fn training_rows(
    data: &Dataset,
    map: FeatureMap,
    aux: &[AuxInputs],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if map != FeatureMap::Xa && aux.len() != data.len() {
        return Err(Error::MissingAux("per-record estimates for this feature map"));
    }
    let none = AuxInputs::none();
    let mut features = Vec::with_capacity(data.len());
    let mut targets = Vec::with_capacity(data.len());
    for (i, r) in data.records.iter().enumerate() {
        let ax = aux.get(i).unwrap_or(&none);
        features.push(feature_vector(map, &r.x, r.a, ax)?);
        targets.push(r.y);
    }
    Ok((features, targets))
}

/// Returns the union of `data` with one synthetic record per original:
/// `(g(x, a, 1-a), 1-a)` carrying the unchanged label. Synthetic records have
/// no hidden fields.
pub fn crm_augment(data: &Dataset, g: &Cgm) -> Dataset {
    let mut records = data.records.clone();
    records.extend(data.records.iter().map(|r| Record {
        x: g.counterfactual(&r.x, r.a, 1 - r.a),
        a: 1 - r.a,
        y: r.y,
        u: None,
        x_cf: None,
    }));
    Dataset { x_dim: data.x_dim, records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Form;

    fn knn_xa(data: &Dataset, k: usize) -> Predictor {
        let cfg = TrainConfig { knn_k: k, ..TrainConfig::default() };
        Predictor::fit_knn(data, FeatureMap::Xa, &[], Task::Regression, &cfg).unwrap()
    }

    #[test]
    fn knn_k1_interpolates_training_points() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(500, 3).unwrap();
        let p = knn_xa(&data, 1);
        for r in data.records.iter().take(50) {
            let got = p.predict(&r.x, r.a, &AuxInputs::none()).unwrap();
            assert_eq!(got, r.y);
        }
    }

    #[test]
    fn knn_k_equals_n_returns_global_mean() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(400, 4).unwrap();
        let p = knn_xa(&data, data.len());
        let mean = data.records.iter().map(|r| r.y).sum::<f64>() / data.len() as f64;
        for r in data.records.iter().take(10) {
            let got = p.predict(&r.x, r.a, &AuxInputs::none()).unwrap();
            assert!((got - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_rejects_k_larger_than_n() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(4, 1).unwrap();
        let cfg = TrainConfig { knn_k: 5, ..TrainConfig::default() };
        assert!(Predictor::fit_knn(&data, FeatureMap::Xa, &[], Task::Regression, &cfg).is_err());
    }

    #[test]
    fn knn_tie_break_uses_lowest_index() {
        // Two training points at the same location with different labels.
        let data = Dataset {
            x_dim: 1,
            records: vec![
                Record { x: vec![1.0], a: 0, y: 7.0, u: None, x_cf: None },
                Record { x: vec![1.0], a: 0, y: 9.0, u: None, x_cf: None },
            ],
        };
        let p = knn_xa(&data, 1);
        assert_eq!(p.predict(&[1.0], 0, &AuxInputs::none()).unwrap(), 7.0);
    }

    /// With fixed k, the KNN estimate carries an irreducible variance of
    /// roughly `Var(Y|X,A) / k`; with k growing the estimate converges to the
    /// conditional mean. Checks both regimes against the analytic predictor.
    #[test]
    fn knn_approaches_conditional_mean_at_large_n() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100_000, 5).unwrap();
        let phi = spec.analytic_bayes(AnalyticMode::ClosedForm).unwrap();

        let grid: Vec<f64> = (0..26).map(|i| -2.0 + 0.2 * i as f64).collect();
        let grid_mse = |p: &Predictor| {
            let mut sq = 0.0;
            let mut cnt = 0.0;
            for &x in &grid {
                for a in [0u8, 1] {
                    let knn = p.predict(&[x], a, &AuxInputs::none()).unwrap();
                    let exact = phi.predict(&[x], a);
                    sq += (knn - exact) * (knn - exact);
                    cnt += 1.0;
                }
            }
            sq / cnt
        };

        // Consistent regime: large k keeps the noise-averaging error small.
        let wide = grid_mse(&knn_xa(&data, 200));
        assert!(wide < 0.05, "k=200 grid MSE {wide}");

        // Default k = 5: the variance floor w_y^2 / k = 0.2 dominates.
        let narrow = grid_mse(&knn_xa(&data, 5));
        assert!((0.08..0.40).contains(&narrow), "k=5 grid MSE {narrow}");
    }

    #[test]
    fn mlp_fits_constant_target() {
        let spec = ScmSpec::linear_reg();
        let mut data = spec.sample(200, 6).unwrap();
        for r in &mut data.records {
            r.y = 0.7;
        }
        let cfg = TrainConfig {
            epochs: 1500,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let p = Predictor::fit_mlp(&data, FeatureMap::Xa, &[], Task::Regression, &cfg).unwrap();
        for r in data.records.iter().take(50) {
            let got = p.predict(&r.x, r.a, &AuxInputs::none()).unwrap();
            assert!((got - 0.7).abs() < 0.01, "got {got}");
        }
    }

    #[test]
    fn mlp_gradient_matches_central_differences() {
        let spec = ScmSpec::linear_cls();
        let data = spec.sample(10, 7).unwrap();
        for (task, output) in [
            (Task::Regression, OutputKind::Linear),
            (Task::Classification, OutputKind::Sigmoid),
        ] {
            let xs: Vec<Vec<f64>> = data
                .records
                .iter()
                .map(|r| feature_vector(FeatureMap::Xa, &r.x, r.a, &AuxInputs::none()).unwrap())
                .collect();
            let ys: Vec<f64> = data
                .records
                .iter()
                .map(|r| if task == Task::Regression { r.y + 0.3 } else { r.y })
                .collect();
            let mut worst: f64 = 0.0;
            for trial in 0..20 {
                let mut model = MlpModel::new(&[2, 20, 20, 1], output, 1000 + trial);
                // Move off the init manifold so biases are exercised too.
                let mut r = rng::rng_from(trial);
                let mut params = model.params();
                for p in params.iter_mut() {
                    *p += r.random_range(-0.3..0.3);
                }
                model.set_params(&params);

                let analytic = model.batch_gradient(&xs, &ys);
                let h = 1e-5;
                let mut numeric = vec![0.0; params.len()];
                for i in 0..params.len() {
                    let orig = params[i];
                    params[i] = orig + h;
                    model.set_params(&params);
                    let up = model.batch_loss(&xs, &ys);
                    params[i] = orig - h;
                    model.set_params(&params);
                    let down = model.batch_loss(&xs, &ys);
                    params[i] = orig;
                    numeric[i] = (up - down) / (2.0 * h);
                }
                model.set_params(&params);
                let diff: f64 = analytic
                    .iter()
                    .zip(&numeric)
                    .map(|(a, n)| (a - n) * (a - n))
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
                let rel = diff / scale.max(1e-12);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-5, "worst relative gradient error {worst}");
        }
    }

    #[test]
    fn mlp_training_is_bit_reproducible() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(300, 8).unwrap();
        let cfg = TrainConfig { epochs: 5, seed: 42, ..TrainConfig::default() };
        let p1 = Predictor::fit_mlp(&data, FeatureMap::Xa, &[], Task::Regression, &cfg).unwrap();
        let p2 = Predictor::fit_mlp(&data, FeatureMap::Xa, &[], Task::Regression, &cfg).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn mlp_divergence_is_reported() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(10, 9).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..TrainConfig::default()
        };
        match Predictor::fit_mlp(&data, FeatureMap::Xa, &[], Task::Regression, &cfg) {
            Err(Error::TrainingDiverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mlp_reaches_near_bayes_risk_on_linear_regression() {
        let spec = ScmSpec::linear_reg();
        let train = spec.sample(10_000, 10).unwrap();
        let test = spec.sample(10_000, 11).unwrap();
        let cfg = TrainConfig::default();
        let p = Predictor::fit_mlp(&train, FeatureMap::Xa, &[], Task::Regression, &cfg).unwrap();
        let mse = test
            .records
            .iter()
            .map(|r| {
                let pred = p.predict(&r.x, r.a, &AuxInputs::none()).unwrap();
                (pred - r.y) * (pred - r.y)
            })
            .sum::<f64>()
            / test.len() as f64;
        // Bayes risk is w_y^2 = 1.
        assert!(mse < 1.1, "held-out MSE {mse}");
    }

    #[test]
    fn analytic_wrapper_reproduces_closed_form() {
        let spec = ScmSpec::linear_reg();
        let p = Predictor::analytic(&spec, AnalyticMode::ClosedForm).unwrap();
        let direct = spec.analytic_bayes(AnalyticMode::ClosedForm).unwrap();
        for x in [-1.5, 0.0, 2.0] {
            for a in [0u8, 1] {
                assert_eq!(
                    p.predict(&[x], a, &AuxInputs::none()).unwrap(),
                    direct.predict(&[x], a)
                );
            }
        }
    }

    #[test]
    fn u_only_predictor_ignores_x_and_a() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(500, 12).unwrap();
        let aux: Vec<AuxInputs> = data
            .records
            .iter()
            .map(|r| AuxInputs { u_hat: r.u.clone(), x_cf_hat: None })
            .collect();
        let cfg = TrainConfig::default();
        let p = Predictor::fit_knn(&data, FeatureMap::UOnly, &aux, Task::Regression, &cfg).unwrap();
        let fixed = AuxInputs { u_hat: Some(vec![0.4]), x_cf_hat: None };
        let base = p.predict(&[0.0], 0, &fixed).unwrap();
        assert_eq!(p.predict(&[99.0], 1, &fixed).unwrap(), base);
        assert!(p.predict(&[0.0], 0, &AuxInputs::none()).is_err());
    }

    #[test]
    fn sym_feature_is_symmetric_in_x_and_counterfactual() {
        let a = feature_vector(
            FeatureMap::SymXU,
            &[2.0],
            1,
            &AuxInputs { u_hat: Some(vec![0.3]), x_cf_hat: Some(vec![1.0]) },
        )
        .unwrap();
        let b = feature_vector(
            FeatureMap::SymXU,
            &[1.0],
            0,
            &AuxInputs { u_hat: Some(vec![0.3]), x_cf_hat: Some(vec![2.0]) },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crm_augment_doubles_and_matches_oracle_counterfactuals() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(500, 13).unwrap();
        let g = Cgm::oracle(spec.clone()).unwrap();
        let aug = crm_augment(&data, &g);
        assert_eq!(aug.len(), 2 * data.len());
        for (i, r) in data.records.iter().enumerate() {
            let s = &aug.records[data.len() + i];
            assert_eq!(s.x, *r.x_cf.as_ref().unwrap());
            assert_eq!(s.a, 1 - r.a);
            assert_eq!(s.y, r.y);
            assert!(s.u.is_none() && s.x_cf.is_none());
        }
    }

    #[test]
    fn crm_augmented_loss_equals_two_term_objective() {
        // Empirical loss on the augmented set = (factual loss + counterfactual
        // loss) / 2 for any predictor; checked on a fitted KNN.
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(2000, 14).unwrap();
        let g = Cgm::oracle(spec.clone()).unwrap();
        let aug = crm_augment(&data, &g);
        let p = knn_xa(&aug, 5);
        let loss = |x: &[f64], a: u8, y: f64| {
            let pred = p.predict(x, a, &AuxInputs::none()).unwrap();
            (pred - y) * (pred - y)
        };
        let factual: f64 = data.records.iter().map(|r| loss(&r.x, r.a, r.y)).sum();
        let counter: f64 = data
            .records
            .iter()
            .map(|r| loss(&g.counterfactual(&r.x, r.a, 1 - r.a), 1 - r.a, r.y))
            .sum();
        let two_term = (factual + counter) / data.len() as f64;
        let augmented = aug.records.iter().map(|r| loss(&r.x, r.a, r.y)).sum::<f64>()
            / data.len() as f64;
        assert!((two_term - augmented).abs() < 1e-9);
    }

    #[test]
    fn predictor_serializes_to_json() {
        let spec = ScmSpec::scalar(Form::Linear, Task::Regression, 1.0, 2.0, 0.5, 1.0, 1.0, 0.4)
            .unwrap();
        let data = spec.sample(50, 15).unwrap();
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        for p in [
            knn_xa(&data, 3),
            Predictor::fit_mlp(&data, FeatureMap::Xa, &[], Task::Regression, &cfg).unwrap(),
            Predictor::analytic(&spec, AnalyticMode::ClosedForm).unwrap(),
        ] {
            let text = serde_json::to_string(&p).unwrap();
            let back: Predictor = serde_json::from_str(&text).unwrap();
            assert_eq!(p, back);
        }
    }
}
