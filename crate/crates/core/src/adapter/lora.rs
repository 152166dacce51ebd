use super::{AdapterError, CosineSchedule, Matrix, TokenMatrix};
use crate::eval::ExactSum;
use crate::seed;

/// Standard deviation of the Gaussian used to initialise `A`.
pub const LORA_INIT_STD: f64 = 0.02;

/// Central finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-6;

/// Gradient magnitudes below this are compared absolutely in [`grad_check`].
const GRAD_FLOOR: f64 = 1e-7;

/// Linear layer `y = x·W0ᵀ + (α/r)·x·(B·A)ᵀ` with a frozen base `W0`.
///
/// Shapes: `W0` is `d_out×d_in`, `A` is `r×d_in`, `B` is `d_out×r`.
/// There is no mutable access to `W0`; training only touches `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLinear {
    w0: Matrix,
    a: Matrix,
    b: Matrix,
    alpha: f64,
}

impl LoraLinear {
    pub fn new(w0: Matrix, a: Matrix, b: Matrix, alpha: f64) -> Result<Self, AdapterError> {
        let (d_out, d_in) = w0.shape();
        let rank = a.rows();
        if rank == 0 || rank > d_out.min(d_in) {
            return Err(AdapterError::InvalidLora(format!(
                "rank {rank} must be in 1..={}",
                d_out.min(d_in)
            )));
        }
        if a.cols() != d_in || b.shape() != (d_out, rank) {
            return Err(AdapterError::Shape(format!(
                "W0 {:?}, A {:?}, B {:?} are inconsistent",
                w0.shape(),
                a.shape(),
                b.shape()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(AdapterError::InvalidLora(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { w0, a, b, alpha })
    }

    /// `A ~ N(0, 0.02²)` from `seed`, `B = 0`, so the initial output equals the base output.
    pub fn init(w0: Matrix, rank: usize, alpha: f64, seed: u64) -> Result<Self, AdapterError> {
        let d_in = w0.cols();
        let d_out = w0.rows();
        let a = Matrix::random_normal(rank, d_in, LORA_INIT_STD, &mut seed::rng(seed));
        let b = if rank == 0 { Matrix::zeros(d_out, 1) } else { Matrix::zeros(d_out, rank) };
        Self::new(w0, a, b, alpha)
    }

    pub fn base(&self) -> &Matrix {
        &self.w0
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d_in(&self) -> usize {
        self.w0.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w0.rows()
    }

    /// `α / r`.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    /// `r·(d_in + d_out)`.
    pub fn trainable_params(&self) -> usize {
        self.rank() * (self.d_in() + self.d_out())
    }

    /// `d_in·d_out`.
    pub fn base_params(&self) -> usize {
        self.d_in() * self.d_out()
    }

    /// One descent step on `A` and `B` only.
    pub fn apply_gradients(&mut self, grads: &LoraGrads, lr: f64) -> Result<(), AdapterError> {
        if grads.a.shape() != self.a.shape() || grads.b.shape() != self.b.shape() {
            return Err(AdapterError::Shape("gradient shapes do not match the layer".into()));
        }
        for (p, g) in self.a.data_mut().iter_mut().zip(grads.a.data()) {
            *p -= lr * g;
        }
        for (p, g) in self.b.data_mut().iter_mut().zip(grads.b.data()) {
            *p -= lr * g;
        }
        Ok(())
    }
}

fn check_input(x: &TokenMatrix, layer: &LoraLinear) -> Result<(), AdapterError> {
    if x.cols() != layer.d_in() {
        return Err(AdapterError::Shape(format!(
            "input width {} does not match layer input {}",
            x.cols(),
            layer.d_in()
        )));
    }
    Ok(())
}

/// Unmerged forward pass: base product plus the low-rank path `((x·Aᵀ)·Bᵀ)·α/r`.
pub fn lora_forward(x: &TokenMatrix, layer: &LoraLinear) -> Result<TokenMatrix, AdapterError> {
    check_input(x, layer)?;
    let base = x.matmul_t(&layer.w0)?;
    let delta = x.matmul_t(&layer.a)?.matmul_t(&layer.b)?;
    base.add(&delta.scale(layer.scaling()))
}

/// `W0 + (α/r)·B·A`. The layer is left untouched.
pub fn lora_merge(layer: &LoraLinear) -> Matrix {
    let delta = layer.b.matmul(&layer.a).expect("layer shapes are consistent");
    layer
        .w0
        .add(&delta.scale(layer.scaling()))
        .expect("layer shapes are consistent")
}

/// Mean squared error over every output entry.
pub fn mse_loss(layer: &LoraLinear, x: &TokenMatrix, target: &Matrix) -> Result<f64, AdapterError> {
    let y = lora_forward(x, layer)?;
    if y.shape() != target.shape() {
        return Err(AdapterError::Shape(format!(
            "target {:?} does not match output {:?}",
            target.shape(),
            y.shape()
        )));
    }
    let n = y.data().len().max(1) as f64;
    let mut sum = ExactSum::new();
    for (p, t) in y.data().iter().zip(target.data()) {
        sum.add((p - t) * (p - t));
    }
    Ok(sum.value() / n)
}

/// Gradients of [`mse_loss`] with respect to the trainable factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraGrads {
    pub a: Matrix,
    pub b: Matrix,
}

/// Loss and analytic gradients.
///
/// With `G = 2(Y − T)/N` and `H = X·Aᵀ`:
/// `∂L/∂B = (α/r)·Gᵀ·H` and `∂L/∂A = (α/r)·(G·B)ᵀ·X`.
pub fn lora_gradients(
    layer: &LoraLinear,
    x: &TokenMatrix,
    target: &Matrix,
) -> Result<(f64, LoraGrads), AdapterError> {
    let y = lora_forward(x, layer)?;
    if y.shape() != target.shape() {
        return Err(AdapterError::Shape(format!(
            "target {:?} does not match output {:?}",
            target.shape(),
            y.shape()
        )));
    }
    let n = y.data().len().max(1) as f64;
    let resid = y.sub(target)?;
    let loss = resid.data().iter().map(|r| r * r).sum::<f64>() / n;
    let g = resid.scale(2.0 / n);
    let s = layer.scaling();

    let h = x.matmul_t(&layer.a)?;
    let grad_b = g.transpose().matmul(&h)?.scale(s);
    let grad_a = g.matmul(&layer.b)?.transpose().matmul(x)?.scale(s);
    Ok((loss, LoraGrads { a: grad_a, b: grad_b }))
}

/// Max relative error between analytic gradients and central differences
/// (step [`FD_STEP`]) of the loss over every entry of `A` and `B`.
///
/// Entry error is `|g − g_fd| / max(|g|, |g_fd|, 1e-7)`.
pub fn grad_check(layer: &LoraLinear, x: &TokenMatrix, target: &Matrix) -> Result<f64, AdapterError> {
    let (_, grads) = lora_gradients(layer, x, target)?;
    let mut probe = layer.clone();
    let mut worst = 0.0f64;

    for which in [Factor::A, Factor::B] {
        let analytic = match which {
            Factor::A => &grads.a,
            Factor::B => &grads.b,
        };
        for idx in 0..analytic.data().len() {
            let orig = which.get(&probe).data()[idx];
            which.get_mut(&mut probe).data_mut()[idx] = orig + FD_STEP;
            let plus = lora_forward(x, &probe)?;
            which.get_mut(&mut probe).data_mut()[idx] = orig - FD_STEP;
            let minus = lora_forward(x, &probe)?;
            which.get_mut(&mut probe).data_mut()[idx] = orig;

            let numeric = loss_difference(&plus, &minus, target) / (2.0 * FD_STEP);
            let exact = analytic.data()[idx];
            let denom = exact.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// `L(Y+) − L(Y−)` for the mean squared error, summed as
/// `(y+ − y−)·(y+ + y− − 2t)` per entry so unchanged outputs contribute 0.
fn loss_difference(plus: &Matrix, minus: &Matrix, target: &Matrix) -> f64 {
    let mut sum = ExactSum::new();
    for ((p, m), t) in plus.data().iter().zip(minus.data()).zip(target.data()) {
        sum.add((p - m) * ((p - t) + (m - t)));
    }
    sum.value() / plus.data().len().max(1) as f64
}

#[derive(Clone, Copy)]
enum Factor {
    A,
    B,
}

impl Factor {
    fn get(self, l: &LoraLinear) -> &Matrix {
        match self {
            Factor::A => &l.a,
            Factor::B => &l.b,
        }
    }

    fn get_mut(self, l: &mut LoraLinear) -> &mut Matrix {
        match self {
            Factor::A => &mut l.a,
            Factor::B => &mut l.b,
        }
    }
}

/// Full-batch gradient descent on `A` and `B` with the schedule's learning rate.
///
/// Returns `steps + 1` losses: the initial loss, then the loss after each step.
pub fn toy_train(
    layer: &mut LoraLinear,
    x: &TokenMatrix,
    target: &Matrix,
    schedule: &CosineSchedule,
    steps: usize,
) -> Result<Vec<f64>, AdapterError> {
    if steps > schedule.total_steps() {
        return Err(AdapterError::StepOutOfRange {
            step: steps,
            total_steps: schedule.total_steps(),
        });
    }
    let mut trace = Vec::with_capacity(steps + 1);
    let (mut loss, mut grads) = lora_gradients(layer, x, target)?;
    trace.push(loss);
    for step in 0..steps {
        layer.apply_gradients(&grads, schedule.lr(step)?)?;
        (loss, grads) = lora_gradients(layer, x, target)?;
        trace.push(loss);
    }
    Ok(trace)
}

/// Synthetic regression problem whose optimum is reachable by a LoRA layer:
/// targets come from `W0 + (α/r)·B*·A*` for a random planted `A*`, `B*`.
#[derive(Debug, Clone)]
pub struct PlantedTask {
    pub w0: Matrix,
    pub teacher: Matrix,
    pub x: Matrix,
    pub y: Matrix,
    pub rank: usize,
    pub alpha: f64,
}

impl PlantedTask {
    pub fn generate(
        d_in: usize,
        d_out: usize,
        rank: usize,
        alpha: f64,
        n: usize,
        seed: u64,
    ) -> Result<Self, AdapterError> {
        let mut rng = seed::rng(seed);
        let w0 = Matrix::random_normal(d_out, d_in, 1.0 / (d_in as f64).sqrt(), &mut rng);
        let a_star = Matrix::random_normal(rank, d_in, 1.0 / (d_in as f64).sqrt(), &mut rng);
        let b_star = Matrix::random_normal(d_out, rank, 1.0 / (rank as f64).sqrt(), &mut rng);
        let planted = LoraLinear::new(w0.clone(), a_star, b_star, alpha)?;
        let teacher = lora_merge(&planted);
        let x = Matrix::random_normal(n, d_in, 1.0, &mut rng);
        let y = x.matmul_t(&teacher)?;
        Ok(Self {
            w0,
            teacher,
            x,
            y,
            rank,
            alpha,
        })
    }

    /// A fresh student layer on the task's frozen base.
    pub fn student(&self, seed: u64) -> Result<LoraLinear, AdapterError> {
        LoraLinear::init(self.w0.clone(), self.rank, self.alpha, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::project;

    fn random_layer(d_in: usize, d_out: usize, r: usize, alpha: f64, seed: u64) -> LoraLinear {
        let mut rng = seed::rng(seed);
        LoraLinear::new(
            Matrix::random_normal(d_out, d_in, 1.0, &mut rng),
            Matrix::random_normal(r, d_in, 1.0, &mut rng),
            Matrix::random_normal(d_out, r, 1.0, &mut rng),
            alpha,
        )
        .unwrap()
    }

    #[test]
    fn zero_b_gives_base_output_exactly() {
        let mut rng = seed::rng(3);
        let w0 = Matrix::random_normal(4, 6, 1.0, &mut rng);
        let layer = LoraLinear::init(w0.clone(), 2, 4.0, 7).unwrap();
        let x = Matrix::random_normal(5, 6, 1.0, &mut rng);
        assert!(lora_forward(&x, &layer).unwrap().bit_eq(&x.matmul_t(&w0).unwrap()));
        assert!(lora_merge(&layer).bit_eq(&w0));
    }

    #[test]
    fn base_free_layer_is_pure_delta() {
        let mut rng = seed::rng(4);
        let a = Matrix::random_normal(2, 6, 1.0, &mut rng);
        let b = Matrix::random_normal(4, 2, 1.0, &mut rng);
        let layer = LoraLinear::new(Matrix::zeros(4, 6), a.clone(), b.clone(), 3.0).unwrap();
        let x = Matrix::random_normal(5, 6, 1.0, &mut rng);
        let expected = x.matmul_t(&b.matmul(&a).unwrap()).unwrap().scale(1.5);
        assert!(lora_forward(&x, &layer).unwrap().rel_error(&expected) <= 1e-12);
    }

    #[test]
    fn merged_matches_unmerged() {
        for seed in 0..100 {
            let layer = random_layer(6, 4, 2, 8.0, seed);
            let x = Matrix::random_normal(8, 6, 1.0, &mut seed::rng(seed + 1000));
            let merged = project(&x, &lora_merge(&layer), &[0.0; 4]).unwrap();
            let err = lora_forward(&x, &layer).unwrap().rel_error(&merged);
            assert!(err <= 1e-12, "seed {seed}: {err}");
        }
    }

    #[test]
    fn unit_scaling_merge() {
        let layer = random_layer(5, 5, 3, 3.0, 11);
        let expected = layer.base().add(&layer.b().matmul(layer.a()).unwrap()).unwrap();
        assert!(lora_merge(&layer).bit_eq(&expected));
    }

    #[test]
    fn merge_does_not_mutate() {
        let layer = random_layer(5, 3, 1, 2.0, 12);
        let before = layer.clone();
        let _ = lora_merge(&layer);
        assert_eq!(layer, before);
    }

    #[test]
    fn construction_errors() {
        let w0 = Matrix::zeros(4, 6);
        assert!(matches!(LoraLinear::init(w0.clone(), 0, 1.0, 0), Err(AdapterError::InvalidLora(_))));
        assert!(matches!(LoraLinear::init(w0.clone(), 5, 1.0, 0), Err(AdapterError::InvalidLora(_))));
        assert!(matches!(LoraLinear::init(w0.clone(), 2, 0.0, 0), Err(AdapterError::InvalidLora(_))));
        assert!(matches!(
            LoraLinear::new(w0, Matrix::zeros(2, 5), Matrix::zeros(4, 2), 1.0),
            Err(AdapterError::Shape(_))
        ));
        let layer = random_layer(6, 4, 2, 1.0, 0);
        assert!(matches!(lora_forward(&Matrix::zeros(1, 5), &layer), Err(AdapterError::Shape(_))));
        assert!(matches!(
            grad_check(&layer, &Matrix::zeros(2, 6), &Matrix::zeros(3, 4)),
            Err(AdapterError::Shape(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let layer = random_layer(6, 4, 2, 4.0, seed);
            let mut rng = seed::rng(seed + 500);
            let x = Matrix::random_normal(8, 6, 1.0, &mut rng);
            let t = Matrix::random_normal(8, 4, 1.0, &mut rng);
            let err = grad_check(&layer, &x, &t).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_input_has_zero_gradient() {
        let layer = random_layer(6, 4, 2, 4.0, 1);
        let x = Matrix::zeros(8, 6);
        let t = Matrix::random_normal(8, 4, 1.0, &mut seed::rng(2));
        let (_, g) = lora_gradients(&layer, &x, &t).unwrap();
        assert_eq!(g.a.max_abs(), 0.0);
        assert_eq!(g.b.max_abs(), 0.0);
        assert_eq!(grad_check(&layer, &x, &t).unwrap(), 0.0);
    }

    #[test]
    fn parameter_savings_for_default_shapes() {
        for (d_in, d_out, r) in [(6, 4, 2), (32, 16, 2), (16, 16, 4)] {
            let layer = LoraLinear::init(Matrix::zeros(d_out, d_in), r, 1.0, 0).unwrap();
            assert!(r * (d_in + d_out) < d_in * d_out);
            assert!(layer.trainable_params() < layer.base_params());
        }
    }

    #[test]
    fn toy_train_zero_steps() {
        let task = PlantedTask::generate(6, 4, 2, 2.0, 32, 5).unwrap();
        let mut student = task.student(6).unwrap();
        let s = CosineSchedule::new(0.5, 0.05, 10).unwrap();
        let trace = toy_train(&mut student, &task.x, &task.y, &s, 0).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(matches!(
            toy_train(&mut student, &task.x, &task.y, &s, 11),
            Err(AdapterError::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn planted_task_converges() {
        for seed in 0..5 {
            let task = PlantedTask::generate(16, 16, 2, 4.0, 64, seed).unwrap();
            let mut student = task.student(seed + 1).unwrap();
            let base = student.base().clone();
            let s = CosineSchedule::new(0.2, 0.02, 200).unwrap();
            let trace = toy_train(&mut student, &task.x, &task.y, &s, 200).unwrap();
            assert_eq!(trace.len(), 201);
            assert!(trace[200] < 0.01 * trace[0], "seed {seed}: {} -> {}", trace[0], trace[200]);
            assert!(student.base().bit_eq(&base));
        }
    }

    #[test]
    fn loss_difference_matches_direct_subtraction() {
        let mut rng = seed::rng(8);
        let plus = Matrix::random_normal(3, 4, 1.0, &mut rng);
        let minus = Matrix::random_normal(3, 4, 1.0, &mut rng);
        let target = Matrix::random_normal(3, 4, 1.0, &mut rng);
        let mse = |y: &Matrix| {
            y.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / 12.0
        };
        let direct = mse(&plus) - mse(&minus);
        assert!((loss_difference(&plus, &minus, &target) - direct).abs() < 1e-12);
        assert_eq!(loss_difference(&plus, &plus, &target), 0.0);
    }
}
