use rand::Rng;

/// Tabular softmax policy: one logit row per screen, one column per
/// action template.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    logits: Vec<Vec<f64>>,
    pub learning_rate: f64,
}

impl ToyPolicy {
    pub fn new(templates_per_screen: &[usize], learning_rate: f64) -> Self {
        Self {
            logits: templates_per_screen.iter().map(|&n| vec![0.0; n]).collect(),
            learning_rate,
        }
    }

    pub fn screens(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self, screen: usize) -> &[f64] {
        &self.logits[screen]
    }

    pub fn logits_mut(&mut self, screen: usize) -> &mut [f64] {
        &mut self.logits[screen]
    }

    pub fn probs(&self, screen: usize) -> Vec<f64> {
        softmax(&self.logits[screen])
    }

    pub fn sample<R: Rng>(&self, screen: usize, rng: &mut R) -> usize {
        let probs = self.probs(screen);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    /// Adds `coef * d log pi(action | screen) / d logits` into `grad`.
    pub fn accumulate_grad(&self, screen: usize, action: usize, coef: f64, grad: &mut [f64]) {
        for (j, p) in self.probs(screen).into_iter().enumerate() {
            let indicator = if j == action { 1.0 } else { 0.0 };
            grad[j] += coef * (indicator - p);
        }
    }

    /// Gradient ascent step; `grads` has the same shape as the logits.
    pub fn apply(&mut self, grads: &[Vec<f64>]) {
        for (row, g) in self.logits.iter_mut().zip(grads) {
            for (l, d) in row.iter_mut().zip(g) {
                *l += self.learning_rate * d;
            }
        }
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|r| vec![0.0; r.len()]).collect()
    }

    /// Screens whose logits are no longer finite.
    pub fn non_finite_screens(&self) -> Vec<usize> {
        self.logits
            .iter()
            .enumerate()
            .filter(|(_, r)| r.iter().any(|l| !l.is_finite()))
            .map(|(i, _)| i)
            .collect()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
