/// Per-example loss with its gradient in the weights.
pub trait Loss: Sync {
    fn value(&self, theta: &[f64], x: &[f64], y: f64) -> f64;
    fn gradient(&self, theta: &[f64], x: &[f64], y: f64) -> Vec<f64>;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Binary cross-entropy of a linear score; labels are 0 or 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logistic;

impl Loss for Logistic {
    fn value(&self, theta: &[f64], x: &[f64], y: f64) -> f64 {
        let z = dot(theta, x);
        // ln(1 + e^z) − y·z without overflow.
        z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
    }

    fn gradient(&self, theta: &[f64], x: &[f64], y: f64) -> Vec<f64> {
        let z = dot(theta, x);
        let s = 1.0 / (1.0 + (-z).exp());
        x.iter().map(|xi| (s - y) * xi).collect()
    }
}

/// ½(θ·x − y)².
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl Loss for Quadratic {
    fn value(&self, theta: &[f64], x: &[f64], y: f64) -> f64 {
        let r = dot(theta, x) - y;
        0.5 * r * r
    }

    fn gradient(&self, theta: &[f64], x: &[f64], y: f64) -> Vec<f64> {
        let r = dot(theta, x) - y;
        x.iter().map(|xi| r * xi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        let theta = [0.3, -1.2, 0.5];
        let x = [1.0, 0.4, -2.0];
        for (loss, y) in [(&Logistic as &dyn Loss, 1.0), (&Quadratic as &dyn Loss, 0.7)] {
            let g = loss.gradient(&theta, &x, y);
            for i in 0..3 {
                let h = 1e-6;
                let mut up = theta;
                let mut down = theta;
                up[i] += h;
                down[i] -= h;
                let fd = (loss.value(&up, &x, y) - loss.value(&down, &x, y)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn logistic_is_stable_for_large_scores() {
        let v = Logistic.value(&[1000.0], &[1.0], 0.0);
        assert!((v - 1000.0).abs() < 1e-9);
        assert!(Logistic.value(&[-1000.0], &[1.0], 0.0) < 1e-300);
    }
}
