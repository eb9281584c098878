use ndarray::{Array2, ArrayView2};

use crate::nn::argmax;

/// A probabilistic classifier over fixed-width vectors.
pub trait Classifier: Sync {
    fn n_classes(&self) -> usize;

    fn predict_proba_batch(&self, x: ArrayView2<f64>) -> Array2<f64>;

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        self.predict_proba_batch(view).into_raw_vec_and_offset().0
    }

    /// Argmax label; ties go to the lowest class index.
    fn predict(&self, x: &[f64]) -> usize {
        let p = self.predict_proba(x);
        argmax(ndarray::ArrayView1::from(&p))
    }

    fn predict_batch(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.predict_proba_batch(x)
            .rows()
            .into_iter()
            .map(argmax)
            .collect()
    }
}
