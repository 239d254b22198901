/// Time-major batch of feature vectors: element `(t, b, f)` lives at
/// `(t·batch + b)·features + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq {
    pub steps: usize,
    pub batch: usize,
    pub features: usize,
    pub data: Vec<f64>,
}

impl Seq {
    pub fn zeros(steps: usize, batch: usize, features: usize) -> Self {
        Self {
            steps,
            batch,
            features,
            data: vec![0.0; steps * batch * features],
        }
    }

    pub fn from_vec(steps: usize, batch: usize, features: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), steps * batch * features, "Seq shape mismatch");
        Self {
            steps,
            batch,
            features,
            data,
        }
    }

    /// Rows of the flattened `(steps·batch) × features` matrix.
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }

    pub fn at(&self, t: usize, b: usize) -> &[f64] {
        let o = (t * self.batch + b) * self.features;
        &self.data[o..o + self.features]
    }

    pub fn at_mut(&mut self, t: usize, b: usize) -> &mut [f64] {
        let o = (t * self.batch + b) * self.features;
        &mut self.data[o..o + self.features]
    }

    pub fn step(&self, t: usize) -> &[f64] {
        let n = self.batch * self.features;
        &self.data[t * n..(t + 1) * n]
    }

    /// Concatenates features of two sequences of equal steps and batch.
    pub fn concat(a: &Seq, b: &Seq) -> Seq {
        assert_eq!((a.steps, a.batch), (b.steps, b.batch));
        let f = a.features + b.features;
        let mut out = Seq::zeros(a.steps, a.batch, f);
        for r in 0..a.rows() {
            out.data[r * f..r * f + a.features].copy_from_slice(&a.data[r * a.features..(r + 1) * a.features]);
            out.data[r * f + a.features..(r + 1) * f].copy_from_slice(&b.data[r * b.features..(r + 1) * b.features]);
        }
        out
    }

    /// Inverse of [`Seq::concat`]: the first `left` features and the rest.
    pub fn split(&self, left: usize) -> (Seq, Seq) {
        let right = self.features - left;
        let mut a = Seq::zeros(self.steps, self.batch, left);
        let mut b = Seq::zeros(self.steps, self.batch, right);
        for r in 0..self.rows() {
            let row = &self.data[r * self.features..(r + 1) * self.features];
            a.data[r * left..(r + 1) * left].copy_from_slice(&row[..left]);
            b.data[r * right..(r + 1) * right].copy_from_slice(&row[left..]);
        }
        (a, b)
    }
}
