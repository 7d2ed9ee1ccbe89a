use serde::Serialize;

/// Weights plus biases of a dense `d → m` layer.
pub fn linear_params(d: usize, m: usize) -> usize {
    d * m + m
}

/// Weights plus biases of a `k × k` convolution.
pub fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

/// Parameter counts per named layer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParamTable {
    pub rows: Vec<(String, usize)>,
}

impl ParamTable {
    pub fn push(&mut self, layer: impl Into<String>, count: usize) {
        self.rows.push((layer.into(), count));
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(|(_, n)| n).sum()
    }

    /// Sum over layers whose name starts with `prefix`.
    pub fn subtotal(&self, prefix: &str) -> usize {
        self.rows
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, n)| n)
            .sum()
    }
}
