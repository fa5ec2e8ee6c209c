//! WebAssembly bindings behind `www/index.html`: sample a sine task, fit it
//! in closed form, meta-train the kernel, and weigh a batch of gradients.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(e: metafn::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct SineTask(demo::Sine);

#[wasm_bindgen]
impl SineTask {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, k_shot: usize) -> Result<SineTask, JsError> {
        demo::sample_sine(seed as u64, k_shot).map(SineTask).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn amplitude(&self) -> f64 {
        self.0.amplitude
    }

    #[wasm_bindgen(getter)]
    pub fn phase(&self) -> f64 {
        self.0.phase
    }

    pub fn xs(&self) -> Vec<f64> {
        self.0.xs.clone()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.0.ys.clone()
    }
}

/// Kernel ridge predictions at `grid` after fitting `(xs, ys)`.
#[wasm_bindgen(js_name = fitCurve)]
pub fn fit_curve(xs: &[f64], ys: &[f64], sigma: f64, lambda: f64, grid: &[f64]) -> Result<Vec<f64>, JsError> {
    demo::fit_curve(xs, ys, sigma, lambda, grid).map_err(js)
}

#[wasm_bindgen]
pub struct Aggregation(demo::Weighted);

#[wasm_bindgen]
impl Aggregation {
    pub fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.0.scales.clone()
    }

    pub fn aggregated(&self) -> Vec<f64> {
        self.0.aggregated.clone()
    }

    pub fn plain(&self) -> Vec<f64> {
        self.0.plain.clone()
    }
}

/// Similarity-weighted aggregation of `m` equal-length gradients packed in `flat`.
#[wasm_bindgen]
pub fn aggregate(flat: &[f64], m: usize) -> Result<Aggregation, JsError> {
    demo::weigh(flat, m).map(Aggregation).map_err(js)
}

#[wasm_bindgen]
pub struct KernelTraining(demo::Trained);

#[wasm_bindgen]
impl KernelTraining {
    #[wasm_bindgen(getter)]
    pub fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[wasm_bindgen(getter)]
    pub fn lambda(&self) -> f64 {
        self.0.lambda
    }

    pub fn iters(&self) -> Vec<f64> {
        self.0.iters.clone()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.0.losses.clone()
    }
}

/// Meta-train the kernel bandwidth and ridge weight on sine tasks.
#[wasm_bindgen(js_name = trainKernel)]
pub fn train_kernel(seed: u32, k_shot: usize, n_meta_iters: usize, beta: f64) -> Result<KernelTraining, JsError> {
    demo::train_kernel(seed as u64, k_shot, n_meta_iters, beta).map(KernelTraining).map_err(js)
}
