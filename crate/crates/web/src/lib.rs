//! Browser bindings for the two-blob demo.

use gwin_core::classifier::{predict_with_certainty_keyed, CertaintyConfig};
use gwin_core::data::IMAGE_PIXELS;
use gwin_core::evaluation::{aggregate_rows, run_metrics};
use gwin_core::gwin::{keyed_noise, GeneratorSpec};
use gwin_core::pipeline::{classifier_flops, generator_flops, InferenceConfig};
use gwin_core::rejection::{reject, DEFAULT_TAUS};
use gwin_core::synthetic::{BlobExperiment, BlobExperimentConfig};
use gwin_core::{classifier::ArchitectureSpec, GwinError};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: GwinError) -> JsError {
    JsError::new(&e.to_string())
}

const MC_SAMPLES: usize = 10;

#[wasm_bindgen]
pub struct Demo {
    exp: BlobExperiment,
}

#[wasm_bindgen]
impl Demo {
    /// Builds the data and trains the toy classifier on clean examples.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, JsError> {
        let mut cfg = BlobExperimentConfig {
            seed,
            n_train: 1200,
            n_test: 300,
            classifier_epochs: 8,
            mc_samples: MC_SAMPLES,
            ..Default::default()
        };
        cfg.gwin.tau_star = 0.8;
        cfg.gwin.batch_size = 8;
        Ok(Demo { exp: BlobExperiment::new(cfg).map_err(js_err)? })
    }

    pub fn iteration(&self) -> usize {
        self.exp.trainer.iteration
    }

    pub fn confident_size(&self) -> usize {
        self.exp.confident.len()
    }

    pub fn test_len(&self) -> usize {
        self.exp.test.set.len()
    }

    /// Runs `n` generator iterations.
    pub fn train(&mut self, n: usize) -> Result<(), JsError> {
        self.exp.train_steps(n).map_err(js_err)
    }

    pub fn test_image(&self, i: usize) -> Vec<f32> {
        self.exp.test.set.image(i).to_vec()
    }

    /// Classify and reject test image `i` and run the generator on it. Returns
    /// JSON with the decision, both certainties and the transformed pixels.
    pub fn infer(&self, i: usize, tau: f32, seed: u64) -> Result<String, JsError> {
        let x = self.exp.test.set.image(i);
        let cfg = InferenceConfig::new(tau, MC_SAMPLES, seed);
        let ccfg: CertaintyConfig = cfg.classifier_certainty();
        let key = [i as u64];
        let before = predict_with_certainty_keyed(&self.exp.classifier, x, &ccfg, &key).map_err(js_err)?.remove(0);
        let generator = &self.exp.trainer.generator;
        let z = keyed_noise(key, generator.spec.noise_dim, cfg.noise_seed());
        let transformed = generator.generate(x, &z).map_err(js_err)?;
        let after =
            predict_with_certainty_keyed(&self.exp.classifier, &transformed, &ccfg, &key).map_err(js_err)?.remove(0);
        let accepted = reject(before.certainty, before.label, tau).map_err(js_err)?.is_accepted();
        Ok(json!({
            "label": self.exp.test.set.labels[i],
            "corrupted": self.exp.test.corrupted[i],
            "path": if accepted { "direct" } else { "transformed" },
            "final_label": if accepted { before.label } else { after.label },
            "initial": { "label": before.label, "certainty": before.certainty },
            // Shown even for accepted inputs so the page can preview the generator.
            "post_transform": { "label": after.label, "certainty": after.certainty },
            "transformed": transformed,
        })
        .to_string())
    }

    /// Rejection sweep over the test set at the default thresholds.
    pub fn sweep(&self, seed: u64) -> Result<String, JsError> {
        let e = &self.exp;
        let runs = run_metrics(&e.classifier, &e.trainer.generator, &e.test.set, &DEFAULT_TAUS, MC_SAMPLES, seed, 0)
            .map_err(js_err)?;
        Ok(serde_json::to_string(&aggregate_rows(&DEFAULT_TAUS, &runs))?)
    }
}

/// FLOP reports for the full-size generator and LeNet-5 classifier.
#[wasm_bindgen]
pub fn flops() -> Result<String, JsError> {
    let reports = [
        generator_flops(&GeneratorSpec::standard()),
        classifier_flops(&ArchitectureSpec::lenet5_bnn()).map_err(js_err)?,
    ];
    Ok(serde_json::to_string(&reports)?)
}

#[wasm_bindgen]
pub fn image_pixels() -> usize {
    IMAGE_PIXELS
}
