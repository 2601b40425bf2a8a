//! Uniform entry point over every trainer.

use gorelm::admm::{train_gorelm, train_grelm, train_orelm, zero_row_count, GorHyper, GrHyper};
use gorelm::closed::{
    grow_emelm, grow_irelm, train_elm, train_ielm, train_relm, EmCache, RidgeCache, RidgeHyper,
};
use gorelm::eval::GridPoint;
use gorelm::igor::{batch_seed, train_igorelm, GrowthPolicy};
use gorelm::slfn::{HiddenLayer, SlfnModel};
use gorelm::{Mat, Result};
use serde::{Deserialize, Serialize};

use crate::config::{AdmmConfig, ExperimentConfig, Method, Tuning};

/// Resolved hyperparameters. `reg` is `C` or `λ` depending on the method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chosen {
    pub reg: f64,
    pub alpha: f64,
}

impl From<GridPoint> for Chosen {
    fn from(p: GridPoint) -> Self {
        Self {
            reg: p.reg,
            alpha: p.alpha,
        }
    }
}

/// Sizes and solver settings shared by all methods in one experiment.
#[derive(Clone, Copy, Debug)]
pub struct Setup {
    pub hidden_nodes: usize,
    pub initial: usize,
    pub batch: usize,
    pub max_total: usize,
    pub orelm_iterations: usize,
    pub admm: AdmmConfig,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            hidden_nodes: cfg.hidden_nodes,
            initial: cfg.incremental.initial,
            batch: cfg.incremental.batch,
            max_total: cfg.incremental.max_total,
            orelm_iterations: cfg.orelm_iterations,
            admm: cfg.admm,
        }
    }

    fn gor(&self, p: Chosen) -> GorHyper {
        GorHyper {
            tau: self.admm.tau,
            rho: self.admm.rho,
            eps_abs: self.admm.eps_abs,
            eps_rel: self.admm.eps_rel,
            k_max: self.admm.k_max,
            ..GorHyper::new(p.reg, p.alpha)
        }
    }

    fn gr(&self, p: Chosen) -> GrHyper {
        GrHyper {
            rho: self.admm.rho,
            eps_abs: self.admm.eps_abs,
            eps_rel: self.admm.eps_rel,
            k_max: self.admm.k_max,
            ..GrHyper::new(p.reg, p.alpha)
        }
    }
}

/// A trained network and the number of nodes it effectively uses.
pub struct Fitted {
    pub model: SlfnModel,
    pub final_nodes: usize,
}

/// Trains `method` on `(x, t)`. Every random draw derives from `seed`.
pub fn fit(
    method: Method,
    p: Chosen,
    setup: &Setup,
    x: &Mat,
    t: &Mat,
    seed: u64,
) -> Result<Fitted> {
    let n = x.cols();
    let dense = |layer: HiddenLayer, b: Mat| -> Result<Fitted> {
        let nodes = layer.n_nodes();
        Ok(Fitted {
            model: SlfnModel::new(layer, b)?,
            final_nodes: nodes,
        })
    };
    match method {
        Method::Elm | Method::Relm | Method::Orelm | Method::Grelm | Method::Gorelm => {
            let layer = HiddenLayer::init_random(seed, n, setup.hidden_nodes)?;
            let h = layer.hidden_output(x)?;
            match method {
                Method::Elm => dense(layer, train_elm(&h, t)?),
                Method::Relm => dense(layer, train_relm(&h, t, RidgeHyper::new(p.reg)?)?),
                Method::Orelm => {
                    let mut cols = Vec::with_capacity(t.cols());
                    for j in 0..t.cols() {
                        let tj = Mat::column_vector(&t.column(j));
                        cols.push(train_orelm(&h, &tj, p.reg, setup.orelm_iterations)?);
                    }
                    let b = Mat::from_fn(h.cols(), t.cols(), |i, j| cols[j][(i, 0)]);
                    dense(layer, b)
                }
                Method::Grelm => {
                    let f = train_grelm(&h, t, &setup.gr(p), None)?;
                    let active = h.cols() - zero_row_count(&f.state.z);
                    Ok(Fitted {
                        model: SlfnModel::new(layer, f.weights)?,
                        final_nodes: active,
                    })
                }
                _ => {
                    let f = train_gorelm(&h, t, &setup.gor(p), None)?;
                    let active = h.cols() - zero_row_count(&f.state.z);
                    Ok(Fitted {
                        model: SlfnModel::new(layer, f.weights)?,
                        final_nodes: active,
                    })
                }
            }
        }
        Method::Igorelm => {
            let policy = GrowthPolicy::new(setup.initial, setup.batch, setup.max_total);
            let f = train_igorelm(x, t, &setup.gor(p), &policy, seed)?;
            let active = f.model.hidden.n_nodes() - zero_row_count(&f.last.state.z);
            Ok(Fitted {
                model: f.model,
                final_nodes: active,
            })
        }
        Method::Ielm => {
            let f = train_ielm(x, t, seed, setup.hidden_nodes, 0.0)?;
            let nodes = f.model.hidden.n_nodes();
            Ok(Fitted {
                model: f.model,
                final_nodes: nodes,
            })
        }
        Method::Emelm => {
            let mut layer = HiddenLayer::init_random(batch_seed(seed, 0), n, setup.initial)?;
            let h0 = layer.hidden_output(x)?;
            let mut beta = train_elm(&h0, t)?;
            let mut cache = EmCache::new(h0);
            for batch in 1.. {
                let old = layer.n_nodes();
                if old >= setup.max_total {
                    break;
                }
                let delta = setup.batch.min(setup.max_total - old);
                layer = layer.append_nodes(batch_seed(seed, batch), delta)?;
                let dh = layer.nodes(old, old + delta)?.hidden_output(x)?;
                (beta, cache) = grow_emelm(&cache, &dh, t)?;
            }
            dense(layer, beta)
        }
        Method::Irelm => {
            let hyper = RidgeHyper::new(p.reg)?;
            let mut layer = HiddenLayer::init_random(batch_seed(seed, 0), n, setup.initial)?;
            let h0 = layer.hidden_output(x)?;
            let mut beta = train_relm(&h0, t, hyper)?;
            let mut cache = RidgeCache::new(h0, hyper)?;
            for batch in 1.. {
                let old = layer.n_nodes();
                if old >= setup.max_total {
                    break;
                }
                let delta = setup.batch.min(setup.max_total - old);
                layer = layer.append_nodes(batch_seed(seed, batch), delta)?;
                let dh = layer.nodes(old, old + delta)?.hidden_output(x)?;
                for j in 0..delta {
                    let v = Mat::column_vector(&dh.column(j));
                    (beta, cache) = grow_irelm(&cache, &v, t, hyper)?;
                }
            }
            dense(layer, beta)
        }
    }
}

/// Placeholder hyperparameters for methods without any.
pub fn untuned() -> Chosen {
    Chosen {
        reg: 1.0,
        alpha: 0.0,
    }
}

/// Whether `method` needs an α value.
pub fn uses_alpha(method: Method) -> bool {
    matches!(method.tuning(), Tuning::CAlpha | Tuning::LambdaAlpha)
}
