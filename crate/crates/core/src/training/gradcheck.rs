//! Central-difference verification of tape gradients for whole models.

use crate::error::Result;
use crate::models::{Head, Model, ModelSpec, Topology};
use crate::numerics::{Fault, Matrix, Rng, Tape};
use crate::pooling::GateKind;

use super::{record_loss, LossLevel};

/// Trainable heads covered by [`gradcheck_sweep`].
pub const GRADCHECK_HEADS: [Head; 8] = [
    Head::Segment,
    Head::IsMax,
    Head::IsAvg,
    Head::EsAvg,
    Head::EsMaxmin,
    Head::DecisionAtt,
    Head::DecisionMultiAtt { levels: 2 },
    Head::FeatureAtt { dim: 3 },
];

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Floor on the relative-error denominator. Central differences carry
    /// roughly `1e-11` of roundoff, so smaller gradients are effectively
    /// compared in absolute terms.
    pub floor: f64,
    pub seed: u64,
    /// Trunk depths swept by [`gradcheck_sweep`].
    pub depths: Vec<usize>,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            seed: 0,
            depths: vec![0, 2],
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckResult {
    pub spec: ModelSpec,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

impl GradcheckResult {
    /// `head/gate/topology/depth`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/depth{}",
            self.spec.head.name(),
            self.spec.gate.name(),
            self.spec.topology.name(),
            self.spec.trunk_depth
        )
    }
}

/// Compares tape gradients of the training loss on a random 3-bag batch
/// against central differences.
pub fn gradcheck(spec: &ModelSpec, options: &GradcheckOptions) -> Result<GradcheckResult> {
    let mut rng = Rng::with_stream(options.seed, 7);
    let mut model = Model::new(spec.clone(), options.seed)?;
    // Non-zero biases exercise every bias path.
    for p in model.params_mut() {
        if p.rows() == 1 {
            for v in p.data_mut() {
                *v = 0.3 * rng.normal();
            }
        }
    }
    let bags: Vec<Matrix> = [2usize, 3, 4]
        .iter()
        .map(|&t| {
            let data = (0..t * spec.input_dim).map(|_| rng.normal()).collect();
            Matrix::from_vec(t, spec.input_dim, data)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = bags.iter().collect();
    let targets = Matrix::from_vec(
        3,
        spec.classes,
        (0..3 * spec.classes)
            .map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 })
            .collect(),
    )?;

    let mut tape = Tape::new();
    if let Some(fault) = options.fault {
        tape.inject_fault(fault);
    }
    let loss = record_loss(&model, &mut tape, &refs, &targets, LossLevel::Auto, None)?;
    let analytic = tape.backward(loss)?.into_vec();

    let eval = |model: &Model| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = record_loss(model, &mut tape, &refs, &targets, LossLevel::Auto, None)?;
        Ok(tape.value(loss).get(0, 0))
    };

    let h = options.step;
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..grad.data().len() {
            let original = model.params()[i].data()[j];
            model.params_mut()[i].data_mut()[j] = original + h;
            let plus = eval(&model)?;
            model.params_mut()[i].data_mut()[j] = original - h;
            let minus = eval(&model)?;
            model.params_mut()[i].data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j];
            let scale = a.abs().max(numeric.abs()).max(options.floor);
            max_rel = max_rel.max((a - numeric).abs() / scale);
            checked += 1;
        }
    }
    Ok(GradcheckResult {
        spec: spec.clone(),
        max_rel_error: max_rel,
        checked,
        passed: max_rel <= options.tolerance,
    })
}

/// Runs [`gradcheck`] over every trainable head, gate, topology, and the
/// configured trunk depths. Multi-level attention uses
/// `min(2, depth)` levels and is skipped at depth 0.
pub fn gradcheck_sweep(options: &GradcheckOptions) -> Result<Vec<GradcheckResult>> {
    let mut results = Vec::new();
    for &depth in &options.depths {
        for head in GRADCHECK_HEADS {
            let head = match head {
                Head::DecisionMultiAtt { .. } if depth == 0 => continue,
                Head::DecisionMultiAtt { levels } => Head::DecisionMultiAtt {
                    levels: levels.min(depth),
                },
                other => other,
            };
            for gate in GateKind::ALL {
                for topology in Topology::ALL {
                    let spec = ModelSpec {
                        input_dim: 3,
                        classes: 2,
                        trunk_depth: depth,
                        trunk_width: 4,
                        head,
                        gate,
                        topology,
                        dropout_rate: 0.0,
                    };
                    results.push(gradcheck(&spec, options)?);
                }
            }
        }
    }
    Ok(results)
}
