//! Forward evaluation, initialization, and hand-derived backprop for the
//! three architecture variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv1d_backward, conv1d_forward, leaky_relu, leaky_relu_backward, linear_backward,
    linear_forward, sigmoid,
};
use super::tensor::{NetworkParams, Tensor};
use super::train::loss_gradient;
use super::{FeatureSource, NetworkSpec, Variant};
use crate::align::{LandmarkSet, FRAME_RESOLUTION};
use crate::error::{Error, Result};
use crate::rig::WeightVector;

/// Input dimension of the `NoGrouping` trunk: all 68 landmarks, interleaved
/// `(x, y)` pairs.
const FLAT_INPUT_DIM: usize = 136;

/// Canonical tensor list for a spec: `(name, shape)` in construction order.
fn param_shapes(spec: &NetworkSpec) -> Vec<(String, Vec<usize>)> {
    let s = &spec.sizes;
    let [c1, c2] = s.conv_channels;
    let k = spec.k();
    let mut shapes = Vec::new();

    match spec.variant {
        Variant::NoGrouping => {
            let [h1, h2] = s.mlp_hidden;
            shapes.push(("mlp.fc1.weight".into(), vec![h1, FLAT_INPUT_DIM]));
            shapes.push(("mlp.fc1.bias".into(), vec![h1]));
            shapes.push(("mlp.fc2.weight".into(), vec![h2, h1]));
            shapes.push(("mlp.fc2.bias".into(), vec![h2]));
            shapes.push(("mlp.fc3.weight".into(), vec![k, h2]));
            shapes.push(("mlp.fc3.bias".into(), vec![k]));
        }
        Variant::ConvGrouping | Variant::FullGrouping => {
            for (name, indices) in &spec.partition.regions {
                let len = indices.len();
                shapes.push((format!("region.{name}.conv1.weight"), vec![c1, 2, s.kernel]));
                shapes.push((format!("region.{name}.conv1.bias"), vec![c1]));
                shapes.push((format!("region.{name}.conv2.weight"), vec![c2, c1, s.kernel]));
                shapes.push((format!("region.{name}.conv2.bias"), vec![c2]));
                shapes.push((format!("region.{name}.fc.weight"), vec![s.region_feature, c2 * len]));
                shapes.push((format!("region.{name}.fc.bias"), vec![s.region_feature]));
            }
            if spec.variant == Variant::ConvGrouping {
                let total = s.region_feature * spec.partition.regions.len();
                shapes.push(("mlp.fc1.weight".into(), vec![s.conv_mlp_hidden, total]));
                shapes.push(("mlp.fc1.bias".into(), vec![s.conv_mlp_hidden]));
                shapes.push(("mlp.fc2.weight".into(), vec![k, s.conv_mlp_hidden]));
                shapes.push(("mlp.fc2.bias".into(), vec![k]));
            } else {
                for (group, members) in &spec.group_spec.groups {
                    let in_dim = s.region_feature * members.len();
                    shapes.push((format!("group.{group}.fc1.weight"), vec![s.group_hidden, in_dim]));
                    shapes.push((format!("group.{group}.fc1.bias"), vec![s.group_hidden]));
                    shapes.push((format!("group.{group}.fc2.weight"), vec![s.group_feature, s.group_hidden]));
                    shapes.push((format!("group.{group}.fc2.bias"), vec![s.group_feature]));
                }
                let sources = spec.resolve_sources().expect("validated spec");
                for (name, source) in spec.target_names.iter().zip(sources) {
                    let src_dim = match source {
                        FeatureSource::Region(_) => s.region_feature,
                        FeatureSource::Group(_) => s.group_feature,
                    };
                    shapes.push((format!("head.{name}.fc1.weight"), vec![s.head_hidden, src_dim]));
                    shapes.push((format!("head.{name}.fc1.bias"), vec![s.head_hidden]));
                    shapes.push((format!("head.{name}.fc2.weight"), vec![1, s.head_hidden]));
                    shapes.push((format!("head.{name}.fc2.bias"), vec![1]));
                }
            }
        }
    }
    shapes
}

fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape.len() {
        2 => (shape[1], shape[0]),
        3 => (shape[1] * shape[2], shape[0] * shape[2]),
        _ => panic!("unsupported weight rank {}", shape.len()),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::new();
    for (name, shape) in param_shapes(spec) {
        let mut t = Tensor::zeros(shape.clone());
        if name.ends_with(".weight") {
            let bound = glorot_bound(&shape);
            for v in &mut t.data {
                *v = rng.gen_range(-bound..bound);
            }
        }
        params.push(name, t);
    }
    Ok(params)
}

/// Checks that saved or caller-supplied parameters carry exactly the tensors
/// the spec requires.
pub fn check_params(spec: &NetworkSpec, params: &NetworkParams) -> Result<()> {
    let shapes = param_shapes(spec);
    if shapes.len() != params.tensors().len() {
        return Err(Error::invalid(format!(
            "parameter set has {} tensors, spec requires {}",
            params.tensors().len(),
            shapes.len()
        )));
    }
    for ((want_name, want_shape), (got_name, got)) in shapes.iter().zip(params.tensors()) {
        if want_name != got_name || *want_shape != got.shape {
            return Err(Error::invalid(format!(
                "tensor mismatch: spec wants {want_name} {want_shape:?}, params have {got_name} {:?}",
                got.shape
            )));
        }
    }
    Ok(())
}

/// Landmark coordinates scaled to `[0, 1]` by the frame resolution, stored
/// channel-major (all x, then all y) for one region.
fn region_input(lms: &LandmarkSet, indices: &[usize]) -> Vec<f64> {
    let mut x = Vec::with_capacity(indices.len() * 2);
    for &i in indices {
        x.push(lms.points[i][0] / FRAME_RESOLUTION);
    }
    for &i in indices {
        x.push(lms.points[i][1] / FRAME_RESOLUTION);
    }
    x
}

fn flat_input(lms: &LandmarkSet) -> Vec<f64> {
    let mut x = Vec::with_capacity(FLAT_INPUT_DIM);
    for p in &lms.points {
        x.push(p[0] / FRAME_RESOLUTION);
        x.push(p[1] / FRAME_RESOLUTION);
    }
    x
}

struct RegionTrace {
    input: Vec<f64>,
    len: usize,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
    pre_fc: Vec<f64>,
    feat: Vec<f64>,
}

struct GroupTrace {
    input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    feat: Vec<f64>,
}

struct HeadTrace {
    pre1: Vec<f64>,
    act1: Vec<f64>,
    out: f64,
}

enum Trace {
    Full {
        regions: Vec<RegionTrace>,
        groups: Vec<GroupTrace>,
        heads: Vec<HeadTrace>,
    },
    Conv {
        regions: Vec<RegionTrace>,
        concat: Vec<f64>,
        pre1: Vec<f64>,
        act1: Vec<f64>,
        out: Vec<f64>,
    },
    Plain {
        input: Vec<f64>,
        pre1: Vec<f64>,
        act1: Vec<f64>,
        pre2: Vec<f64>,
        act2: Vec<f64>,
        out: Vec<f64>,
    },
}

fn run_region(
    params: &NetworkParams,
    name: &str,
    input: Vec<f64>,
    len: usize,
    slope: f64,
) -> RegionTrace {
    let pre1 = conv1d_forward(
        params.get(&format!("region.{name}.conv1.weight")),
        params.get(&format!("region.{name}.conv1.bias")),
        &input,
        len,
    );
    let act1 = leaky_relu(&pre1, slope);
    let pre2 = conv1d_forward(
        params.get(&format!("region.{name}.conv2.weight")),
        params.get(&format!("region.{name}.conv2.bias")),
        &act1,
        len,
    );
    let act2 = leaky_relu(&pre2, slope);
    let pre_fc = linear_forward(
        params.get(&format!("region.{name}.fc.weight")),
        params.get(&format!("region.{name}.fc.bias")),
        &act2,
    );
    let feat = leaky_relu(&pre_fc, slope);
    RegionTrace {
        input,
        len,
        pre1,
        act1,
        pre2,
        act2,
        pre_fc,
        feat,
    }
}

fn forward_traced(
    params: &NetworkParams,
    spec: &NetworkSpec,
    lms: &LandmarkSet,
) -> (Vec<f64>, Trace) {
    let slope = spec.sizes.leaky_slope;
    match spec.variant {
        Variant::NoGrouping => {
            let input = flat_input(lms);
            let pre1 = linear_forward(params.get("mlp.fc1.weight"), params.get("mlp.fc1.bias"), &input);
            let act1 = leaky_relu(&pre1, slope);
            let pre2 = linear_forward(params.get("mlp.fc2.weight"), params.get("mlp.fc2.bias"), &act1);
            let act2 = leaky_relu(&pre2, slope);
            let z = linear_forward(params.get("mlp.fc3.weight"), params.get("mlp.fc3.bias"), &act2);
            let out: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            (
                out.clone(),
                Trace::Plain {
                    input,
                    pre1,
                    act1,
                    pre2,
                    act2,
                    out,
                },
            )
        }
        Variant::ConvGrouping => {
            let regions: Vec<RegionTrace> = spec
                .partition
                .regions
                .iter()
                .map(|(name, indices)| {
                    run_region(params, name, region_input(lms, indices), indices.len(), slope)
                })
                .collect();
            let concat: Vec<f64> = regions.iter().flat_map(|r| r.feat.iter().copied()).collect();
            let pre1 = linear_forward(params.get("mlp.fc1.weight"), params.get("mlp.fc1.bias"), &concat);
            let act1 = leaky_relu(&pre1, slope);
            let z = linear_forward(params.get("mlp.fc2.weight"), params.get("mlp.fc2.bias"), &act1);
            let out: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            (
                out.clone(),
                Trace::Conv {
                    regions,
                    concat,
                    pre1,
                    act1,
                    out,
                },
            )
        }
        Variant::FullGrouping => {
            let regions: Vec<RegionTrace> = spec
                .partition
                .regions
                .iter()
                .map(|(name, indices)| {
                    run_region(params, name, region_input(lms, indices), indices.len(), slope)
                })
                .collect();
            let groups: Vec<GroupTrace> = spec
                .group_spec
                .groups
                .iter()
                .map(|(group, members)| {
                    let input: Vec<f64> = members
                        .iter()
                        .flat_map(|m| {
                            let r = spec.partition.region_index(m).expect("validated spec");
                            regions[r].feat.iter().copied()
                        })
                        .collect();
                    let pre1 = linear_forward(
                        params.get(&format!("group.{group}.fc1.weight")),
                        params.get(&format!("group.{group}.fc1.bias")),
                        &input,
                    );
                    let act1 = leaky_relu(&pre1, slope);
                    let pre2 = linear_forward(
                        params.get(&format!("group.{group}.fc2.weight")),
                        params.get(&format!("group.{group}.fc2.bias")),
                        &act1,
                    );
                    let feat = leaky_relu(&pre2, slope);
                    GroupTrace {
                        input,
                        pre1,
                        act1,
                        pre2,
                        feat,
                    }
                })
                .collect();
            let sources = spec.resolve_sources().expect("validated spec");
            let heads: Vec<HeadTrace> = spec
                .target_names
                .iter()
                .zip(&sources)
                .map(|(name, source)| {
                    let feat = match source {
                        FeatureSource::Region(r) => &regions[*r].feat,
                        FeatureSource::Group(g) => &groups[*g].feat,
                    };
                    let pre1 = linear_forward(
                        params.get(&format!("head.{name}.fc1.weight")),
                        params.get(&format!("head.{name}.fc1.bias")),
                        feat,
                    );
                    let act1 = leaky_relu(&pre1, slope);
                    let z = linear_forward(
                        params.get(&format!("head.{name}.fc2.weight")),
                        params.get(&format!("head.{name}.fc2.bias")),
                        &act1,
                    );
                    HeadTrace {
                        pre1,
                        act1,
                        out: sigmoid(z[0]),
                    }
                })
                .collect();
            let out: Vec<f64> = heads.iter().map(|h| h.out).collect();
            (
                out,
                Trace::Full {
                    regions,
                    groups,
                    heads,
                },
            )
        }
    }
}

/// Evaluates the network on aligned landmarks. Outputs are sigmoid scalars,
/// strictly inside `(0, 1)`.
pub fn forward(
    params: &NetworkParams,
    spec: &NetworkSpec,
    lms: &LandmarkSet,
) -> Result<WeightVector> {
    check_params(spec, params)?;
    if lms.points.len() != crate::align::LANDMARK_COUNT {
        return Err(Error::invalid("landmark set has wrong size"));
    }
    let (out, _) = forward_traced(params, spec, lms);
    Ok(WeightVector(out))
}

/// Inference entry point: `forward` plus a cheap aligned-frame check. The
/// bounding box must lie inside the template frame with slack.
pub fn predict(
    params: &NetworkParams,
    spec: &NetworkSpec,
    lms: &LandmarkSet,
) -> Result<WeightVector> {
    let (lo, hi) = lms.bounds();
    if lo[0] < -32.0 || lo[1] < -32.0 || hi[0] > 160.0 || hi[1] > 160.0 {
        return Err(Error::InputNotAligned(format!(
            "landmark bounding box [{:.1},{:.1}]x[{:.1},{:.1}] outside [-32,160]^2",
            lo[0], hi[0], lo[1], hi[1]
        )));
    }
    forward(params, spec, lms)
}

fn backward_region(
    params: &NetworkParams,
    spec: &NetworkSpec,
    name: &str,
    trace: &RegionTrace,
    dfeat: &[f64],
    grads: &mut NetworkParams,
) {
    let slope = spec.sizes.leaky_slope;
    let dpre_fc = leaky_relu_backward(&trace.pre_fc, dfeat, slope);
    let w_fc = params.get(&format!("region.{name}.fc.weight"));
    let mut dw_fc = std::mem::take(grads.get_mut(&format!("region.{name}.fc.weight")));
    let mut db_fc = std::mem::take(grads.get_mut(&format!("region.{name}.fc.bias")));
    let dact2 = linear_backward(w_fc, &trace.act2, &dpre_fc, &mut dw_fc, &mut db_fc);
    *grads.get_mut(&format!("region.{name}.fc.weight")) = dw_fc;
    *grads.get_mut(&format!("region.{name}.fc.bias")) = db_fc;

    let dpre2 = leaky_relu_backward(&trace.pre2, &dact2, slope);
    let w2 = params.get(&format!("region.{name}.conv2.weight"));
    let mut dw2 = std::mem::take(grads.get_mut(&format!("region.{name}.conv2.weight")));
    let mut db2 = std::mem::take(grads.get_mut(&format!("region.{name}.conv2.bias")));
    let dact1 = conv1d_backward(w2, &trace.act1, &dpre2, trace.len, &mut dw2, &mut db2);
    *grads.get_mut(&format!("region.{name}.conv2.weight")) = dw2;
    *grads.get_mut(&format!("region.{name}.conv2.bias")) = db2;

    let dpre1 = leaky_relu_backward(&trace.pre1, &dact1, slope);
    let w1 = params.get(&format!("region.{name}.conv1.weight"));
    let mut dw1 = std::mem::take(grads.get_mut(&format!("region.{name}.conv1.weight")));
    let mut db1 = std::mem::take(grads.get_mut(&format!("region.{name}.conv1.bias")));
    let _ = conv1d_backward(w1, &trace.input, &dpre1, trace.len, &mut dw1, &mut db1);
    *grads.get_mut(&format!("region.{name}.conv1.weight")) = dw1;
    *grads.get_mut(&format!("region.{name}.conv1.bias")) = db1;
}

/// One linear layer backward against named tensors, returning dx.
fn backward_linear_named(
    params: &NetworkParams,
    grads: &mut NetworkParams,
    weight: &str,
    bias: &str,
    x: &[f64],
    dy: &[f64],
) -> Vec<f64> {
    let w = params.get(weight);
    let mut dw = std::mem::take(grads.get_mut(weight));
    let mut db = std::mem::take(grads.get_mut(bias));
    let dx = linear_backward(w, x, dy, &mut dw, &mut db);
    *grads.get_mut(weight) = dw;
    *grads.get_mut(bias) = db;
    dx
}

fn backward_traced(
    params: &NetworkParams,
    spec: &NetworkSpec,
    trace: &Trace,
    dpred: &[f64],
    grads: &mut NetworkParams,
) {
    let slope = spec.sizes.leaky_slope;
    match trace {
        Trace::Plain {
            input,
            pre1,
            act1,
            pre2,
            act2,
            out,
        } => {
            let dz: Vec<f64> = dpred
                .iter()
                .zip(out)
                .map(|(&g, &o)| g * o * (1.0 - o))
                .collect();
            let dact2 = backward_linear_named(params, grads, "mlp.fc3.weight", "mlp.fc3.bias", act2, &dz);
            let dpre2 = leaky_relu_backward(pre2, &dact2, slope);
            let dact1 = backward_linear_named(params, grads, "mlp.fc2.weight", "mlp.fc2.bias", act1, &dpre2);
            let dpre1 = leaky_relu_backward(pre1, &dact1, slope);
            let _ = backward_linear_named(params, grads, "mlp.fc1.weight", "mlp.fc1.bias", input, &dpre1);
        }
        Trace::Conv {
            regions,
            concat,
            pre1,
            act1,
            out,
        } => {
            let dz: Vec<f64> = dpred
                .iter()
                .zip(out)
                .map(|(&g, &o)| g * o * (1.0 - o))
                .collect();
            let dact1 = backward_linear_named(params, grads, "mlp.fc2.weight", "mlp.fc2.bias", act1, &dz);
            let dpre1 = leaky_relu_backward(pre1, &dact1, slope);
            let dconcat = backward_linear_named(params, grads, "mlp.fc1.weight", "mlp.fc1.bias", concat, &dpre1);
            let feat = spec.sizes.region_feature;
            for (r, (name, _)) in spec.partition.regions.iter().enumerate() {
                backward_region(
                    params,
                    spec,
                    name,
                    &regions[r],
                    &dconcat[r * feat..(r + 1) * feat],
                    grads,
                );
            }
        }
        Trace::Full {
            regions,
            groups,
            heads,
        } => {
            let sources = spec.resolve_sources().expect("validated spec");
            let mut dfeat_region = vec![vec![0.0; spec.sizes.region_feature]; regions.len()];
            let mut dfeat_group = vec![vec![0.0; spec.sizes.group_feature]; groups.len()];

            for (k, name) in spec.target_names.iter().enumerate() {
                let head = &heads[k];
                let dz = dpred[k] * head.out * (1.0 - head.out);
                let dact1 = backward_linear_named(
                    params,
                    grads,
                    &format!("head.{name}.fc2.weight"),
                    &format!("head.{name}.fc2.bias"),
                    &head.act1,
                    &[dz],
                );
                let dpre1 = leaky_relu_backward(&head.pre1, &dact1, slope);
                let src_feat = match sources[k] {
                    FeatureSource::Region(r) => &regions[r].feat,
                    FeatureSource::Group(g) => &groups[g].feat,
                };
                let dsrc = backward_linear_named(
                    params,
                    grads,
                    &format!("head.{name}.fc1.weight"),
                    &format!("head.{name}.fc1.bias"),
                    src_feat,
                    &dpre1,
                );
                match sources[k] {
                    FeatureSource::Region(r) => {
                        for (acc, d) in dfeat_region[r].iter_mut().zip(&dsrc) {
                            *acc += d;
                        }
                    }
                    FeatureSource::Group(g) => {
                        for (acc, d) in dfeat_group[g].iter_mut().zip(&dsrc) {
                            *acc += d;
                        }
                    }
                }
            }

            for (g, (group, members)) in spec.group_spec.groups.iter().enumerate() {
                let gt = &groups[g];
                let dpre2 = leaky_relu_backward(&gt.pre2, &dfeat_group[g], slope);
                let dact1 = backward_linear_named(
                    params,
                    grads,
                    &format!("group.{group}.fc2.weight"),
                    &format!("group.{group}.fc2.bias"),
                    &gt.act1,
                    &dpre2,
                );
                let dpre1 = leaky_relu_backward(&gt.pre1, &dact1, slope);
                let dinput = backward_linear_named(
                    params,
                    grads,
                    &format!("group.{group}.fc1.weight"),
                    &format!("group.{group}.fc1.bias"),
                    &gt.input,
                    &dpre1,
                );
                let feat = spec.sizes.region_feature;
                for (mi, member) in members.iter().enumerate() {
                    let r = spec.partition.region_index(member).expect("validated spec");
                    for (acc, d) in dfeat_region[r]
                        .iter_mut()
                        .zip(&dinput[mi * feat..(mi + 1) * feat])
                    {
                        *acc += d;
                    }
                }
            }

            for (r, (name, _)) in spec.partition.regions.iter().enumerate() {
                backward_region(params, spec, name, &regions[r], &dfeat_region[r], grads);
            }
        }
    }
}

/// Mean loss over a batch and its exact gradient with respect to every
/// parameter. The gradient of the batch is the mean of per-sample gradients.
pub fn grad(
    params: &NetworkParams,
    spec: &NetworkSpec,
    batch: &[(&LandmarkSet, &WeightVector)],
    active_weight: f64,
) -> Result<(f64, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient needs a non-empty batch"));
    }
    check_params(spec, params)?;
    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;
    for (lms, gt) in batch {
        if gt.len() != spec.k() {
            return Err(Error::invalid("ground-truth length does not match spec"));
        }
        let (pred, trace) = forward_traced(params, spec, lms);
        let (loss, dpred) = loss_gradient(&pred, &gt.0, active_weight);
        total_loss += loss;
        backward_traced(params, spec, &trace, &dpred, &mut grads);
    }
    let inv = 1.0 / batch.len() as f64;
    for (_, t) in grads.tensors_mut() {
        for v in &mut t.data {
            *v *= inv;
        }
    }
    grads.ensure_finite("gradient computation")?;
    Ok((total_loss * inv, grads))
}
