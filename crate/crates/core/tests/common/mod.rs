//! Reference implementations used as oracles by the integration tests.
//! None of them call into the code they check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use surfrl::lattice::CodeLayout;
use surfrl::tensor::{LayerKind, Network};

/// Grid cells of the Z checks, derived from the plaquette rule alone:
/// cell `(i, j)` for `i` in `-1..d`, `j` in `0..d-1`, with `i + j` even.
pub fn expected_z_cells(d: usize) -> BTreeSet<(usize, usize)> {
    let n = d as isize;
    let mut cells = BTreeSet::new();
    for i in -1..n {
        for j in 0..n - 1 {
            if (i + j).rem_euclid(2) == 0 {
                cells.insert(((2 * i + 2) as usize, (2 * j + 2) as usize));
            }
        }
    }
    cells
}

/// Parity of each Z check from geometry: a check at grid cell `(R, C)`
/// touches the qubits on the four diagonal neighbours `(R +- 1, C +- 1)`.
pub fn brute_force_z_syndrome(layout: &CodeLayout, errors: u128) -> u64 {
    let d = layout.distance() as isize;
    let mut bits = 0u64;
    for (j, &(r, c)) in layout.z_check_coords().iter().enumerate() {
        let mut parity = 0u32;
        for (dr, dc) in [(-1isize, -1isize), (-1, 1), (1, -1), (1, 1)] {
            let (gr, gc) = (r as isize + dr, c as isize + dc);
            if gr < 1 || gc < 1 || gr > 2 * d - 1 || gc > 2 * d - 1 {
                continue;
            }
            let q = ((gr - 1) / 2 * d + (gc - 1) / 2) as usize;
            parity ^= ((errors >> q) & 1) as u32;
        }
        if parity == 1 {
            bits |= 1 << j;
        }
    }
    bits
}

/// Minimum weight of any error producing each syndrome, by enumerating all
/// `2^n` error configurations (only sensible for d = 3).
pub fn min_weight_table(layout: &CodeLayout) -> Vec<u32> {
    let n = layout.num_qubits();
    let mut best = vec![u32::MAX; 1 << layout.num_z_checks()];
    for e in 0u128..(1 << n) {
        let s = brute_force_z_syndrome(layout, e) as usize;
        best[s] = best[s].min(e.count_ones());
    }
    best
}

/// Straight-loop `f64` forward pass of one sample through `net`, with the
/// parameters supplied separately so they can be perturbed.
pub fn oracle_forward(net: &Network, params: &[(Vec<f64>, Vec<f64>)], x: &[f64]) -> Vec<f64> {
    let mut shape: Vec<usize> = net.input_shape().to_vec();
    let mut act = x.to_vec();
    let last = net.layers().len() - 1;
    for (li, layer) in net.layers().iter().enumerate() {
        let (w, b) = &params[li];
        let mut out = match layer.kind() {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let (h, wd) = (shape[1], shape[2]);
                let oh = (h - kernel) / stride + 1;
                let ow = (wd - kernel) / stride + 1;
                let mut y = vec![0.0; out_channels * oh * ow];
                for co in 0..out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = b[co];
                            for ci in 0..in_channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let wi = ((co * in_channels + ci) * kernel + ky) * kernel + kx;
                                        let xi = (ci * h + oy * stride + ky) * wd + ox * stride + kx;
                                        s += w[wi] * act[xi];
                                    }
                                }
                            }
                            y[(co * oh + oy) * ow + ox] = s;
                        }
                    }
                }
                shape = vec![out_channels, oh, ow];
                y
            }
            LayerKind::Dense { inputs, outputs } => {
                assert_eq!(act.len(), inputs);
                let y: Vec<f64> = (0..outputs)
                    .map(|o| b[o] + (0..inputs).map(|i| w[o * inputs + i] * act[i]).sum::<f64>())
                    .collect();
                shape = vec![outputs];
                y
            }
        };
        if li != last {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        act = out;
    }
    act
}

pub fn params_f64(net: &Network) -> Vec<(Vec<f64>, Vec<f64>)> {
    net.layers()
        .iter()
        .map(|l| {
            (
                l.weights().data().iter().map(|&v| v as f64).collect(),
                l.biases().data().iter().map(|&v| v as f64).collect(),
            )
        })
        .collect()
}

pub fn smooth_l1_f64(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let e = (p - t).abs();
            if e < 1.0 {
                0.5 * e * e
            } else {
                e - 0.5
            }
        })
        .sum::<f64>()
        / pred.len() as f64
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    /// Parameters skipped because a ReLU or loss kink lies within the step.
    pub skipped: usize,
    pub worst: f64,
}

/// Central differences of `loss` w.r.t. every parameter of `net`, compared
/// with `analytic` (same layout as the network's gradients).
///
/// Along one parameter the loss is piecewise quadratic, so the curvature
/// estimates at steps `h` and `h/2` agree unless a ReLU or loss kink lies
/// within the step; such points are skipped.
pub fn check_gradients(
    net: &Network,
    analytic: &[(Vec<f32>, Vec<f32>)],
    loss: impl Fn(&[(Vec<f64>, Vec<f64>)]) -> f64,
    floor: f64,
) -> GradReport {
    const H: f64 = 1e-5;
    let base = params_f64(net);
    let l0 = loss(&base);
    let mut report = GradReport::default();
    let at = |li: usize, which: usize, idx: usize, delta: f64| {
        let mut p = base.clone();
        let slot = if which == 0 { &mut p[li].0 } else { &mut p[li].1 };
        slot[idx] += delta;
        loss(&p)
    };
    for (li, (gw, gb)) in analytic.iter().enumerate() {
        for (which, grads) in [(0usize, gw), (1, gb)] {
            for (idx, &a) in grads.iter().enumerate() {
                let (up, down) = (at(li, which, idx, H), at(li, which, idx, -H));
                let (up2, down2) = (at(li, which, idx, H / 2.0), at(li, which, idx, -H / 2.0));
                let curv = (up - 2.0 * l0 + down) / H;
                let curv2 = (up2 - 2.0 * l0 + down2) / (H / 2.0);
                if (2.0 * curv2 - curv).abs() > 1e-8 {
                    report.skipped += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * H);
                report.checked += 1;
                report.worst = report.worst.max(rel_err(a as f64, numeric, floor));
            }
        }
    }
    report
}

fn gradients_of(grads: &[surfrl::tensor::LayerGrads]) -> Vec<(Vec<f32>, Vec<f32>)> {
    grads.iter().map(|g| (g.weights.clone(), g.biases.clone())).collect()
}

fn random_batch(net: &Network, batch: usize, binary: bool, rng: &mut surfrl::rng::Rng) -> Vec<Vec<f32>> {
    use rand::Rng as _;
    let len: usize = net.input_shape().iter().product();
    (0..batch)
        .map(|_| {
            (0..len)
                .map(|_| {
                    if binary {
                        rng.random_bool(0.3) as u8 as f32
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn batch_tensor(net: &Network, xs: &[Vec<f32>]) -> surfrl::tensor::Tensor {
    let mut shape = vec![xs.len()];
    shape.extend_from_slice(net.input_shape());
    surfrl::tensor::Tensor::new(shape, xs.concat()).unwrap()
}

/// One layer alone, loss `sum_i c_i * y_i` over a batch of random inputs.
pub fn layer_gradient_report(input_shape: Vec<usize>, kind: LayerKind, seed: u64) -> GradReport {
    use rand::Rng as _;
    let mut rng = surfrl::rng::stream(seed, surfrl::rng::Stream::Init);
    let net = Network::new(input_shape, &[kind], &mut rng, seed).unwrap();
    let xs = random_batch(&net, 3, false, &mut rng);
    let out = net.output_len();
    let c: Vec<f32> = (0..xs.len() * out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tape = net.forward_recorded(&batch_tensor(&net, &xs)).unwrap();
    let dy = surfrl::tensor::Tensor::new(vec![xs.len(), out], c.clone()).unwrap();
    let analytic = gradients_of(&net.backward(&tape, &dy).unwrap());
    let xs64: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|&v| v as f64).collect()).collect();
    check_gradients(
        &net,
        &analytic,
        |p| {
            xs64.iter()
                .enumerate()
                .map(|(b, x)| {
                    oracle_forward(&net, p, x)
                        .iter()
                        .enumerate()
                        .map(|(o, y)| c[b * out + o] as f64 * y)
                        .sum::<f64>()
                })
                .sum()
        },
        1e-3,
    )
}

/// Binary observations through a small Q-network, smooth-L1 on the taken
/// actions against random targets (some inside, some outside the quadratic zone).
pub fn pipeline_gradient_report(seed: u64) -> GradReport {
    use rand::Rng as _;
    use surfrl::agent::{Architecture, QNetwork};
    let arch = Architecture {
        conv_channels: [3, 4, 4],
        hidden: 6,
    };
    let q = QNetwork::new(3, 1, arch, seed).unwrap();
    let net = q.network();
    let mut rng = surfrl::rng::stream(seed, surfrl::rng::Stream::Replay);
    let batch = 4;
    let xs = random_batch(net, batch, true, &mut rng);
    let n = net.output_len();
    let actions: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
    let targets: Vec<f32> = (0..batch).map(|_| rng.random_range(-3.0..3.0)).collect();

    let tape = net.forward_recorded(&batch_tensor(net, &xs)).unwrap();
    let out = tape.output().unwrap().data().to_vec();
    let taken: Vec<f32> = (0..batch).map(|i| out[i * n + actions[i]]).collect();
    let (_, g) = surfrl::tensor::smooth_l1_with_grad(&taken, &targets).unwrap();
    let mut dy = vec![0.0f32; batch * n];
    for i in 0..batch {
        dy[i * n + actions[i]] = g[i];
    }
    let dy = surfrl::tensor::Tensor::new(vec![batch, n], dy).unwrap();
    let analytic = gradients_of(&net.backward(&tape, &dy).unwrap());

    let xs64: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|&v| v as f64).collect()).collect();
    let t64: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
    check_gradients(
        net,
        &analytic,
        |p| {
            let pred: Vec<f64> = xs64.iter().zip(&actions).map(|(x, &a)| oracle_forward(net, p, x)[a]).collect();
            smooth_l1_f64(&pred, &t64)
        },
        1e-3,
    )
}

/// The three conv shapes and two dense shapes of the Q-network at small width.
pub fn layer_cases() -> Vec<(Vec<usize>, LayerKind)> {
    vec![
        (
            vec![2, 7, 7],
            LayerKind::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
                stride: 2,
            },
        ),
        (
            vec![3, 3, 3],
            LayerKind::Conv2d {
                in_channels: 3,
                out_channels: 4,
                kernel: 2,
                stride: 1,
            },
        ),
        (
            vec![4, 2, 2],
            LayerKind::Conv2d {
                in_channels: 4,
                out_channels: 4,
                kernel: 2,
                stride: 1,
            },
        ),
        (vec![12], LayerKind::Dense { inputs: 12, outputs: 7 }),
        (vec![7], LayerKind::Dense { inputs: 7, outputs: 10 }),
    ]
}

/// Q-function whose values are a fixed pseudo-random function of the state,
/// quantised so that ties between actions are common.
pub struct StubQ {
    pub actions: usize,
    pub salt: u64,
}

impl StubQ {
    pub fn row(&self, state: &surfrl::env::EnvState) -> Vec<f32> {
        let mut h = self.salt ^ 0x9e37_79b9_7f4a_7c15;
        for &c in state.cells() {
            h = (h ^ c as u64).wrapping_mul(0x100_0000_01b3);
        }
        (0..self.actions)
            .map(|a| {
                let v = (h ^ (a as u64).wrapping_mul(0xff51_afd7_ed55_8ccd)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
                ((v >> 59) as f32 - 16.0) * 0.25
            })
            .collect()
    }
}

impl surfrl::agent::QFunction for StubQ {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn q_batch(&self, states: &[&surfrl::env::EnvState]) -> surfrl::Result<Vec<f32>> {
        Ok(states.iter().flat_map(|s| self.row(s)).collect())
    }
}

/// `r` if terminal, else `r + gamma * Q_target(s', a*)` with `a*` the first
/// maximiser of `Q_online(s', .)`.
pub fn brute_force_ddqn(batch: &[&surfrl::agent::Transition], online: &StubQ, target: &StubQ, gamma: f32) -> Vec<f32> {
    batch
        .iter()
        .map(|t| match &t.next_state {
            None => t.reward,
            Some(s) => {
                let q = online.row(s);
                let mut best = 0;
                for a in 0..q.len() {
                    if q[a] > q[best] {
                        best = a;
                    }
                }
                t.reward + gamma * target.row(s)[best]
            }
        })
        .collect()
}

/// Random transitions over small d = 3 states.
pub fn random_transitions(n: usize, rng: &mut surfrl::rng::Rng) -> Vec<surfrl::agent::Transition> {
    use rand::Rng as _;
    use surfrl::env::{ActionId, EnvState};
    let state = |rng: &mut surfrl::rng::Rng| {
        EnvState::from_cells(1, 7, (0..2 * 49).map(|_| rng.random_bool(0.2) as u8).collect()).unwrap()
    };
    (0..n)
        .map(|_| surfrl::agent::Transition {
            state: state(rng),
            action: ActionId(rng.random_range(0..10)),
            reward: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
            next_state: if rng.random_bool(0.2) { None } else { Some(state(rng)) },
        })
        .collect()
}
