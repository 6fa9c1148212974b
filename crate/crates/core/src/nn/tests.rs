use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::block::{BlockGrid, BlockTensor, PadMode};
use crate::oracle::{self, random_mixed_grid, test_architecture, TEST_ARCHITECTURES};
use crate::rng::Rng;
use crate::tensor::{DenseTensor, Dims};

fn ramp4() -> DenseTensor<f64> {
    DenseTensor::from_fn((1, 1, 4, 4), |_, _, y, x| (y * 4 + x + 1) as f64).unwrap()
}

fn ones3(stride: usize) -> Conv2d<f64> {
    let mut c = Conv2d::zeros(1, 1, 3, stride).unwrap();
    c.weight.fill(1.0);
    c
}

#[test]
fn hand_conv_4x4() {
    let y = oracle::reference_conv(&ramp4(), &ones3(1)).unwrap();
    assert_eq!(y.get(0, 0, 0, 0), 14.0);
    assert_eq!(y.get(0, 0, 0, 1), 24.0);
    assert_eq!(y.get(0, 0, 1, 1), 54.0);
    assert_eq!(y.get(0, 0, 3, 3), 54.0);
    let net = Network::new(1, vec![Layer::Conv(ones3(1))]).unwrap();
    assert_eq!(net.run_dense(&ramp4()).unwrap(), y);
}

#[test]
fn hand_conv_stride2() {
    let net = Network::new(1, vec![Layer::Conv(ones3(2))]).unwrap();
    let y = net.run_dense(&ramp4()).unwrap();
    assert_eq!(y.data(), &[14.0, 30.0, 57.0, 99.0]);
}

#[test]
fn identity_1x1() {
    let mut c = Conv2d::<f64>::zeros(2, 2, 1, 1).unwrap();
    c.weight[0] = 1.0;
    c.weight[3] = 1.0;
    let x = DenseTensor::rand_uniform((1, 2, 5, 3), &mut Rng::new(0), -1.0, 1.0).unwrap();
    let net = Network::new(2, vec![Layer::Conv(c)]).unwrap();
    assert_eq!(net.run_dense(&x).unwrap(), x);
}

#[test]
fn averaging_kernel_keeps_constants() {
    let mut c = Conv2d::<f64>::zeros(1, 1, 3, 1).unwrap();
    c.weight.fill(1.0 / 9.0);
    let net = Network::new(1, vec![Layer::Conv(c)]).unwrap();
    let x = DenseTensor::full((1, 1, 16, 16), 2.5).unwrap();
    let grid = Arc::new(BlockGrid::uniform(2, 2, 8, true).unwrap());
    let dense = net.run_dense(&x).unwrap();
    let block = net.run_block(&x, grid, PadMode::AverageSample).unwrap().output;
    assert!((dense.get(0, 0, 5, 9) - 2.5).abs() < 1e-12);
    // block borders inside the image are interior too
    assert!((block.get(0, 0, 7, 8) - 2.5).abs() < 1e-12);
    assert!(block.max_abs_diff(&dense).unwrap() < 1e-12);
}

#[test]
fn conv_matches_reference() {
    let mut rng = Rng::new(1);
    for (k, s) in [(3, 1), (3, 2), (1, 1), (1, 2)] {
        let mut c = Conv2d::<f64>::init(3, 4, k, s, &mut rng).unwrap();
        for b in &mut c.bias {
            *b = rng.uniform_range(-1.0, 1.0);
        }
        let x = DenseTensor::rand_uniform((2, 3, 9, 10), &mut rng, -1.0, 1.0).unwrap();
        let net = Network::new(3, vec![Layer::Conv(c.clone())]).unwrap();
        let y = net.run_dense(&x).unwrap();
        let r = oracle::reference_conv(&x, &c).unwrap();
        assert_eq!(y.dims(), r.dims());
        assert!(y.max_abs_diff(&r).unwrap() < 1e-10, "k={k} s={s}");
    }
}

#[test]
fn channel_mismatch() {
    let c = Conv2d::<f64>::zeros(3, 2, 3, 1).unwrap();
    assert!(Network::new(2, vec![Layer::Conv(c.clone())]).is_err());
    let net = Network::new(3, vec![Layer::Conv(c)]).unwrap();
    assert!(net.run_dense(&DenseTensor::zeros((1, 2, 4, 4)).unwrap()).is_err());
}

#[test]
fn zero_upstream_gives_zero_grads() {
    let mut rng = Rng::new(2);
    let net = Network::<f64>::segnet_with_width(3, 4, 4, 3, &mut rng).unwrap();
    let x = DenseTensor::rand_uniform((1, 3, 16, 16), &mut rng, 0.0, 1.0).unwrap();
    let trace = net.forward(x, PadMode::ZeroPad).unwrap();
    let mut g = net.zero_grads();
    let gx = net
        .backward(&trace, trace.output().zeros_like(), PadMode::ZeroPad, &mut g)
        .unwrap();
    assert!(g.is_zero());
    assert!(gx.data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv_input_adjoint() {
    let mut rng = Rng::new(3);
    let c = Conv2d::<f64>::init(2, 3, 3, 2, &mut rng).unwrap();
    let net = Network::new(2, vec![Layer::Conv(c)]).unwrap();
    let x = DenseTensor::rand_uniform((1, 2, 8, 6), &mut rng, -1.0, 1.0).unwrap();
    let trace = net.forward(x.clone(), PadMode::ZeroPad).unwrap();
    let g = DenseTensor::rand_uniform(trace.output().dims(), &mut rng, -1.0, 1.0).unwrap();
    let mut grads = net.zero_grads();
    let gx = net.backward(&trace, g.clone(), PadMode::ZeroPad, &mut grads).unwrap();
    // zero bias: the layer is linear in x
    let lhs = trace.output().dot(&g).unwrap();
    assert!((lhs - x.dot(&gx).unwrap()).abs() < 1e-10);
}

#[test]
fn relu_and_maxpool_values() {
    let x = DenseTensor::from_vec((1, 1, 2, 2), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
    let (y, arg) = x.maxpool2().unwrap();
    assert_eq!(y.data(), &[4.0]);
    let g = x
        .maxpool2_backward(&arg, &DenseTensor::full((1, 1, 1, 1), 1.0).unwrap())
        .unwrap();
    assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    let r = DenseTensor::from_vec((1, 1, 1, 2), vec![-1.0f64, 2.0]).unwrap().relu();
    assert_eq!(r.data(), &[0.0, 2.0]);
}

#[test]
fn upsample_then_pool_is_identity() {
    let x = DenseTensor::<f64>::rand_uniform((1, 2, 3, 5), &mut Rng::new(4), -1.0, 1.0).unwrap();
    let u = Features::upsample2(&x).unwrap();
    assert_eq!(u.avg_pool2().unwrap(), x);
}

#[test]
fn uniform_logits_cost_ln4() {
    let z = DenseTensor::<f64>::zeros((1, 4, 3, 3)).unwrap();
    let ce = softmax_cross_entropy(&z, &[0, 1, 2, 3, 0, 1, 2, 3, 0]).unwrap();
    assert!((ce.loss - 4f64.ln()).abs() < 1e-12);
    assert!(ce.map.iter().all(|&l| (l - 4f64.ln()).abs() < 1e-12));
}

#[test]
fn confident_logits_cost_nothing() {
    let z = DenseTensor::from_fn((1, 3, 1, 2), |_, c, _, x| if c == x { 40.0f64 } else { -40.0 }).unwrap();
    let ce = softmax_cross_entropy(&z, &[0, 1]).unwrap();
    assert!(ce.loss < 1e-30);
    assert_eq!(predict(&z), vec![0, 1]);
}

#[test]
fn cross_entropy_errors() {
    let z = DenseTensor::<f64>::zeros((1, 3, 1, 2)).unwrap();
    assert!(matches!(
        softmax_cross_entropy(&z, &[0, 3]),
        Err(crate::Error::Label { label: 3, classes: 3 })
    ));
    assert!(softmax_cross_entropy(&z, &[0]).is_err());
}

#[test]
fn cross_entropy_gradient() {
    let cfg = oracle::SuiteConfig::default();
    let r = oracle::check_cross_entropy(&cfg, &mut Rng::new(5)).unwrap();
    assert!(r.max_rel < 1e-6, "{}", r.max_rel);
}

#[test]
fn every_layer_passes_finite_differences() {
    let cfg = oracle::SuiteConfig {
        eps: 1e-5,
        ..Default::default()
    };
    let mut rng = Rng::new(6);
    for (name, net) in oracle::layer_cases(2, &mut rng).unwrap() {
        for r in oracle::check_network_dense(name, &net, 8, 8, &cfg, &mut rng).unwrap() {
            assert!(r.passed(), "{} {}", r.name, r.max_rel);
        }
    }
}

#[test]
fn dense_executor_matches_reference() {
    let mut rng = Rng::new(7);
    for v in 0..TEST_ARCHITECTURES {
        let net = test_architecture::<f64>(v, 3, &mut rng).unwrap();
        let x = DenseTensor::rand_uniform((1, 3, 12, 16), &mut rng, -1.0, 1.0).unwrap();
        let a = net.run_dense(&x).unwrap();
        let b = oracle::run_dense(&net, &x).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-10, "arch {v}");
    }
}

#[test]
fn all_high_equals_dense() {
    let mut rng = Rng::new(8);
    for v in 0..TEST_ARCHITECTURES {
        let net = test_architecture::<f64>(v, 3, &mut rng).unwrap();
        let net32: Network<f32> = net.cast();
        for mode in [PadMode::AverageSample, PadMode::StridedSample] {
            let grid = Arc::new(BlockGrid::uniform(2, 3, 8, true).unwrap());
            let x = DenseTensor::rand_uniform((1, 3, 16, 24), &mut rng, -1.0, 1.0).unwrap();
            let dense = oracle::run_dense(&net, &x).unwrap();
            let block = net.run_block(&x, grid.clone(), mode).unwrap().output;
            assert!(block.max_abs_diff(&dense).unwrap() < 1e-8);
            let block32 = net32.run_block(&x.cast(), grid, mode).unwrap().output;
            assert!(block32.cast::<f64>().max_abs_diff(&dense).unwrap() < 1e-4);
        }
    }
}

#[test]
fn all_low_equals_downsampled_dense() {
    let mut rng = Rng::new(9);
    for v in 0..TEST_ARCHITECTURES {
        let net = test_architecture::<f64>(v, 2, &mut rng).unwrap();
        let grid = Arc::new(BlockGrid::uniform(2, 2, 16, false).unwrap());
        let x = DenseTensor::rand_uniform((1, 2, 32, 32), &mut rng, -1.0, 1.0).unwrap();
        let want = oracle::run_dense(&net, &x.avg_pool2().unwrap())
            .unwrap()
            .nearest_upsample2();
        for mode in [PadMode::AverageSample, PadMode::StridedSample] {
            let got = net.run_block(&x, grid.clone(), mode).unwrap().output;
            assert!(got.max_abs_diff(&want).unwrap() < 1e-10, "arch {v}");
        }
    }
}

#[test]
fn zero_pad_breaks_equivalence() {
    let mut rng = Rng::new(10);
    let net = test_architecture::<f64>(0, 3, &mut rng).unwrap();
    let grid = Arc::new(BlockGrid::uniform(2, 2, 8, true).unwrap());
    let x = DenseTensor::rand_uniform((1, 3, 16, 16), &mut rng, -1.0, 1.0).unwrap();
    let got = net.run_block(&x, grid, PadMode::ZeroPad).unwrap().output;
    assert!(got.max_abs_diff(&net.run_dense(&x).unwrap()).unwrap() > 1e-3);
}

#[test]
fn block_floor_is_reported() {
    let mut rng = Rng::new(11);
    let net = Network::<f64>::segnet_with_width(3, 2, 2, 2, &mut rng).unwrap();
    let grid = Arc::new(BlockGrid::new(1, 2, 2, vec![true, false]).unwrap());
    let x = DenseTensor::zeros((1, 3, 2, 4)).unwrap();
    let r = net.run_block(&x, grid, PadMode::AverageSample);
    assert!(matches!(r, Err(crate::Error::BlockFloor { .. })), "{r:?}");
}

fn stride1_stack(rng: &mut Rng) -> Network<f64> {
    Network::new(
        3,
        vec![
            Layer::Conv(Conv2d::init(3, 5, 3, 1, rng).unwrap()),
            Layer::Relu,
            Layer::Conv(Conv2d::init(5, 4, 1, 1, rng).unwrap()),
            Layer::Conv(Conv2d::init(4, 2, 3, 1, rng).unwrap()),
        ],
    )
    .unwrap()
}

#[test]
fn mac_formula_by_hand() {
    let mut rng = Rng::new(12);
    let net = stride1_stack(&mut rng);
    let d = count_macs_dense(&net, 8, 16);
    // 9*3*5*128 + 1*5*4*128 + 9*4*2*128
    assert_eq!(d.total, 17280 + 2560 + 9216);
    assert_eq!(d.per_layer, vec![17280, 0, 2560, 9216]);
}

#[test]
fn mac_ratio_exact() {
    let mut rng = Rng::new(13);
    let net = stride1_stack(&mut rng);
    for _ in 0..20 {
        let grid = random_mixed_grid(&mut rng, 8).unwrap();
        let (h, w) = grid.image_size();
        let dense = count_macs_dense(&net, h, w).total as u128;
        let block = count_macs_block(&net, &grid).unwrap().total as u128;
        let (nh, nl, b) = (
            grid.high_count() as u128,
            grid.low_count() as u128,
            grid.blocks() as u128,
        );
        // block = dense * (p + (1 - p)/4)
        assert_eq!(4 * b * block, dense * (4 * nh + nl));
    }
}

#[test]
fn mac_all_high_equal_and_residual_half() {
    let mut rng = Rng::new(14);
    let net = Network::<f64>::residual_block(4, &mut rng).unwrap();
    let all = BlockGrid::uniform(2, 2, 8, true).unwrap();
    assert_eq!(
        count_macs_block(&net, &all).unwrap().total,
        count_macs_dense(&net, 16, 16).total
    );
    let half = BlockGrid::new(2, 2, 8, vec![true, false, false, true]).unwrap();
    let ratio = count_macs_block(&net, &half).unwrap().total as f64 / count_macs_dense(&net, 16, 16).total as f64;
    assert_eq!(ratio, 0.625);
}

#[test]
fn traced_macs_match_counter_for_every_mode() {
    let mut rng = Rng::new(15);
    let net = Network::<f64>::segnet_with_width(3, 4, 4, 3, &mut rng).unwrap();
    let grid = Arc::new(random_mixed_grid(&mut rng, 8).unwrap());
    let (h, w) = grid.image_size();
    let x = DenseTensor::rand_uniform((1, 3, h, w), &mut rng, 0.0, 1.0).unwrap();
    let want = count_macs_block(&net, &grid).unwrap();
    for mode in PadMode::ALL {
        assert_eq!(net.run_block(&x, grid.clone(), mode).unwrap().trace.macs, want);
    }
}

#[test]
fn residual_add_needs_same_grid() {
    let g1 = Arc::new(BlockGrid::new(1, 2, 4, vec![true, false]).unwrap());
    let g2 = Arc::new(BlockGrid::new(1, 2, 4, vec![false, true]).unwrap());
    let a = BlockTensor::<f64>::zeros(g1, 1, 4, 0).unwrap();
    let b = BlockTensor::<f64>::zeros(g2, 1, 4, 0).unwrap();
    assert!(Features::add(&a, &b).is_err());
}

#[test]
fn adam_zero_grad_keeps_params() {
    let mut p = vec![1.5f64, -2.0];
    let mut st = AdamState::new(&[&p]);
    adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut st, &AdamConfig::default()).unwrap();
    assert_eq!(p, vec![1.5, -2.0]);
}

#[test]
fn adam_hand_trace() {
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut p = vec![1.0f64];
    let mut st = AdamState::new(&[&p]);
    let want = [0.9000000019999999, 0.8654394181165107, 0.8275002408356955];
    for (g, w) in [0.5, -0.2, 0.1].iter().zip(want) {
        adam_step(&mut [&mut p], &[&[*g]], &mut st, &cfg).unwrap();
        assert!((p[0] - w).abs() < 1e-12, "{} vs {w}", p[0]);
    }
}

#[test]
fn adam_constant_grad_step_is_lr() {
    let cfg = AdamConfig {
        lr: 0.01,
        ..AdamConfig::default()
    };
    let mut p = vec![0.0f64];
    let mut st = AdamState::new(&[&p]);
    let mut prev = 0.0;
    for _ in 0..200 {
        adam_step(&mut [&mut p], &[&[-3.0]], &mut st, &cfg).unwrap();
        let step = p[0] - prev;
        assert!((step - 0.01).abs() < 1e-6);
        prev = p[0];
    }
}

#[test]
fn adam_shape_mismatch() {
    let mut p = vec![0.0f64; 2];
    let mut st = AdamState::new(&[&p]);
    assert!(adam_step(&mut [&mut p], &[&[1.0]], &mut st, &AdamConfig::default()).is_err());
}

#[test]
fn params_roundtrip() {
    let mut rng = Rng::new(16);
    let mut net = Network::<f32>::segnet(3, 4, &mut rng).unwrap();
    let v = net.params_to_vec();
    assert_eq!(v.len(), net.param_count());
    let shifted: Vec<f32> = v.iter().map(|x| x + 1.0).collect();
    net.set_params(&shifted).unwrap();
    assert_eq!(net.params_to_vec(), shifted);
    assert!(net.set_params(&v[1..]).is_err());
    let _ = Dims::new(1, 1, 1, 1);
}
