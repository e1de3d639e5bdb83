use patterncraft_core::autoencoder::{AeConfig, AeDataset, AutoencoderModel};
use patterncraft_core::level::LabelVocabulary;
use patterncraft_core::nn::gradcheck::{self, DEFAULT_EPS};
use patterncraft_core::nn::{mse, mse_grad, Activation, LayerSpec, Mode, Network, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-7;

fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Checks parameter and input gradients of `spec` under an MSE loss.
fn check_spec(name: &str, spec: NetworkSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = Network::<f64>::init(spec, &mut rng).unwrap();
    let mut in_shape = vec![2];
    in_shape.extend(net.input_shape());
    let mut out_shape = vec![2];
    out_shape.extend(net.output_shape());
    let x = random(&in_shape, &mut rng, -1.0, 1.0);
    let target = random(&out_shape, &mut rng, 0.0, 1.0);

    let (y, cache) = net.forward_seeded(&x, Mode::Train, 5).unwrap();
    let g = net.backward(&cache, &mse_grad(&y, &target).unwrap(), true).unwrap();
    let mut analytic = g.params.clone();
    analytic.push(g.input.unwrap());

    let mut params = net.params().to_vec();
    params.push(x);
    let k = net.params().len();
    let mut probe = net.clone();
    let report = gradcheck::check(&mut params, &analytic, DEFAULT_EPS, FLOOR, |p| {
        probe.set_params(p[..k].to_vec()).unwrap();
        let y = probe.forward_seeded(&p[k], Mode::Train, 5).unwrap().0;
        mse(&y, &target).unwrap()
    });
    println!("{name}: max relative error {:.3e} over {} entries", report.max_relative_error, report.checked);
    assert!(report.max_relative_error < TOL, "{name}: {report:?}");
}

#[test]
fn conv_stride_one_relu() {
    check_spec("conv s1", NetworkSpec::new(vec![5, 5, 3], vec![LayerSpec::conv(3, 4, 3, 1, Activation::Relu)]));
}

#[test]
fn conv_stride_two_sigmoid() {
    check_spec("conv s2", NetworkSpec::new(vec![6, 6, 2], vec![LayerSpec::conv(2, 3, 3, 2, Activation::Sigmoid)]));
}

#[test]
fn conv_no_padding_identity() {
    let layer = LayerSpec::Conv2d {
        in_channels: 2,
        out_channels: 2,
        kernel: 2,
        stride: 1,
        padding: 0,
        activation: Activation::Identity,
    };
    check_spec("conv valid", NetworkSpec::new(vec![4, 3, 2], vec![layer]));
}

#[test]
fn transposed_conv_stride_one() {
    check_spec("deconv s1", NetworkSpec::new(vec![4, 4, 3], vec![LayerSpec::deconv(3, 2, 3, 1, Activation::Relu)]));
}

#[test]
fn transposed_conv_stride_two() {
    check_spec(
        "deconv s2",
        NetworkSpec::new(vec![3, 3, 2], vec![LayerSpec::deconv(2, 3, 3, 2, Activation::Sigmoid)]),
    );
}

#[test]
fn upsample() {
    check_spec("upsample", NetworkSpec::new(vec![2, 3, 2], vec![LayerSpec::Upsample { factor: 2 }]));
}

#[test]
fn dropout() {
    check_spec("dropout", NetworkSpec::new(vec![4, 4, 2], vec![LayerSpec::Dropout { rate: 0.3 }]));
}

#[test]
fn dense_layers() {
    for act in [Activation::Identity, Activation::Relu, Activation::Sigmoid] {
        check_spec(&format!("dense {act:?}"), NetworkSpec::new(vec![7], vec![LayerSpec::dense(7, 5, act)]));
    }
}

#[test]
fn reshape_between_layers() {
    check_spec(
        "reshape",
        NetworkSpec::new(
            vec![2, 2, 3],
            vec![LayerSpec::Reshape { shape: vec![12] }, LayerSpec::dense(12, 4, Activation::Sigmoid)],
        ),
    );
}

fn miniature(n_labels: usize) -> AeConfig {
    let mut c = AeConfig::new(n_labels, 3);
    c.input_shape = [4, 4, 3];
    c.filters = [4, 4];
    c.embedding_size = 6;
    c
}

fn check_autoencoder(n_labels: usize) {
    let vocab = LabelVocabulary::new((0..n_labels).map(|i| format!("l{i}"))).unwrap();
    let mut model = AutoencoderModel::<f64>::build(miniature(n_labels), Some(&vocab)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Zero biases put dead-relu units exactly on the kink; move them off it.
    let jittered = model
        .params()
        .into_iter()
        .map(|t| if t.shape().len() == 1 { random(t.shape(), &mut rng, -0.1, 0.1) } else { t })
        .collect();
    model.set_params(jittered).unwrap();
    let x = Tensor::from_vec(&[3, 4, 4, 3], (0..144).map(|_| f64::from(rng.gen_bool(0.3) as u8)).collect()).unwrap();
    let labels = match n_labels {
        0 => vec![None; 3],
        _ => vec![Some(0), None, Some(n_labels - 1)],
    };
    let data = AeDataset::new(x, labels).unwrap();
    let (_, analytic) = model.loss_and_gradients(&data, Mode::Train, 21).unwrap();
    let mut params = model.params();
    let mut probe = model.clone();
    let report = gradcheck::check(&mut params, &analytic, DEFAULT_EPS, FLOOR, |p| {
        probe.set_params(p.to_vec()).unwrap();
        probe.loss_and_gradients(&data, Mode::Train, 21).unwrap().0
    });
    println!("autoencoder n={n_labels}: max relative error {:.3e} over {} entries", report.max_relative_error, report.checked);
    assert!(report.max_relative_error < TOL, "{report:?}");
}

#[test]
fn composed_autoencoder_without_labels() {
    check_autoencoder(0);
}

#[test]
fn composed_autoencoder_with_labels() {
    check_autoencoder(2);
}
