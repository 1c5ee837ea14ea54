//! Architecture presets: smashed shapes by shape arithmetic, split
//! transparency, the upsampled head's input-sized output, and injection
//! point enumeration.

use rand::{Rng, SeedableRng};
use splitsim::dp::InjectionPoint;
use splitsim::zoo::{
    build_lenet5, build_upsampled_client, build_vgg11_lite, find_upsample_geometry,
    injection_points, LeNetSplit,
};
use splitsim::{ChaCha8Rng, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_input(shape: &[usize], n: usize, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let mut full = vec![n];
    full.extend_from_slice(shape);
    let count: usize = full.iter().product();
    Tensor::from_vec(full, (0..count).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn lenet_split1_smashed_shape_is_6x12x12() {
    let spec = build_lenet5(LeNetSplit::Split1, &mut rng(0));
    assert_eq!(spec.smashed_shape(), &[6, 12, 12]);
    assert_eq!(spec.smashed_shape().iter().product::<usize>(), 864);
    assert_eq!(spec.cut_index, 3);
}

#[test]
fn lenet_split2_smashed_shape_is_16x4x4() {
    let spec = build_lenet5(LeNetSplit::Split2, &mut rng(0));
    assert_eq!(spec.smashed_shape(), &[16, 4, 4]);
    assert_eq!(spec.smashed_shape().iter().product::<usize>(), 256);
}

#[test]
fn both_lenet_splits_share_the_full_graph() {
    // Same seed, same layer list; only the cut differs.
    let s1 = build_lenet5(LeNetSplit::Split1, &mut rng(1));
    let s2 = build_lenet5(LeNetSplit::Split2, &mut rng(1));
    let x = random_input(&[1, 28, 28], 2, 2);
    let (y1, _) = s1.graph.forward(&x).unwrap();
    let (y2, _) = s2.graph.forward(&x).unwrap();
    assert_eq!(y1.data(), y2.data());
    assert_eq!(y1.shape(), &[2, 10]);
}

#[test]
fn splitting_is_semantically_inert() {
    for spec in [
        build_lenet5(LeNetSplit::Split1, &mut rng(3)),
        build_lenet5(LeNetSplit::Split2, &mut rng(4)),
        build_vgg11_lite(0.125, &mut rng(5)).unwrap(),
    ] {
        let x = random_input(spec.graph.input_shape(), 2, 6);
        let (full, _) = spec.graph.forward(&x).unwrap();
        let (mid, _) = spec.client_part().forward(&x).unwrap();
        let (split, _) = spec.server_part().forward(&mid).unwrap();
        assert_eq!(split.data(), full.data(), "{} split differs", spec.arch_name);
    }
}

#[test]
fn vgg_lite_full_width_smashed_shape_is_32x16x16() {
    let spec = build_vgg11_lite(1.0, &mut rng(7)).unwrap();
    assert_eq!(spec.smashed_shape(), &[32, 16, 16]);
    assert_eq!(spec.graph.output_shape(), &[10]);
}

#[test]
fn vgg_lite_quarter_width_scales_client_channels() {
    let spec = build_vgg11_lite(0.25, &mut rng(8)).unwrap();
    assert_eq!(spec.smashed_shape(), &[8, 16, 16]);
    assert_eq!(spec.graph.output_shape(), &[10]);
    assert!(build_vgg11_lite(0.0, &mut rng(9)).is_err());
    assert!(build_vgg11_lite(1.5, &mut rng(9)).is_err());
}

#[test]
fn upsampled_lenet_split1_head_matches_input_shape() {
    let base = build_lenet5(LeNetSplit::Split1, &mut rng(10));
    let up = build_upsampled_client(&base, &mut rng(11)).unwrap();
    assert_eq!(up.cut_index, base.cut_index + 1);
    // Client output = smashed data now equals the MNIST input shape.
    assert_eq!(up.smashed_shape(), &[1, 28, 28]);
    assert_eq!(up.graph.output_shape(), &[10]);
    // Byte parity: smashed elements equal the input elements.
    let input_elems: usize = up.graph.input_shape().iter().product();
    assert_eq!(up.smashed_shape().iter().product::<usize>(), input_elems);
}

#[test]
fn upsampled_lenet_split2_head_matches_input_shape() {
    let base = build_lenet5(LeNetSplit::Split2, &mut rng(12));
    let up = build_upsampled_client(&base, &mut rng(13)).unwrap();
    assert_eq!(up.smashed_shape(), &[1, 28, 28]);
}

#[test]
fn upsampled_vgg_head_matches_input_shape() {
    let base = build_vgg11_lite(0.25, &mut rng(14)).unwrap();
    let up = build_upsampled_client(&base, &mut rng(15)).unwrap();
    assert_eq!(up.smashed_shape(), &[3, 32, 32]);
}

#[test]
fn upsample_geometry_prefers_doubling() {
    assert_eq!(find_upsample_geometry((16, 16), (32, 32)), Some((4, 2, 1)));
    assert_eq!(find_upsample_geometry((12, 12), (28, 28)), Some((6, 2, 0)));
    // Identity mapping uses a 1x1 kernel.
    assert_eq!(find_upsample_geometry((9, 9), (9, 9)), Some((1, 1, 0)));
    // Shrinking is impossible for a transposed convolution.
    assert_eq!(find_upsample_geometry((16, 16), (8, 8)), None);
}

#[test]
fn injection_points_enumerate_input_then_client_layers() {
    let s1 = build_lenet5(LeNetSplit::Split1, &mut rng(16));
    let pts: Vec<String> = injection_points(&s1).iter().map(|p| p.to_string()).collect();
    assert_eq!(pts, ["Input", "Conv(1)", "ReLU(1)", "MaxP(1)"]);

    let s2 = build_lenet5(LeNetSplit::Split2, &mut rng(17));
    let pts: Vec<String> = injection_points(&s2).iter().map(|p| p.to_string()).collect();
    assert_eq!(
        pts,
        ["Input", "Conv(1)", "ReLU(1)", "MaxP(1)", "Conv(2)", "ReLU(2)", "MaxP(2)"]
    );

    let up = build_upsampled_client(&s1, &mut rng(18)).unwrap();
    let pts: Vec<String> = injection_points(&up).iter().map(|p| p.to_string()).collect();
    assert_eq!(pts, ["Input", "Conv(1)", "ReLU(1)", "MaxP(1)", "ConvT(1)"]);
    // The default noise point sits before the ConvT, at the base split layer.
    assert_eq!(up.noise_point, InjectionPoint::AfterLayer("MaxP(1)".into()));
}

#[test]
fn injection_index_rejects_server_side_layers() {
    let spec = build_lenet5(LeNetSplit::Split1, &mut rng(19));
    assert_eq!(spec.injection_index(&InjectionPoint::Input).unwrap(), 0);
    assert_eq!(
        spec.injection_index(&InjectionPoint::AfterLayer("MaxP(1)".into())).unwrap(),
        3
    );
    assert!(spec
        .injection_index(&InjectionPoint::AfterLayer("Conv(2)".into()))
        .is_err());
    assert!(spec
        .injection_index(&InjectionPoint::AfterLayer("Bogus(9)".into()))
        .is_err());
}
