//! The shipped config files must stay in sync with the protocol builders.

use std::path::Path;

use mesu_core::harness::{config::Algorithm, ExperimentConfig};

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn shipped_configs_match_builders() {
    let cases = [
        (
            "pmnist-desk-mesu.toml",
            ExperimentConfig::desk_permuted_mnist(Algorithm::Mesu, 1),
        ),
        (
            "pmnist-desk-sgd.toml",
            ExperimentConfig::desk_permuted_mnist(Algorithm::Sgd, 1),
        ),
        (
            "pmnist-full-mesu.toml",
            ExperimentConfig::full_permuted_mnist(Algorithm::Mesu, 1),
        ),
        (
            "mnist-ood-mesu.toml",
            ExperimentConfig::desk_mnist_ood(Algorithm::Mesu, 1),
        ),
        (
            "mnist-ood-foovb.toml",
            ExperimentConfig::desk_mnist_ood(Algorithm::Foovb, 1),
        ),
    ];
    for (file, expected) in cases {
        let path = configs_dir().join(file);
        let parsed = ExperimentConfig::from_toml_file(&path)
            .unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(parsed, expected, "{file} drifted from its builder");
        assert_eq!(parsed.hash(), expected.hash());
    }
}
