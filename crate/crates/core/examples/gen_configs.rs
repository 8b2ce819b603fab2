use mesu_core::harness::{config::Algorithm, ExperimentConfig};

fn main() {
    let dir = std::path::Path::new("configs");
    std::fs::create_dir_all(dir).unwrap();
    let write = |name: &str, cfg: ExperimentConfig| {
        std::fs::write(dir.join(name), cfg.to_toml_string()).unwrap();
        println!("wrote configs/{name}");
    };
    write("pmnist-desk-mesu.toml", ExperimentConfig::desk_permuted_mnist(Algorithm::Mesu, 1));
    write("pmnist-desk-sgd.toml", ExperimentConfig::desk_permuted_mnist(Algorithm::Sgd, 1));
    write("pmnist-full-mesu.toml", ExperimentConfig::full_permuted_mnist(Algorithm::Mesu, 1));
    write("mnist-ood-mesu.toml", ExperimentConfig::desk_mnist_ood(Algorithm::Mesu, 1));
    write("mnist-ood-foovb.toml", ExperimentConfig::desk_mnist_ood(Algorithm::Foovb, 1));
}
