//! Every example program runs to completion.

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(synthetic_data, "synthetic_data.rs");
example!(gradient_check, "gradient_check.rs");
example!(fusion, "fusion.rs");
example!(calibration_sweep, "calibration_sweep.rs");
example!(train_reference, "train_reference.rs");
example!(path_ablation, "path_ablation.rs");
example!(alpha_sweep, "alpha_sweep.rs");
example!(import_embeddings, "import_embeddings.rs");

#[test]
fn synthetic_data_runs() {
    synthetic_data::run_example().expect("synthetic_data example");
}

#[test]
fn gradient_check_runs() {
    gradient_check::run_example().expect("gradient_check example");
    let (_, err) = gradient_check::worst_error(1).unwrap();
    assert!(err < 1e-4);
}

#[test]
fn fusion_runs() {
    fusion::run_example().expect("fusion example");
}

#[test]
fn calibration_sweep_runs() {
    calibration_sweep::run_example().expect("calibration_sweep example");
}

#[test]
fn train_reference_runs() {
    train_reference::run_example().expect("train_reference example");
}

#[test]
fn path_ablation_runs() {
    path_ablation::run_example().expect("path_ablation example");
}

#[test]
fn alpha_sweep_runs() {
    alpha_sweep::run_example().expect("alpha_sweep example");
}

#[test]
fn import_embeddings_runs() {
    import_embeddings::run_example().expect("import_embeddings example");
    assert_eq!(import_embeddings::build_dataset().unwrap().space.unseen().len(), 3);
}
