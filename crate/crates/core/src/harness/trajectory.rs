use crate::clp::{clp_pipeline, ClpConfig, ClpInputs, ClpResult};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, RepresentationMatrix};

use super::mlp::MlpSetup;

/// Metrics at each checkpoint: NC1/NC2 against coarse labels, the class-distance
/// matrix and MSDR against original labels. Step 0 and the final step are always included.
pub fn nc_trajectory(setup: &MlpSetup, seed: u64, checkpoints: &[usize]) -> Result<Vec<MetricsReport>> {
    let run = setup.run(seed, checkpoints, true)?;
    let data = &run.train;
    run.log
        .checkpoints
        .iter()
        .map(|cp| {
            let h = cp.hidden.clone().expect("hidden recorded");
            let coarse = RepresentationMatrix::new(h.clone(), data.y_train.clone(), data.train_class_count())?;
            let fine = RepresentationMatrix::new(h, data.y_original.clone(), data.class_count())?;
            MetricsReport::compute(cp.step, &coarse, &fine, Some(&data.superclass_map))
        })
        .collect()
}

/// Trains on coarse labels, then runs cluster-and-probe on the hidden layer.
pub fn clp_experiment(setup: &MlpSetup, seed: u64, cfg: &ClpConfig) -> Result<ClpResult> {
    if setup.test_per_cluster == 0 {
        return Err(Error::InvalidArgument("cluster-and-probe needs test_per_cluster > 0".into()));
    }
    let run = setup.run(seed, &[], false)?;
    let test = run.test.as_ref().expect("test split requested");
    let h_train = run.net.forward(&run.train.x)?.hidden;
    let h_test = run.net.forward(&test.x)?.hidden;
    clp_pipeline(
        ClpInputs {
            h_train: &h_train,
            coarse_train: &run.train.y_train,
            original_train: &run.train.y_original,
            h_test: &h_test,
            original_test: &test.y_original,
            superclass_map: &run.train.superclass_map,
        },
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clp::Reducer;
    use crate::synthgen::MeanMode;

    fn small() -> MlpSetup {
        MlpSetup {
            samples_per_cluster: 20,
            test_per_cluster: 10,
            input_dim: 16,
            hidden_dim: 64,
            mean_mode: MeanMode::IidNormal { sigma2: 4.0 },
            steps: 200,
            ..MlpSetup::default()
        }
    }

    #[test]
    fn trajectory_steps_and_shapes() {
        let r = nc_trajectory(&small(), 1, &[50, 100]).unwrap();
        assert_eq!(r.iter().map(|m| m.step).collect::<Vec<_>>(), vec![0, 50, 100, 200]);
        assert!(r.iter().all(|m| m.class_count == 8 && m.distance.len() == 64 && m.msdr.is_some()));
    }

    #[test]
    fn clp_runs_end_to_end() {
        let cfg = ClpConfig {
            reducer: Reducer::Pca,
            ..ClpConfig::default()
        };
        let r = clp_experiment(&small(), 1, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&r.test_accuracy));
        assert_eq!(r.mapping.len(), 8);
        let no_test = MlpSetup { test_per_cluster: 0, ..small() };
        assert!(clp_experiment(&no_test, 1, &cfg).is_err());
    }
}
