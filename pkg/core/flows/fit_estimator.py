from pathlib import Path
from typing import Optional, Tuple

from prefect import flow

from core.steps.modules.latency import fit_ols, load_preset, regime_diagnostics, save_model
from core.steps.modules.workload import gen_latency_profile_dataset, read_profile_dataset, write_profile_dataset
from models.errors import ConfigError
from models.latency import FitReport, LatencyModel
from settings.experiment import ExperimentConfig, dump_experiment_config
from utils import setup_logger
from utils.helpers import ensure_dir, write_json, write_meta
from utils.rng import substream

logger = setup_logger("wisp.latency")


@flow(name="fit-estimator", validate_parameters=False)
def fit_estimator_flow(
    config: ExperimentConfig,
    dataset_path: Optional[str] = None,
    synthetic: bool = False,
    preset: Optional[str] = None,
    n_boot: Optional[int] = None,
    noise_sd: Optional[float] = None,
) -> Tuple[LatencyModel, Optional[FitReport]]:
    out = ensure_dir(config.out_dir)
    dump_experiment_config(config, out)
    latency = config.latency

    if preset is not None:
        model = load_preset(preset)
        save_model(model, Path(out) / "latency_model.json")
        write_meta(out, "fit-estimator", preset=preset)
        return model, None

    if synthetic:
        dataset = gen_latency_profile_dataset(
            load_preset(latency.preset).scaled(latency.scale),
            n_configs=latency.n_configs,
            noise_sd=latency.noise_sd if noise_sd is None else noise_sd,
            rng=substream(config.seed, "profile"),
        )
        write_profile_dataset(Path(out) / "profile.csv", dataset, command="fit-estimator")
    elif dataset_path:
        dataset = read_profile_dataset(dataset_path)
    else:
        raise ConfigError("give a profile dataset path, --synthetic or --preset", field="dataset")

    model, report = fit_ols(
        dataset.samples,
        n_boot=latency.n_boot if n_boot is None else n_boot,
        seed=config.seed,
        cv_folds=latency.cv_folds,
    )
    diagnostics = regime_diagnostics(dataset.test or dataset.samples, model)

    save_model(model, Path(out) / "latency_model.json", report)
    write_json(
        Path(out) / "fit_report.json",
        {
            **report.model_dump(mode="json"),
            "coefficients": model.coefficients(),
            "generalization_gap": report.generalization_gap,
            "generalizes_well": report.generalizes_well,
            "regimes": diagnostics.model_dump(mode="json"),
        },
    )
    write_meta(out, "fit-estimator", seed=config.seed, samples=len(dataset.samples))
    return model, report
