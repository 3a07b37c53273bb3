from pathlib import Path
from typing import Dict

from prefect import flow

from core.steps.modules.latency import resolve_model
from core.steps.modules.workload import gen_corpus, gen_latency_profile_dataset, write_corpus, write_profile_dataset
from settings.experiment import ExperimentConfig, dump_experiment_config
from utils.helpers import ensure_dir, write_meta
from utils.rng import substream

from .simulate import corpus_profile


@flow(name="gen-workload", validate_parameters=False)
def gen_workload_flow(config: ExperimentConfig, corpus: bool = True, profile: bool = True) -> Dict[str, str]:
    out = ensure_dir(config.out_dir)
    dump_experiment_config(config, out)
    written = {}
    if corpus:
        records = gen_corpus(corpus_profile(config), config.predictor.corpus_samples, config.workload, seed=config.seed)
        written["corpus"] = str(write_corpus(Path(out) / "corpus.csv", records, command="gen-workload"))
    if profile:
        dataset = gen_latency_profile_dataset(
            resolve_model(config.latency),
            n_configs=config.latency.n_configs,
            noise_sd=config.latency.noise_sd,
            rng=substream(config.seed, "profile"),
        )
        written["profile"] = str(write_profile_dataset(Path(out) / "profile.csv", dataset, command="gen-workload"))
    write_meta(out, "gen-workload", seed=config.seed, **written)
    return written
