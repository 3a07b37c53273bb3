from . import capacity, fit_estimator, gen_workload, predictor, report, simulate

COMMANDS = [simulate, capacity, fit_estimator, predictor, gen_workload, report]


__all__ = ['COMMANDS']
