from .simulate import simulate_flow
from .capacity import capacity_flow
from .fit_estimator import fit_estimator_flow
from .predictor import predictor_train_flow, predictor_eval_flow, predictor_tune_flow
from .gen_workload import gen_workload_flow


__all__ = ['simulate_flow', 'capacity_flow', 'fit_estimator_flow',
           'predictor_train_flow', 'predictor_eval_flow', 'predictor_tune_flow', 'gen_workload_flow']
